#pragma once

// Trial aggregation, oracle-relative performance, and the label-entropy /
// score correlation study.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclb/corpus.hpp"
#include "iclb/evalmetrics.hpp"
#include "iclb/poolselect.hpp"

namespace iclb {

// One evaluated (strategy, pool size, trial) cell.
struct CellResult {
    std::string task;
    std::string model_tag;
    std::string strategy;
    std::size_t pool_size = 0;
    int trial = 0;
    std::uint64_t seed = 0;
    MetricResult metric;
    double pool_label_entropy = 0.0;

    nlohmann::json to_json() const;
    static CellResult from_json(const nlohmann::json& obj);
};

struct AggregateRow {
    std::string task;
    std::string model_tag;
    std::string strategy;
    std::size_t pool_size = 0;
    int trials = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single trial
    double oracle_value = 0.0;
    double percent_of_oracle = 0.0;  // 100 * mean / oracle_value, 0 if no oracle
};

// Gold-label tally over the pool's samples: entity types (NER), deprels
// (depparse), or POS tags. Unannotated pool samples are an ArgumentError.
std::map<std::string, long long> label_counts(const Pool& pool, const Dataset& dataset);

// Shannon entropy (natural log) of the count distribution. All-zero or
// empty counts are a DomainError.
double entropy(const std::map<std::string, long long>& counts);

struct PearsonResult {
    double r = 0.0;
    double p_value = 1.0;  // two-sided, via the t distribution with n-2 dof
    std::size_t n = 0;
};

// Sample Pearson correlation. Requires >= 2 pairs and nonzero variance in
// both arguments (DomainError otherwise).
PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Group cells by (strategy, pool_size), averaging metric.primary() over
// trials. Rows are sorted by (strategy, pool_size).
std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells,
                                    double oracle_value);

// Tidy CSV serializations. Cell rows are sorted by (strategy, pool_size,
// trial); numbers use shortest round-trip formatting, so output is
// byte-stable for identical inputs.
std::string results_csv(std::vector<CellResult> cells);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

// Plot-ready JSON: per-strategy series of (pool_size, mean, std) plus the
// oracle level and the per-strategy entropy/score correlation (where
// defined).
nlohmann::json plot_data(const std::vector<CellResult>& cells,
                         const std::vector<AggregateRow>& rows, double oracle_value);

}  // namespace iclb
