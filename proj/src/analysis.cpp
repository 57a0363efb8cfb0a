#include "iclb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "iclb/errors.hpp"

namespace iclb {

using nlohmann::json;

json CellResult::to_json() const {
    return json{{"task", task},
                {"model_tag", model_tag},
                {"strategy", strategy},
                {"pool_size", pool_size},
                {"trial", trial},
                {"seed", seed},
                {"metric", metric.to_json()},
                {"pool_label_entropy", pool_label_entropy}};
}

CellResult CellResult::from_json(const json& obj) {
    CellResult out;
    out.task = obj.at("task").get<std::string>();
    out.model_tag = obj.at("model_tag").get<std::string>();
    out.strategy = obj.at("strategy").get<std::string>();
    out.pool_size = obj.at("pool_size").get<std::size_t>();
    out.trial = obj.at("trial").get<int>();
    out.seed = obj.at("seed").get<std::uint64_t>();
    out.metric = MetricResult::from_json(obj.at("metric"));
    out.pool_label_entropy = obj.at("pool_label_entropy").get<double>();
    return out;
}

std::map<std::string, long long> label_counts(const Pool& pool, const Dataset& dataset) {
    std::unordered_map<std::string, const Sample*> by_id;
    for (const auto& sample : dataset.train) by_id.emplace(sample.id, &sample);

    std::map<std::string, long long> counts;
    for (const auto& id : pool.ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw ArgumentError("pool id " + id + " is not in the train split");
        }
        const Sample& sample = *it->second;
        if (!sample.annotation.has_value()) {
            throw ArgumentError("pool sample " + id + " is unannotated");
        }
        if (dataset.task == TaskKind::ner) {
            for (const auto& span : sample.ner().entities) ++counts[span.type];
        } else if (dataset.task == TaskKind::depparse) {
            for (const auto& row : sample.parse().rows) ++counts[row.deprel];
        } else {
            for (const auto& row : sample.parse().rows) ++counts[row.pos];
        }
    }
    return counts;
}

double entropy(const std::map<std::string, long long>& counts) {
    long long total = 0;
    for (const auto& [label, count] : counts) {
        if (count < 0) throw DomainError("negative count for label " + label);
        total += count;
    }
    if (total == 0) throw DomainError("entropy of all-zero counts is undefined");
    double h = 0.0;
    for (const auto& [label, count] : counts) {
        if (count == 0) continue;
        double p = static_cast<double>(count) / static_cast<double>(total);
        h -= p * std::log(p);
    }
    return h;
}

namespace {

// Continued-fraction core of the regularized incomplete beta function.
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double ibeta_reg(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double mean_of(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw ArgumentError("pearson arguments differ in length");
    }
    if (xs.size() < 2) throw ArgumentError("pearson needs at least 2 pairs");
    double mx = mean_of(xs);
    double my = mean_of(ys);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double dx = xs[i] - mx;
        double dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DomainError("pearson is undefined for zero-variance input");
    }
    PearsonResult result;
    result.n = xs.size();
    result.r = sxy / std::sqrt(sxx * syy);
    result.r = std::clamp(result.r, -1.0, 1.0);

    // Two-sided p via T = r sqrt(nu / (1 - r^2)), nu = n - 2:
    // p = I_{nu/(nu+t^2)}(nu/2, 1/2).
    double nu = static_cast<double>(result.n) - 2.0;
    double one_minus_r2 = (1.0 - result.r) * (1.0 + result.r);
    if (nu < 1.0) {
        result.p_value = 1.0;
    } else if (one_minus_r2 <= 0.0) {
        result.p_value = 0.0;
    } else {
        double t2 = result.r * result.r * nu / one_minus_r2;
        result.p_value = ibeta_reg(nu / 2.0, 0.5, nu / (nu + t2));
    }
    return result;
}

std::vector<AggregateRow> aggregate(const std::vector<CellResult>& cells,
                                    double oracle_value) {
    std::map<std::pair<std::string, std::size_t>, std::vector<const CellResult*>> groups;
    for (const auto& cell : cells) {
        groups[{cell.strategy, cell.pool_size}].push_back(&cell);
    }
    std::vector<AggregateRow> rows;
    rows.reserve(groups.size());
    for (const auto& [key, members] : groups) {
        AggregateRow row;
        row.task = members.front()->task;
        row.model_tag = members.front()->model_tag;
        row.strategy = key.first;
        row.pool_size = key.second;
        row.trials = static_cast<int>(members.size());
        std::vector<double> values;
        values.reserve(members.size());
        for (const auto* cell : members) values.push_back(cell->metric.primary());
        row.mean = mean_of(values);
        if (values.size() > 1) {
            double ss = 0.0;
            for (double v : values) ss += (v - row.mean) * (v - row.mean);
            row.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
        }
        row.oracle_value = oracle_value;
        row.percent_of_oracle = oracle_value > 0.0 ? 100.0 * row.mean / oracle_value : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
    std::string quoted = "\"";
    for (char c : value) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

// Shortest round-trip decimal form, identical across runs.
std::string csv_number(double value) { return json(value).dump(); }

}  // namespace

std::string results_csv(std::vector<CellResult> cells) {
    std::sort(cells.begin(), cells.end(), [](const CellResult& a, const CellResult& b) {
        return std::tie(a.strategy, a.pool_size, a.trial) <
               std::tie(b.strategy, b.pool_size, b.trial);
    });
    std::string out =
        "task,model_tag,strategy,pool_size,trial,seed,precision,recall,f1,las,"
        "las_ok_only,pos_accuracy,adherence_rate,primary_metric,pool_entropy\n";
    for (const auto& cell : cells) {
        const auto& m = cell.metric;
        out += csv_field(cell.task) + ',' + csv_field(cell.model_tag) + ',' +
               csv_field(cell.strategy) + ',' + std::to_string(cell.pool_size) + ',' +
               std::to_string(cell.trial) + ',' + std::to_string(cell.seed) + ',' +
               csv_number(m.precision) + ',' + csv_number(m.recall) + ',' +
               csv_number(m.f1) + ',' + csv_number(m.las) + ',' +
               csv_number(m.las_ok_only) + ',' + csv_number(m.pos_accuracy) + ',' +
               csv_number(m.adherence_rate) + ',' + csv_number(m.primary()) + ',' +
               csv_number(cell.pool_label_entropy) + '\n';
    }
    return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::string out =
        "task,model_tag,strategy,pool_size,trials,mean,std,oracle_value,"
        "percent_of_oracle\n";
    for (const auto& row : rows) {
        out += csv_field(row.task) + ',' + csv_field(row.model_tag) + ',' +
               csv_field(row.strategy) + ',' + std::to_string(row.pool_size) + ',' +
               std::to_string(row.trials) + ',' + csv_number(row.mean) + ',' +
               csv_number(row.stddev) + ',' + csv_number(row.oracle_value) + ',' +
               csv_number(row.percent_of_oracle) + '\n';
    }
    return out;
}

json plot_data(const std::vector<CellResult>& cells,
               const std::vector<AggregateRow>& rows, double oracle_value) {
    json series = json::array();
    std::string current;
    for (const auto& row : rows) {
        if (series.empty() || current != row.strategy) {
            current = row.strategy;
            series.push_back(json{{"strategy", row.strategy}, {"points", json::array()}});
        }
        series.back()["points"].push_back(json{{"pool_size", row.pool_size},
                                               {"mean", row.mean},
                                               {"std", row.stddev}});
    }

    // Entropy/score correlation per strategy, where it has enough spread.
    json correlations = json::array();
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> paired;
    for (const auto& cell : cells) {
        auto& [xs, ys] = paired[cell.strategy];
        xs.push_back(cell.pool_label_entropy);
        ys.push_back(cell.metric.primary());
    }
    for (const auto& [strategy, xy] : paired) {
        if (xy.first.size() < 2) continue;
        try {
            PearsonResult p = pearson(xy.first, xy.second);
            correlations.push_back(json{{"strategy", strategy},
                                        {"r", p.r},
                                        {"p_value", p.p_value},
                                        {"n", p.n}});
        } catch (const DomainError&) {
            // constant entropy or constant score: correlation undefined
        }
    }

    std::string task = cells.empty() ? "" : cells.front().task;
    std::string model_tag = cells.empty() ? "" : cells.front().model_tag;
    return json{{"task", task},
                {"model_tag", model_tag},
                {"oracle", oracle_value},
                {"series", series},
                {"entropy_correlation", correlations}};
}

}  // namespace iclb
