#pragma once

// Sweep orchestration: strategy x pool-size x trial cells from one config,
// with per-cell artifacts, a resumable manifest, and deterministic reports.
//
// Run directory layout:
//   config.json        canonical config (defaults filled in)
//   manifest.json      config digest + per-cell status and artifact paths
//   pools/<cell>.json  selected pool with provenance
//   transcripts/<cell>.jsonl
//   cells/<cell>.json  CellResult
//   results.csv, aggregate.csv, plot_data.json

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclb/analysis.hpp"
#include "iclb/corpus.hpp"
#include "iclb/embedding.hpp"
#include "iclb/llmclient.hpp"
#include "iclb/poolselect.hpp"
#include "iclb/promptcodec.hpp"

namespace iclb {

struct EmbeddingProviderConfig {
    std::string kind = "hash";  // hash | file | http
    std::size_t dim = 64;       // hash
    std::uint64_t seed = 0;     // hash
    std::string path;           // file: precomputed-vector JSONL
    HttpEmbeddingProvider::Options http;

    nlohmann::json to_json() const;
    static EmbeddingProviderConfig from_json(const nlohmann::json& obj);
};

struct CompletionProviderConfig {
    std::string kind = "gold_echo";  // gold_echo | corruptor | replay | http
    std::string model_tag = "mock";
    double temperature = 0.0;
    std::size_t max_output_tokens = 1024;
    CorruptionRates rates;       // corruptor
    std::uint64_t seed = 0;      // corruptor
    std::string transcript_path; // replay
    HttpChatProvider::Options http;
    RetryPolicy retry;
    double requests_per_second = 0.0;  // 0 = unlimited
    int concurrency = 1;               // in-flight requests per cell

    nlohmann::json to_json() const;
    static CompletionProviderConfig from_json(const nlohmann::json& obj);
};

struct ExperimentConfig {
    std::string name = "run";
    TaskKind task = TaskKind::ner;
    std::string train_path;
    std::string test_path;
    EmbeddingProviderConfig embedding;
    CompletionProviderConfig completion;
    std::vector<std::string> strategies = {"random", "central", "cluster", "votek"};
    std::vector<double> pool_size_fractions = {0.001, 0.0025, 0.005,
                                               0.01,  0.025,  0.05, 0.10};
    int trials = 3;
    std::size_t n_demos = 5;
    std::size_t test_subsample = 1000;
    std::uint64_t base_seed = 0;
    std::string output_dir = "runs/out";
    // Fractions scale max_pool_size by default; "train" scales |train|
    // instead, for comparability with budget grids stated against the full
    // training set.
    std::string pool_size_basis = "max_pool";
    PromptMode prompt_mode = PromptMode::message_pairs;
    std::string templates_dir;  // empty = compiled-in defaults
    bool l2_normalize = true;
    VoteKParams votek;
    std::string votek_confidence = "hash";  // hash | constant | none
    bool include_oracle = true;

    // Canonical form: every field, defaults filled. Key order is sorted, so
    // the digest is stable.
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& obj);
    static ExperimentConfig load_file(const std::string& path);

    std::string digest() const;
};

enum class CellStatus { pending, done, failed };

std::string to_string(CellStatus status);
CellStatus cell_status_from_string(const std::string& name);

struct CellSpec {
    std::string id;  // "<strategy>-k<pool_size>-t<trial>", or "oracle"
    std::string strategy;
    std::size_t k = 0;
    int trial = 0;
    std::uint64_t seed = 0;
};

struct ManifestCell {
    CellSpec spec;
    CellStatus status = CellStatus::pending;
    std::string result_path;      // cells/<id>.json
    std::string pool_path;        // pools/<id>.json
    std::string transcript_path;  // transcripts/<id>.jsonl
    std::string error;            // last failure message, empty otherwise
};

struct RunManifest {
    std::string config_digest;
    std::string code_version;
    std::string embedding_tag;
    std::string provider_tag;
    std::vector<std::string> cell_order;
    std::map<std::string, ManifestCell> cells;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& obj);
    static RunManifest load_file(const std::string& path);
    void save_file(const std::string& path) const;  // write-temp-then-rename
};

struct EvalReport {
    std::string run_dir;
    std::vector<CellResult> cells;  // done cells, oracle included
    std::vector<AggregateRow> aggregate_rows;
    double oracle_value = 0.0;
    int failed_cells = 0;

    bool ok() const { return failed_cells == 0; }
};

struct RunHooks {
    // Invoked after each cell's artifacts and manifest entry are persisted
    // (done or failed). Exceptions abort the sweep; resume picks it up.
    std::function<void(const std::string& cell_id)> after_cell;
};

// Full sweep per the config; failed cells are recorded and skipped over.
EvalReport run(const ExperimentConfig& config, const RunHooks& hooks = {});

// The full-train-pool reference cell, written into the same run directory.
CellResult run_oracle(const ExperimentConfig& config);

// Completes pending/failed cells of an existing run. Done cells are not
// recomputed and their artifacts are left untouched. Refuses to resume when
// the config digest differs from the manifest's.
EvalReport resume(const std::string& manifest_path, const RunHooks& hooks = {});

// Regenerates results.csv / aggregate.csv / plot_data.json from the cell
// artifacts in an existing run directory. Issues no provider calls.
EvalReport report(const std::string& run_dir);

// Budget grid: k = max(1, round(fraction * basis)), clamped to |train|,
// deduplicated, ascending.
std::vector<std::size_t> pool_sizes_for(const std::vector<double>& fractions,
                                        std::size_t basis, std::size_t train_size);

// Dataset + embeddings of a config, without touching completion providers.
// Backs the standalone pool-selection and max-pool-size commands.
struct PreparedInputs {
    Dataset dataset;  // test already subsampled
    EmbeddingStore store;
    std::vector<std::string> train_ids;  // sorted
    std::size_t max_pool_size = 0;
};

PreparedInputs prepare_inputs(const ExperimentConfig& config);

}  // namespace iclb
