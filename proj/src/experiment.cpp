#include "iclb/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "iclb/errors.hpp"
#include "iclb/evalmetrics.hpp"
#include "iclb/retrieval.hpp"
#include "iclb/rng.hpp"

namespace iclb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kCodeVersion = "iclbudget/0.1.0";

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write file: " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

json retry_to_json(const RetryPolicy& retry) {
    return json{{"max_attempts", retry.max_attempts},
                {"initial_delay_ms", retry.initial_delay_ms},
                {"backoff_factor", retry.backoff_factor},
                {"max_delay_ms", retry.max_delay_ms}};
}

RetryPolicy retry_from_json(const json& obj) {
    RetryPolicy retry;
    retry.max_attempts = obj.value("max_attempts", retry.max_attempts);
    retry.initial_delay_ms = obj.value("initial_delay_ms", retry.initial_delay_ms);
    retry.backoff_factor = obj.value("backoff_factor", retry.backoff_factor);
    retry.max_delay_ms = obj.value("max_delay_ms", retry.max_delay_ms);
    return retry;
}

}  // namespace

// -- Config serialization ----------------------------------------------------------

json EmbeddingProviderConfig::to_json() const {
    return json{{"kind", kind},
                {"dim", dim},
                {"seed", seed},
                {"path", path},
                {"http",
                 json{{"endpoint", http.endpoint},
                      {"model", http.model},
                      {"api_key_env", http.api_key_env},
                      {"batch_size", http.batch_size},
                      {"timeout_s", http.timeout_s},
                      {"retry",
                       json{{"max_attempts", http.retry.max_attempts},
                            {"initial_delay_ms", http.retry.initial_delay_ms},
                            {"backoff_factor", http.retry.backoff_factor},
                            {"max_delay_ms", http.retry.max_delay_ms}}}}}};
}

EmbeddingProviderConfig EmbeddingProviderConfig::from_json(const json& obj) {
    EmbeddingProviderConfig config;
    config.kind = obj.value("kind", config.kind);
    config.dim = obj.value("dim", config.dim);
    config.seed = obj.value("seed", config.seed);
    config.path = obj.value("path", config.path);
    if (obj.contains("http")) {
        const json& http = obj.at("http");
        config.http.endpoint = http.value("endpoint", config.http.endpoint);
        config.http.model = http.value("model", config.http.model);
        config.http.api_key_env = http.value("api_key_env", config.http.api_key_env);
        config.http.batch_size = http.value("batch_size", config.http.batch_size);
        config.http.timeout_s = http.value("timeout_s", config.http.timeout_s);
        if (http.contains("retry")) {
            const json& retry = http.at("retry");
            config.http.retry.max_attempts =
                retry.value("max_attempts", config.http.retry.max_attempts);
            config.http.retry.initial_delay_ms =
                retry.value("initial_delay_ms", config.http.retry.initial_delay_ms);
            config.http.retry.backoff_factor =
                retry.value("backoff_factor", config.http.retry.backoff_factor);
            config.http.retry.max_delay_ms =
                retry.value("max_delay_ms", config.http.retry.max_delay_ms);
        }
    }
    return config;
}

json CompletionProviderConfig::to_json() const {
    return json{{"kind", kind},
                {"model_tag", model_tag},
                {"temperature", temperature},
                {"max_output_tokens", max_output_tokens},
                {"rates",
                 json{{"boundary_shift", rates.boundary_shift},
                      {"label_swap", rates.label_swap},
                      {"head_perturb", rates.head_perturb},
                      {"format_break", rates.format_break}}},
                {"seed", seed},
                {"transcript_path", transcript_path},
                {"http",
                 json{{"endpoint", http.endpoint},
                      {"api_key_env", http.api_key_env},
                      {"timeout_s", http.timeout_s}}},
                {"retry", retry_to_json(retry)},
                {"requests_per_second", requests_per_second},
                {"concurrency", concurrency}};
}

CompletionProviderConfig CompletionProviderConfig::from_json(const json& obj) {
    CompletionProviderConfig config;
    config.kind = obj.value("kind", config.kind);
    config.model_tag = obj.value("model_tag", config.model_tag);
    config.temperature = obj.value("temperature", config.temperature);
    config.max_output_tokens = obj.value("max_output_tokens", config.max_output_tokens);
    if (obj.contains("rates")) {
        const json& rates = obj.at("rates");
        config.rates.boundary_shift =
            rates.value("boundary_shift", config.rates.boundary_shift);
        config.rates.label_swap = rates.value("label_swap", config.rates.label_swap);
        config.rates.head_perturb =
            rates.value("head_perturb", config.rates.head_perturb);
        config.rates.format_break =
            rates.value("format_break", config.rates.format_break);
    }
    config.seed = obj.value("seed", config.seed);
    config.transcript_path = obj.value("transcript_path", config.transcript_path);
    if (obj.contains("http")) {
        const json& http = obj.at("http");
        config.http.endpoint = http.value("endpoint", config.http.endpoint);
        config.http.api_key_env = http.value("api_key_env", config.http.api_key_env);
        config.http.timeout_s = http.value("timeout_s", config.http.timeout_s);
    }
    if (obj.contains("retry")) config.retry = retry_from_json(obj.at("retry"));
    config.requests_per_second =
        obj.value("requests_per_second", config.requests_per_second);
    config.concurrency = obj.value("concurrency", config.concurrency);
    return config;
}

json ExperimentConfig::to_json() const {
    return json{{"name", name},
                {"task", iclb::to_string(task)},
                {"train_path", train_path},
                {"test_path", test_path},
                {"embedding", embedding.to_json()},
                {"completion", completion.to_json()},
                {"strategies", strategies},
                {"pool_size_fractions", pool_size_fractions},
                {"trials", trials},
                {"n_demos", n_demos},
                {"test_subsample", test_subsample},
                {"base_seed", base_seed},
                {"output_dir", output_dir},
                {"pool_size_basis", pool_size_basis},
                {"prompt_mode", iclb::to_string(prompt_mode)},
                {"templates_dir", templates_dir},
                {"l2_normalize", l2_normalize},
                {"votek",
                 json{{"graph_degree", votek.graph_degree},
                      {"rho", votek.rho},
                      {"stage1_fraction", votek.stage1_fraction}}},
                {"votek_confidence", votek_confidence},
                {"include_oracle", include_oracle}};
}

ExperimentConfig ExperimentConfig::from_json(const json& obj) {
    ExperimentConfig config;
    config.name = obj.value("name", config.name);
    if (obj.contains("task")) {
        config.task = task_from_string(obj.at("task").get<std::string>());
    }
    config.train_path = obj.value("train_path", config.train_path);
    config.test_path = obj.value("test_path", config.test_path);
    if (obj.contains("embedding")) {
        config.embedding = EmbeddingProviderConfig::from_json(obj.at("embedding"));
    }
    if (obj.contains("completion")) {
        config.completion = CompletionProviderConfig::from_json(obj.at("completion"));
    }
    if (obj.contains("strategies")) {
        config.strategies = obj.at("strategies").get<std::vector<std::string>>();
    }
    if (obj.contains("pool_size_fractions")) {
        config.pool_size_fractions =
            obj.at("pool_size_fractions").get<std::vector<double>>();
    }
    config.trials = obj.value("trials", config.trials);
    config.n_demos = obj.value("n_demos", config.n_demos);
    config.test_subsample = obj.value("test_subsample", config.test_subsample);
    config.base_seed = obj.value("base_seed", config.base_seed);
    config.output_dir = obj.value("output_dir", config.output_dir);
    config.pool_size_basis = obj.value("pool_size_basis", config.pool_size_basis);
    if (obj.contains("prompt_mode")) {
        config.prompt_mode =
            prompt_mode_from_string(obj.at("prompt_mode").get<std::string>());
    }
    config.templates_dir = obj.value("templates_dir", config.templates_dir);
    config.l2_normalize = obj.value("l2_normalize", config.l2_normalize);
    if (obj.contains("votek")) {
        const json& votek = obj.at("votek");
        config.votek.graph_degree =
            votek.value("graph_degree", config.votek.graph_degree);
        config.votek.rho = votek.value("rho", config.votek.rho);
        config.votek.stage1_fraction =
            votek.value("stage1_fraction", config.votek.stage1_fraction);
    }
    config.votek_confidence = obj.value("votek_confidence", config.votek_confidence);
    config.include_oracle = obj.value("include_oracle", config.include_oracle);

    if (config.trials < 1) throw ConfigError("trials must be >= 1");
    if (config.n_demos < 1) throw ConfigError("n_demos must be >= 1");
    for (double fraction : config.pool_size_fractions) {
        if (!(fraction > 0.0 && fraction <= 1.0)) {
            throw ConfigError("pool size fractions must lie in (0, 1]");
        }
    }
    if (config.pool_size_basis != "max_pool" && config.pool_size_basis != "train") {
        throw ConfigError("pool_size_basis must be max_pool or train");
    }
    return config;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    json parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
        throw ConfigError("config file is not a JSON object: " + path);
    }
    return from_json(parsed);
}

std::string ExperimentConfig::digest() const { return hex64(fnv1a64(to_json().dump())); }

// -- Manifest ----------------------------------------------------------------------

std::string to_string(CellStatus status) {
    switch (status) {
        case CellStatus::pending: return "pending";
        case CellStatus::done: return "done";
        case CellStatus::failed: return "failed";
    }
    throw DomainError("unknown cell status");
}

CellStatus cell_status_from_string(const std::string& name) {
    if (name == "pending") return CellStatus::pending;
    if (name == "done") return CellStatus::done;
    if (name == "failed") return CellStatus::failed;
    throw ConfigError("unknown cell status: " + name);
}

json RunManifest::to_json() const {
    json cells_obj = json::object();
    for (const auto& [id, cell] : cells) {
        cells_obj[id] = json{{"strategy", cell.spec.strategy},
                             {"k", cell.spec.k},
                             {"trial", cell.spec.trial},
                             {"seed", cell.spec.seed},
                             {"status", iclb::to_string(cell.status)},
                             {"result", cell.result_path},
                             {"pool", cell.pool_path},
                             {"transcript", cell.transcript_path},
                             {"error", cell.error}};
    }
    return json{{"config_digest", config_digest},
                {"code_version", code_version},
                {"embedding_tag", embedding_tag},
                {"provider_tag", provider_tag},
                {"cell_order", cell_order},
                {"cells", cells_obj}};
}

RunManifest RunManifest::from_json(const json& obj) {
    RunManifest manifest;
    manifest.config_digest = obj.at("config_digest").get<std::string>();
    manifest.code_version = obj.value("code_version", "");
    manifest.embedding_tag = obj.value("embedding_tag", "");
    manifest.provider_tag = obj.value("provider_tag", "");
    manifest.cell_order = obj.at("cell_order").get<std::vector<std::string>>();
    for (const auto& [id, cell_obj] : obj.at("cells").items()) {
        ManifestCell cell;
        cell.spec.id = id;
        cell.spec.strategy = cell_obj.at("strategy").get<std::string>();
        cell.spec.k = cell_obj.at("k").get<std::size_t>();
        cell.spec.trial = cell_obj.at("trial").get<int>();
        cell.spec.seed = cell_obj.at("seed").get<std::uint64_t>();
        cell.status = cell_status_from_string(cell_obj.at("status").get<std::string>());
        cell.result_path = cell_obj.value("result", "");
        cell.pool_path = cell_obj.value("pool", "");
        cell.transcript_path = cell_obj.value("transcript", "");
        cell.error = cell_obj.value("error", "");
        manifest.cells.emplace(id, std::move(cell));
    }
    return manifest;
}

RunManifest RunManifest::load_file(const std::string& path) {
    json parsed = json::parse(read_file(path), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) {
        throw ConfigError("manifest is not a JSON object: " + path);
    }
    return from_json(parsed);
}

void RunManifest::save_file(const std::string& path) const {
    write_file_atomic(path, to_json().dump(2) + "\n");
}

// -- Run context -------------------------------------------------------------------

std::vector<std::size_t> pool_sizes_for(const std::vector<double>& fractions,
                                        std::size_t basis, std::size_t train_size) {
    std::vector<std::size_t> ks;
    ks.reserve(fractions.size());
    for (double fraction : fractions) {
        if (!(fraction > 0.0 && fraction <= 1.0)) {
            throw ConfigError("pool size fractions must lie in (0, 1]");
        }
        auto k = static_cast<std::size_t>(std::max<long long>(
            1, std::llround(fraction * static_cast<double>(basis))));
        ks.push_back(std::min(k, train_size));
    }
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

namespace {

std::vector<Sample> load_samples(const std::string& path, TaskKind task) {
    if (path.empty()) throw ConfigError("dataset path is empty");
    std::string text = read_file(path);
    if (path.size() >= 7 && path.substr(path.size() - 7) == ".conllu") {
        if (task == TaskKind::ner) {
            throw ConfigError("CoNLL-U input cannot carry NER annotations: " + path);
        }
        return parse_conllu(text);
    }
    return task == TaskKind::ner ? parse_ner_jsonl(text) : parse_parse_jsonl(text);
}

std::unique_ptr<EmbeddingProvider> make_embedder(const EmbeddingProviderConfig& config) {
    if (config.kind == "hash") {
        return std::make_unique<HashEmbeddingProvider>(config.dim, config.seed);
    }
    if (config.kind == "file") {
        return std::make_unique<FileEmbeddingProvider>(
            FileEmbeddingProvider::from_file(config.path));
    }
    if (config.kind == "http") {
        return std::make_unique<HttpEmbeddingProvider>(config.http);
    }
    throw ConfigError("unknown embedding provider kind: " + config.kind);
}

std::unique_ptr<CompletionProvider> make_provider(const CompletionProviderConfig& config,
                                                  TaskKind task,
                                                  const std::vector<Sample>& gold) {
    if (config.kind == "gold_echo") {
        return std::make_unique<GoldEchoProvider>(task, gold);
    }
    if (config.kind == "corruptor") {
        return std::make_unique<CorruptorProvider>(task, gold, config.rates, config.seed);
    }
    if (config.kind == "replay") {
        return std::make_unique<ReplayProvider>(
            Transcript::load_file(config.transcript_path));
    }
    if (config.kind == "http") {
        return std::make_unique<HttpChatProvider>(config.http);
    }
    throw ConfigError("unknown completion provider kind: " + config.kind);
}

struct RunContext {
    explicit RunContext(ExperimentConfig cfg) : config(std::move(cfg)) {}

    ExperimentConfig config;
    Dataset dataset;
    EmbeddingStore store;
    std::unique_ptr<CompletionProvider> provider;
    std::unique_ptr<RateLimiter> limiter;
    PromptTemplates templates;
    CodecConfig codec;
    SampleIndex train_index;
    std::vector<std::string> train_ids;
    std::size_t max_pool = 0;
    bool prepared = false;

    void ensure_prepared() {
        if (prepared) return;

        PreparedInputs inputs = prepare_inputs(config);
        dataset = std::move(inputs.dataset);
        store = std::move(inputs.store);
        train_ids = std::move(inputs.train_ids);
        max_pool = inputs.max_pool_size;

        std::vector<Sample> gold = dataset.train;
        gold.insert(gold.end(), dataset.test.begin(), dataset.test.end());
        provider = make_provider(config.completion, config.task, gold);
        limiter = std::make_unique<RateLimiter>(config.completion.requests_per_second);

        templates = config.templates_dir.empty()
                        ? PromptTemplates::defaults()
                        : PromptTemplates::from_dir(config.templates_dir);
        codec = CodecConfig::defaults();
        if (config.task == TaskKind::ner) {
            codec.entity_types = dataset.label_set;
        } else {
            codec.pos_tags = observed_pos_tags(dataset);
        }

        train_index = index_samples(dataset.train);
        prepared = true;
    }
};

std::optional<VoteKConfidenceFn> confidence_fn_for(RunContext& ctx,
                                                   std::uint64_t seed) {
    const std::string& kind = ctx.config.votek_confidence;
    if (kind == "none") return std::nullopt;
    if (kind == "constant") {
        return VoteKConfidenceFn([](const std::vector<std::string>&,
                                    const std::vector<std::string>& candidates) {
            return std::vector<double>(candidates.size(), 0.5);
        });
    }
    if (kind == "hash") {
        return VoteKConfidenceFn([seed](const std::vector<std::string>&,
                                        const std::vector<std::string>& candidates) {
            std::vector<double> scores;
            scores.reserve(candidates.size());
            for (const auto& id : candidates) {
                scores.push_back(hash_to_unit(seed, id, /*salt=*/2));
            }
            return scores;
        });
    }
    if (kind == "http") {
        RunContext* context = &ctx;
        return VoteKConfidenceFn([context](const std::vector<std::string>& stage1_ids,
                                           const std::vector<std::string>& candidates) {
            HttpConfidenceProvider provider(context->config.completion.http,
                                            context->config.completion.model_tag);
            std::vector<Sample> demos;
            demos.reserve(stage1_ids.size());
            for (const auto& id : stage1_ids) {
                auto it = context->train_index.find(id);
                if (it == context->train_index.end()) {
                    throw ConfigError("stage-1 id " + id + " is not in the train split");
                }
                demos.push_back(*it->second);
            }
            std::vector<double> scores;
            scores.reserve(candidates.size());
            for (const auto& id : candidates) {
                auto it = context->train_index.find(id);
                if (it == context->train_index.end()) {
                    throw ConfigError("candidate id " + id +
                                      " is not in the train split");
                }
                PromptInstance prompt =
                    build_prompt(context->config.task, demos, *it->second,
                                 context->config.prompt_mode, context->templates);
                scores.push_back(provider.confidence(*it->second, prompt));
            }
            return scores;
        });
    }
    throw ConfigError("unknown votek_confidence kind: " + kind);
}

Pool select_pool_for(RunContext& ctx, const CellSpec& spec) {
    GeometryOptions geometry{ctx.config.l2_normalize};
    if (spec.strategy == "oracle") {
        Pool pool;
        pool.ids = ctx.train_ids;
        pool.strategy = "oracle";
        pool.k = ctx.train_ids.size();
        pool.seed = spec.seed;
        pool.provenance = json{{"note", "full train split"}};
        return pool;
    }
    if (spec.strategy == "random") {
        return select_random(ctx.train_ids, spec.k, spec.seed);
    }
    if (spec.strategy == "central") {
        return select_central(ctx.store, ctx.train_ids, spec.k, geometry);
    }
    if (spec.strategy == "cluster") {
        return select_cluster(ctx.store, ctx.train_ids, spec.k, spec.seed, geometry);
    }
    if (spec.strategy == "votek") {
        auto confidence = confidence_fn_for(ctx, spec.seed);
        try {
            return select_vote_k(ctx.store, ctx.train_ids, spec.k, ctx.config.votek,
                                 confidence, spec.seed, geometry);
        } catch (const CapabilityError&) {
            return select_vote_k(ctx.store, ctx.train_ids, spec.k, ctx.config.votek,
                                 std::nullopt, spec.seed, geometry);
        }
    }
    throw ConfigError("unknown strategy: " + spec.strategy);
}

struct CellArtifacts {
    CellResult result;
    Pool pool;
    Transcript transcript;
};

CellArtifacts execute_cell(RunContext& ctx, const CellSpec& spec) {
    ctx.ensure_prepared();
    CellArtifacts artifacts;
    artifacts.pool = select_pool_for(ctx, spec);

    const auto& test = ctx.dataset.test;
    std::vector<ParsedCompletion> preds(test.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto evaluate_up_to_failure = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= test.size()) return;
            {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (failure) return;
            }
            try {
                const Sample& sample = test[i];
                DemonstrationSet demos = select_demonstrations(
                    artifacts.pool, ctx.store, sample, ctx.config.n_demos);
                CompletionRequest request;
                request.prompt =
                    build_prompt(ctx.config.task, demos, ctx.train_index, sample,
                                 ctx.config.prompt_mode, ctx.templates);
                request.model_tag = ctx.config.completion.model_tag;
                request.temperature = ctx.config.completion.temperature;
                request.max_output_tokens = ctx.config.completion.max_output_tokens;
                request.sample_id = sample.id;
                std::string response =
                    complete(request, *ctx.provider, ctx.config.completion.retry,
                             &artifacts.transcript, ctx.limiter.get());
                preds[i] = parse_completion(ctx.config.task, response, sample, ctx.codec);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    int workers = std::max(1, ctx.config.completion.concurrency);
    workers = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(workers), test.size()));
    if (workers <= 1) {
        evaluate_up_to_failure();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) threads.emplace_back(evaluate_up_to_failure);
        for (auto& thread : threads) thread.join();
    }
    if (failure) std::rethrow_exception(failure);

    CellResult& cell = artifacts.result;
    cell.task = iclb::to_string(ctx.config.task);
    cell.model_tag = ctx.config.completion.model_tag;
    cell.strategy = spec.strategy;
    cell.pool_size = artifacts.pool.ids.size();
    cell.trial = spec.trial;
    cell.seed = spec.seed;
    cell.metric = score_samples(ctx.config.task, test, preds);
    try {
        cell.pool_label_entropy = entropy(label_counts(artifacts.pool, ctx.dataset));
    } catch (const DomainError&) {
        cell.pool_label_entropy = 0.0;  // pool carries no labeled units
    }
    return artifacts;
}

std::vector<CellSpec> sweep_cells(const ExperimentConfig& config,
                                  const std::vector<std::size_t>& pool_sizes,
                                  std::size_t train_size) {
    std::vector<CellSpec> specs;
    for (const auto& strategy : config.strategies) {
        for (std::size_t k : pool_sizes) {
            for (int trial = 0; trial < config.trials; ++trial) {
                CellSpec spec;
                spec.strategy = strategy;
                spec.k = k;
                spec.trial = trial;
                spec.seed = config.base_seed + static_cast<std::uint64_t>(trial);
                spec.id = strategy + "-k" + std::to_string(k) + "-t" +
                          std::to_string(trial);
                specs.push_back(std::move(spec));
            }
        }
    }
    if (config.include_oracle) {
        CellSpec oracle;
        oracle.id = "oracle";
        oracle.strategy = "oracle";
        oracle.k = train_size;
        oracle.trial = 0;
        oracle.seed = config.base_seed;
        specs.push_back(std::move(oracle));
    }
    return specs;
}

ManifestCell manifest_entry(const CellSpec& spec) {
    ManifestCell cell;
    cell.spec = spec;
    cell.status = CellStatus::pending;
    cell.result_path = "cells/" + spec.id + ".json";
    cell.pool_path = "pools/" + spec.id + ".json";
    cell.transcript_path = "transcripts/" + spec.id + ".jsonl";
    return cell;
}

void persist_cell(const fs::path& run_dir, const ManifestCell& entry,
                  const CellArtifacts& artifacts) {
    write_file_atomic(run_dir / entry.pool_path,
                      artifacts.pool.to_json().dump(2) + "\n");
    write_file_atomic(run_dir / entry.transcript_path,
                      artifacts.transcript.dump_jsonl());
    write_file_atomic(run_dir / entry.result_path,
                      artifacts.result.to_json().dump(2) + "\n");
}

// Runs every non-done cell in manifest order, persisting artifacts and the
// manifest after each cell.
void execute_pending(RunContext& ctx, RunManifest& manifest,
                     const fs::path& manifest_path, const fs::path& run_dir,
                     const RunHooks& hooks) {
    for (const auto& id : manifest.cell_order) {
        ManifestCell& entry = manifest.cells.at(id);
        if (entry.status == CellStatus::done) continue;
        try {
            CellArtifacts artifacts = execute_cell(ctx, entry.spec);
            persist_cell(run_dir, entry, artifacts);
            entry.status = CellStatus::done;
            entry.error.clear();
        } catch (const std::exception& e) {
            entry.status = CellStatus::failed;
            entry.error = e.what();
        }
        if (ctx.prepared) {
            manifest.embedding_tag = ctx.store.provider_tag();
            manifest.provider_tag = ctx.provider->tag();
        }
        manifest.save_file(manifest_path.string());
        if (hooks.after_cell) hooks.after_cell(id);
    }
}

EvalReport finalize_report(const fs::path& run_dir, const RunManifest& manifest) {
    EvalReport report;
    report.run_dir = run_dir.string();
    std::optional<CellResult> oracle;
    std::vector<CellResult> sweep;
    for (const auto& id : manifest.cell_order) {
        const ManifestCell& entry = manifest.cells.at(id);
        if (entry.status == CellStatus::failed) ++report.failed_cells;
        if (entry.status != CellStatus::done) continue;
        json parsed = json::parse(read_file((run_dir / entry.result_path).string()));
        CellResult cell = CellResult::from_json(parsed);
        if (cell.strategy == "oracle") {
            oracle = cell;
        } else {
            sweep.push_back(cell);
        }
        report.cells.push_back(std::move(cell));
    }
    report.oracle_value = oracle.has_value() ? oracle->metric.primary() : 0.0;
    report.aggregate_rows = aggregate(sweep, report.oracle_value);

    write_file_atomic(run_dir / "results.csv", results_csv(report.cells));
    write_file_atomic(run_dir / "aggregate.csv", aggregate_csv(report.aggregate_rows));
    write_file_atomic(
        run_dir / "plot_data.json",
        plot_data(sweep, report.aggregate_rows, report.oracle_value).dump(2) + "\n");
    return report;
}

fs::path prepare_run_dir(const ExperimentConfig& config) {
    fs::path run_dir = config.output_dir;
    fs::create_directories(run_dir / "cells");
    fs::create_directories(run_dir / "pools");
    fs::create_directories(run_dir / "transcripts");
    write_file_atomic(run_dir / "config.json", config.to_json().dump(2) + "\n");
    return run_dir;
}

}  // namespace

PreparedInputs prepare_inputs(const ExperimentConfig& config) {
    PreparedInputs inputs;
    std::vector<Sample> train = load_samples(config.train_path, config.task);
    std::vector<Sample> test = load_samples(config.test_path, config.task);
    inputs.dataset =
        make_dataset(config.name, config.task, std::move(train), std::move(test));
    if (inputs.dataset.train.empty()) throw ConfigError("train split is empty");
    if (inputs.dataset.test.empty()) throw ConfigError("test split is empty");
    inputs.dataset =
        subsample_test(inputs.dataset, config.test_subsample, config.base_seed);

    auto embedder = make_embedder(config.embedding);
    inputs.store.set_provider_tag(embedder->tag());
    ensure_embeddings(inputs.store, inputs.dataset.train, *embedder);
    ensure_embeddings(inputs.store, inputs.dataset.test, *embedder);
    inputs.max_pool_size = compute_max_pool_size(inputs.dataset.train,
                                                 inputs.dataset.test, inputs.store,
                                                 config.n_demos);

    inputs.train_ids.reserve(inputs.dataset.train.size());
    for (const auto& sample : inputs.dataset.train) {
        inputs.train_ids.push_back(sample.id);
    }
    std::sort(inputs.train_ids.begin(), inputs.train_ids.end());
    return inputs;
}

// -- Entry points ------------------------------------------------------------------

EvalReport run(const ExperimentConfig& config, const RunHooks& hooks) {
    fs::path run_dir = prepare_run_dir(config);
    RunContext ctx(config);
    ctx.ensure_prepared();

    std::size_t basis =
        config.pool_size_basis == "train" ? ctx.dataset.train.size() : ctx.max_pool;
    std::vector<std::size_t> pool_sizes =
        pool_sizes_for(config.pool_size_fractions, basis, ctx.dataset.train.size());

    RunManifest manifest;
    manifest.config_digest = config.digest();
    manifest.code_version = kCodeVersion;
    manifest.embedding_tag = ctx.store.provider_tag();
    manifest.provider_tag = ctx.provider->tag();
    for (const auto& spec : sweep_cells(config, pool_sizes, ctx.dataset.train.size())) {
        manifest.cell_order.push_back(spec.id);
        manifest.cells.emplace(spec.id, manifest_entry(spec));
    }
    fs::path manifest_path = run_dir / "manifest.json";
    manifest.save_file(manifest_path.string());

    execute_pending(ctx, manifest, manifest_path, run_dir, hooks);
    return finalize_report(run_dir, manifest);
}

CellResult run_oracle(const ExperimentConfig& config) {
    fs::path run_dir = prepare_run_dir(config);
    RunContext ctx(config);
    ctx.ensure_prepared();

    CellSpec spec;
    spec.id = "oracle";
    spec.strategy = "oracle";
    spec.k = ctx.dataset.train.size();
    spec.trial = 0;
    spec.seed = config.base_seed;

    fs::path manifest_path = run_dir / "manifest.json";
    RunManifest manifest;
    if (fs::exists(manifest_path)) {
        manifest = RunManifest::load_file(manifest_path.string());
        if (manifest.config_digest != config.digest()) {
            throw ConfigError("run directory belongs to a different config");
        }
    } else {
        manifest.config_digest = config.digest();
        manifest.code_version = kCodeVersion;
    }
    manifest.embedding_tag = ctx.store.provider_tag();
    manifest.provider_tag = ctx.provider->tag();
    if (manifest.cells.find(spec.id) == manifest.cells.end()) {
        manifest.cell_order.push_back(spec.id);
        manifest.cells.emplace(spec.id, manifest_entry(spec));
    }

    ManifestCell& entry = manifest.cells.at(spec.id);
    CellArtifacts artifacts = execute_cell(ctx, entry.spec);
    persist_cell(run_dir, entry, artifacts);
    entry.status = CellStatus::done;
    entry.error.clear();
    manifest.save_file(manifest_path.string());

    finalize_report(run_dir, manifest);
    return artifacts.result;
}

EvalReport resume(const std::string& manifest_path, const RunHooks& hooks) {
    fs::path manifest_file = manifest_path;
    fs::path run_dir = manifest_file.parent_path();
    if (run_dir.empty()) run_dir = ".";
    RunManifest manifest = RunManifest::load_file(manifest_file.string());
    ExperimentConfig config =
        ExperimentConfig::load_file((run_dir / "config.json").string());
    if (manifest.config_digest != config.digest()) {
        throw ConfigError("config digest mismatch: config.json is " + config.digest() +
                          " but the manifest records " + manifest.config_digest +
                          "; refusing to resume");
    }
    RunContext ctx(config);  // prepared lazily, only if a cell still needs work
    execute_pending(ctx, manifest, manifest_file, run_dir, hooks);
    return finalize_report(run_dir, manifest);
}

EvalReport report(const std::string& run_dir) {
    fs::path dir = run_dir;
    RunManifest manifest = RunManifest::load_file((dir / "manifest.json").string());
    return finalize_report(dir, manifest);
}

}  // namespace iclb
