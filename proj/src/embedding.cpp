#include "iclb/embedding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <httplib.h>
#include <json.hpp>

#include "iclb/errors.hpp"
#include "iclb/rng.hpp"

namespace iclb {

using nlohmann::json;

EmbeddingVector::EmbeddingVector(std::vector<double> v) : values(std::move(v)) {
    double sum = 0.0;
    for (double x : values) sum += x * x;
    norm = std::sqrt(sum);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw ArgumentError("cosine: dimension mismatch (" + std::to_string(a.dim()) +
                            " vs " + std::to_string(b.dim()) + ")");
    }
    if (a.norm == 0.0 || b.norm == 0.0) {
        throw DomainError("cosine: zero-norm vector");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
    return dot / (a.norm * b.norm);
}

EmbeddingVector l2_normalized(const EmbeddingVector& v) {
    if (v.norm == 0.0) return v;
    std::vector<double> scaled(v.values.size());
    for (std::size_t i = 0; i < v.values.size(); ++i) scaled[i] = v.values[i] / v.norm;
    return EmbeddingVector(std::move(scaled));
}

// -- EmbeddingStore -----------------------------------------------------------

EmbeddingStore::EmbeddingStore(EmbeddingStore&& other) noexcept {
    std::unique_lock lock(other.mutex_);
    vectors_ = std::move(other.vectors_);
    text_cache_ = std::move(other.text_cache_);
    provider_tag_ = std::move(other.provider_tag_);
}

EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        vectors_ = std::move(other.vectors_);
        text_cache_ = std::move(other.text_cache_);
        provider_tag_ = std::move(other.provider_tag_);
    }
    return *this;
}

void EmbeddingStore::put(const std::string& id, EmbeddingVector vec) {
    std::unique_lock lock(mutex_);
    vectors_[id] = std::move(vec);
}

bool EmbeddingStore::contains(const std::string& id) const {
    std::shared_lock lock(mutex_);
    return vectors_.count(id) > 0;
}

const EmbeddingVector& EmbeddingStore::at(const std::string& id) const {
    std::shared_lock lock(mutex_);
    auto it = vectors_.find(id);
    if (it == vectors_.end()) {
        throw ConfigError("no embedding stored for sample id '" + id + "'");
    }
    return it->second;
}

std::size_t EmbeddingStore::size() const {
    std::shared_lock lock(mutex_);
    return vectors_.size();
}

std::size_t EmbeddingStore::dim() const {
    std::shared_lock lock(mutex_);
    return vectors_.empty() ? 0 : vectors_.begin()->second.dim();
}

bool EmbeddingStore::cache_lookup(std::uint64_t content_hash, EmbeddingVector& out) const {
    std::shared_lock lock(mutex_);
    auto it = text_cache_.find(content_hash);
    if (it == text_cache_.end()) return false;
    out = it->second;
    return true;
}

void EmbeddingStore::cache_insert(std::uint64_t content_hash, const EmbeddingVector& vec) {
    std::unique_lock lock(mutex_);
    text_cache_[content_hash] = vec;
}

std::vector<std::string> EmbeddingStore::ids_sorted() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> ids;
    ids.reserve(vectors_.size());
    for (const auto& [id, _] : vectors_) ids.push_back(id);
    return ids;
}

EmbeddingStore EmbeddingStore::load_jsonl(const std::string& text) {
    EmbeddingStore store;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("id") ||
            !obj.contains("vector") || !obj["vector"].is_array()) {
            throw ParseError("expected {\"id\": ..., \"vector\": [...]}", line_no);
        }
        std::vector<double> values;
        for (const auto& x : obj["vector"]) {
            if (!x.is_number()) throw ParseError("non-numeric vector component", line_no);
            values.push_back(x.get<double>());
        }
        if (dim == 0) dim = values.size();
        if (values.size() != dim) {
            throw ConfigError("embedding dimension mismatch at line " +
                              std::to_string(line_no));
        }
        store.put(obj["id"].get<std::string>(), EmbeddingVector(std::move(values)));
    }
    return store;
}

std::string EmbeddingStore::dump_jsonl() const {
    std::shared_lock lock(mutex_);
    std::string out;
    for (const auto& [id, vec] : vectors_) {
        json obj;
        obj["id"] = id;
        obj["vector"] = vec.values;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

// -- Providers ----------------------------------------------------------------

HashEmbeddingProvider::HashEmbeddingProvider(std::size_t dim, std::uint64_t seed)
    : dim_(dim), seed_(seed) {
    if (dim == 0) throw ArgumentError("embedding dimension must be >= 1");
}

EmbeddingVector HashEmbeddingProvider::embed_one(const std::string& text) const {
    std::vector<double> values(dim_);
    const std::uint64_t base = fnv1a64(text) ^ mix64(seed_);
    for (std::size_t j = 0; j < dim_; ++j) {
        std::uint64_t h = mix64(base ^ j);
        values[j] = 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
    }
    return EmbeddingVector(std::move(values));
}

std::vector<EmbeddingVector> HashEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(embed_one(text));
    return out;
}

std::string HashEmbeddingProvider::tag() const {
    return "hash-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
}

FileEmbeddingProvider FileEmbeddingProvider::from_jsonl(const std::string& text,
                                                        std::string tag) {
    FileEmbeddingProvider provider;
    provider.tag_ = std::move(tag);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("vector")) {
            throw ParseError("expected {\"id\": ..., \"vector\": [...]}", line_no);
        }
        std::vector<double> values = obj["vector"].get<std::vector<double>>();
        std::string key = obj.contains("text") ? obj["text"].get<std::string>()
                                               : obj.value("id", std::string());
        if (key.empty()) throw ParseError("entry has neither 'text' nor 'id'", line_no);
        provider.by_key_[key] = EmbeddingVector(std::move(values));
    }
    return provider;
}

FileEmbeddingProvider FileEmbeddingProvider::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open embedding file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_jsonl(buffer.str(), "file:" + path);
}

std::vector<EmbeddingVector> FileEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        auto it = by_key_.find(text);
        if (it == by_key_.end()) {
            throw ConfigError("no precomputed embedding for text: " + text);
        }
        out.push_back(it->second);
    }
    return out;
}

std::string FileEmbeddingProvider::tag() const { return tag_; }

// -- HTTP provider ------------------------------------------------------------

namespace {

struct UrlParts {
    std::string host_port;  // scheme://host:port
    std::string path;
};

UrlParts split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint URL must include a scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

int backoff_delay_ms(const HttpRetryPolicy& policy, int attempt) {
    double delay = policy.initial_delay_ms;
    for (int i = 1; i < attempt; ++i) delay *= policy.backoff_factor;
    return static_cast<int>(std::min<double>(delay, policy.max_delay_ms));
}

bool retryable_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

}  // namespace

HttpEmbeddingProvider::HttpEmbeddingProvider(Options options)
    : options_(std::move(options)) {
    if (options_.endpoint.empty()) throw ConfigError("embedding endpoint not set");
}

HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed_batch_http(
    const std::vector<std::string>& texts) {
    auto url = split_url(options_.endpoint);
    httplib::Client client(url.host_port);
    client.set_connection_timeout(options_.timeout_s);
    client.set_read_timeout(options_.timeout_s);
    if (!options_.api_key_env.empty()) {
        if (const char* key = std::getenv(options_.api_key_env.c_str())) {
            client.set_bearer_token_auth(key);
        }
    }

    json body;
    body["texts"] = texts;
    if (!options_.model.empty()) body["model"] = options_.model;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 1; attempt <= options_.retry.max_attempts; ++attempt) {
        auto res = client.Post(url.path, payload, "application/json");
        if (res && res->status == 200) {
            json reply = json::parse(res->body, nullptr, false);
            if (reply.is_discarded() || !reply.contains("vectors") ||
                !reply["vectors"].is_array()) {
                throw ProviderError("embedding service returned malformed body",
                                    /*retryable=*/false, attempt);
            }
            std::vector<EmbeddingVector> out;
            for (const auto& vec : reply["vectors"]) {
                out.push_back(EmbeddingVector(vec.get<std::vector<double>>()));
            }
            if (out.size() != texts.size()) {
                throw ProviderError("embedding count does not match text count",
                                    /*retryable=*/false, attempt);
            }
            return out;
        }
        int status = res ? res->status : 0;
        last_error = res ? "HTTP " + std::to_string(status)
                         : "connection error: " + httplib::to_string(res.error());
        if (res && !retryable_status(status)) {
            throw ProviderError("embedding request failed: " + last_error,
                                /*retryable=*/false, attempt, status);
        }
        if (attempt < options_.retry.max_attempts) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_delay_ms(options_.retry, attempt)));
        }
    }
    throw ProviderError("embedding request failed after " +
                            std::to_string(options_.retry.max_attempts) +
                            " attempts: " + last_error,
                        /*retryable=*/true, options_.retry.max_attempts);
}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size(); start += options_.batch_size) {
        std::size_t stop = std::min(texts.size(), start + options_.batch_size);
        std::vector<std::string> chunk(texts.begin() + static_cast<long>(start),
                                       texts.begin() + static_cast<long>(stop));
        auto vectors = embed_batch_http(chunk);
        for (auto& vec : vectors) out.push_back(std::move(vec));
    }
    return out;
}

std::string HttpEmbeddingProvider::tag() const {
    return "http:" + options_.endpoint +
           (options_.model.empty() ? "" : "#" + options_.model);
}

// -- Batch embedding with cache -------------------------------------------------

std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         EmbeddingProvider& provider,
                                         EmbeddingStore& store) {
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        EmbeddingVector cached;
        if (store.cache_lookup(fnv1a64(texts[i]), cached)) {
            out[i] = std::move(cached);
        } else {
            missing.push_back(i);
        }
    }
    if (!missing.empty()) {
        std::vector<std::string> todo;
        std::unordered_map<std::uint64_t, std::size_t> todo_index;
        for (std::size_t i : missing) {
            std::uint64_t key = fnv1a64(texts[i]);
            if (todo_index.emplace(key, todo.size()).second) todo.push_back(texts[i]);
        }
        auto fresh = provider.embed(todo);
        if (fresh.size() != todo.size()) {
            throw ProviderError("provider returned " + std::to_string(fresh.size()) +
                                    " vectors for " + std::to_string(todo.size()) +
                                    " texts",
                                /*retryable=*/false);
        }
        for (std::size_t j = 0; j < todo.size(); ++j) {
            store.cache_insert(fnv1a64(todo[j]), fresh[j]);
        }
        for (std::size_t i : missing) {
            out[i] = fresh[todo_index.at(fnv1a64(texts[i]))];
        }
    }
    std::size_t dim = 0;
    for (const auto& vec : out) {
        if (dim == 0) dim = vec.dim();
        if (vec.dim() != dim) {
            throw ConfigError("embedding dimension mismatch within batch");
        }
    }
    if (store.provider_tag().empty()) store.set_provider_tag(provider.tag());
    return out;
}

void ensure_embeddings(EmbeddingStore& store, const std::vector<Sample>& samples,
                       EmbeddingProvider& provider) {
    std::vector<std::string> texts;
    std::vector<const Sample*> pending;
    for (const auto& sample : samples) {
        if (store.contains(sample.id)) continue;
        pending.push_back(&sample);
        texts.push_back(sample.surface());
    }
    if (pending.empty()) return;
    auto vectors = embed_batch(texts, provider, store);
    for (std::size_t i = 0; i < pending.size(); ++i) {
        store.put(pending[i]->id, std::move(vectors[i]));
    }
}

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingVector& query, const EmbeddingStore& store,
    const std::vector<std::string>& candidate_ids, std::size_t n) {
    if (n < 1) throw ArgumentError("nearest_neighbors: n must be >= 1");
    if (candidate_ids.empty()) throw ArgumentError("nearest_neighbors: no candidates");
    std::vector<std::pair<std::string, double>> scored;
    scored.reserve(candidate_ids.size());
    for (const auto& id : candidate_ids) {
        scored.emplace_back(id, cosine_similarity(query, store.at(id)));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > n) scored.resize(n);
    return scored;
}

}  // namespace iclb
