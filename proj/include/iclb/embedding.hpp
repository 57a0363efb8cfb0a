#pragma once

// Text embeddings: provider contract, similarity, and exhaustive-scan
// nearest-neighbor search.
//
// The encoder itself always lives out of process. Three providers implement
// the contract: an HTTP service (POST {"texts": [...]} -> {"vectors": [[...]]}),
// a precomputed-vectors JSONL file, and a seeded hash pseudo-embedder for
// tests and offline runs.

#include <cstdint>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "iclb/corpus.hpp"

namespace iclb {

struct EmbeddingVector {
    std::vector<double> values;
    double norm = 0.0;  // Euclidean norm, cached at construction

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> v);

    std::size_t dim() const { return values.size(); }

    friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) {
        return a.values == b.values;
    }
};

// dot(a,b) / (|a||b|). Throws ArgumentError on dimension mismatch and
// DomainError on a zero-norm input.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Copy with unit Euclidean norm; zero vectors are returned unchanged.
EmbeddingVector l2_normalized(const EmbeddingVector& v);

// id -> vector map with a content-hash response cache. Reads may run
// concurrently; writes are serialized internally. Moving a store that other
// threads are still using is a caller bug.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(EmbeddingStore&& other) noexcept;
    EmbeddingStore& operator=(EmbeddingStore&& other) noexcept;
    EmbeddingStore(const EmbeddingStore&) = delete;
    EmbeddingStore& operator=(const EmbeddingStore&) = delete;

    void put(const std::string& id, EmbeddingVector vec);
    bool contains(const std::string& id) const;
    const EmbeddingVector& at(const std::string& id) const;  // ConfigError if absent
    std::size_t size() const;
    std::size_t dim() const;  // 0 when empty

    bool cache_lookup(std::uint64_t content_hash, EmbeddingVector& out) const;
    void cache_insert(std::uint64_t content_hash, const EmbeddingVector& vec);

    std::vector<std::string> ids_sorted() const;

    const std::string& provider_tag() const { return provider_tag_; }
    void set_provider_tag(std::string tag) { provider_tag_ = std::move(tag); }

    // Precomputed-vector JSONL ({"id": ..., "vector": [...]}) import/export.
    static EmbeddingStore load_jsonl(const std::string& text);
    std::string dump_jsonl() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, EmbeddingVector> vectors_;
    std::unordered_map<std::uint64_t, EmbeddingVector> text_cache_;
    std::string provider_tag_;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;

    // One vector per text, order preserving, all of equal dimension.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;

    virtual std::string tag() const = 0;
};

// Deterministic pseudo-embedder: component j of embed(text) is
// 2 * unit(mix64(fnv1a64(text) ^ mix64(seed) ^ j)) - 1, giving values in
// [-1, 1). Same (text, seed, dim) always yields the same vector.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    HashEmbeddingProvider(std::size_t dim, std::uint64_t seed);

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string tag() const override;

    EmbeddingVector embed_one(const std::string& text) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Serves vectors recorded in a JSONL file. Each entry is matched by its
// "text" field when present, otherwise by its "id"; texts with no entry are
// a ConfigError.
class FileEmbeddingProvider : public EmbeddingProvider {
public:
    static FileEmbeddingProvider from_jsonl(const std::string& text,
                                            std::string tag = "file");
    static FileEmbeddingProvider from_file(const std::string& path);

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string tag() const override;

private:
    std::unordered_map<std::string, EmbeddingVector> by_key_;
    std::string tag_;
};

struct HttpRetryPolicy {
    int max_attempts = 5;
    int initial_delay_ms = 200;
    double backoff_factor = 2.0;
    int max_delay_ms = 10000;
};

// POST {"texts": [...]} to `endpoint`; expects {"vectors": [[...], ...]}.
// The API key, if configured, is read from `api_key_env` and sent as a
// bearer token. Transient failures (connect errors, 429, 5xx) are retried
// with exponential backoff; ProviderError carries the attempt count.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    struct Options {
        std::string endpoint;          // e.g. http://127.0.0.1:8080/embed
        std::string model;             // forwarded in the request when nonempty
        std::string api_key_env;       // environment variable holding the key
        std::size_t batch_size = 64;   // texts per request
        int timeout_s = 30;
        HttpRetryPolicy retry;
    };

    explicit HttpEmbeddingProvider(Options options);
    ~HttpEmbeddingProvider() override;

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string tag() const override;

private:
    std::vector<EmbeddingVector> embed_batch_http(const std::vector<std::string>& texts);

    Options options_;
};

// One vector per text via `provider`, order preserving. Results are cached
// in `store` keyed by content hash; repeated texts hit the provider once.
// Dimension mismatches within the result are a ConfigError.
std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts,
                                         EmbeddingProvider& provider,
                                         EmbeddingStore& store);

// Ensures store.at(sample.id) exists for every sample, embedding the missing
// surfaces through `provider`.
void ensure_embeddings(EmbeddingStore& store, const std::vector<Sample>& samples,
                       EmbeddingProvider& provider);

// The min(n, |candidate_ids|) ids with the highest cosine similarity to
// `query`, sorted by descending similarity; ties break lexicographically
// by id. Exhaustive scan.
std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingVector& query, const EmbeddingStore& store,
    const std::vector<std::string>& candidate_ids, std::size_t n);

}  // namespace iclb
