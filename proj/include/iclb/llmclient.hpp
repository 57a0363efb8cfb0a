#pragma once

// Completion dispatch: live HTTP chat endpoints or deterministic offline
// mocks, with retry/backoff, a token-bucket rate limiter, and full
// transcript capture for replay.
//
// Mock providers draw every random decision from hash_to_unit(seed,
// sample_id, salt), so their output is a pure function of (seed, request)
// regardless of evaluation order or concurrency.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "iclb/corpus.hpp"
#include "iclb/promptcodec.hpp"

namespace iclb {

struct CompletionRequest {
    PromptInstance prompt;
    std::string model_tag;
    double temperature = 0.0;
    std::size_t max_output_tokens = 1024;
    std::string sample_id;  // inference sample the prompt was built for

    // Stable content digest (prompt payload + decoding parameters), hex.
    std::string digest() const;
};

struct TranscriptRecord {
    std::string sample_id;
    std::string request_digest;
    std::string response;
    double latency_ms = 0.0;
    int attempts = 1;
};

// Append-only record of every completed request. Appends are serialized;
// each evaluated sample ends up with exactly one final record.
class Transcript {
public:
    Transcript() = default;
    Transcript(const Transcript& other);
    Transcript(Transcript&& other);
    Transcript& operator=(const Transcript& other);
    Transcript& operator=(Transcript&& other);

    void append(TranscriptRecord record);
    std::size_t size() const;
    std::vector<TranscriptRecord> records() const;

    std::string dump_jsonl() const;
    static Transcript load_jsonl(const std::string& text);
    static Transcript load_file(const std::string& path);

private:
    mutable std::mutex mutex_;
    std::vector<TranscriptRecord> records_;
};

struct RetryPolicy {
    int max_attempts = 5;
    int initial_delay_ms = 200;
    double backoff_factor = 2.0;
    int max_delay_ms = 10000;
};

// Simple token-bucket limiter; rate <= 0 disables limiting.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second = 0.0, double burst = 1.0);
    void acquire();

private:
    std::mutex mutex_;
    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_refill_;
};

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;

    // Single attempt; throws ProviderError on failure (retryable or not).
    virtual std::string complete_once(const CompletionRequest& request) = 0;

    virtual std::string tag() const = 0;
    virtual bool deterministic() const { return false; }
};

// Issues `request`, retrying retryable ProviderErrors with exponential
// backoff. Appends one final record to `transcript` when given. Exhausted
// retries rethrow the last error with the attempt count filled in.
std::string complete(const CompletionRequest& request, CompletionProvider& provider,
                     const RetryPolicy& retry = {}, Transcript* transcript = nullptr,
                     RateLimiter* limiter = nullptr);

// -- Mock providers -------------------------------------------------------------

// Echoes the rendered gold annotation of the requested inference sample.
class GoldEchoProvider : public CompletionProvider {
public:
    GoldEchoProvider(TaskKind task, const std::vector<Sample>& gold);

    std::string complete_once(const CompletionRequest& request) override;
    std::string tag() const override { return "mock-gold-echo"; }
    bool deterministic() const override { return true; }

private:
    TaskKind task_;
    std::map<std::string, Sample> gold_;
};

// Gold echo with seeded, per-field corruption. Every decision is a pure
// function of (seed, sample id, field index), and a field corrupted at rate
// r is corrupted at every rate >= r, so metric degradation is monotone in
// each rate.
struct CorruptionRates {
    double boundary_shift = 0.0;  // NER: move a span edge by one token
    double label_swap = 0.0;      // NER type / deprel / POS replacement
    double head_perturb = 0.0;    // parse: reattach token to another head
    double format_break = 0.0;    // truncate the rendered output mid-way
};

class CorruptorProvider : public CompletionProvider {
public:
    CorruptorProvider(TaskKind task, const std::vector<Sample>& gold,
                      CorruptionRates rates, std::uint64_t seed,
                      std::vector<std::string> label_alternatives = {});

    std::string complete_once(const CompletionRequest& request) override;
    std::string tag() const override;
    bool deterministic() const override { return true; }

private:
    Sample corrupted(const Sample& sample) const;

    TaskKind task_;
    std::map<std::string, Sample> gold_;
    CorruptionRates rates_;
    std::uint64_t seed_;
    std::vector<std::string> labels_;
};

// Replays responses recorded in a transcript, keyed by request digest.
class ReplayProvider : public CompletionProvider {
public:
    explicit ReplayProvider(const Transcript& transcript);

    std::string complete_once(const CompletionRequest& request) override;
    std::string tag() const override { return "replay"; }
    bool deterministic() const override { return true; }

private:
    std::map<std::string, std::string> by_digest_;
};

// Fails the first `failures` calls with a retryable error, then delegates.
// Used to exercise retry paths without a network.
class FlakyProvider : public CompletionProvider {
public:
    FlakyProvider(CompletionProvider& inner, int failures);

    std::string complete_once(const CompletionRequest& request) override;
    std::string tag() const override;

private:
    CompletionProvider& inner_;
    int remaining_;
    std::mutex mutex_;
};

// -- Live HTTP provider -----------------------------------------------------------

// POST {model, messages, temperature, max_tokens} -> {content}. The API key
// is read from `api_key_env` and sent as a bearer token.
class HttpChatProvider : public CompletionProvider {
public:
    struct Options {
        std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/chat
        std::string api_key_env;
        int timeout_s = 60;
    };

    explicit HttpChatProvider(Options options);

    std::string complete_once(const CompletionRequest& request) override;
    std::string tag() const override { return "http:" + options_.endpoint; }

private:
    Options options_;
};

// -- Confidence providers -----------------------------------------------------------

// Per-sample confidence used by vote-k stage 2; higher = more confident.
class ConfidenceProvider {
public:
    virtual ~ConfidenceProvider() = default;
    virtual double confidence(const Sample& sample, const PromptInstance& prompt) = 0;
    virtual std::string tag() const = 0;
};

double confidence(const Sample& sample, const PromptInstance& prompt,
                  ConfidenceProvider& provider);

class ConstantConfidenceProvider : public ConfidenceProvider {
public:
    explicit ConstantConfidenceProvider(double value) : value_(value) {}
    double confidence(const Sample&, const PromptInstance&) override { return value_; }
    std::string tag() const override { return "mock-constant-confidence"; }

private:
    double value_;
};

class HashConfidenceProvider : public ConfidenceProvider {
public:
    explicit HashConfidenceProvider(std::uint64_t seed) : seed_(seed) {}
    double confidence(const Sample& sample, const PromptInstance&) override;
    std::string tag() const override { return "mock-hash-confidence"; }

private:
    std::uint64_t seed_;
};

// Replays recorded confidence scores by sample id; unknown ids are a
// ProviderError.
class RecordedConfidenceProvider : public ConfidenceProvider {
public:
    explicit RecordedConfidenceProvider(std::map<std::string, double> scores)
        : scores_(std::move(scores)) {}
    double confidence(const Sample& sample, const PromptInstance&) override;
    std::string tag() const override { return "recorded-confidence"; }

private:
    std::map<std::string, double> scores_;
};

// POST {model, messages, temperature, max_tokens, logprobs: true} ->
// {content, mean_logprob}. A reply without mean_logprob is a
// CapabilityError (the caller then falls back to stage-1-only vote-k).
class HttpConfidenceProvider : public ConfidenceProvider {
public:
    explicit HttpConfidenceProvider(HttpChatProvider::Options options,
                                    std::string model_tag);

    double confidence(const Sample& sample, const PromptInstance& prompt) override;
    std::string tag() const override { return "http-confidence:" + options_.endpoint; }

private:
    HttpChatProvider::Options options_;
    std::string model_tag_;
};

}  // namespace iclb
