#include "iclb/llmclient.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>
#include <variant>

#include <httplib.h>
#include <json.hpp>

#include "iclb/errors.hpp"
#include "iclb/rng.hpp"

namespace iclb {

using nlohmann::json;

namespace {

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

// Chat-shaped message array for either prompt mode. Separator prompts go
// out as a single user message.
json chat_messages(const PromptInstance& prompt) {
    if (prompt.mode == PromptMode::message_pairs) return to_messages(prompt);
    json messages = json::array();
    messages.push_back({{"role", "user"}, {"content", to_separator_text(prompt)}});
    return messages;
}

json chat_body(const CompletionRequest& request) {
    return json{{"model", request.model_tag},
                {"messages", chat_messages(request.prompt)},
                {"temperature", request.temperature},
                {"max_tokens", request.max_output_tokens}};
}

// endpoint -> (host part, path part) for httplib.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    auto scheme = endpoint.find("://");
    std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
    auto path_start = endpoint.find('/', host_start);
    if (path_start == std::string::npos) return {endpoint, "/"};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

json post_json(const HttpChatProvider::Options& options, const json& body) {
    auto [host, path] = split_endpoint(options.endpoint);
    httplib::Client client(host);
    client.set_connection_timeout(options.timeout_s, 0);
    client.set_read_timeout(options.timeout_s, 0);
    httplib::Headers headers;
    if (!options.api_key_env.empty()) {
        if (const char* key = std::getenv(options.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    auto result = client.Post(path, headers, body.dump(), "application/json");
    if (!result) {
        throw ProviderError("connection to " + options.endpoint + " failed: " +
                                httplib::to_string(result.error()),
                            /*retryable=*/true);
    }
    if (result->status == 429 || result->status >= 500) {
        throw ProviderError("HTTP " + std::to_string(result->status) + " from " +
                                options.endpoint,
                            /*retryable=*/true, 1, result->status);
    }
    if (result->status != 200) {
        throw ProviderError("HTTP " + std::to_string(result->status) + " from " +
                                options.endpoint,
                            /*retryable=*/false, 1, result->status);
    }
    json parsed = json::parse(result->body, nullptr, false);
    if (parsed.is_discarded()) {
        throw ProviderError("non-JSON response from " + options.endpoint,
                            /*retryable=*/false);
    }
    return parsed;
}

}  // namespace

std::string CompletionRequest::digest() const {
    json summary{{"payload", prompt_payload(prompt)},
                 {"model", model_tag},
                 {"temperature", temperature},
                 {"max_tokens", max_output_tokens}};
    return hex64(fnv1a64(summary.dump()));
}

// -- Transcript -------------------------------------------------------------------

Transcript::Transcript(const Transcript& other) {
    std::lock_guard<std::mutex> lock(other.mutex_);
    records_ = other.records_;
}

Transcript::Transcript(Transcript&& other) {
    std::lock_guard<std::mutex> lock(other.mutex_);
    records_ = std::move(other.records_);
}

Transcript& Transcript::operator=(const Transcript& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        records_ = other.records_;
    }
    return *this;
}

Transcript& Transcript::operator=(Transcript&& other) {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        records_ = std::move(other.records_);
    }
    return *this;
}

void Transcript::append(TranscriptRecord record) {
    std::lock_guard<std::mutex> lock(mutex_);
    records_.push_back(std::move(record));
}

std::size_t Transcript::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_.size();
}

std::vector<TranscriptRecord> Transcript::records() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_;
}

std::string Transcript::dump_jsonl() const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string out;
    for (const auto& record : records_) {
        json line{{"sample_id", record.sample_id},
                  {"digest", record.request_digest},
                  {"response", record.response},
                  {"latency_ms", record.latency_ms},
                  {"attempts", record.attempts}};
        out += line.dump();
        out += '\n';
    }
    return out;
}

Transcript Transcript::load_jsonl(const std::string& text) {
    Transcript transcript;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json parsed = json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            throw ParseError("transcript line is not a JSON object", line_no);
        }
        try {
            TranscriptRecord record;
            record.sample_id = parsed.at("sample_id").get<std::string>();
            record.request_digest = parsed.at("digest").get<std::string>();
            record.response = parsed.at("response").get<std::string>();
            record.latency_ms = parsed.value("latency_ms", 0.0);
            record.attempts = parsed.value("attempts", 1);
            transcript.append(std::move(record));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad transcript record: ") + e.what(), line_no);
        }
    }
    return transcript;
}

Transcript Transcript::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open transcript file: " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return load_jsonl(buffer.str());
}

// -- Rate limiting ----------------------------------------------------------------

RateLimiter::RateLimiter(double requests_per_second, double burst)
    : rate_(requests_per_second),
      capacity_(std::max(burst, 1.0)),
      tokens_(std::max(burst, 1.0)),
      last_refill_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    for (;;) {
        double wait_s = 0.0;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto now = std::chrono::steady_clock::now();
            double elapsed = std::chrono::duration<double>(now - last_refill_).count();
            last_refill_ = now;
            tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            wait_s = (1.0 - tokens_) / rate_;
        }
        std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    }
}

// -- complete ---------------------------------------------------------------------

std::string complete(const CompletionRequest& request, CompletionProvider& provider,
                     const RetryPolicy& retry, Transcript* transcript,
                     RateLimiter* limiter) {
    if (request.temperature < 0.0) {
        throw ArgumentError("temperature must be >= 0");
    }
    int max_attempts = std::max(retry.max_attempts, 1);
    double delay_ms = retry.initial_delay_ms;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        if (limiter != nullptr) limiter->acquire();
        auto start = std::chrono::steady_clock::now();
        try {
            std::string response = provider.complete_once(request);
            auto end = std::chrono::steady_clock::now();
            if (transcript != nullptr) {
                TranscriptRecord record;
                record.sample_id = request.sample_id;
                record.request_digest = request.digest();
                record.response = response;
                record.latency_ms =
                    std::chrono::duration<double, std::milli>(end - start).count();
                record.attempts = attempt;
                transcript->append(std::move(record));
            }
            return response;
        } catch (const ProviderError& e) {
            if (!e.retryable() || attempt == max_attempts) {
                throw ProviderError(e.what(), e.retryable(), attempt, e.status());
            }
            std::this_thread::sleep_for(
                std::chrono::duration<double, std::milli>(delay_ms));
            delay_ms = std::min(delay_ms * retry.backoff_factor,
                                static_cast<double>(retry.max_delay_ms));
        }
    }
    throw ProviderError("retry loop exhausted", false, max_attempts);
}

// -- GoldEchoProvider ------------------------------------------------------------

GoldEchoProvider::GoldEchoProvider(TaskKind task, const std::vector<Sample>& gold)
    : task_(task) {
    for (const auto& sample : gold) gold_.emplace(sample.id, sample);
}

std::string GoldEchoProvider::complete_once(const CompletionRequest& request) {
    auto it = gold_.find(request.sample_id);
    if (it == gold_.end()) {
        throw ProviderError("no gold annotation recorded for sample " + request.sample_id,
                            /*retryable=*/false);
    }
    if (!it->second.annotation.has_value()) {
        throw ProviderError("sample " + request.sample_id + " is unannotated",
                            /*retryable=*/false);
    }
    return render_annotation(task_, it->second);
}

// -- CorruptorProvider -----------------------------------------------------------

namespace {

// Per-decision salts; one 8-slot block per entity/token.
constexpr std::uint64_t kFormatBreakSalt = 1;
constexpr std::uint64_t kFieldSaltBase = 16;
constexpr std::uint64_t kBoundaryTrigger = 0;
constexpr std::uint64_t kBoundaryPick = 1;
constexpr std::uint64_t kLabelTrigger = 2;
constexpr std::uint64_t kLabelPick = 3;
constexpr std::uint64_t kHeadTrigger = 4;
constexpr std::uint64_t kHeadPick = 5;

std::size_t pick_index(double unit, std::size_t size) {
    auto idx = static_cast<std::size_t>(unit * static_cast<double>(size));
    return std::min(idx, size - 1);
}

bool spans_overlap(const EntitySpan& a, const EntitySpan& b) {
    return a.start < b.end && b.start < a.end;
}

std::vector<std::string> distinct_labels(TaskKind task,
                                         const std::vector<Sample>& gold) {
    std::vector<std::string> labels;
    for (const auto& sample : gold) {
        if (!sample.annotation.has_value()) continue;
        if (task == TaskKind::ner) {
            for (const auto& span : sample.ner().entities) labels.push_back(span.type);
        } else {
            for (const auto& row : sample.parse().rows) {
                labels.push_back(task == TaskKind::pos ? row.pos : row.deprel);
            }
        }
    }
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    return labels;
}

}  // namespace

CorruptorProvider::CorruptorProvider(TaskKind task, const std::vector<Sample>& gold,
                                     CorruptionRates rates, std::uint64_t seed,
                                     std::vector<std::string> label_alternatives)
    : task_(task), rates_(rates), seed_(seed), labels_(std::move(label_alternatives)) {
    for (const auto& sample : gold) gold_.emplace(sample.id, sample);
    if (labels_.empty()) labels_ = distinct_labels(task, gold);
}

std::string CorruptorProvider::tag() const {
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "mock-corruptor(boundary=%g,label=%g,head=%g,format=%g,seed=%llu)",
                  rates_.boundary_shift, rates_.label_swap, rates_.head_perturb,
                  rates_.format_break, static_cast<unsigned long long>(seed_));
    return buf;
}

Sample CorruptorProvider::corrupted(const Sample& sample) const {
    Sample out = sample;
    const int n = static_cast<int>(sample.tokens.size());

    if (task_ == TaskKind::ner) {
        auto& entities = std::get<NerAnnotation>(out.annotation.value()).entities;
        const auto gold_entities = entities;
        for (std::size_t i = 0; i < entities.size(); ++i) {
            std::uint64_t base = kFieldSaltBase + 8 * i;
            auto& span = entities[i];
            if (rates_.boundary_shift > 0.0 &&
                hash_to_unit(seed_, sample.id, base + kBoundaryTrigger) <
                    rates_.boundary_shift) {
                // A shifted span must stay in bounds, stay disjoint from the
                // other spans, and not land exactly on another gold entity
                // (that would silently re-create a correct prediction).
                std::vector<EntitySpan> candidates = {
                    {span.start - 1, span.end, span.type},
                    {span.start + 1, span.end, span.type},
                    {span.start, span.end - 1, span.type},
                    {span.start, span.end + 1, span.type}};
                std::vector<EntitySpan> valid;
                for (const auto& candidate : candidates) {
                    if (candidate.start < 0 || candidate.end > n) continue;
                    if (candidate.start >= candidate.end) continue;
                    bool clash = false;
                    for (std::size_t j = 0; j < entities.size() && !clash; ++j) {
                        if (j != i && spans_overlap(candidate, entities[j])) clash = true;
                    }
                    for (const auto& gold_span : gold_entities) {
                        if (candidate == gold_span) clash = true;
                    }
                    if (!clash) valid.push_back(candidate);
                }
                if (!valid.empty()) {
                    double u = hash_to_unit(seed_, sample.id, base + kBoundaryPick);
                    span = valid[pick_index(u, valid.size())];
                }
            }
            if (rates_.label_swap > 0.0 &&
                hash_to_unit(seed_, sample.id, base + kLabelTrigger) < rates_.label_swap) {
                std::vector<std::string> alternatives;
                for (const auto& label : labels_) {
                    if (label != span.type) alternatives.push_back(label);
                }
                if (!alternatives.empty()) {
                    double u = hash_to_unit(seed_, sample.id, base + kLabelPick);
                    span.type = alternatives[pick_index(u, alternatives.size())];
                }
            }
        }
        return out;
    }

    auto& rows = std::get<ParseAnnotation>(out.annotation.value()).rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::uint64_t base = kFieldSaltBase + 8 * i;
        auto& row = rows[i];
        if (rates_.label_swap > 0.0 &&
            hash_to_unit(seed_, sample.id, base + kLabelTrigger) < rates_.label_swap) {
            std::string& target = task_ == TaskKind::pos ? row.pos : row.deprel;
            std::vector<std::string> alternatives;
            for (const auto& label : labels_) {
                if (label != target) alternatives.push_back(label);
            }
            if (!alternatives.empty()) {
                double u = hash_to_unit(seed_, sample.id, base + kLabelPick);
                target = alternatives[pick_index(u, alternatives.size())];
            }
        }
        if (task_ == TaskKind::depparse && rates_.head_perturb > 0.0 &&
            hash_to_unit(seed_, sample.id, base + kHeadTrigger) < rates_.head_perturb) {
            std::vector<int> alternatives;
            for (int head = 0; head <= n; ++head) {
                if (head != row.head && head != static_cast<int>(i) + 1) {
                    alternatives.push_back(head);
                }
            }
            if (!alternatives.empty()) {
                double u = hash_to_unit(seed_, sample.id, base + kHeadPick);
                row.head = alternatives[pick_index(u, alternatives.size())];
            }
        }
    }
    return out;
}

std::string CorruptorProvider::complete_once(const CompletionRequest& request) {
    auto it = gold_.find(request.sample_id);
    if (it == gold_.end()) {
        throw ProviderError("no gold annotation recorded for sample " + request.sample_id,
                            /*retryable=*/false);
    }
    if (!it->second.annotation.has_value()) {
        throw ProviderError("sample " + request.sample_id + " is unannotated",
                            /*retryable=*/false);
    }
    std::string rendered = render_annotation(task_, corrupted(it->second));
    if (rates_.format_break > 0.0 &&
        hash_to_unit(seed_, request.sample_id, kFormatBreakSalt) < rates_.format_break) {
        return rendered.substr(0, rendered.size() / 2);
    }
    return rendered;
}

// -- ReplayProvider --------------------------------------------------------------

ReplayProvider::ReplayProvider(const Transcript& transcript) {
    for (const auto& record : transcript.records()) {
        by_digest_[record.request_digest] = record.response;
    }
}

std::string ReplayProvider::complete_once(const CompletionRequest& request) {
    auto it = by_digest_.find(request.digest());
    if (it == by_digest_.end()) {
        throw ProviderError("transcript has no response for request digest " +
                                request.digest() + " (sample " + request.sample_id + ")",
                            /*retryable=*/false);
    }
    return it->second;
}

// -- FlakyProvider ---------------------------------------------------------------

FlakyProvider::FlakyProvider(CompletionProvider& inner, int failures)
    : inner_(inner), remaining_(failures) {}

std::string FlakyProvider::complete_once(const CompletionRequest& request) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (remaining_ > 0) {
            --remaining_;
            throw ProviderError("injected transient failure", /*retryable=*/true, 1, 503);
        }
    }
    return inner_.complete_once(request);
}

std::string FlakyProvider::tag() const { return "flaky:" + inner_.tag(); }

// -- HttpChatProvider ------------------------------------------------------------

HttpChatProvider::HttpChatProvider(Options options) : options_(std::move(options)) {
    if (options_.endpoint.empty()) throw ConfigError("chat endpoint is empty");
}

std::string HttpChatProvider::complete_once(const CompletionRequest& request) {
    json reply = post_json(options_, chat_body(request));
    if (!reply.is_object() || !reply.contains("content") ||
        !reply["content"].is_string()) {
        throw ProviderError("chat response lacks a string `content` field",
                            /*retryable=*/false);
    }
    return reply["content"].get<std::string>();
}

// -- Confidence ------------------------------------------------------------------

double confidence(const Sample& sample, const PromptInstance& prompt,
                  ConfidenceProvider& provider) {
    return provider.confidence(sample, prompt);
}

double HashConfidenceProvider::confidence(const Sample& sample, const PromptInstance&) {
    return hash_to_unit(seed_, sample.id, /*salt=*/2);
}

double RecordedConfidenceProvider::confidence(const Sample& sample,
                                              const PromptInstance&) {
    auto it = scores_.find(sample.id);
    if (it == scores_.end()) {
        throw ProviderError("no recorded confidence for sample " + sample.id,
                            /*retryable=*/false);
    }
    return it->second;
}

HttpConfidenceProvider::HttpConfidenceProvider(HttpChatProvider::Options options,
                                               std::string model_tag)
    : options_(std::move(options)), model_tag_(std::move(model_tag)) {
    if (options_.endpoint.empty()) throw ConfigError("confidence endpoint is empty");
}

double HttpConfidenceProvider::confidence(const Sample&, const PromptInstance& prompt) {
    json body{{"model", model_tag_},
              {"messages", chat_messages(prompt)},
              {"temperature", 0.0},
              {"max_tokens", 1024},
              {"logprobs", true}};
    json reply = post_json(options_, body);
    if (!reply.is_object() || !reply.contains("mean_logprob") ||
        !reply["mean_logprob"].is_number()) {
        throw CapabilityError("provider response lacks mean_logprob");
    }
    return reply["mean_logprob"].get<double>();
}

}  // namespace iclb
