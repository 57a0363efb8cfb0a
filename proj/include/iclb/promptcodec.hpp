#pragma once

// Prompt rendering and the inverse codec: annotated samples to prompt text,
// model completions back to annotations.
//
// NER surface format: tokens joined by single spaces, each entity span
// wrapped inline as "<TYPE> tokens </TYPE>". Tags are standalone
// whitespace-delimited tokens; NAME in <NAME> / </NAME> is tag-shaped when
// it matches [A-Z][A-Z0-9_]*. A genuine token of that shape cannot be
// represented unambiguously - an inherent property of inline tagging.
//
// Parse surface format: one "(token, pos, head, deprel)" line per token,
// head 0 = root.
//
// Completion parsers are total: any input yields ok or format_error, never
// an exception. They are lenient on whitespace and optional parentheses but
// strict on token identity (NER), tuple counts, head ranges, and label
// vocabularies.

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "iclb/corpus.hpp"
#include "iclb/retrieval.hpp"

namespace iclb {

enum class PromptMode { message_pairs, separator };

std::string to_string(PromptMode mode);
PromptMode prompt_mode_from_string(const std::string& name);

struct CodecConfig {
    std::vector<std::string> entity_types;  // allowed NER tags
    std::vector<std::string> pos_tags;      // allowed POS tags

    static CodecConfig defaults();
};

struct PromptInstance {
    std::string task_description;
    std::vector<std::pair<std::string, std::string>> demos;  // (input, annotated)
    std::string inference_text;
    PromptMode mode = PromptMode::separator;
    std::string separator_token;  // "[TAGS]" / "[PARSE]" when mode == separator
};

enum class CompletionStatus { ok, format_error };

struct ParsedCompletion {
    CompletionStatus status = CompletionStatus::format_error;
    std::optional<TaskAnnotation> annotation;  // present iff status == ok
    std::string raw;
    std::string error_detail;

    bool ok() const { return status == CompletionStatus::ok; }
};

// -- Task codecs ---------------------------------------------------------------

// Inline-tagged surface of an NER-annotated sample.
std::string render_ner(const Sample& sample);

// Inverse of render_ner. Verifies the untagged token stream equals the
// original tokens exactly and recovers spans/types.
ParsedCompletion parse_ner(const std::string& output, const Sample& original,
                           const CodecConfig& config = CodecConfig::defaults());

// Tuple-per-line rendering of a parse-annotated sample.
std::string render_parse(const Sample& sample);

// Inverse of render_parse. Commas inside the token field are handled by
// right-anchored splitting (the last three commas delimit pos/head/deprel).
ParsedCompletion parse_parse(const std::string& output, const Sample& original,
                             const CodecConfig& config = CodecConfig::defaults());

// Renders with the codec for `task`; parses a completion likewise.
std::string render_annotation(TaskKind task, const Sample& sample);
ParsedCompletion parse_completion(TaskKind task, const std::string& output,
                                  const Sample& original, const CodecConfig& config);

// -- Prompt assembly -------------------------------------------------------------

struct PromptTemplates {
    std::string ner_description;
    std::string parse_description;  // shared by depparse and pos

    static PromptTemplates defaults();
    // Loads <dir>/ner_task.txt and <dir>/parse_task.txt.
    static PromptTemplates from_dir(const std::string& dir);
};

std::string separator_token_for(TaskKind task);

// Assembles a prompt from already-resolved, annotated demonstration samples
// (in DemonstrationSet order: most similar last) and the inference sample.
// An unannotated demonstration is an ArgumentError.
PromptInstance build_prompt(TaskKind task, const std::vector<Sample>& demos,
                            const Sample& inference, PromptMode mode,
                            const PromptTemplates& templates = PromptTemplates::defaults());

// Same, resolving a DemonstrationSet against an id -> sample index.
using SampleIndex = std::unordered_map<std::string, const Sample*>;
SampleIndex index_samples(const std::vector<Sample>& samples);

PromptInstance build_prompt(TaskKind task, const DemonstrationSet& demos,
                            const SampleIndex& index, const Sample& inference,
                            PromptMode mode,
                            const PromptTemplates& templates = PromptTemplates::defaults());

// message_pairs serialization: [{"role": "system"|"user"|"assistant",
// "content": ...}] with demonstrations as alternating user/assistant pairs.
nlohmann::json to_messages(const PromptInstance& prompt);

// separator-token serialization: description, then "input\nSEP\nannotated"
// blocks, ending with the inference text and a trailing separator.
std::string to_separator_text(const PromptInstance& prompt);

// Single-string form used for digests and transcripts (messages JSON for
// message_pairs mode, separator text otherwise).
std::string prompt_payload(const PromptInstance& prompt);

}  // namespace iclb
