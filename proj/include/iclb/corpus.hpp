#pragma once

// Dataset ingestion and validation for token classification corpora.
//
// Two ingest paths (CoNLL-U for dependency/POS data, JSONL for NER) feed a
// single canonical JSONL interchange schema used for gold data, pools, and
// predictions alike:
//
//   NER:   {"id": "a", "tokens": ["John","runs"], "entities": [[0,1,"PER"]]}
//   parse: {"id": "s1", "tokens": ["Hi","!"], "rows": [["INTJ",0,"root"],
//                                                      ["PUNCT",1,"punct"]]}
//
// Entity spans are token-level, [start, end). Head indices are 1-based with
// 0 denoting the root, as in CoNLL-U. Unannotated samples simply omit the
// "entities"/"rows" key.

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace iclb {

enum class TaskKind { ner, depparse, pos };

std::string to_string(TaskKind task);
TaskKind task_from_string(const std::string& name);

struct EntitySpan {
    int start = 0;  // token index, inclusive
    int end = 0;    // token index, exclusive
    std::string type;

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

struct NerAnnotation {
    std::vector<EntitySpan> entities;

    friend bool operator==(const NerAnnotation&, const NerAnnotation&) = default;
};

struct ParseRow {
    std::string pos;
    int head = 0;  // 0 = root, otherwise 1-based token position
    std::string deprel;

    friend bool operator==(const ParseRow&, const ParseRow&) = default;
};

struct ParseAnnotation {
    std::vector<ParseRow> rows;

    friend bool operator==(const ParseAnnotation&, const ParseAnnotation&) = default;
};

using TaskAnnotation = std::variant<NerAnnotation, ParseAnnotation>;

struct Sample {
    std::string id;
    std::string text;  // tokenized surface; equals join(tokens, " ")
    std::vector<std::string> tokens;
    std::optional<TaskAnnotation> annotation;

    // Surface form used in prompts: tokens joined by single spaces.
    std::string surface() const;

    bool has_ner() const;
    bool has_parse() const;
    const NerAnnotation& ner() const;
    const ParseAnnotation& parse() const;

    friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
    std::string name;
    TaskKind task = TaskKind::ner;
    std::vector<Sample> train;
    std::vector<Sample> test;
    std::vector<std::string> label_set;  // entity types / deprels / POS tags
};

// Throws ValidationError if the sample breaks an annotation invariant
// (span bounds/overlap for NER; row count, head range, self-head for parse).
// `allowed_entity_types`, when nonempty, additionally restricts NER types.
void validate_sample(const Sample& sample,
                     const std::vector<std::string>& allowed_entity_types = {});

// -- Ingestion ---------------------------------------------------------------

// CoNLL-U text -> one Sample per sentence. Multiword-token ranges ("1-2")
// and empty nodes ("1.1") are skipped; FORM -> token, UPOS -> pos,
// HEAD -> head, DEPREL -> deprel. Sentence ids come from "# sent_id = ..."
// comments when present, otherwise "s1", "s2", ....
// Throws ParseError (with line number) on malformed lines.
std::vector<Sample> parse_conllu(const std::string& text);

// Canonical NER JSONL -> Samples. Throws ParseError on malformed JSON and
// ValidationError (naming the sample id) on invariant violations.
std::vector<Sample> parse_ner_jsonl(const std::string& text);

// Canonical parse-task JSONL -> Samples. Same error contract.
std::vector<Sample> parse_parse_jsonl(const std::string& text);

// Samples -> canonical JSONL (one object per line, trailing newline).
std::string write_samples_jsonl(const std::vector<Sample>& samples);

// -- Dataset assembly --------------------------------------------------------

// Builds a Dataset and derives label_set from the annotations present:
// entity types for NER, deprels for depparse, POS tags for pos. Validates
// every annotated sample and checks train/test id uniqueness/disjointness.
Dataset make_dataset(std::string name, TaskKind task, std::vector<Sample> train,
                     std::vector<Sample> test);

// Collects the POS tags observed across both splits (used to configure
// completion validation for parse-task prompts).
std::vector<std::string> observed_pos_tags(const Dataset& dataset);

// Replaces the test split by min(n, |test|) samples drawn uniformly without
// replacement (sample_without_replacement(|test|, n, seed)), keeping the
// surviving samples in their original relative order. Train is untouched.
Dataset subsample_test(const Dataset& dataset, std::size_t n, std::uint64_t seed);

}  // namespace iclb
