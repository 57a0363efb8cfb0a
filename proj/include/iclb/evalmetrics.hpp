#pragma once

// Scoring of parsed completions against gold annotations: strict-match NER
// micro F1, labeled attachment score, POS accuracy, format adherence.

#include <vector>

#include <json.hpp>

#include "iclb/corpus.hpp"
#include "iclb/promptcodec.hpp"

namespace iclb {

struct MetricResult {
    TaskKind task = TaskKind::ner;

    // NER (micro-averaged over all samples).
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;

    // Dependency parsing. `las` counts every gold token (tokens of
    // format-error completions score as wrong); `las_ok_only` restricts the
    // denominator to samples whose completion parsed.
    double las = 0.0;
    double las_ok_only = 0.0;

    // POS tagging.
    double pos_accuracy = 0.0;

    // Token-level counts backing las/pos_accuracy.
    long long correct = 0;
    long long total = 0;

    double adherence_rate = 0.0;  // fraction of completions that parsed

    // The task's headline number: f1, las, or pos_accuracy.
    double primary() const;

    nlohmann::json to_json() const;
    static MetricResult from_json(const nlohmann::json& obj);
};

// Exact (start, end, type) matching, micro-averaged. A format_error
// completion predicts nothing: its gold entities all become false negatives.
MetricResult strict_ner_score(const std::vector<NerAnnotation>& golds,
                              const std::vector<ParsedCompletion>& preds);

// A token counts as correct iff head and deprel both match. The denominator
// is every gold token; format_error samples contribute only misses.
MetricResult las_score(const std::vector<ParseAnnotation>& golds,
                       const std::vector<ParsedCompletion>& preds);

// Token-level POS accuracy over all gold tokens.
MetricResult pos_score(const std::vector<ParseAnnotation>& golds,
                       const std::vector<ParsedCompletion>& preds);

// Dispatch on task; `golds` must be annotated.
MetricResult score_samples(TaskKind task, const std::vector<Sample>& golds,
                           const std::vector<ParsedCompletion>& preds);

}  // namespace iclb
