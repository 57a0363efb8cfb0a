#include "iclb/evalmetrics.hpp"

#include <algorithm>
#include <tuple>

#include "iclb/errors.hpp"

namespace iclb {

using nlohmann::json;

double MetricResult::primary() const {
    switch (task) {
        case TaskKind::ner: return f1;
        case TaskKind::depparse: return las;
        case TaskKind::pos: return pos_accuracy;
    }
    throw DomainError("unknown task kind");
}

json MetricResult::to_json() const {
    return json{{"task", iclb::to_string(task)},
                {"precision", precision},
                {"recall", recall},
                {"f1", f1},
                {"tp", tp},
                {"fp", fp},
                {"fn", fn},
                {"las", las},
                {"las_ok_only", las_ok_only},
                {"pos_accuracy", pos_accuracy},
                {"correct", correct},
                {"total", total},
                {"adherence_rate", adherence_rate}};
}

MetricResult MetricResult::from_json(const json& obj) {
    MetricResult out;
    out.task = task_from_string(obj.at("task").get<std::string>());
    out.precision = obj.value("precision", 0.0);
    out.recall = obj.value("recall", 0.0);
    out.f1 = obj.value("f1", 0.0);
    out.tp = obj.value("tp", 0LL);
    out.fp = obj.value("fp", 0LL);
    out.fn = obj.value("fn", 0LL);
    out.las = obj.value("las", 0.0);
    out.las_ok_only = obj.value("las_ok_only", 0.0);
    out.pos_accuracy = obj.value("pos_accuracy", 0.0);
    out.correct = obj.value("correct", 0LL);
    out.total = obj.value("total", 0LL);
    out.adherence_rate = obj.value("adherence_rate", 0.0);
    return out;
}

namespace {

double ratio(long long numerator, long long denominator) {
    return denominator > 0 ? static_cast<double>(numerator) /
                                 static_cast<double>(denominator)
                           : 0.0;
}

double adherence(const std::vector<ParsedCompletion>& preds) {
    if (preds.empty()) return 0.0;
    long long ok = 0;
    for (const auto& pred : preds) {
        if (pred.ok()) ++ok;
    }
    return ratio(ok, static_cast<long long>(preds.size()));
}

void require_aligned(std::size_t golds, std::size_t preds) {
    if (golds != preds) {
        throw ArgumentError("gold/prediction lists are misaligned: " +
                            std::to_string(golds) + " vs " + std::to_string(preds));
    }
}

using SpanKey = std::tuple<int, int, std::string>;

std::vector<SpanKey> span_keys(const std::vector<EntitySpan>& entities) {
    std::vector<SpanKey> keys;
    keys.reserve(entities.size());
    for (const auto& span : entities) keys.emplace_back(span.start, span.end, span.type);
    std::sort(keys.begin(), keys.end());
    return keys;
}

}  // namespace

MetricResult strict_ner_score(const std::vector<NerAnnotation>& golds,
                              const std::vector<ParsedCompletion>& preds) {
    require_aligned(golds.size(), preds.size());
    MetricResult result;
    result.task = TaskKind::ner;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        auto gold_keys = span_keys(golds[i].entities);
        std::vector<SpanKey> pred_keys;
        if (preds[i].ok()) {
            pred_keys = span_keys(std::get<NerAnnotation>(preds[i].annotation.value()).entities);
        }
        std::vector<SpanKey> matched;
        std::set_intersection(gold_keys.begin(), gold_keys.end(), pred_keys.begin(),
                              pred_keys.end(), std::back_inserter(matched));
        result.tp += static_cast<long long>(matched.size());
        result.fp += static_cast<long long>(pred_keys.size() - matched.size());
        result.fn += static_cast<long long>(gold_keys.size() - matched.size());
    }
    result.precision = ratio(result.tp, result.tp + result.fp);
    result.recall = ratio(result.tp, result.tp + result.fn);
    double denom = result.precision + result.recall;
    result.f1 = denom > 0.0 ? 2.0 * result.precision * result.recall / denom : 0.0;
    result.adherence_rate = adherence(preds);
    return result;
}

namespace {

// Shared token-level scorer; `matches` decides per-token correctness.
template <typename MatchFn>
MetricResult token_score(TaskKind task, const std::vector<ParseAnnotation>& golds,
                         const std::vector<ParsedCompletion>& preds, MatchFn matches) {
    require_aligned(golds.size(), preds.size());
    MetricResult result;
    result.task = task;
    long long correct_ok = 0;
    long long total_ok = 0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const auto& gold_rows = golds[i].rows;
        result.total += static_cast<long long>(gold_rows.size());
        if (!preds[i].ok()) continue;
        const auto& pred_rows = std::get<ParseAnnotation>(preds[i].annotation.value()).rows;
        if (pred_rows.size() != gold_rows.size()) {
            throw ArgumentError("parsed completion has " +
                                std::to_string(pred_rows.size()) + " rows for " +
                                std::to_string(gold_rows.size()) + " gold tokens");
        }
        total_ok += static_cast<long long>(gold_rows.size());
        for (std::size_t t = 0; t < gold_rows.size(); ++t) {
            if (matches(gold_rows[t], pred_rows[t])) {
                ++result.correct;
                ++correct_ok;
            }
        }
    }
    double all = ratio(result.correct, result.total);
    double ok_only = ratio(correct_ok, total_ok);
    if (task == TaskKind::depparse) {
        result.las = all;
        result.las_ok_only = ok_only;
    } else {
        result.pos_accuracy = all;
    }
    result.adherence_rate = adherence(preds);
    return result;
}

}  // namespace

MetricResult las_score(const std::vector<ParseAnnotation>& golds,
                       const std::vector<ParsedCompletion>& preds) {
    return token_score(TaskKind::depparse, golds, preds,
                       [](const ParseRow& gold, const ParseRow& pred) {
                           return gold.head == pred.head && gold.deprel == pred.deprel;
                       });
}

MetricResult pos_score(const std::vector<ParseAnnotation>& golds,
                       const std::vector<ParsedCompletion>& preds) {
    return token_score(TaskKind::pos, golds, preds,
                       [](const ParseRow& gold, const ParseRow& pred) {
                           return gold.pos == pred.pos;
                       });
}

MetricResult score_samples(TaskKind task, const std::vector<Sample>& golds,
                           const std::vector<ParsedCompletion>& preds) {
    if (task == TaskKind::ner) {
        std::vector<NerAnnotation> annotations;
        annotations.reserve(golds.size());
        for (const auto& sample : golds) annotations.push_back(sample.ner());
        return strict_ner_score(annotations, preds);
    }
    std::vector<ParseAnnotation> annotations;
    annotations.reserve(golds.size());
    for (const auto& sample : golds) annotations.push_back(sample.parse());
    return task == TaskKind::depparse ? las_score(annotations, preds)
                                      : pos_score(annotations, preds);
}

}  // namespace iclb
