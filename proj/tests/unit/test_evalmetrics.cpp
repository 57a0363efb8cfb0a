#include <doctest.h>

#include <string>
#include <vector>

#include "iclb/errors.hpp"
#include "iclb/evalmetrics.hpp"
#include "support/toydata.hpp"

using namespace iclb;

namespace {

ParsedCompletion ok_ner(std::vector<EntitySpan> spans) {
    ParsedCompletion out;
    out.status = CompletionStatus::ok;
    out.annotation = NerAnnotation{std::move(spans)};
    return out;
}

ParsedCompletion ok_parse(std::vector<ParseRow> rows) {
    ParsedCompletion out;
    out.status = CompletionStatus::ok;
    out.annotation = ParseAnnotation{std::move(rows)};
    return out;
}

ParsedCompletion broken() {
    ParsedCompletion out;
    out.status = CompletionStatus::format_error;
    out.error_detail = "synthetic";
    return out;
}

NerAnnotation spans(std::vector<EntitySpan> list) { return NerAnnotation{std::move(list)}; }

ParseAnnotation rows(std::vector<ParseRow> list) { return ParseAnnotation{std::move(list)}; }

}  // namespace

TEST_SUITE("evalmetrics") {

TEST_CASE("strict NER: perfect prediction") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}})}, {ok_ner({{0, 1, "PER"}})});
    CHECK(m.tp == 1);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
    CHECK(m.adherence_rate == 1.0);
    CHECK(m.primary() == 1.0);
}

TEST_CASE("strict NER: a boundary miss scores zero") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}})}, {ok_ner({{0, 2, "PER"}})});
    CHECK(m.tp == 0);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.f1 == 0.0);
}

TEST_CASE("strict NER: a type miss scores zero") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}})}, {ok_ner({{0, 1, "GPE"}})});
    CHECK(m.tp == 0);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.f1 == 0.0);
}

TEST_CASE("strict NER: empty gold and empty prediction") {
    auto m = strict_ner_score({spans({})}, {ok_ner({})});
    CHECK(m.tp == 0);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
    CHECK(m.adherence_rate == 1.0);
}

TEST_CASE("strict NER: hallucinated span on empty gold") {
    auto m = strict_ner_score({spans({})}, {ok_ner({{0, 1, "PER"}})});
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
    CHECK(m.precision == 0.0);
}

TEST_CASE("strict NER: format errors forfeit all gold entities") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}, {2, 3, "GPE"}})}, {broken()});
    CHECK(m.tp == 0);
    CHECK(m.fp == 0);
    CHECK(m.fn == 2);
    CHECK(m.recall == 0.0);
    CHECK(m.adherence_rate == 0.0);
}

TEST_CASE("strict NER: micro aggregation across samples") {
    std::vector<NerAnnotation> golds = {
        spans({{0, 1, "PER"}, {2, 3, "GPE"}}),
        spans({{1, 2, "ORG"}}),
    };
    std::vector<ParsedCompletion> preds = {
        ok_ner({{0, 1, "PER"}, {2, 3, "ORG"}}),  // 1 tp, 1 fp, 1 fn
        ok_ner({{1, 2, "ORG"}}),                 // 1 tp
    };
    auto m = strict_ner_score(golds, preds);
    CHECK(m.tp == 2);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(m.recall == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("strict NER: duplicate predicted spans match at most once") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}})},
                              {ok_ner({{0, 1, "PER"}, {0, 1, "PER"}})});
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
}

TEST_CASE("strict NER: extra span costs precision only") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}})},
                              {ok_ner({{0, 1, "PER"}, {3, 4, "GPE"}})});
    CHECK(m.precision == doctest::Approx(0.5));
    CHECK(m.recall == doctest::Approx(1.0));
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("strict NER: mixed adherence averages over samples") {
    auto m = strict_ner_score({spans({{0, 1, "PER"}}), spans({{0, 1, "GPE"}})},
                              {ok_ner({{0, 1, "PER"}}), broken()});
    CHECK(m.adherence_rate == doctest::Approx(0.5));
    CHECK(m.tp == 1);
    CHECK(m.fn == 1);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("strict NER: gold/prediction misalignment is an error") {
    CHECK_THROWS_AS(strict_ner_score({spans({})}, {}), ArgumentError);
    CHECK_THROWS_AS(strict_ner_score({}, {ok_ner({})}), ArgumentError);
}

TEST_CASE("strict NER: echoing gold over a generated corpus is perfect") {
    auto samples = toydata::ner_samples(50, 44);
    std::vector<NerAnnotation> golds;
    std::vector<ParsedCompletion> preds;
    for (const auto& s : samples) {
        golds.push_back(s.ner());
        preds.push_back(ok_ner(s.ner().entities));
    }
    auto m = strict_ner_score(golds, preds);
    CHECK(m.f1 == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.adherence_rate == 1.0);
    CHECK(m.fp == 0);
    CHECK(m.fn == 0);
}

TEST_CASE("strict NER: empty input lists") {
    auto m = strict_ner_score({}, {});
    CHECK(m.f1 == 0.0);
    CHECK(m.adherence_rate == 0.0);
}

TEST_CASE("LAS: all attachments correct") {
    auto gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    auto m = las_score({gold}, {ok_parse(gold.rows)});
    CHECK(m.las == 1.0);
    CHECK(m.las_ok_only == 1.0);
    CHECK(m.correct == 2);
    CHECK(m.total == 2);
    CHECK(m.primary() == 1.0);
}

TEST_CASE("LAS: right head, wrong deprel scores zero for that token") {
    auto m = las_score({rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}})},
                       {ok_parse({{"NN", 2, "obj"}, {"VB", 0, "root"}})});
    CHECK(m.correct == 1);
    CHECK(m.las == doctest::Approx(0.5));
}

TEST_CASE("LAS: wrong head, right deprel scores zero for that token") {
    auto m = las_score({rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}})},
                       {ok_parse({{"NN", 0, "nsubj"}, {"VB", 0, "root"}})});
    CHECK(m.correct == 1);
    CHECK(m.las == doctest::Approx(0.5));
}

TEST_CASE("LAS: POS differences alone do not matter") {
    auto m = las_score({rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}})},
                       {ok_parse({{"JJ", 2, "nsubj"}, {"NN", 0, "root"}})});
    CHECK(m.las == 1.0);
}

TEST_CASE("LAS: format errors count misses in las but not las_ok_only") {
    auto perfect = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}, {"RB", 2, "advmod"}});
    auto m = las_score({perfect, perfect}, {ok_parse(perfect.rows), broken()});
    CHECK(m.total == 6);
    CHECK(m.correct == 3);
    CHECK(m.las == doctest::Approx(0.5));
    CHECK(m.las_ok_only == doctest::Approx(1.0));
    CHECK(m.adherence_rate == doctest::Approx(0.5));
}

TEST_CASE("LAS: all completions broken") {
    auto gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    auto m = las_score({gold, gold}, {broken(), broken()});
    CHECK(m.las == 0.0);
    CHECK(m.las_ok_only == 0.0);
    CHECK(m.total == 4);
    CHECK(m.adherence_rate == 0.0);
}

TEST_CASE("LAS: token counts weight the average") {
    auto short_gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    auto long_gold = rows({{"NN", 2, "nsubj"},
                           {"VB", 0, "root"},
                           {"DT", 4, "det"},
                           {"NN", 2, "obj"}});
    auto all_wrong = ok_parse({{"NN", 0, "x"}, {"VB", 1, "x"}});
    auto m = las_score({short_gold, long_gold}, {all_wrong, ok_parse(long_gold.rows)});
    CHECK(m.total == 6);
    CHECK(m.correct == 4);
    CHECK(m.las == doctest::Approx(4.0 / 6.0));
}

TEST_CASE("LAS: an ok prediction with the wrong row count is an error") {
    auto gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    CHECK_THROWS_AS(las_score({gold}, {ok_parse({{"NN", 0, "root"}})}), ArgumentError);
    CHECK_THROWS_AS(las_score({gold}, {}), ArgumentError);
}

TEST_CASE("LAS: echoing gold over a generated corpus is perfect") {
    auto samples = toydata::parse_samples(50, 45);
    std::vector<ParseAnnotation> golds;
    std::vector<ParsedCompletion> preds;
    for (const auto& s : samples) {
        golds.push_back(s.parse());
        preds.push_back(ok_parse(s.parse().rows));
    }
    auto m = las_score(golds, preds);
    CHECK(m.las == 1.0);
    CHECK(m.las_ok_only == 1.0);
    CHECK(m.adherence_rate == 1.0);
}

TEST_CASE("POS accuracy: hand-checked fractions") {
    auto gold = rows({{"NN", 2, "nsubj"},
                      {"VB", 0, "root"},
                      {"DT", 4, "det"},
                      {"NN", 2, "obj"}});
    auto pred = ok_parse({{"NN", 2, "nsubj"},
                          {"VB", 0, "root"},
                          {"JJ", 4, "det"},
                          {"NN", 2, "obj"}});
    auto m = pos_score({gold}, {pred});
    CHECK(m.pos_accuracy == doctest::Approx(0.75));
    CHECK(m.correct == 3);
    CHECK(m.total == 4);
    CHECK(m.primary() == doctest::Approx(0.75));
}

TEST_CASE("POS accuracy ignores heads and deprels") {
    auto gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    auto pred = ok_parse({{"NN", 0, "zzz"}, {"VB", 1, "qqq"}});
    CHECK(pos_score({gold}, {pred}).pos_accuracy == 1.0);
}

TEST_CASE("POS accuracy counts format errors as all wrong") {
    auto gold = rows({{"NN", 2, "nsubj"}, {"VB", 0, "root"}});
    auto m = pos_score({gold, gold}, {ok_parse(gold.rows), broken()});
    CHECK(m.pos_accuracy == doctest::Approx(0.5));
    CHECK(m.adherence_rate == doctest::Approx(0.5));
    CHECK(m.total == 4);
}

TEST_CASE("score_samples dispatches on the task") {
    auto ners = toydata::ner_samples(5, 46);
    std::vector<ParsedCompletion> ner_preds;
    for (const auto& s : ners) ner_preds.push_back(ok_ner(s.ner().entities));
    auto m_ner = score_samples(TaskKind::ner, ners, ner_preds);
    CHECK(m_ner.task == TaskKind::ner);
    CHECK(m_ner.f1 == 1.0);
    CHECK(m_ner.primary() == m_ner.f1);

    auto parses = toydata::parse_samples(5, 47);
    std::vector<ParsedCompletion> parse_preds;
    for (const auto& s : parses) parse_preds.push_back(ok_parse(s.parse().rows));
    auto m_las = score_samples(TaskKind::depparse, parses, parse_preds);
    CHECK(m_las.task == TaskKind::depparse);
    CHECK(m_las.las == 1.0);
    CHECK(m_las.primary() == m_las.las);

    auto m_pos = score_samples(TaskKind::pos, parses, parse_preds);
    CHECK(m_pos.task == TaskKind::pos);
    CHECK(m_pos.pos_accuracy == 1.0);
    CHECK(m_pos.primary() == m_pos.pos_accuracy);

    Sample bare;
    bare.id = "x";
    bare.tokens = {"y"};
    bare.text = "y";
    CHECK_THROWS_AS(score_samples(TaskKind::ner, {bare}, {ok_ner({})}), ArgumentError);
}

TEST_CASE("MetricResult JSON round trip") {
    auto samples = toydata::ner_samples(8, 48);
    std::vector<ParsedCompletion> preds;
    for (const auto& s : samples) preds.push_back(ok_ner(s.ner().entities));
    preds[0] = broken();
    auto m = score_samples(TaskKind::ner, samples, preds);
    auto back = MetricResult::from_json(m.to_json());
    CHECK(back.task == m.task);
    CHECK(back.precision == m.precision);
    CHECK(back.recall == m.recall);
    CHECK(back.f1 == m.f1);
    CHECK(back.tp == m.tp);
    CHECK(back.fp == m.fp);
    CHECK(back.fn == m.fn);
    CHECK(back.las == m.las);
    CHECK(back.las_ok_only == m.las_ok_only);
    CHECK(back.pos_accuracy == m.pos_accuracy);
    CHECK(back.correct == m.correct);
    CHECK(back.total == m.total);
    CHECK(back.adherence_rate == m.adherence_rate);
}

}  // TEST_SUITE
