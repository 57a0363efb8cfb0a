#include <doctest.h>

#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclb/errors.hpp"
#include "iclb/promptcodec.hpp"
#include "support/toydata.hpp"

using namespace iclb;
using nlohmann::json;

namespace {

Sample ner(std::string id, std::vector<std::string> tokens,
           std::vector<EntitySpan> spans) {
    Sample s;
    s.id = std::move(id);
    s.tokens = std::move(tokens);
    s.text = s.surface();
    s.annotation = NerAnnotation{std::move(spans)};
    return s;
}

Sample parsed(std::string id, std::vector<std::string> tokens,
              std::vector<ParseRow> rows) {
    Sample s;
    s.id = std::move(id);
    s.tokens = std::move(tokens);
    s.text = s.surface();
    s.annotation = ParseAnnotation{std::move(rows)};
    return s;
}

CodecConfig ud_config() {
    auto config = CodecConfig::defaults();
    config.pos_tags = {"INTJ", "NOUN", "PUNCT", "VERB"};
    return config;
}

std::string random_garbage(std::mt19937_64& rng, std::size_t max_len) {
    std::size_t len = rng() % (max_len + 1);
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(static_cast<char>(rng() % 256));
    }
    return out;
}

}  // namespace

TEST_SUITE("promptcodec") {

TEST_CASE("render_ner wraps spans in inline tags") {
    CHECK(render_ner(ner("a", {"John", "runs"}, {{0, 1, "PER"}})) ==
          "<PER> John </PER> runs");
    CHECK(render_ner(ner("b", {"John", "runs"}, {})) == "John runs");
    CHECK(render_ner(ner("c", {"Ann", "Paris"}, {{0, 1, "PER"}, {1, 2, "GPE"}})) ==
          "<PER> Ann </PER> <GPE> Paris </GPE>");
    CHECK(render_ner(ner("d", {"the", "World", "Bank", "fund"}, {{1, 3, "ORG"}})) ==
          "the <ORG> World Bank </ORG> fund");
}

TEST_CASE("parse_ner inverts render_ner") {
    auto s = ner("a", {"Ann", "met", "Bob"}, {{0, 1, "PER"}, {2, 3, "PER"}});
    auto got = parse_ner(render_ner(s), s);
    REQUIRE(got.ok());
    CHECK(std::get<NerAnnotation>(*got.annotation) == s.ner());
    CHECK(got.error_detail.empty());
}

TEST_CASE("parse_ner rejects structural mistakes with specific details") {
    auto s = ner("a", {"John", "runs"}, {{0, 1, "PER"}});

    auto unclosed = parse_ner("<PER> John runs", s);
    CHECK_FALSE(unclosed.ok());
    CHECK(unclosed.error_detail == "unclosed entity tag <PER>");

    auto paraphrase = parse_ner("<PER> John </PER> sprinted", s);
    CHECK_FALSE(paraphrase.ok());
    CHECK(paraphrase.error_detail == "token mismatch at index 1");

    auto unknown = parse_ner("<XYZ> John </XYZ> runs", s);
    CHECK_FALSE(unknown.ok());
    CHECK(unknown.error_detail == "unknown entity tag <XYZ>");

    auto nested = parse_ner("<PER> <ORG> John </ORG> </PER> runs", s);
    CHECK_FALSE(nested.ok());
    CHECK(nested.error_detail == "nested entity tag <ORG>");

    auto stray_close = parse_ner("John </PER> runs", s);
    CHECK_FALSE(stray_close.ok());
    CHECK(stray_close.error_detail == "closing tag </PER> with no open tag");

    auto mismatched = parse_ner("<PER> John </ORG> runs", s);
    CHECK_FALSE(mismatched.ok());
    CHECK(mismatched.error_detail == "mismatched closing tag </ORG>");

    auto empty_span = parse_ner("<PER> </PER> John runs", s);
    CHECK_FALSE(empty_span.ok());
    CHECK(empty_span.error_detail == "empty entity span for <PER>");

    auto truncated = parse_ner("<PER> John", s);
    CHECK_FALSE(truncated.ok());

    for (const auto& bad : {unclosed, paraphrase, unknown, nested}) {
        CHECK_FALSE(bad.annotation.has_value());
    }
}

TEST_CASE("parse_ner keeps the raw completion for transcripts") {
    auto s = ner("a", {"x"}, {});
    auto got = parse_ner("anything at all", s);
    CHECK(got.raw == "anything at all");
}

TEST_CASE("render_parse emits one tuple line per token") {
    auto s = parsed("s1", {"Hi", "!"},
                    {{"INTJ", 0, "root"}, {"PUNCT", 1, "punct"}});
    CHECK(render_parse(s) == "(Hi, INTJ, 0, root)\n(!, PUNCT, 1, punct)");
}

TEST_CASE("parse_parse inverts render_parse") {
    auto s = parsed("s1", {"Hi", "!"},
                    {{"INTJ", 0, "root"}, {"PUNCT", 1, "punct"}});
    auto got = parse_parse(render_parse(s), s, ud_config());
    REQUIRE(got.ok());
    CHECK(std::get<ParseAnnotation>(*got.annotation) == s.parse());
}

TEST_CASE("parse_parse tolerates loose spacing and missing parens") {
    auto s = parsed("s1", {"Hi", "!"},
                    {{"INTJ", 0, "root"}, {"PUNCT", 1, "punct"}});
    auto got = parse_parse("  Hi ,  INTJ , 0 , root  \n(!, PUNCT, 1, punct),", s,
                           ud_config());
    REQUIRE(got.ok());
    CHECK(std::get<ParseAnnotation>(*got.annotation) == s.parse());
}

TEST_CASE("parse_parse splits on the last three commas") {
    auto s = parsed("s1", {"a,b", "runs"},
                    {{"NOUN", 2, "nsubj"}, {"VERB", 0, "root"}});
    auto config = CodecConfig::defaults();
    config.pos_tags = {"NOUN", "VERB"};
    auto got = parse_parse("(a,b, NOUN, 2, nsubj)\n(runs, VERB, 0, root)", s, config);
    REQUIRE(got.ok());
    CHECK(std::get<ParseAnnotation>(*got.annotation) == s.parse());

    auto comma_token = parsed("s2", {"Hi", ","},
                              {{"INTJ", 0, "root"}, {",", 1, "punct"}});
    auto config2 = CodecConfig::defaults();
    config2.pos_tags = {"INTJ", ","};
    auto rendered = render_parse(comma_token);
    auto back = parse_parse(rendered, comma_token, config2);
    REQUIRE(back.ok());
    CHECK(std::get<ParseAnnotation>(*back.annotation) == comma_token.parse());
}

TEST_CASE("parse_parse rejects malformed completions with specific details") {
    auto s = parsed("s1", {"We", "saw", "red", "cars"},
                    {{"PRON", 2, "nsubj"},
                     {"VERB", 0, "root"},
                     {"ADJ", 4, "amod"},
                     {"NOUN", 2, "obj"}});
    auto config = CodecConfig::defaults();
    config.pos_tags = {"ADJ", "NOUN", "PRON", "VERB"};

    auto short_list = parse_parse(
        "(We, PRON, 2, nsubj)\n(saw, VERB, 0, root)\n(red, ADJ, 4, amod)", s, config);
    CHECK_FALSE(short_list.ok());
    CHECK(short_list.error_detail == "length mismatch: 3 tuples for 4 tokens");

    auto word_head = parse_parse(
        "(We, PRON, four, nsubj)\n(saw, VERB, 0, root)\n(red, ADJ, 4, amod)\n"
        "(cars, NOUN, 2, obj)",
        s, config);
    CHECK_FALSE(word_head.ok());
    CHECK(word_head.error_detail == "non-integer head 'four'");

    auto big_head = parse_parse(
        "(We, PRON, 9, nsubj)\n(saw, VERB, 0, root)\n(red, ADJ, 4, amod)\n"
        "(cars, NOUN, 2, obj)",
        s, config);
    CHECK_FALSE(big_head.ok());
    CHECK(big_head.error_detail == "head 9 out of range");

    auto self_head = parse_parse(
        "(We, PRON, 1, nsubj)\n(saw, VERB, 0, root)\n(red, ADJ, 4, amod)\n"
        "(cars, NOUN, 2, obj)",
        s, config);
    CHECK_FALSE(self_head.ok());
    CHECK(self_head.error_detail == "token 1 is its own head");

    auto bad_pos = parse_parse(
        "(We, QQQ, 2, nsubj)\n(saw, VERB, 0, root)\n(red, ADJ, 4, amod)\n"
        "(cars, NOUN, 2, obj)",
        s, config);
    CHECK_FALSE(bad_pos.ok());
    CHECK(bad_pos.error_detail == "unknown POS tag 'QQQ'");

    auto too_few_fields = parse_parse("(We, PRON)\n(saw)\n(red)\n(cars)", s, config);
    CHECK_FALSE(too_few_fields.ok());
    CHECK(too_few_fields.error_detail.find("expected (token, pos, head, deprel)") !=
          std::string::npos);
}

TEST_CASE("codec round trips hold over generated corpora") {
    auto ners = toydata::ner_samples(1000, 13);
    for (const auto& s : ners) {
        auto got = parse_ner(render_ner(s), s);
        REQUIRE(got.ok());
        CHECK(std::get<NerAnnotation>(*got.annotation) == s.ner());
    }
    auto parses = toydata::parse_samples(1000, 14);
    for (const auto& s : parses) {
        auto got = parse_parse(render_parse(s), s);
        REQUIRE(got.ok());
        CHECK(std::get<ParseAnnotation>(*got.annotation) == s.parse());
    }
    // the pos task shares the tuple codec
    for (std::size_t i = 0; i < 50; ++i) {
        const auto& s = parses[i];
        auto got = parse_completion(TaskKind::pos, render_annotation(TaskKind::pos, s),
                                    s, CodecConfig::defaults());
        REQUIRE(got.ok());
    }
}

TEST_CASE("completion parsers are total on garbage input") {
    auto ner_sample = ner("a", {"John", "runs"}, {{0, 1, "PER"}});
    auto parse_sample = parsed("s1", {"Hi", "!"},
                               {{"INTJ", 0, "root"}, {"PUNCT", 1, "punct"}});
    std::mt19937_64 rng(99);
    for (int i = 0; i < 2000; ++i) {
        auto junk = random_garbage(rng, 60);
        auto a = parse_ner(junk, ner_sample);
        CHECK((a.status == CompletionStatus::ok ||
               a.status == CompletionStatus::format_error));
        auto b = parse_parse(junk, parse_sample, ud_config());
        CHECK((b.status == CompletionStatus::ok ||
               b.status == CompletionStatus::format_error));
        if (!b.ok()) CHECK_FALSE(b.error_detail.empty());
    }
}

TEST_CASE("build_prompt with zero demonstrations still carries the inference text") {
    auto inference = ner("q", {"Paris", "fell"}, {});
    auto prompt = build_prompt(TaskKind::ner, std::vector<Sample>{}, inference,
                               PromptMode::message_pairs);
    CHECK(prompt.demos.empty());
    CHECK(prompt.inference_text == "Paris fell");
    auto messages = to_messages(prompt);
    REQUIRE(messages.size() == 2);
    CHECK(messages[0]["role"] == "system");
    CHECK(messages[1]["role"] == "user");
    CHECK(messages[1]["content"] == "Paris fell");
}

TEST_CASE("a two-demo separator prompt contains exactly three separators") {
    std::vector<Sample> demos = {
        ner("d1", {"John", "runs"}, {{0, 1, "PER"}}),
        ner("d2", {"Ann", "met", "Bob"}, {{0, 1, "PER"}, {2, 3, "PER"}}),
    };
    auto inference = ner("q", {"Paris", "fell"}, {});
    auto prompt =
        build_prompt(TaskKind::ner, demos, inference, PromptMode::separator);
    auto text = to_separator_text(prompt);
    std::size_t count = 0, pos = 0;
    while ((pos = text.find("[TAGS]", pos)) != std::string::npos) {
        ++count;
        pos += 6;
    }
    CHECK(count == 3);
    CHECK(text.rfind("[TAGS]") == text.size() - 6);
    CHECK(separator_token_for(TaskKind::ner) == "[TAGS]");
    CHECK(separator_token_for(TaskKind::depparse) == "[PARSE]");
}

TEST_CASE("separator prompt matches the golden file") {
    std::vector<Sample> demos = {
        ner("d1", {"John", "runs"}, {{0, 1, "PER"}}),
        ner("d2", {"Ann", "met", "Bob"}, {{0, 1, "PER"}, {2, 3, "PER"}}),
    };
    auto inference = ner("q", {"Paris", "fell"}, {});
    auto prompt =
        build_prompt(TaskKind::ner, demos, inference, PromptMode::separator);
    auto golden =
        toydata::read_file(std::string(ICLB_FIXTURE_DIR) + "/golden_prompt_ner.txt");
    while (!golden.empty() && golden.back() == '\n') golden.pop_back();
    CHECK(to_separator_text(prompt) == golden);
}

TEST_CASE("message mode alternates user and assistant turns") {
    std::vector<Sample> demos = {
        ner("d1", {"John", "runs"}, {{0, 1, "PER"}}),
        ner("d2", {"Ann", "met", "Bob"}, {{0, 1, "PER"}, {2, 3, "PER"}}),
    };
    auto inference = ner("q", {"Paris", "fell"}, {});
    auto prompt =
        build_prompt(TaskKind::ner, demos, inference, PromptMode::message_pairs);
    auto messages = to_messages(prompt);
    REQUIRE(messages.size() == 6);
    std::vector<std::string> roles;
    for (const auto& m : messages) roles.push_back(m["role"]);
    CHECK(roles == std::vector<std::string>{"system", "user", "assistant", "user",
                                            "assistant", "user"});
    CHECK(messages[1]["content"] == "John runs");
    CHECK(messages[2]["content"] == "<PER> John </PER> runs");
    CHECK(messages[5]["content"] == "Paris fell");
    CHECK(prompt_payload(prompt) == messages.dump());
}

TEST_CASE("build_prompt resolves demonstration sets against a sample index") {
    auto demos_pool = std::vector<Sample>{
        ner("d1", {"John", "runs"}, {{0, 1, "PER"}}),
        ner("d2", {"Rome"}, {{0, 1, "GPE"}}),
    };
    auto index = index_samples(demos_pool);
    DemonstrationSet set;
    set.inference_id = "q";
    set.demos = {{"d2", 0.2}, {"d1", 0.9}};
    auto inference = ner("q", {"Paris"}, {});
    auto prompt = build_prompt(TaskKind::ner, set, index, inference,
                               PromptMode::separator);
    REQUIRE(prompt.demos.size() == 2);
    CHECK(prompt.demos[0].first == "Rome");
    CHECK(prompt.demos[1].first == "John runs");

    DemonstrationSet missing;
    missing.inference_id = "q";
    missing.demos = {{"ghost", 0.5}};
    CHECK_THROWS_WITH_AS(
        build_prompt(TaskKind::ner, missing, index, inference, PromptMode::separator),
        doctest::Contains("ghost"), ArgumentError);
}

TEST_CASE("build_prompt rejects unannotated demonstrations") {
    Sample bare;
    bare.id = "d1";
    bare.tokens = {"x"};
    bare.text = "x";
    auto inference = ner("q", {"y"}, {});
    CHECK_THROWS_WITH_AS(build_prompt(TaskKind::ner, std::vector<Sample>{bare},
                                      inference, PromptMode::separator),
                         doctest::Contains("d1"), ArgumentError);
}

TEST_CASE("templates load from a directory and match the defaults") {
    auto defaults = PromptTemplates::defaults();
    auto loaded = PromptTemplates::from_dir(ICLB_TEMPLATE_DIR);
    CHECK(loaded.ner_description == defaults.ner_description);
    CHECK(loaded.parse_description == defaults.parse_description);
    CHECK_THROWS_AS(PromptTemplates::from_dir("/nonexistent/dir"), ConfigError);
}

TEST_CASE("prompt mode names round trip") {
    CHECK(prompt_mode_from_string(to_string(PromptMode::message_pairs)) ==
          PromptMode::message_pairs);
    CHECK(prompt_mode_from_string(to_string(PromptMode::separator)) ==
          PromptMode::separator);
    CHECK_THROWS_AS(prompt_mode_from_string("inline"), ArgumentError);
}

}  // TEST_SUITE
