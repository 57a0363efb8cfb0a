#include <doctest.h>

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "iclb/corpus.hpp"
#include "iclb/errors.hpp"
#include "iclb/rng.hpp"
#include "support/toydata.hpp"

using namespace iclb;

namespace {

std::string fixture(const std::string& name) {
    return toydata::read_file(std::string(ICLB_FIXTURE_DIR) + "/" + name);
}

Sample ner_sample(std::string id, std::vector<std::string> tokens,
                  std::vector<EntitySpan> spans) {
    Sample s;
    s.id = std::move(id);
    s.tokens = std::move(tokens);
    s.text = s.surface();
    s.annotation = NerAnnotation{std::move(spans)};
    return s;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("task names round trip") {
    for (auto task : {TaskKind::ner, TaskKind::depparse, TaskKind::pos}) {
        CHECK(task_from_string(to_string(task)) == task);
    }
    CHECK_THROWS_AS(task_from_string("segmentation"), ArgumentError);
}

TEST_CASE("parse_conllu reads a minimal two-token sentence") {
    std::string text =
        "1\tHi\thi\tINTJ\tUH\t_\t0\troot\t_\t_\n"
        "2\t!\t!\tPUNCT\t.\t_\t1\tpunct\t_\t_\n";
    auto samples = parse_conllu(text);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].id == "s1");
    CHECK(samples[0].tokens == std::vector<std::string>{"Hi", "!"});
    REQUIRE(samples[0].has_parse());
    auto rows = samples[0].parse().rows;
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == ParseRow{"INTJ", 0, "root"});
    CHECK(rows[1] == ParseRow{"PUNCT", 1, "punct"});
}

TEST_CASE("parse_conllu of empty input yields no samples") {
    CHECK(parse_conllu("").empty());
    CHECK(parse_conllu("\n\n").empty());
}

TEST_CASE("parse_conllu fixture: ids, tokens, heads transcribed by hand") {
    auto samples = parse_conllu(fixture("small.conllu"));
    REQUIRE(samples.size() == 5);

    std::vector<std::string> ids;
    for (const auto& s : samples) ids.push_back(s.id);
    CHECK(ids == std::vector<std::string>{"u1", "u2", "s3", "u4", "u5"});

    std::vector<std::vector<std::string>> tokens = {
        {"Dogs", "bark", "."},
        {"She", "reads", "old", "books"},
        {"I", "do", "n't", "know"},
        {"Sun", "rises"},
        {"Birds", "fly", "south"},
    };
    std::vector<std::vector<int>> heads = {
        {2, 0, 2}, {2, 0, 4, 2}, {4, 4, 4, 0}, {2, 0}, {2, 0, 2}};
    std::vector<std::vector<std::string>> deprels = {
        {"nsubj", "root", "punct"},
        {"nsubj", "root", "amod", "obj"},
        {"nsubj", "aux", "advmod", "root"},
        {"nsubj", "root"},
        {"nsubj", "root", "advmod"},
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(samples[i].tokens == tokens[i]);
        REQUIRE(samples[i].has_parse());
        const auto& rows = samples[i].parse().rows;
        REQUIRE(rows.size() == heads[i].size());
        for (std::size_t j = 0; j < rows.size(); ++j) {
            CHECK(rows[j].head == heads[i][j]);
            CHECK(rows[j].deprel == deprels[i][j]);
        }
    }
    // multiword range "2-3" and empty node "1.1" contribute no tokens
    CHECK(samples[2].tokens.size() == 4);
    CHECK(samples[3].tokens.size() == 2);
    // UPOS lands in pos
    CHECK(samples[0].parse().rows[0].pos == "NOUN");
    CHECK(samples[2].parse().rows[1].pos == "AUX");
}

TEST_CASE("parse_conllu rejects malformed lines with the line number") {
    std::string bad_cols = "1\tHi\thi\tINTJ\tUH\t_\t0\troot\t_\n";
    CHECK_THROWS_WITH_AS(parse_conllu(bad_cols),
                         doctest::Contains("line 1"), ParseError);
    std::string bad_head =
        "1\tHi\thi\tINTJ\tUH\t_\tzero\troot\t_\t_\n";
    CHECK_THROWS_AS(parse_conllu(bad_head), ParseError);
    std::string comment_only = "# sent_id = x\n\n";
    CHECK_THROWS_AS(parse_conllu(comment_only), ParseError);
}

TEST_CASE("parse_conllu handles CRLF input") {
    std::string text =
        "1\tHi\thi\tINTJ\tUH\t_\t0\troot\t_\t_\r\n"
        "2\t!\t!\tPUNCT\t.\t_\t1\tpunct\t_\t_\r\n";
    auto samples = parse_conllu(text);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].tokens[1] == "!");
}

TEST_CASE("parse_ner_jsonl reads the canonical schema") {
    auto samples =
        parse_ner_jsonl(R"({"id":"a","tokens":["John","runs"],"entities":[[0,1,"PER"]]})" "\n");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].id == "a");
    REQUIRE(samples[0].has_ner());
    REQUIRE(samples[0].ner().entities.size() == 1);
    CHECK(samples[0].ner().entities[0] == EntitySpan{0, 1, "PER"});
    CHECK(samples[0].surface() == "John runs");
}

TEST_CASE("parse_ner_jsonl rejects an empty span") {
    std::string line = R"({"id":"a","tokens":["John","runs"],"entities":[[1,1,"PER"]]})" "\n";
    CHECK_THROWS_WITH_AS(parse_ner_jsonl(line), doctest::Contains("a"), ValidationError);
}

TEST_CASE("parse_ner_jsonl rejects out-of-range and overlapping spans") {
    CHECK_THROWS_AS(
        parse_ner_jsonl(R"({"id":"a","tokens":["x"],"entities":[[0,2,"PER"]]})" "\n"),
        ValidationError);
    CHECK_THROWS_AS(
        parse_ner_jsonl(
            R"({"id":"a","tokens":["x","y","z"],"entities":[[0,2,"PER"],[1,3,"GPE"]]})" "\n"),
        ValidationError);
}

TEST_CASE("parse_ner_jsonl rejects malformed JSON") {
    CHECK_THROWS_AS(parse_ner_jsonl("{not json\n"), ParseError);
}

TEST_CASE("ner fixture: entity type tally") {
    auto samples = parse_ner_jsonl(fixture("ner.jsonl"));
    REQUIRE(samples.size() == 3);
    std::map<std::string, int> tally;
    for (const auto& s : samples) {
        for (const auto& span : s.ner().entities) ++tally[span.type];
    }
    CHECK(tally == std::map<std::string, int>{{"GPE", 1}, {"PER", 2}});
    CHECK(samples[2].ner().entities.empty());
}

TEST_CASE("canonical JSONL round trips for both tasks") {
    auto ner = toydata::ner_samples(40, 5);
    CHECK(parse_ner_jsonl(write_samples_jsonl(ner)) == ner);

    auto parsed = toydata::parse_samples(40, 6);
    CHECK(parse_parse_jsonl(write_samples_jsonl(parsed)) == parsed);
}

TEST_CASE("unannotated samples survive the round trip") {
    Sample s;
    s.id = "raw";
    s.tokens = {"just", "tokens"};
    s.text = s.surface();
    auto back = parse_ner_jsonl(write_samples_jsonl({s}));
    REQUIRE(back.size() == 1);
    CHECK_FALSE(back[0].annotation.has_value());
}

TEST_CASE("validate_sample enforces token and annotation invariants") {
    CHECK_THROWS_AS(validate_sample(ner_sample("a", {"ok", ""}, {})), ValidationError);
    CHECK_THROWS_AS(validate_sample(ner_sample("a", {"has space"}, {})), ValidationError);
    CHECK_THROWS_AS(validate_sample(ner_sample("a", {}, {})), ValidationError);
    CHECK_NOTHROW(validate_sample(ner_sample("a", {"x", "y"}, {{0, 2, "PER"}})));
    CHECK_THROWS_AS(validate_sample(ner_sample("a", {"x"}, {{0, 1, "ZZZ"}}), {"PER"}),
                    ValidationError);

    Sample p;
    p.id = "p";
    p.tokens = {"a", "b"};
    p.text = p.surface();
    p.annotation = ParseAnnotation{{{"NN", 2, "nsubj"}, {"VB", 0, "root"}}};
    CHECK_NOTHROW(validate_sample(p));
    p.annotation = ParseAnnotation{{{"NN", 1, "nsubj"}, {"VB", 0, "root"}}};
    CHECK_THROWS_AS(validate_sample(p), ValidationError);  // self head
    p.annotation = ParseAnnotation{{{"NN", 3, "nsubj"}, {"VB", 0, "root"}}};
    CHECK_THROWS_AS(validate_sample(p), ValidationError);  // head out of range
    p.annotation = ParseAnnotation{{{"NN", 0, "root"}}};
    CHECK_THROWS_AS(validate_sample(p), ValidationError);  // row count mismatch
}

TEST_CASE("make_dataset derives a sorted label set and checks id uniqueness") {
    auto train = parse_ner_jsonl(fixture("ner.jsonl"));
    std::vector<Sample> test = {ner_sample("t1", {"Rome"}, {{0, 1, "GPE"}})};
    auto ds = make_dataset("toy", TaskKind::ner, train, test);
    CHECK(ds.label_set == std::vector<std::string>{"GPE", "PER"});

    auto dup = train;
    dup.push_back(train[0]);
    CHECK_THROWS_AS(make_dataset("toy", TaskKind::ner, dup, test), ValidationError);

    std::vector<Sample> overlap = {train[0]};
    CHECK_THROWS_AS(make_dataset("toy", TaskKind::ner, train, overlap), ValidationError);
}

TEST_CASE("make_dataset label sets for parse tasks") {
    auto samples = parse_conllu(fixture("small.conllu"));
    std::vector<Sample> train(samples.begin(), samples.end() - 1);
    std::vector<Sample> test(samples.end() - 1, samples.end());
    auto dep = make_dataset("ud", TaskKind::depparse, train, test);
    CHECK(std::is_sorted(dep.label_set.begin(), dep.label_set.end()));
    CHECK(std::find(dep.label_set.begin(), dep.label_set.end(), "nsubj") !=
          dep.label_set.end());

    auto pos = make_dataset("ud", TaskKind::pos, train, test);
    CHECK(std::find(pos.label_set.begin(), pos.label_set.end(), "NOUN") !=
          pos.label_set.end());

    auto tags = observed_pos_tags(dep);
    CHECK(std::is_sorted(tags.begin(), tags.end()));
    CHECK(std::find(tags.begin(), tags.end(), "ADV") != tags.end());
}

TEST_CASE("subsample_test keeps small splits unchanged") {
    auto ds = make_dataset("toy", TaskKind::ner, toydata::ner_samples(6, 1, "tr"),
                           toydata::ner_samples(4, 2, "te"));
    auto same = subsample_test(ds, 4, 9);
    CHECK(same.test == ds.test);
    auto bigger = subsample_test(ds, 100, 9);
    CHECK(bigger.test == ds.test);
}

TEST_CASE("subsample_test is deterministic and order preserving") {
    auto ds = make_dataset("toy", TaskKind::ner, toydata::ner_samples(3, 1, "tr"),
                           toydata::ner_samples(30, 2, "te"));
    auto a = subsample_test(ds, 10, 77);
    auto b = subsample_test(ds, 10, 77);
    REQUIRE(a.test.size() == 10);
    CHECK(a.test == b.test);
    CHECK(a.train == ds.train);

    // surviving ids appear in their original relative order
    std::vector<std::size_t> positions;
    for (const auto& s : a.test) {
        auto it = std::find_if(ds.test.begin(), ds.test.end(),
                               [&](const Sample& o) { return o.id == s.id; });
        REQUIRE(it != ds.test.end());
        positions.push_back(static_cast<std::size_t>(it - ds.test.begin()));
    }
    CHECK(std::is_sorted(positions.begin(), positions.end()));
}

TEST_CASE("subsample_test n=2 seed=7 over five samples matches the reference draw") {
    auto ds = make_dataset("toy", TaskKind::ner, toydata::ner_samples(2, 1, "tr"),
                           toydata::ner_samples(5, 2, "te"));
    auto picked = subsample_test(ds, 2, 7);
    REQUIRE(picked.test.size() == 2);

    std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
    std::mt19937_64 rng(7);
    for (std::size_t i = 0; i < 2; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (5 - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> keep(idx.begin(), idx.begin() + 2);
    std::sort(keep.begin(), keep.end());
    CHECK(picked.test[0].id == ds.test[keep[0]].id);
    CHECK(picked.test[1].id == ds.test[keep[1]].id);

    CHECK_THROWS_AS(subsample_test(ds, 0, 7), ArgumentError);
}

TEST_CASE("write_samples_jsonl emits text only when it differs from the surface") {
    Sample s;
    s.id = "a";
    s.tokens = {"Hi", "!"};
    s.text = "Hi!";
    s.annotation = NerAnnotation{};
    auto line = write_samples_jsonl({s});
    CHECK(line.find("\"text\"") != std::string::npos);
    auto back = parse_ner_jsonl(line);
    CHECK(back[0].text == "Hi!");

    s.text = s.surface();
    CHECK(write_samples_jsonl({s}).find("\"text\"") == std::string::npos);
}

}  // TEST_SUITE
