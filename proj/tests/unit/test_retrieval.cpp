#include <doctest.h>

#include <algorithm>
#include <string>
#include <vector>

#include "iclb/errors.hpp"
#include "iclb/retrieval.hpp"
#include "support/oracles.hpp"
#include "support/toydata.hpp"

using namespace iclb;

namespace {

Sample plain_sample(std::string id, std::vector<std::string> tokens) {
    Sample s;
    s.id = std::move(id);
    s.tokens = std::move(tokens);
    s.text = s.surface();
    return s;
}

Pool pool_of(std::vector<std::string> ids) {
    Pool pool;
    pool.k = ids.size();
    pool.ids = std::move(ids);
    pool.strategy = "random";
    return pool;
}

}  // namespace

TEST_SUITE("retrieval") {

TEST_CASE("a single-sample pool yields that single demonstration") {
    auto vecs = toydata::vectors(3, 3, 1);
    auto store = toydata::store_from(vecs);
    store.put("query", EmbeddingVector(vecs.begin()->second));
    auto demos = select_demonstrations(pool_of({"v001"}), store,
                                       plain_sample("query", {"x"}), 5);
    CHECK(demos.inference_id == "query");
    REQUIRE(demos.demos.size() == 1);
    CHECK(demos.demos[0].first == "v001");
}

TEST_CASE("an identical embedding ranks its pool sample last") {
    auto vecs = toydata::vectors(6, 4, 9);
    auto store = toydata::store_from(vecs);
    store.put("query", EmbeddingVector(vecs.at("v003")));
    auto ids = store.ids_sorted();
    ids.erase(std::remove(ids.begin(), ids.end(), "query"), ids.end());
    auto demos =
        select_demonstrations(pool_of(ids), store, plain_sample("query", {"x"}), 4);
    REQUIRE(demos.demos.size() == 4);
    CHECK(demos.demos.back().first == "v003");
    CHECK(demos.demos.back().second == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 1; i < demos.demos.size(); ++i) {
        CHECK(demos.demos[i - 1].second <= demos.demos[i].second);
    }
}

TEST_CASE("demonstrations are the reversed top-n ranking") {
    auto vecs = toydata::vectors(8, 5, 33);
    auto store = toydata::store_from(vecs);
    auto query = toydata::vectors(1, 5, 77, "q").begin()->second;
    store.put("q000", EmbeddingVector(query));

    auto demos = select_demonstrations(pool_of(store.ids_sorted()), store,
                                       plain_sample("q000", {"x"}), 5);
    REQUIRE(demos.demos.size() == 5);

    auto want = oracles::knn(query, vecs, 5);
    std::reverse(want.begin(), want.end());
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(demos.demos[i].first == want[i].first);
        CHECK(demos.demos[i].second == doctest::Approx(want[i].second).epsilon(1e-12));
    }
}

TEST_CASE("n larger than the pool returns every other pool sample") {
    auto vecs = toydata::vectors(4, 3, 21);
    auto store = toydata::store_from(vecs);
    auto demos = select_demonstrations(pool_of(store.ids_sorted()), store,
                                       plain_sample("v001", {"x"}), 99);
    CHECK(demos.demos.size() == 3);  // self excluded
    for (const auto& [id, sim] : demos.demos) CHECK(id != "v001");
}

TEST_CASE("retrieval failure modes") {
    auto vecs = toydata::vectors(2, 3, 5);
    auto store = toydata::store_from(vecs);
    CHECK_THROWS_AS(select_demonstrations(pool_of({"v000"}), store,
                                          plain_sample("v000", {"x"}), 3),
                    ArgumentError);
    CHECK_THROWS_WITH_AS(select_demonstrations(pool_of({"v000", "v001"}), store,
                                               plain_sample("ghost", {"x"}), 2),
                         doctest::Contains("ghost"), ConfigError);
}

TEST_CASE("max pool size with a single test sample equals n") {
    auto train = toydata::ner_samples(12, 3, "tr");
    auto test = toydata::ner_samples(1, 4, "te");
    EmbeddingStore store;
    HashEmbeddingProvider provider(6, 2);
    ensure_embeddings(store, train, provider);
    ensure_embeddings(store, test, provider);
    CHECK(compute_max_pool_size(train, test, store, 5) == 5);
}

TEST_CASE("identical test embeddings collapse the union to n") {
    auto train = toydata::ner_samples(10, 3, "tr");
    auto test = toydata::ner_samples(4, 4, "te");
    EmbeddingStore store;
    HashEmbeddingProvider provider(6, 2);
    ensure_embeddings(store, train, provider);
    auto shared = provider.embed_one("the same point");
    for (const auto& s : test) store.put(s.id, shared);
    CHECK(compute_max_pool_size(train, test, store, 3) == 3);
}

TEST_CASE("max pool size matches the brute-force union") {
    auto train = toydata::ner_samples(20, 8, "tr");
    auto test = toydata::ner_samples(6, 9, "te");
    EmbeddingStore store;
    HashEmbeddingProvider provider(5, 4);
    ensure_embeddings(store, train, provider);
    ensure_embeddings(store, test, provider);

    oracles::VectorMap train_vecs, test_vecs;
    for (const auto& s : train) train_vecs[s.id] = store.at(s.id).values;
    for (const auto& s : test) test_vecs[s.id] = store.at(s.id).values;

    auto got = compute_max_pool_size(train, test, store, 3);
    CHECK(got == oracles::max_pool_size(train_vecs, test_vecs, 3));
    CHECK(got <= std::min<std::size_t>(train.size(), 3 * test.size()));
}

TEST_CASE("max pool size never exceeds its combinatorial bound") {
    for (int trial = 0; trial < 5; ++trial) {
        auto train = toydata::ner_samples(15, 100 + trial, "tr");
        auto test = toydata::ner_samples(5, 200 + trial, "te");
        EmbeddingStore store;
        HashEmbeddingProvider provider(4, 11 + trial);
        ensure_embeddings(store, train, provider);
        ensure_embeddings(store, test, provider);
        std::size_t n = 1 + trial;
        auto got = compute_max_pool_size(train, test, store, n);
        CHECK(got <= std::min(train.size(), n * test.size()));
        CHECK(got >= n);  // at least one test sample contributes n neighbors
    }
}

TEST_CASE("a shared id between train and test is not its own neighbor") {
    auto train = toydata::ner_samples(6, 3, "sh");
    std::vector<Sample> test = {train[0]};
    EmbeddingStore store;
    HashEmbeddingProvider provider(4, 8);
    ensure_embeddings(store, train, provider);
    // n = |train|: the union can only reach |train| - 1 because the test
    // sample's own id is excluded from its candidate list
    CHECK(compute_max_pool_size(train, test, store, train.size()) == train.size() - 1);
}

}  // TEST_SUITE
