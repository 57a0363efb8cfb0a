#pragma once

// Annotation-pool selection strategies: central, cluster, vote-k, random.
//
// Every strategy maps (embeddings, candidate ids, budget k, seed) to exactly
// k distinct ids and is a pure function of its inputs. Tie-breaking is
// lexicographic by sample id everywhere, so selections are invariant under
// permutation of the input id order.
//
// Geometry: by default central/cluster/vote-k operate on L2-normalized
// copies of the stored vectors so Euclidean and cosine orderings agree
// (zero vectors are left unnormalized). `GeometryOptions::l2_normalize`
// switches this off for raw Euclidean geometry; the choice is recorded in
// the pool provenance.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "iclb/embedding.hpp"

namespace iclb {

struct Pool {
    std::vector<std::string> ids;  // exactly k distinct ids from the train split
    std::string strategy;          // central | cluster | votek | random | oracle
    std::size_t k = 0;
    std::uint64_t seed = 0;
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json provenance = nlohmann::json::object();

    nlohmann::json to_json() const;
    static Pool from_json(const nlohmann::json& obj);
};

struct GeometryOptions {
    bool l2_normalize = true;
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;  // cluster index per input vector
    double inertia = 0.0;         // sum of squared distances to assigned centroid
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding, deterministic per seed.
//
// Documented procedure (the test-suite oracle reimplements it verbatim):
//   seeding: first centroid = vectors[bounded(rng, N)]; each further
//     centroid is drawn with probability proportional to the squared
//     distance to the nearest chosen centroid, by walking the cumulative
//     d^2 array until it exceeds uniform_unit(rng) * total; when total == 0
//     the lowest unchosen index is taken.
//   iteration: assign each point to the nearest centroid (ties -> lowest
//     centroid index); recompute centroids as assigned means, in index
//     order; a centroid with no points is moved to the point farthest from
//     its assigned centroid (ties -> lowest point index). Stops when the
//     maximum centroid displacement drops below `tol` or after `max_iters`.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters = 100,
                    double tol = 1e-4);

// The k ids closest (Euclidean) to the arithmetic mean of all candidate
// vectors; ties by id.
Pool select_central(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                    std::size_t k, const GeometryOptions& geometry = {});

// k-means with k clusters; each centroid, in index order, claims the nearest
// not-yet-selected sample (Euclidean, ties by id).
Pool select_cluster(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                    std::size_t k, std::uint64_t seed,
                    const GeometryOptions& geometry = {});

struct VoteKParams {
    // kNN edges per node; always capped at |D|-1, effective value recorded
    // in provenance. Fewer than 2 candidates is an ArgumentError (no graph).
    std::size_t graph_degree = 150;
    double rho = 10.0;             // vote discount base, > 1
    double stage1_fraction = 0.1;  // share of k chosen by graph voting
};

// Confidence scores for `candidate_ids`, conditioned on the stage-1 pool
// (the callback prompts a model with stage-1 demonstrations). Returned
// scores align with candidate_ids; higher = more confident.
using VoteKConfidenceFn = std::function<std::vector<double>(
    const std::vector<std::string>& stage1_ids,
    const std::vector<std::string>& candidate_ids)>;

// Two-stage diverse subset selection.
//
// Stage 1: build a directed graph with an edge v -> u for each u among v's
// `graph_degree` nearest neighbors (cosine, ties by id). Greedily select the
// unselected u maximizing
//     score(u) = sum over unselected voters v with v -> u of
//                rho^-(|out(v) ∩ selected|)
// (ties by id) until ceil(stage1_fraction * k) ids are chosen.
//
// Stage 2: score every remaining candidate with `confidence`, sort by
// descending confidence (ties by id), split that order into k - |stage1|
// equal contiguous buckets, and take from each bucket the candidate with the
// highest stage-1 vote score (against the final stage-1 selection, ties by
// id).
//
// Without a confidence callback stage 1 runs to the full k and the pool is
// tagged "votek-stage1-only" in provenance.
Pool select_vote_k(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                   std::size_t k, const VoteKParams& params,
                   const std::optional<VoteKConfidenceFn>& confidence,
                   std::uint64_t seed, const GeometryOptions& geometry = {});

// Uniform sample without replacement (sample_without_replacement over the
// id-sorted candidate list), deterministic per seed.
Pool select_random(const std::vector<std::string>& train_ids, std::size_t k,
                   std::uint64_t seed);

}  // namespace iclb
