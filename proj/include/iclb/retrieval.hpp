#pragma once

// Per-inference-sample demonstration retrieval from the annotated pool.

#include <string>
#include <vector>

#include "iclb/corpus.hpp"
#include "iclb/embedding.hpp"
#include "iclb/poolselect.hpp"

namespace iclb {

struct DemonstrationSet {
    std::string inference_id;
    // (pool sample id, cosine similarity), sorted ascending by similarity:
    // the most similar demonstration comes last.
    std::vector<std::pair<std::string, double>> demos;
};

// The min(n, |pool|) pool samples most similar to the inference sample.
// Membership is top-n by cosine similarity (ties by id); the result is the
// reversed ranking, i.e. ascending similarity. The inference sample's own id
// is excluded. Missing embeddings raise ConfigError naming the id.
DemonstrationSet select_demonstrations(const Pool& pool, const EmbeddingStore& store,
                                       const Sample& inference, std::size_t n);

// Size of the union, over all test samples, of their n nearest train
// samples. This is the demonstration pool actually exercised when the whole
// train split is available.
std::size_t compute_max_pool_size(const std::vector<Sample>& train,
                                  const std::vector<Sample>& test,
                                  const EmbeddingStore& store, std::size_t n);

}  // namespace iclb
