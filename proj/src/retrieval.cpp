#include "iclb/retrieval.hpp"

#include <algorithm>
#include <set>

#include "iclb/errors.hpp"

namespace iclb {

DemonstrationSet select_demonstrations(const Pool& pool, const EmbeddingStore& store,
                                       const Sample& inference, std::size_t n) {
    if (n < 1) throw ArgumentError("demonstration count must be >= 1");
    if (pool.ids.empty()) throw ArgumentError("demonstration pool is empty");

    std::vector<std::string> candidates;
    candidates.reserve(pool.ids.size());
    for (const auto& id : pool.ids) {
        if (id != inference.id) candidates.push_back(id);
    }
    if (candidates.empty()) {
        throw ArgumentError("pool contains only the inference sample " + inference.id);
    }

    auto ranked = nearest_neighbors(store.at(inference.id), store, candidates, n);

    DemonstrationSet out;
    out.inference_id = inference.id;
    out.demos.assign(ranked.rbegin(), ranked.rend());
    return out;
}

std::size_t compute_max_pool_size(const std::vector<Sample>& train,
                                  const std::vector<Sample>& test,
                                  const EmbeddingStore& store, std::size_t n) {
    if (n < 1) throw ArgumentError("demonstration count must be >= 1");
    std::vector<std::string> train_ids;
    train_ids.reserve(train.size());
    for (const auto& sample : train) train_ids.push_back(sample.id);

    std::set<std::string> used;
    for (const auto& sample : test) {
        std::vector<std::string> candidates;
        candidates.reserve(train_ids.size());
        for (const auto& id : train_ids) {
            if (id != sample.id) candidates.push_back(id);
        }
        if (candidates.empty()) continue;
        for (const auto& [id, _] : nearest_neighbors(store.at(sample.id), store, candidates, n)) {
            used.insert(id);
        }
    }
    return used.size();
}

}  // namespace iclb
