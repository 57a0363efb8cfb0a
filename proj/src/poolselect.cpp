#include "iclb/poolselect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "iclb/errors.hpp"
#include "iclb/rng.hpp"

namespace iclb {

using nlohmann::json;

json Pool::to_json() const {
    json obj;
    obj["strategy"] = strategy;
    obj["k"] = k;
    obj["seed"] = seed;
    obj["params"] = params;
    obj["ids"] = ids;
    obj["provenance"] = provenance;
    return obj;
}

Pool Pool::from_json(const json& obj) {
    Pool pool;
    pool.strategy = obj.at("strategy").get<std::string>();
    pool.k = obj.at("k").get<std::size_t>();
    pool.seed = obj.at("seed").get<std::uint64_t>();
    pool.ids = obj.at("ids").get<std::vector<std::string>>();
    pool.params = obj.value("params", json::object());
    pool.provenance = obj.value("provenance", json::object());
    if (pool.ids.size() != pool.k) {
        throw ValidationError("pool has " + std::to_string(pool.ids.size()) +
                              " ids but k=" + std::to_string(pool.k));
    }
    return pool;
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return sum;
}

std::vector<std::string> sorted_unique_ids(const std::vector<std::string>& ids) {
    std::vector<std::string> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw ArgumentError("candidate id list contains duplicates");
    }
    return sorted;
}

// Geometry vectors in id-sorted order.
std::vector<std::vector<double>> gather_vectors(const EmbeddingStore& store,
                                                const std::vector<std::string>& ids,
                                                const GeometryOptions& geometry) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(ids.size());
    for (const auto& id : ids) {
        const EmbeddingVector& vec = store.at(id);
        vectors.push_back(geometry.l2_normalize ? l2_normalized(vec).values : vec.values);
    }
    return vectors;
}

void require_budget(std::size_t k, std::size_t n) {
    if (k < 1) throw ArgumentError("k must be >= 1");
    if (k > n) {
        throw ArgumentError("k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                            " candidates");
    }
}

}  // namespace

// -- k-means -------------------------------------------------------------------

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, std::size_t k,
                    std::uint64_t seed, std::size_t max_iters, double tol) {
    const std::size_t n = vectors.size();
    require_budget(k, n);

    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> centroids;
    centroids.reserve(k);

    // k-means++ seeding.
    std::vector<char> chosen(n, 0);
    {
        std::size_t first = static_cast<std::size_t>(bounded(rng, n));
        centroids.push_back(vectors[first]);
        chosen[first] = 1;
    }
    std::vector<double> d2(n, 0.0);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, squared_distance(vectors[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = n;
        if (total == 0.0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) { pick = i; break; }
            }
        } else {
            double target = uniform_unit(rng) * total;
            double cum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > target) { pick = i; break; }
            }
            if (pick == n) {
                for (std::size_t i = n; i-- > 0;) {
                    if (d2[i] > 0.0) { pick = i; break; }
                }
            }
        }
        if (pick == n) throw DomainError("k-means++ could not seed a new centroid");
        centroids.push_back(vectors[pick]);
        chosen[pick] = 1;
    }

    const std::size_t dim = vectors[0].size();
    std::vector<int> assignment(n, 0);
    std::vector<double> dist(n, 0.0);

    auto assign_pass = [&]() {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int best_c = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double d = squared_distance(vectors[i], centroids[c]);
                if (d < best) {
                    best = d;
                    best_c = static_cast<int>(c);
                }
            }
            assignment[i] = best_c;
            dist[i] = best;
        }
    };

    KMeansResult result;
    std::size_t iter = 0;
    for (; iter < max_iters; ++iter) {
        assign_pass();

        std::vector<std::vector<double>> next(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& acc = next[static_cast<std::size_t>(assignment[i])];
            for (std::size_t j = 0; j < dim; ++j) acc[j] += vectors[i][j];
            ++counts[static_cast<std::size_t>(assignment[i])];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t j = 0; j < dim; ++j) next[c][j] /= static_cast<double>(counts[c]);
        }
        // Empty clusters claim the farthest unclaimed point, in index order.
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (dist[i] > far_d) {
                    far_d = dist[i];
                    far = i;
                }
            }
            next[c] = vectors[far];
            dist[far] = 0.0;
        }

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            shift = std::max(shift, std::sqrt(squared_distance(next[c], centroids[c])));
        }
        centroids = std::move(next);
        if (shift < tol) { ++iter; break; }
    }
    assign_pass();

    result.centroids = std::move(centroids);
    result.assignment = assignment;
    result.iterations = static_cast<int>(iter);
    result.inertia = 0.0;
    for (double d : dist) result.inertia += d;
    return result;
}

// -- Central -------------------------------------------------------------------

Pool select_central(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                    std::size_t k, const GeometryOptions& geometry) {
    auto ids = sorted_unique_ids(train_ids);
    require_budget(k, ids.size());
    auto vectors = gather_vectors(store, ids, geometry);

    const std::size_t dim = vectors[0].size();
    std::vector<double> mean(dim, 0.0);
    for (const auto& vec : vectors) {
        for (std::size_t j = 0; j < dim; ++j) mean[j] += vec[j];
    }
    for (std::size_t j = 0; j < dim; ++j) mean[j] /= static_cast<double>(vectors.size());

    std::vector<std::size_t> order(ids.size());
    std::vector<double> dist(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        order[i] = i;
        dist[i] = squared_distance(vectors[i], mean);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return ids[a] < ids[b];
    });

    Pool pool;
    pool.strategy = "central";
    pool.k = k;
    pool.seed = 0;
    pool.params["l2_normalize"] = geometry.l2_normalize;
    for (std::size_t i = 0; i < k; ++i) pool.ids.push_back(ids[order[i]]);
    return pool;
}

// -- Cluster -------------------------------------------------------------------

Pool select_cluster(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                    std::size_t k, std::uint64_t seed, const GeometryOptions& geometry) {
    auto ids = sorted_unique_ids(train_ids);
    require_budget(k, ids.size());
    auto vectors = gather_vectors(store, ids, geometry);

    KMeansResult km = kmeans(vectors, k, seed);

    std::vector<char> taken(ids.size(), 0);
    Pool pool;
    pool.strategy = "cluster";
    pool.k = k;
    pool.seed = seed;
    pool.params["l2_normalize"] = geometry.l2_normalize;
    pool.provenance["kmeans_iterations"] = km.iterations;
    pool.provenance["kmeans_inertia"] = km.inertia;

    for (std::size_t c = 0; c < k; ++c) {
        std::size_t best = ids.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (taken[i]) continue;
            double d = squared_distance(vectors[i], km.centroids[c]);
            if (d < best_d || (d == best_d && best < ids.size() && ids[i] < ids[best])) {
                best_d = d;
                best = i;
            }
        }
        taken[best] = 1;
        pool.ids.push_back(ids[best]);
    }
    return pool;
}

// -- Vote-k --------------------------------------------------------------------

namespace {

// Directed kNN graph: out_edges[v] = indices of v's `degree` most cosine-
// similar candidates (self excluded, ties by id).
std::vector<std::vector<std::size_t>> knn_graph(
    const std::vector<std::vector<double>>& vectors, const std::vector<std::string>& ids,
    std::size_t degree) {
    const std::size_t n = ids.size();
    std::vector<EmbeddingVector> embedded;
    embedded.reserve(n);
    for (const auto& vec : vectors) embedded.emplace_back(vec);

    std::vector<std::vector<std::size_t>> out_edges(n);
    for (std::size_t v = 0; v < n; ++v) {
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(n - 1);
        for (std::size_t u = 0; u < n; ++u) {
            if (u == v) continue;
            double sim = (embedded[v].norm == 0.0 || embedded[u].norm == 0.0)
                             ? -2.0
                             : cosine_similarity(embedded[v], embedded[u]);
            scored.emplace_back(sim, u);
        }
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return ids[a.second] < ids[b.second];
        });
        if (scored.size() > degree) scored.resize(degree);
        for (const auto& [_, u] : scored) out_edges[v].push_back(u);
    }
    return out_edges;
}

std::vector<double> vote_scores(const std::vector<std::vector<std::size_t>>& out_edges,
                                const std::vector<char>& selected, double rho) {
    const std::size_t n = out_edges.size();
    std::vector<double> score(n, 0.0);
    for (std::size_t v = 0; v < n; ++v) {
        if (selected[v]) continue;
        std::size_t overlap = 0;
        for (std::size_t u : out_edges[v]) {
            if (selected[u]) ++overlap;
        }
        double weight = std::pow(rho, -static_cast<double>(overlap));
        for (std::size_t u : out_edges[v]) score[u] += weight;
    }
    return score;
}

std::size_t argmax_unselected(const std::vector<double>& score,
                              const std::vector<char>& selected,
                              const std::vector<std::string>& ids) {
    std::size_t best = ids.size();
    for (std::size_t u = 0; u < ids.size(); ++u) {
        if (selected[u]) continue;
        if (best == ids.size() || score[u] > score[best] ||
            (score[u] == score[best] && ids[u] < ids[best])) {
            best = u;
        }
    }
    return best;
}

}  // namespace

Pool select_vote_k(const EmbeddingStore& store, const std::vector<std::string>& train_ids,
                   std::size_t k, const VoteKParams& params,
                   const std::optional<VoteKConfidenceFn>& confidence,
                   std::uint64_t seed, const GeometryOptions& geometry) {
    auto ids = sorted_unique_ids(train_ids);
    require_budget(k, ids.size());
    if (ids.size() < 2) throw ArgumentError("vote-k needs at least 2 candidates");
    if (params.rho <= 1.0) throw ArgumentError("vote-k rho must be > 1");
    if (params.stage1_fraction <= 0.0 || params.stage1_fraction > 1.0) {
        throw ArgumentError("vote-k stage1_fraction must lie in (0, 1]");
    }
    const std::size_t degree = std::min(params.graph_degree, ids.size() - 1);

    auto vectors = gather_vectors(store, ids, geometry);
    auto out_edges = knn_graph(vectors, ids, degree);

    const std::size_t stage1_target =
        confidence ? std::min<std::size_t>(
                         k, static_cast<std::size_t>(
                                std::ceil(params.stage1_fraction * static_cast<double>(k))))
                   : k;

    std::vector<char> selected(ids.size(), 0);
    std::vector<std::string> stage1_ids;
    for (std::size_t step = 0; step < stage1_target; ++step) {
        auto score = vote_scores(out_edges, selected, params.rho);
        std::size_t pick = argmax_unselected(score, selected, ids);
        selected[pick] = 1;
        stage1_ids.push_back(ids[pick]);
    }

    Pool pool;
    pool.strategy = "votek";
    pool.k = k;
    pool.seed = seed;
    pool.params["graph_degree"] = degree;
    pool.params["rho"] = params.rho;
    pool.params["stage1_fraction"] = params.stage1_fraction;
    pool.params["l2_normalize"] = geometry.l2_normalize;
    pool.provenance["stage1_ids"] = stage1_ids;
    pool.ids = stage1_ids;

    const std::size_t buckets = k - stage1_target;
    if (buckets == 0) {
        if (!confidence) pool.provenance["mode"] = "votek-stage1-only";
        return pool;
    }

    std::vector<std::string> remaining;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!selected[i]) remaining.push_back(ids[i]);
    }

    std::vector<double> conf;
    try {
        conf = (*confidence)(stage1_ids, remaining);
    } catch (const Error& e) {
        throw ProviderError(std::string("vote-k stage 2 confidence failed: ") + e.what(),
                            /*retryable=*/false);
    }
    if (conf.size() != remaining.size()) {
        throw ProviderError("vote-k stage 2: confidence count mismatch", /*retryable=*/false);
    }

    // Scores against the frozen stage-1 selection.
    auto final_scores = vote_scores(out_edges, selected, params.rho);
    std::unordered_map<std::string, double> score_by_id;
    for (std::size_t i = 0; i < ids.size(); ++i) score_by_id[ids[i]] = final_scores[i];

    std::vector<std::size_t> order(remaining.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (conf[a] != conf[b]) return conf[a] > conf[b];
        return remaining[a] < remaining[b];
    });

    const std::size_t r = remaining.size();
    for (std::size_t b = 0; b < buckets; ++b) {
        std::size_t lo = b * r / buckets;
        std::size_t hi = (b + 1) * r / buckets;
        std::string best;
        double best_score = -1.0;
        for (std::size_t pos = lo; pos < hi; ++pos) {
            const std::string& cand = remaining[order[pos]];
            double s = score_by_id[cand];
            if (best.empty() || s > best_score || (s == best_score && cand < best)) {
                best = cand;
                best_score = s;
            }
        }
        pool.ids.push_back(best);
    }
    pool.provenance["stage2_buckets"] = buckets;
    return pool;
}

// -- Random --------------------------------------------------------------------

Pool select_random(const std::vector<std::string>& train_ids, std::size_t k,
                   std::uint64_t seed) {
    auto ids = sorted_unique_ids(train_ids);
    require_budget(k, ids.size());
    Pool pool;
    pool.strategy = "random";
    pool.k = k;
    pool.seed = seed;
    for (std::size_t idx : sample_without_replacement(ids.size(), k, seed)) {
        pool.ids.push_back(ids[idx]);
    }
    return pool;
}

}  // namespace iclb
