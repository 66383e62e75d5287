#include "hierflow/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hierflow/errors.hpp"
#include "hierflow/io_util.hpp"
#include "hierflow/rng.hpp"

namespace hierflow {

PredictionLayerMode prediction_mode_from_string(const std::string& s) {
    if (s == "bottom") return PredictionLayerMode::BottomOnly;
    if (s == "bottom_top") return PredictionLayerMode::BottomTop;
    if (s == "all") return PredictionLayerMode::All;
    throw ConfigError("unknown prediction layer mode: " + s +
                      " (expected bottom|bottom_top|all)");
}

std::string prediction_mode_to_string(PredictionLayerMode m) {
    switch (m) {
        case PredictionLayerMode::BottomOnly: return "bottom";
        case PredictionLayerMode::BottomTop: return "bottom_top";
        case PredictionLayerMode::All: return "all";
    }
    return "bottom";
}

std::vector<std::vector<std::size_t>> MultiLayerGraph::children_of_middle() const {
    std::vector<std::vector<std::size_t>> out(nodes[1].size());
    for (std::size_t v = 0; v < parent_of_bottom.size(); ++v)
        out[parent_of_bottom[v]].push_back(v);
    return out;
}

std::vector<std::vector<std::size_t>> MultiLayerGraph::children_of_top() const {
    std::vector<std::vector<std::size_t>> out(nodes[2].size());
    for (std::size_t v = 0; v < parent_of_middle.size(); ++v)
        out[parent_of_middle[v]].push_back(v);
    return out;
}

// ---- bottom graph --------------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> build_bottom_graph(
    const std::vector<std::vector<double>>& profiles, std::size_t K) {
    const std::size_t V = profiles.size();
    if (K == 0 || K >= V)
        throw ConfigError("top-K must satisfy 0 < K < node count (K=" + std::to_string(K) +
                          ", V=" + std::to_string(V) + ")");
    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    for (std::size_t i = 0; i < V; ++i) {
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(V - 1);
        for (std::size_t j = 0; j < V; ++j) {
            if (j == i) continue;
            sims.emplace_back(pearson(profiles[i], profiles[j]), j);
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t j = sims[k].second;
            edge_set.emplace(std::min(i, j), std::max(i, j));
        }
    }
    return {edge_set.begin(), edge_set.end()};
}

// ---- k-means -------------------------------------------------------------

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        d += t * t;
    }
    return d;
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& rows, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter) {
    const std::size_t n = rows.size();
    if (k == 0 || k > n)
        throw ConfigError("kmeans needs 0 < k <= rows (k=" + std::to_string(k) +
                          ", rows=" + std::to_string(n) + ")");
    const std::size_t dim = rows[0].size();
    Rng rng(seed);

    // k-means++ seeding.
    std::vector<std::vector<double>> centroids;
    centroids.push_back(rows[rng.next_below(n)]);
    std::vector<double> dist(n);
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(rows[i], c));
            dist[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.next_unit() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += dist[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.next_below(n);  // all points coincide with a centroid
        }
        centroids.push_back(rows[pick]);
    }

    std::vector<std::size_t> assign(n, 0);
    KMeansResult res;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bestd = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = sq_dist(rows[i], centroids[c]);
                if (d < bestd) {
                    bestd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                changed = true;
                assign[i] = best;
            }
        }
        res.iterations = iter + 1;
        if (!changed && iter > 0) break;

        std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[assign[i]] += 1;
            for (std::size_t d = 0; d < dim; ++d) sums[assign[i]][d] += rows[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Re-seed the empty cluster at the farthest point; lowest
                // index wins ties.
                std::size_t far = 0;
                double fard = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = sq_dist(rows[i], centroids[assign[i]]);
                    if (d > fard) {
                        fard = d;
                        far = i;
                    }
                }
                centroids[c] = rows[far];
            } else {
                for (std::size_t d = 0; d < dim; ++d)
                    centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
            }
        }
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) res.inertia += sq_dist(rows[i], centroids[assign[i]]);
    res.assignment = std::move(assign);
    res.centroids = std::move(centroids);
    return res;
}

// ---- hierarchy -----------------------------------------------------------

namespace {

void set_prediction_nodes(MultiLayerGraph& g) {
    g.prediction_nodes.clear();
    for (std::size_t v = 0; v < g.nodes[0].size(); ++v) g.prediction_nodes.emplace_back(0, v);
    if (g.mode == PredictionLayerMode::All)
        for (std::size_t v = 0; v < g.nodes[1].size(); ++v) g.prediction_nodes.emplace_back(1, v);
    if (g.mode == PredictionLayerMode::All || g.mode == PredictionLayerMode::BottomTop)
        for (std::size_t v = 0; v < g.nodes[2].size(); ++v) g.prediction_nodes.emplace_back(2, v);
}

}  // namespace

HierarchyData build_hierarchy(const SeriesTable& bottom,
                              std::vector<std::pair<std::size_t, std::size_t>> bottom_edges,
                              const std::vector<std::size_t>& assignment,
                              PredictionLayerMode mode) {
    const std::size_t V1 = bottom.num_nodes();
    if (assignment.size() != V1)
        throw ContractError("cluster assignment does not cover every bottom node");
    std::size_t k = 0;
    for (std::size_t a : assignment) k = std::max(k, a + 1);

    HierarchyData h;
    h.graph.nodes[0] = bottom.node_ids;
    h.graph.edges[0] = std::move(bottom_edges);
    h.graph.parent_of_bottom = assignment;
    for (std::size_t c = 0; c < k; ++c)
        h.graph.nodes[1].push_back("cluster_" + std::to_string(c));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) h.graph.edges[1].emplace_back(a, b);
    h.graph.nodes[2] = {"total"};
    h.graph.parent_of_middle.assign(k, 0);
    h.graph.mode = mode;
    set_prediction_nodes(h.graph);

    h.series[0] = bottom;
    h.series[1].node_ids = h.graph.nodes[1];
    h.series[1].slots = bottom.slots;
    h.series[1].granularity_minutes = bottom.granularity_minutes;
    h.series[1].values.assign(k * bottom.slots, 0.0);
    for (std::size_t v = 0; v < V1; ++v)
        for (std::size_t s = 0; s < bottom.slots; ++s)
            h.series[1].values[assignment[v] * bottom.slots + s] += bottom.at(v, s);
    h.series[2].node_ids = h.graph.nodes[2];
    h.series[2].slots = bottom.slots;
    h.series[2].granularity_minutes = bottom.granularity_minutes;
    h.series[2].values.assign(bottom.slots, 0.0);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t s = 0; s < bottom.slots; ++s)
            h.series[2].values[s] += h.series[1].at(c, s);
    return h;
}

HierarchyData attach_series(MultiLayerGraph graph, const SeriesTable& bottom) {
    if (graph.nodes[0] != bottom.node_ids)
        throw DataError("bottom series node ids do not match the hierarchy");
    HierarchyData h =
        build_hierarchy(bottom, graph.edges[0], graph.parent_of_bottom, graph.mode);
    h.graph = std::move(graph);
    return h;
}

HierarchyMatrix build_hr(const MultiLayerGraph& graph) {
    const std::size_t V1 = graph.nodes[0].size();
    bool has_bottom = false;
    for (const auto& [m, v] : graph.prediction_nodes) has_bottom = has_bottom || m == 0;
    if (!has_bottom)
        throw ConfigError("prediction layer must include the bottom nodes");

    const auto mid_children = graph.children_of_middle();
    const auto top_children = graph.children_of_top();

    HierarchyMatrix hr;
    hr.rows = graph.prediction_count();
    hr.cols = V1;
    hr.dense.assign(hr.rows * hr.cols, 0.0);
    hr.col_nodes = graph.nodes[0];
    auto desc = std::make_shared<Csr>();
    desc->offsets.push_back(0);
    for (std::size_t r = 0; r < hr.rows; ++r) {
        const auto& [m, v] = graph.prediction_nodes[r];
        hr.row_nodes.push_back(graph.nodes[m][v]);
        std::vector<std::size_t> cols;
        if (m == 0) {
            cols.push_back(v);
        } else if (m == 1) {
            cols = mid_children[v];
        } else {
            for (std::size_t mid : top_children[v])
                cols.insert(cols.end(), mid_children[mid].begin(), mid_children[mid].end());
        }
        std::sort(cols.begin(), cols.end());
        for (std::size_t c : cols) {
            hr.dense[r * hr.cols + c] = 1.0;
            desc->nbrs.push_back(c);
        }
        desc->offsets.push_back(desc->nbrs.size());
    }
    hr.descendants = desc;
    return hr;
}

std::shared_ptr<const Csr> edges_to_csr(
    const std::vector<std::pair<std::size_t, std::size_t>>& edges, std::size_t num_nodes) {
    std::vector<std::vector<std::size_t>> adj(num_nodes);
    for (const auto& [a, b] : edges) {
        if (a == b) throw DataError("self-loop in edge list");
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    auto csr = std::make_shared<Csr>();
    csr->offsets.push_back(0);
    for (auto& nbrs : adj) {
        std::sort(nbrs.begin(), nbrs.end());
        csr->nbrs.insert(csr->nbrs.end(), nbrs.begin(), nbrs.end());
        csr->offsets.push_back(csr->nbrs.size());
    }
    return csr;
}

// ---- persistence ---------------------------------------------------------

void save_hierarchy_json(const MultiLayerGraph& graph,
                         const std::vector<std::size_t>& assignment, const std::string& path) {
    nlohmann::ordered_json j;
    j["layers"] = {graph.nodes[0], graph.nodes[1], graph.nodes[2]};
    nlohmann::ordered_json edges;
    for (int m = 0; m < 3; ++m) {
        nlohmann::ordered_json layer = nlohmann::ordered_json::array();
        for (const auto& [a, b] : graph.edges[m]) layer.push_back({a, b});
        edges.push_back(layer);
    }
    j["edges"] = edges;
    j["parents"] = {graph.parent_of_bottom, graph.parent_of_middle};
    j["prediction_layer"] = prediction_mode_to_string(graph.mode);
    j["assignment"] = assignment;
    write_file_atomic(path, j.dump(1));
}

MultiLayerGraph load_hierarchy_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open hierarchy JSON: " + path);
    nlohmann::json j;
    in >> j;
    MultiLayerGraph g;
    for (int m = 0; m < 3; ++m)
        g.nodes[m] = j.at("layers").at(m).get<std::vector<std::string>>();
    for (int m = 0; m < 3; ++m) {
        for (const auto& e : j.at("edges").at(m))
            g.edges[m].emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    }
    g.parent_of_bottom = j.at("parents").at(0).get<std::vector<std::size_t>>();
    g.parent_of_middle = j.at("parents").at(1).get<std::vector<std::size_t>>();
    g.mode = prediction_mode_from_string(j.at("prediction_layer").get<std::string>());
    set_prediction_nodes(g);
    return g;
}

void save_hr_csv(const HierarchyMatrix& hr, const std::string& path) {
    std::ostringstream os;
    os << "node_id";
    for (const auto& c : hr.col_nodes) os << "," << c;
    os << "\n";
    for (std::size_t r = 0; r < hr.rows; ++r) {
        os << hr.row_nodes[r];
        for (std::size_t c = 0; c < hr.cols; ++c) os << "," << static_cast<int>(hr.at(r, c));
        os << "\n";
    }
    write_file_atomic(path, os.str());
}

}  // namespace hierflow
