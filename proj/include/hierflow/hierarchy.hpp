#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hierflow/series.hpp"
#include "hierflow/tensor.hpp"

namespace hierflow {

enum class PredictionLayerMode { BottomOnly, BottomTop, All };

PredictionLayerMode prediction_mode_from_string(const std::string& s);
std::string prediction_mode_to_string(PredictionLayerMode m);

// Three stacked node layers: 0 = bottom, 1 = middle (clusters), 2 = top.
// Parent links point strictly upward; intra-layer edges are undirected.
struct MultiLayerGraph {
    std::array<std::vector<std::string>, 3> nodes;
    std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> edges;
    std::vector<std::size_t> parent_of_bottom;  // -> middle index
    std::vector<std::size_t> parent_of_middle;  // -> top index
    PredictionLayerMode mode = PredictionLayerMode::BottomOnly;
    // (layer, index) in output order: bottom nodes first, then middle, then top
    // as selected by `mode`.
    std::vector<std::pair<int, std::size_t>> prediction_nodes;

    std::size_t layer_size(int m) const { return nodes[m].size(); }
    std::size_t prediction_count() const { return prediction_nodes.size(); }
    std::string prediction_node_id(std::size_t i) const {
        const auto& [m, v] = prediction_nodes[i];
        return nodes[m][v];
    }
    // Children (middle-layer indices -> bottom indices, top -> middle).
    std::vector<std::vector<std::size_t>> children_of_middle() const;
    std::vector<std::vector<std::size_t>> children_of_top() const;
};

// 0/1 aggregation matrix mapping bottom-layer values to every
// prediction-layer value; rows follow graph.prediction_nodes.
struct HierarchyMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> dense;                // [rows x cols]
    std::shared_ptr<const Csr> descendants;   // per row: bottom columns with a 1
    std::vector<std::string> row_nodes, col_nodes;

    double at(std::size_t r, std::size_t c) const { return dense[r * cols + c]; }
};

// Top-K similarity graph over daily profiles; edge set is the union of each
// node's picks, ties broken by (similarity desc, node index asc).
std::vector<std::pair<std::size_t, std::size_t>> build_bottom_graph(
    const std::vector<std::vector<double>>& profiles, std::size_t K);

struct KMeansResult {
    std::vector<std::size_t> assignment;
    std::vector<std::vector<double>> centroids;
    double inertia = 0.0;
    std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding; deterministic for a fixed seed.
// An empty cluster is re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& rows, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter = 300);

// Full three-layer hierarchy: middle nodes are clusters with summed series,
// middle intra-edges form a complete graph, the single top node aggregates
// everything.
struct HierarchyData {
    MultiLayerGraph graph;
    std::array<SeriesTable, 3> series;  // per layer
};

HierarchyData build_hierarchy(const SeriesTable& bottom,
                              std::vector<std::pair<std::size_t, std::size_t>> bottom_edges,
                              const std::vector<std::size_t>& assignment,
                              PredictionLayerMode mode);

HierarchyMatrix build_hr(const MultiLayerGraph& graph);

std::shared_ptr<const Csr> edges_to_csr(
    const std::vector<std::pair<std::size_t, std::size_t>>& edges, std::size_t num_nodes);

// JSON {layers, edges, parents, prediction_layer} round trip. The series are
// rebuilt from the bottom CSV on load.
void save_hierarchy_json(const MultiLayerGraph& graph,
                         const std::vector<std::size_t>& assignment, const std::string& path);
MultiLayerGraph load_hierarchy_json(const std::string& path);

void save_hr_csv(const HierarchyMatrix& hr, const std::string& path);

// Reattaches per-layer series to a graph loaded from JSON.
HierarchyData attach_series(MultiLayerGraph graph, const SeriesTable& bottom);

}  // namespace hierflow
