#pragma once

#include <array>
#include <memory>
#include <vector>

#include "hierflow/config.hpp"
#include "hierflow/hierarchy.hpp"
#include "hierflow/param_store.hpp"
#include "hierflow/series.hpp"
#include "hierflow/tensor.hpp"

namespace hierflow {

// Block-diagonal union of B copies of the per-layer graphs: no edges between
// blocks, parent links offset per block, plus precomputed row orderings for
// the cluster-shared GRU heads and the prediction-layer gather.
struct BatchedGraph {
    std::size_t B = 0;
    std::array<std::shared_ptr<const Csr>, 3> adj;
    std::vector<std::size_t> parent_of_bottom;  // length B*V1, rows into middle
    std::vector<std::size_t> parent_of_middle;  // length B*V2, rows into top
    std::vector<std::vector<std::size_t>> cluster_rows;  // per cluster
    std::vector<std::size_t> cluster_unsort;             // restores original row order
    std::vector<std::size_t> prediction_row_index;       // into stacked layer predictions
};

BatchedGraph make_batched_graph(const MultiLayerGraph& graph, std::size_t B);

std::shared_ptr<const Csr> replicate_blockdiag(const Csr& adj, std::size_t B);

// Inputs and targets for one mini-batch, already normalized. Raw targets are
// kept alongside for metric computation.
struct SampleBatch {
    std::size_t B = 0;
    std::array<Tensor, 3> inputs;  // [B*V_m x L]
    Tensor targets_norm;           // [B*V_Pr x T]
    std::vector<double> targets_raw;
    std::vector<std::size_t> origins;
};

// Which layers the GRU heads must run for, given the prediction mode.
std::array<bool, 3> layers_in_prediction(const MultiLayerGraph& graph);

class Model {
public:
    Model(ModelConfig cfg, MultiLayerGraph graph, std::array<NormStats, 3> norm,
          bool with_coordination, std::uint64_t seed);

    // Load from an existing store (checkpoint restore).
    Model(ModelConfig cfg, MultiLayerGraph graph, std::array<NormStats, 3> norm,
          ParameterStore store);

    const ModelConfig& config() const { return cfg_; }
    const MultiLayerGraph& graph() const { return graph_; }
    const std::array<NormStats, 3>& norm() const { return norm_; }
    ParameterStore& store() { return store_; }
    const ParameterStore& store() const { return store_; }
    bool has_coordination() const { return store_.contains("coord.w"); }

    SampleBatch make_batch(const std::array<SeriesTable, 3>& series,
                           const std::vector<std::size_t>& origins) const;

    // Encoder -> horizontal pass -> hierarchical pass -> per-cluster GRU
    // heads; returns normalized predictions [B*V_Pr x T].
    Tensor forward_initial(const BatchedGraph& bg, const SampleBatch& batch) const;

    // De-normalizes per prediction-layer node.
    Tensor denormalize(const Tensor& pred_norm, std::size_t B) const;
    Tensor normalize_rows(const Tensor& pred_raw, std::size_t B) const;

    // Learnable coordination: map all raw initial predictions to the bottom
    // layer, then apply H^r; the result satisfies parent = sum-of-children by
    // construction.
    Tensor coordinate(const Tensor& initial_raw, const HierarchyMatrix& hr,
                      std::size_t B) const;

    // Exposed per-layer intermediate states of the last forward for tests.
    struct Trace {
        std::array<Tensor, 3> encoded;      // [B*V_m x F]
        std::array<Tensor, 3> horizontal;   // h
        std::array<Tensor, 3> hierarchical; // h'
    };
    Tensor forward_initial_traced(const BatchedGraph& bg, const SampleBatch& batch,
                                  Trace* trace) const;

private:
    Tensor encode_layer(int m, const Tensor& input) const;
    Tensor gru_head(const std::string& prefix, const Tensor& features) const;

    ModelConfig cfg_;
    MultiLayerGraph graph_;
    std::array<NormStats, 3> norm_;
    ParameterStore store_;
};

// Bounded robust loss: mean over rows of (1/T) * sum_{i=1}^{T-1}
// e_i^2 / (e_i^2 + z); horizon step 0 is not directly penalized.
Tensor sql_loss(const Tensor& pred, const Tensor& target, double z);

}  // namespace hierflow
