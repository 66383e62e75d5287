#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hierflow/config.hpp"
#include "hierflow/hierarchy.hpp"
#include "hierflow/param_store.hpp"
#include "hierflow/windows.hpp"

namespace hierflow {

// Per-layer forecast for one origin, raw scale: layer[m] is [V_m x T].
struct LayerForecast {
    std::array<std::vector<double>, 3> layer;
    std::size_t horizon = 0;
};

// Per-layer, per-node daily profiles over the training span.
std::array<std::vector<std::vector<double>>, 3> layer_profiles(
    const HierarchyData& hier, std::size_t slots_per_day, std::size_t train_slots);

// Historical average: step j repeats the slot-of-day mean at t_origin + j.
LayerForecast ha_forecast(const std::array<std::vector<std::vector<double>>, 3>& profiles,
                          std::size_t slots_per_day, std::size_t origin, std::size_t horizon);

// Historical shares used by the proportional reconciliation schemes. A parent
// with zero training total splits uniformly across its children.
struct ProportionTable {
    std::vector<double> bottom_share;  // within the parent cluster
    std::vector<double> middle_share;  // within the top node
};

ProportionTable compute_proportions(const HierarchyData& hier, std::size_t train_slots);

// Reconciliation: each scheme keeps one layer's forecast and rebuilds the rest.
LayerForecast bottom_up(const LayerForecast& f, const MultiLayerGraph& graph);
LayerForecast middle_out(const LayerForecast& f, const MultiLayerGraph& graph,
                         const ProportionTable& props);
LayerForecast top_down(const LayerForecast& f, const MultiLayerGraph& graph,
                       const ProportionTable& props);

// Rows of the prediction layer, in prediction-node order: [V_Pr x T].
std::vector<double> prediction_rows(const LayerForecast& f, const MultiLayerGraph& graph);

// Raw series of every prediction-layer node, [V_Pr][slots].
std::vector<std::vector<double>> prediction_series(const HierarchyData& hier);
NormStats prediction_norm(const HierarchyData& hier, std::size_t train_slots);

// Plain per-node GRU over the raw lookback window, parameters shared across
// nodes, scalar input per step.
class GruBaseline {
public:
    GruBaseline(std::size_t hidden, std::size_t horizon, std::uint64_t seed);

    ParameterStore& store() { return store_; }

    // x is [R x L] of normalized windows; returns normalized [R x T].
    Tensor forward(const Tensor& x) const;

    // Trains with the same loss/optimizer settings as the main model.
    // Returns the per-epoch training loss.
    std::vector<double> fit(const std::vector<std::vector<double>>& series_rows,
                            const NormStats& norm, const WindowSet& ws,
                            const ModelConfig& cfg);

    // Raw-scale forecast for one origin, [V_Pr x T].
    std::vector<double> predict(const std::vector<std::vector<double>>& series_rows,
                                const NormStats& norm, std::size_t origin,
                                std::size_t lookback) const;

private:
    std::size_t hidden_, horizon_;
    ParameterStore store_;
};

}  // namespace hierflow
