#pragma once

// Shared fixtures: a tiny synthetic dataset with its hierarchy, windows and
// model, small enough for finite differences and brute-force checks.

#include <array>

#include "hierflow/baselines.hpp"
#include "hierflow/hierarchy.hpp"
#include "hierflow/model.hpp"
#include "hierflow/synthetic.hpp"
#include "hierflow/windows.hpp"

namespace hierflow::testing {

struct Fixture {
    ModelConfig cfg;
    HierarchyData hier;
    std::vector<std::size_t> assignment;
    std::array<NormStats, 3> norm;
    WindowSet ws;
};

inline ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.slots_per_day = 24;
    cfg.lookback = 12;
    cfg.horizon = 4;
    cfg.window = 6;
    cfg.stride = 3;   // N = 3
    cfg.embed_dim = 4;
    cfg.depth_kernel = 3;
    cfg.channels = 2;  // F = 8
    cfg.top_k = 2;
    cfg.clusters = 2;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.seed = 42;
    return cfg;
}

inline Fixture make_fixture(ModelConfig cfg, std::size_t nodes = 6, std::size_t days = 6,
                            const std::string& layer = "all") {
    cfg.prediction_layer = layer;
    SyntheticOptions opt;
    opt.nodes = nodes;
    opt.days = days;
    opt.slots_per_day = cfg.slots_per_day;
    opt.archetypes = 2;
    opt.noise = 0.05;
    opt.seed = cfg.seed;
    const SyntheticData data = gen_synthetic(opt);

    Fixture fx;
    fx.cfg = cfg;
    const std::size_t train_slots =
        static_cast<std::size_t>(static_cast<double>(data.table.slots) * cfg.train_frac);
    std::vector<std::vector<double>> profiles;
    for (std::size_t v = 0; v < nodes; ++v)
        profiles.push_back(daily_profile(data.table, v, cfg.slots_per_day, train_slots));
    const auto edges = build_bottom_graph(profiles, cfg.top_k);
    fx.assignment = kmeans(profiles, cfg.clusters, cfg.seed).assignment;
    fx.hier = build_hierarchy(data.table, edges, fx.assignment,
                              prediction_mode_from_string(layer));
    for (int m = 0; m < 3; ++m)
        fx.norm[m] = compute_norm_stats(fx.hier.series[m], train_slots);
    const std::size_t val_end = static_cast<std::size_t>(
        static_cast<double>(data.table.slots) * (cfg.train_frac + cfg.val_frac));
    fx.ws = make_windows(data.table.slots, cfg.lookback, cfg.horizon, train_slots, val_end);
    return fx;
}

}  // namespace hierflow::testing
