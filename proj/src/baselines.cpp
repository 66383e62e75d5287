#include "hierflow/baselines.hpp"

#include <cmath>
#include <iostream>

#include "hierflow/errors.hpp"
#include "hierflow/model.hpp"

namespace hierflow {

std::array<std::vector<std::vector<double>>, 3> layer_profiles(
    const HierarchyData& hier, std::size_t slots_per_day, std::size_t train_slots) {
    std::array<std::vector<std::vector<double>>, 3> out;
    for (int m = 0; m < 3; ++m)
        for (std::size_t v = 0; v < hier.series[m].num_nodes(); ++v)
            out[m].push_back(daily_profile(hier.series[m], v, slots_per_day, train_slots));
    return out;
}

LayerForecast ha_forecast(const std::array<std::vector<std::vector<double>>, 3>& profiles,
                          std::size_t slots_per_day, std::size_t origin,
                          std::size_t horizon) {
    LayerForecast f;
    f.horizon = horizon;
    for (int m = 0; m < 3; ++m) {
        f.layer[m].reserve(profiles[m].size() * horizon);
        for (const auto& prof : profiles[m])
            for (std::size_t j = 0; j < horizon; ++j)
                f.layer[m].push_back(prof[(origin + j) % slots_per_day]);
    }
    return f;
}

ProportionTable compute_proportions(const HierarchyData& hier, std::size_t train_slots) {
    const auto& graph = hier.graph;
    const std::size_t V1 = graph.nodes[0].size();
    const std::size_t V2 = graph.nodes[1].size();
    std::vector<double> bottom_total(V1, 0.0), middle_total(V2, 0.0);
    double top_total = 0.0;
    for (std::size_t v = 0; v < V1; ++v)
        for (std::size_t s = 0; s < train_slots; ++s)
            bottom_total[v] += hier.series[0].at(v, s);
    for (std::size_t v = 0; v < V1; ++v) middle_total[graph.parent_of_bottom[v]] += bottom_total[v];
    for (std::size_t c = 0; c < V2; ++c) top_total += middle_total[c];

    ProportionTable p;
    p.bottom_share.assign(V1, 0.0);
    p.middle_share.assign(V2, 0.0);
    const auto children = graph.children_of_middle();
    for (std::size_t c = 0; c < V2; ++c) {
        if (middle_total[c] > 0.0) {
            for (std::size_t v : children[c]) p.bottom_share[v] = bottom_total[v] / middle_total[c];
        } else {
            std::cerr << "warning: cluster " << graph.nodes[1][c]
                      << " has zero training total; splitting uniformly\n";
            for (std::size_t v : children[c])
                p.bottom_share[v] = 1.0 / static_cast<double>(children[c].size());
        }
    }
    if (top_total > 0.0) {
        for (std::size_t c = 0; c < V2; ++c) p.middle_share[c] = middle_total[c] / top_total;
    } else {
        std::cerr << "warning: zero training total at the top node; splitting uniformly\n";
        for (std::size_t c = 0; c < V2; ++c) p.middle_share[c] = 1.0 / static_cast<double>(V2);
    }
    return p;
}

LayerForecast bottom_up(const LayerForecast& f, const MultiLayerGraph& graph) {
    const std::size_t T = f.horizon;
    LayerForecast out;
    out.horizon = T;
    out.layer[0] = f.layer[0];
    out.layer[1].assign(graph.nodes[1].size() * T, 0.0);
    out.layer[2].assign(graph.nodes[2].size() * T, 0.0);
    for (std::size_t v = 0; v < graph.nodes[0].size(); ++v) {
        const std::size_t c = graph.parent_of_bottom[v];
        const std::size_t t3 = graph.parent_of_middle[c];
        for (std::size_t j = 0; j < T; ++j) {
            out.layer[1][c * T + j] += f.layer[0][v * T + j];
            out.layer[2][t3 * T + j] += f.layer[0][v * T + j];
        }
    }
    return out;
}

LayerForecast middle_out(const LayerForecast& f, const MultiLayerGraph& graph,
                         const ProportionTable& props) {
    const std::size_t T = f.horizon;
    LayerForecast out;
    out.horizon = T;
    out.layer[1] = f.layer[1];
    out.layer[0].assign(graph.nodes[0].size() * T, 0.0);
    out.layer[2].assign(graph.nodes[2].size() * T, 0.0);
    for (std::size_t v = 0; v < graph.nodes[0].size(); ++v) {
        const std::size_t c = graph.parent_of_bottom[v];
        for (std::size_t j = 0; j < T; ++j)
            out.layer[0][v * T + j] = props.bottom_share[v] * f.layer[1][c * T + j];
    }
    for (std::size_t c = 0; c < graph.nodes[1].size(); ++c) {
        const std::size_t t3 = graph.parent_of_middle[c];
        for (std::size_t j = 0; j < T; ++j)
            out.layer[2][t3 * T + j] += f.layer[1][c * T + j];
    }
    return out;
}

LayerForecast top_down(const LayerForecast& f, const MultiLayerGraph& graph,
                       const ProportionTable& props) {
    const std::size_t T = f.horizon;
    LayerForecast out;
    out.horizon = T;
    out.layer[2] = f.layer[2];
    out.layer[1].assign(graph.nodes[1].size() * T, 0.0);
    out.layer[0].assign(graph.nodes[0].size() * T, 0.0);
    for (std::size_t c = 0; c < graph.nodes[1].size(); ++c) {
        const std::size_t t3 = graph.parent_of_middle[c];
        for (std::size_t j = 0; j < T; ++j)
            out.layer[1][c * T + j] = props.middle_share[c] * f.layer[2][t3 * T + j];
    }
    for (std::size_t v = 0; v < graph.nodes[0].size(); ++v) {
        const std::size_t c = graph.parent_of_bottom[v];
        for (std::size_t j = 0; j < T; ++j)
            out.layer[0][v * T + j] = props.bottom_share[v] * out.layer[1][c * T + j];
    }
    return out;
}

std::vector<double> prediction_rows(const LayerForecast& f, const MultiLayerGraph& graph) {
    const std::size_t T = f.horizon;
    std::vector<double> rows;
    rows.reserve(graph.prediction_count() * T);
    for (const auto& [m, v] : graph.prediction_nodes)
        for (std::size_t j = 0; j < T; ++j) rows.push_back(f.layer[m][v * T + j]);
    return rows;
}

std::vector<std::vector<double>> prediction_series(const HierarchyData& hier) {
    std::vector<std::vector<double>> out;
    for (const auto& [m, v] : hier.graph.prediction_nodes) {
        const auto r = hier.series[m].row(v);
        out.emplace_back(r.begin(), r.end());
    }
    return out;
}

NormStats prediction_norm(const HierarchyData& hier, std::size_t train_slots) {
    NormStats all[3];
    for (int m = 0; m < 3; ++m) all[m] = compute_norm_stats(hier.series[m], train_slots);
    NormStats out;
    for (const auto& [m, v] : hier.graph.prediction_nodes) {
        out.mean.push_back(all[m].mean[v]);
        out.stddev.push_back(all[m].stddev[v]);
    }
    return out;
}

// ---- plain GRU baseline --------------------------------------------------

GruBaseline::GruBaseline(std::size_t hidden, std::size_t horizon, std::uint64_t seed)
    : hidden_(hidden), horizon_(horizon) {
    Rng rng(seed);
    for (const char* gate : {"z", "r", "c"}) {
        store_.create(std::string("gru.w") + gate, {1, hidden_}, 1, rng);
        store_.create(std::string("gru.u") + gate, {hidden_, hidden_}, hidden_, rng);
        store_.create_zeros(std::string("gru.b") + gate, {hidden_});
    }
    store_.create("out.w", {hidden_, horizon_}, hidden_, rng);
    store_.create_zeros("out.b", {horizon_});
}

Tensor GruBaseline::forward(const Tensor& x) const {
    const std::size_t R = x.rows(), L = x.cols();
    const Tensor wz = store_.get("gru.wz"), uz = store_.get("gru.uz"), bz = store_.get("gru.bz");
    const Tensor wr = store_.get("gru.wr"), ur = store_.get("gru.ur"), br = store_.get("gru.br");
    const Tensor wc = store_.get("gru.wc"), uc = store_.get("gru.uc"), bc = store_.get("gru.bc");
    Tensor h = Tensor::zeros({R, hidden_});
    const Tensor one = Tensor::scalar(1.0);
    for (std::size_t t = 0; t < L; ++t) {
        Tensor xt = slice_cols(x, t, t + 1);
        Tensor z = sigmoid(add_bias(add(matmul(xt, wz), matmul(h, uz)), bz));
        Tensor r = sigmoid(add_bias(add(matmul(xt, wr), matmul(h, ur)), br));
        Tensor c = tanh(add_bias(add(matmul(xt, wc), matmul(mul(r, h), uc)), bc));
        h = add(mul(sub(one, z), c), mul(z, h));
    }
    return linear(h, store_.get("out.w"), store_.get("out.b"));
}

namespace {

Tensor window_matrix(const std::vector<std::vector<double>>& rows, const NormStats& norm,
                     const std::vector<std::size_t>& origins, std::size_t first,
                     std::size_t count, bool target, std::size_t L) {
    const std::size_t V = rows.size();
    std::vector<double> out(count * V * L);
    for (std::size_t b = 0; b < count; ++b) {
        const std::size_t origin = origins[first + b];
        for (std::size_t v = 0; v < V; ++v)
            for (std::size_t s = 0; s < L; ++s) {
                const std::size_t slot = target ? origin + s : origin - L + s;
                out[(b * V + v) * L + s] = (rows[v][slot] - norm.mean[v]) / norm.stddev[v];
            }
    }
    return Tensor::constant({count * V, L}, std::move(out));
}

}  // namespace

std::vector<double> GruBaseline::fit(const std::vector<std::vector<double>>& series_rows,
                                     const NormStats& norm, const WindowSet& ws,
                                     const ModelConfig& cfg) {
    AdamOptimizer adam;
    std::vector<double> epoch_loss;
    std::vector<std::size_t> origins = ws.train;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed ^ (0x9e3779b97f4a7c15ull + epoch));
        shuffle_rng.shuffle(origins);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t i = 0; i < origins.size(); i += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, origins.size() - i);
            Tape tape;
            Tensor x = window_matrix(series_rows, norm, origins, i, B, false, cfg.lookback);
            Tensor y = window_matrix(series_rows, norm, origins, i, B, true, cfg.horizon);
            Tensor loss = sql_loss(forward(x), y, cfg.sql_z);
            if (!std::isfinite(loss.item()))
                throw NumericError("gru baseline loss is not finite at epoch " +
                                   std::to_string(epoch));
            total += loss.item();
            ++batches;
            tape.backward(loss);
            AdamOptimizer::clip_global_norm(store_, cfg.clip_norm,
                                            store_.paths_with_prefix(""));
            adam.step(store_, cfg.learning_rate);
        }
        epoch_loss.push_back(batches ? total / static_cast<double>(batches) : 0.0);
    }
    return epoch_loss;
}

std::vector<double> GruBaseline::predict(const std::vector<std::vector<double>>& series_rows,
                                         const NormStats& norm, std::size_t origin,
                                         std::size_t lookback) const {
    const std::vector<std::size_t> origins{origin};
    Tensor x = window_matrix(series_rows, norm, origins, 0, 1, false, lookback);
    Tensor pred = forward(x);
    std::vector<double> out(pred.value());
    for (std::size_t v = 0; v < series_rows.size(); ++v)
        for (std::size_t j = 0; j < horizon_; ++j)
            out[v * horizon_ + j] = out[v * horizon_ + j] * norm.stddev[v] + norm.mean[v];
    return out;
}

}  // namespace hierflow
