#include "hierflow/model.hpp"

#include <algorithm>
#include <cmath>

#include "hierflow/errors.hpp"

namespace hierflow {

std::shared_ptr<const Csr> replicate_blockdiag(const Csr& adj, std::size_t B) {
    const std::size_t V = adj.num_nodes();
    auto out = std::make_shared<Csr>();
    out->offsets.reserve(B * V + 1);
    out->offsets.push_back(0);
    out->nbrs.reserve(B * adj.nbrs.size());
    for (std::size_t b = 0; b < B; ++b) {
        const std::size_t off = b * V;
        for (std::size_t v = 0; v < V; ++v) {
            for (std::size_t e = adj.offsets[v]; e < adj.offsets[v + 1]; ++e)
                out->nbrs.push_back(off + adj.nbrs[e]);
            out->offsets.push_back(out->nbrs.size());
        }
    }
    return out;
}

std::array<bool, 3> layers_in_prediction(const MultiLayerGraph& graph) {
    std::array<bool, 3> in{false, false, false};
    for (const auto& [m, v] : graph.prediction_nodes) in[m] = true;
    return in;
}

BatchedGraph make_batched_graph(const MultiLayerGraph& graph, std::size_t B) {
    if (B == 0) throw ConfigError("batch size must be >= 1");
    BatchedGraph bg;
    bg.B = B;
    const std::size_t V1 = graph.nodes[0].size();
    const std::size_t V2 = graph.nodes[1].size();
    const std::size_t V3 = graph.nodes[2].size();
    for (int m = 0; m < 3; ++m) {
        const auto csr = edges_to_csr(graph.edges[m], graph.nodes[m].size());
        bg.adj[m] = replicate_blockdiag(*csr, B);
    }
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < V1; ++v)
            bg.parent_of_bottom.push_back(b * V2 + graph.parent_of_bottom[v]);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < V2; ++v)
            bg.parent_of_middle.push_back(b * V3 + graph.parent_of_middle[v]);

    bg.cluster_rows.assign(V2, {});
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t v = 0; v < V1; ++v)
            bg.cluster_rows[graph.parent_of_bottom[v]].push_back(b * V1 + v);
    bg.cluster_unsort.assign(B * V1, 0);
    std::size_t pos = 0;
    for (const auto& rows : bg.cluster_rows)
        for (std::size_t r : rows) bg.cluster_unsort[r] = pos++;

    // Prediction rows gather from the row-stack of per-layer predictions
    // (bottom block, then middle, then top, each block-major).
    const auto in_pred = layers_in_prediction(graph);
    std::array<std::size_t, 3> layer_offset{};
    std::size_t off = 0;
    const std::array<std::size_t, 3> sizes{V1, V2, V3};
    for (int m = 0; m < 3; ++m) {
        layer_offset[m] = off;
        if (in_pred[m]) off += B * sizes[m];
    }
    for (std::size_t b = 0; b < B; ++b)
        for (const auto& [m, v] : graph.prediction_nodes)
            bg.prediction_row_index.push_back(layer_offset[m] + b * sizes[m] + v);
    return bg;
}

// ---- model ---------------------------------------------------------------

namespace {

void init_gru(ParameterStore& store, const std::string& prefix, std::size_t in_dim,
              std::size_t hidden, std::size_t horizon, Rng& rng) {
    for (const char* gate : {"z", "r", "c"}) {
        store.create(prefix + ".gru.w" + gate, {in_dim, hidden}, in_dim, rng);
        store.create(prefix + ".gru.u" + gate, {hidden, hidden}, hidden, rng);
        store.create_zeros(prefix + ".gru.b" + gate, {hidden});
    }
    store.create(prefix + ".out.w", {hidden, horizon}, hidden, rng);
    store.create_zeros(prefix + ".out.b", {horizon});
}

}  // namespace

Model::Model(ModelConfig cfg, MultiLayerGraph graph, std::array<NormStats, 3> norm,
             bool with_coordination, std::uint64_t seed)
    : cfg_(std::move(cfg)), graph_(std::move(graph)), norm_(std::move(norm)) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t W = cfg_.window, D = cfg_.embed_dim, Q = cfg_.depth_kernel;
    const std::size_t A = cfg_.channels, N = cfg_.num_patches(), F = cfg_.feature_dim();
    const std::size_t H = cfg_.gru_hidden_or_default(), T = cfg_.horizon;

    for (int m = 0; m < 3; ++m) {
        const std::string p = "enc.L" + std::to_string(m + 1);
        store_.create(p + ".embed.w", {W, D}, W, rng);
        store_.create_zeros(p + ".embed.b", {D});
        store_.create(p + ".depth.k", {Q}, Q, rng);
        store_.create(p + ".point.k", {A, N}, N, rng);
    }
    for (int m = 0; m < 3; ++m) {
        const std::string p = "gnn.hor.L" + std::to_string(m + 1);
        store_.create(p + ".w", {2 * F, F}, 2 * F, rng);
        store_.create_zeros(p + ".b", {F});
    }
    for (const char* t : {"t32", "t21"}) {
        const std::string p = std::string("gnn.hier.") + t;
        store_.create(p + ".alloc", {F, F}, F, rng);
        store_.create(p + ".w", {2 * F, F}, 2 * F, rng);
        store_.create_zeros(p + ".b", {F});
    }
    const std::size_t clusters = graph_.nodes[1].size();
    for (std::size_t c = 0; c < clusters; ++c)
        init_gru(store_, "head.c" + std::to_string(c), D, H, T, rng);
    const auto in_pred = layers_in_prediction(graph_);
    if (in_pred[1]) init_gru(store_, "head.mid", D, H, T, rng);
    if (in_pred[2]) init_gru(store_, "head.top", D, H, T, rng);

    if (with_coordination) {
        const std::size_t VPr = graph_.prediction_count();
        const std::size_t V1 = graph_.nodes[0].size();
        // Selector initialization: picks the bottom rows out of the
        // prediction stack, so coordination starts as the identity on
        // bottom forecasts.
        std::vector<double> w(VPr * T * V1 * T, 0.0);
        for (std::size_t r = 0; r < VPr; ++r) {
            const auto& [m, v] = graph_.prediction_nodes[r];
            if (m != 0) continue;
            for (std::size_t t = 0; t < T; ++t)
                w[(r * T + t) * (V1 * T) + v * T + t] = 1.0;
        }
        store_.create_with("coord.w", {VPr * T, V1 * T}, std::move(w));
        store_.create_zeros("coord.b", {V1 * T});
    }
}

Model::Model(ModelConfig cfg, MultiLayerGraph graph, std::array<NormStats, 3> norm,
             ParameterStore store)
    : cfg_(std::move(cfg)),
      graph_(std::move(graph)),
      norm_(std::move(norm)),
      store_(std::move(store)) {
    cfg_.validate();
}

SampleBatch Model::make_batch(const std::array<SeriesTable, 3>& series,
                              const std::vector<std::size_t>& origins) const {
    const std::size_t B = origins.size();
    const std::size_t L = cfg_.lookback, T = cfg_.horizon;
    SampleBatch batch;
    batch.B = B;
    batch.origins = origins;
    for (int m = 0; m < 3; ++m) {
        const std::size_t V = series[m].num_nodes();
        std::vector<double> in(B * V * L);
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t origin = origins[b];
            for (std::size_t v = 0; v < V; ++v) {
                const double mu = norm_[m].mean[v];
                const double sd = norm_[m].stddev[v];
                for (std::size_t s = 0; s < L; ++s)
                    in[(b * V + v) * L + s] =
                        (series[m].at(v, origin - L + s) - mu) / sd;
            }
        }
        batch.inputs[m] = Tensor::constant({B * V, L}, std::move(in));
    }
    const std::size_t VPr = graph_.prediction_count();
    std::vector<double> tn(B * VPr * T), traw(B * VPr * T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < VPr; ++r) {
            const auto& [m, v] = graph_.prediction_nodes[r];
            const double mu = norm_[m].mean[v];
            const double sd = norm_[m].stddev[v];
            for (std::size_t t = 0; t < T; ++t) {
                const double raw = series[m].at(v, origins[b] + t);
                traw[(b * VPr + r) * T + t] = raw;
                tn[(b * VPr + r) * T + t] = (raw - mu) / sd;
            }
        }
    batch.targets_norm = Tensor::constant({B * VPr, T}, std::move(tn));
    batch.targets_raw = std::move(traw);
    return batch;
}

Tensor Model::encode_layer(int m, const Tensor& input) const {
    const std::string p = "enc.L" + std::to_string(m + 1);
    const std::size_t N = cfg_.num_patches();
    const std::size_t R = input.rows();
    Tensor patches = patchify(input, cfg_.window, cfg_.stride);
    Tensor emb = linear(patches, store_.get(p + ".embed.w"), store_.get(p + ".embed.b"));
    Tensor local = relu(depthwise_conv(emb, store_.get(p + ".depth.k")));
    Tensor global = relu(patch_mix(local, store_.get(p + ".point.k"), N));
    return reshape(global, {R, cfg_.feature_dim()});
}

Tensor Model::gru_head(const std::string& prefix, const Tensor& features) const {
    const std::size_t A = cfg_.channels, D = cfg_.embed_dim;
    const std::size_t H = cfg_.gru_hidden_or_default();
    const std::size_t R = features.rows();
    const Tensor wz = store_.get(prefix + ".gru.wz"), uz = store_.get(prefix + ".gru.uz"),
                 bz = store_.get(prefix + ".gru.bz");
    const Tensor wr = store_.get(prefix + ".gru.wr"), ur = store_.get(prefix + ".gru.ur"),
                 br = store_.get(prefix + ".gru.br");
    const Tensor wc = store_.get(prefix + ".gru.wc"), uc = store_.get(prefix + ".gru.uc"),
                 bc = store_.get(prefix + ".gru.bc");
    Tensor h = Tensor::zeros({R, H});
    const Tensor one = Tensor::scalar(1.0);
    // The patch axis is temporally ordered, so it serves as the GRU's time
    // dimension: A steps of D features.
    for (std::size_t t = 0; t < A; ++t) {
        Tensor x = slice_cols(features, t * D, (t + 1) * D);
        Tensor z = sigmoid(add_bias(add(matmul(x, wz), matmul(h, uz)), bz));
        Tensor r = sigmoid(add_bias(add(matmul(x, wr), matmul(h, ur)), br));
        Tensor c = tanh(add_bias(add(matmul(x, wc), matmul(mul(r, h), uc)), bc));
        h = add(mul(sub(one, z), c), mul(z, h));
    }
    return linear(h, store_.get(prefix + ".out.w"), store_.get(prefix + ".out.b"));
}

Tensor Model::forward_initial_traced(const BatchedGraph& bg, const SampleBatch& batch,
                                     Trace* trace) const {
    const bool use_mean = cfg_.aggregator == "mean";

    std::array<Tensor, 3> encoded, horizontal, hier;
    for (int m = 0; m < 3; ++m) encoded[m] = encode_layer(m, batch.inputs[m]);

    for (int m = 0; m < 3; ++m) {
        const std::string p = "gnn.hor.L" + std::to_string(m + 1);
        Tensor msg = neighbor_aggregate(encoded[m], bg.adj[m], use_mean);
        horizontal[m] =
            relu(linear(concat_cols(encoded[m], msg), store_.get(p + ".w"), store_.get(p + ".b")));
    }

    // Top-down sweep: the top keeps its horizontal state; each lower layer
    // receives its parent's already-updated state through the allocation
    // matrix.
    hier[2] = horizontal[2];
    {
        Tensor pm = gather_rows(matmul(hier[2], store_.get("gnn.hier.t32.alloc")),
                                bg.parent_of_middle);
        hier[1] = relu(linear(concat_cols(horizontal[1], pm), store_.get("gnn.hier.t32.w"),
                              store_.get("gnn.hier.t32.b")));
    }
    {
        Tensor pb = gather_rows(matmul(hier[1], store_.get("gnn.hier.t21.alloc")),
                                bg.parent_of_bottom);
        hier[0] = relu(linear(concat_cols(horizontal[0], pb), store_.get("gnn.hier.t21.w"),
                              store_.get("gnn.hier.t21.b")));
    }
    if (trace) {
        trace->encoded = encoded;
        trace->horizontal = horizontal;
        trace->hierarchical = hier;
    }

    const auto in_pred = layers_in_prediction(graph_);
    std::vector<Tensor> stacks;
    {
        // Bottom forecasts: cluster-shared GRU heads over grouped rows.
        std::vector<Tensor> parts;
        for (std::size_t c = 0; c < bg.cluster_rows.size(); ++c) {
            if (bg.cluster_rows[c].empty()) continue;
            Tensor grp = gather_rows(hier[0], bg.cluster_rows[c]);
            parts.push_back(gru_head("head.c" + std::to_string(c), grp));
        }
        Tensor stacked = concat_rows(parts);
        stacks.push_back(gather_rows(stacked, bg.cluster_unsort));
    }
    if (in_pred[1]) stacks.push_back(gru_head("head.mid", hier[1]));
    if (in_pred[2]) stacks.push_back(gru_head("head.top", hier[2]));

    Tensor all = stacks.size() == 1 ? stacks[0] : concat_rows(stacks);
    return gather_rows(all, bg.prediction_row_index);
}

Tensor Model::forward_initial(const BatchedGraph& bg, const SampleBatch& batch) const {
    return forward_initial_traced(bg, batch, nullptr);
}

namespace {

// Per-row (mu, sigma) constants for the prediction layer, tiled over blocks.
std::pair<Tensor, Tensor> prediction_row_stats(const MultiLayerGraph& graph,
                                               const std::array<NormStats, 3>& norm,
                                               std::size_t B, std::size_t T) {
    const std::size_t VPr = graph.prediction_count();
    std::vector<double> mu(B * VPr * T), sd(B * VPr * T);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t r = 0; r < VPr; ++r) {
            const auto& [m, v] = graph.prediction_nodes[r];
            for (std::size_t t = 0; t < T; ++t) {
                mu[(b * VPr + r) * T + t] = norm[m].mean[v];
                sd[(b * VPr + r) * T + t] = norm[m].stddev[v];
            }
        }
    return {Tensor::constant({B * VPr, T}, std::move(mu)),
            Tensor::constant({B * VPr, T}, std::move(sd))};
}

}  // namespace

Tensor Model::denormalize(const Tensor& pred_norm, std::size_t B) const {
    auto [mu, sd] = prediction_row_stats(graph_, norm_, B, cfg_.horizon);
    return add(mul(pred_norm, sd), mu);
}

Tensor Model::normalize_rows(const Tensor& pred_raw, std::size_t B) const {
    auto [mu, sd] = prediction_row_stats(graph_, norm_, B, cfg_.horizon);
    return div(sub(pred_raw, mu), sd);
}

Tensor Model::coordinate(const Tensor& initial_raw, const HierarchyMatrix& hr,
                         std::size_t B) const {
    const std::size_t VPr = graph_.prediction_count();
    const std::size_t V1 = graph_.nodes[0].size();
    const std::size_t T = cfg_.horizon;
    if (initial_raw.rows() != B * VPr || initial_raw.cols() != T)
        throw ContractError("coordinate: prediction tensor shape does not match graph");
    if (hr.rows != VPr || hr.cols != V1)
        throw ContractError("coordinate: hierarchy matrix order mismatch");
    Tensor flat = reshape(initial_raw, {B, VPr * T});
    Tensor bottom_flat = linear(flat, store_.get("coord.w"), store_.get("coord.b"));
    Tensor bottom = reshape(bottom_flat, {B * V1, T});
    return row_group_sum(bottom, hr.descendants, B, V1);
}

Tensor sql_loss(const Tensor& pred, const Tensor& target, double z) {
    if (z <= 0.0 || z >= 1.0) throw ConfigError("SQL loss z must lie in (0, 1)");
    if (pred.shape() != target.shape())
        throw DimensionError("sql_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    const std::size_t R = pred.rows(), T = pred.cols();
    Tensor err_sq = square(sub(pred, target));
    Tensor frac = div(err_sq, add_scalar(err_sq, z));
    std::vector<double> mask(R * T, 1.0);
    for (std::size_t r = 0; r < R; ++r) mask[r * T] = 0.0;
    Tensor masked = mul(frac, Tensor::constant({R, T}, std::move(mask)));
    return mul_scalar(sum(masked), 1.0 / static_cast<double>(R * T));
}

}  // namespace hierflow
