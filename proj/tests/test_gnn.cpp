#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "hierflow/rng.hpp"
#include "hierflow/tensor.hpp"

using namespace hierflow;
using hierflow::testing::Fixture;
using hierflow::testing::make_fixture;
using hierflow::testing::tiny_config;

TEST_CASE("neighbor aggregation on a 3-node path") {
    // 0 - 1 - 2
    auto adj = edges_to_csr({{0, 1}, {1, 2}}, 3);
    Tensor x = Tensor::constant({3, 2}, {1, 10, 2, 20, 3, 30});
    Tensor s = neighbor_aggregate(x, adj, false);
    CHECK(s.value()[0] == doctest::Approx(2));   // just node 1
    CHECK(s.value()[2] == doctest::Approx(4));   // 1 + 3
    CHECK(s.value()[3] == doctest::Approx(40));  // 10 + 30
    CHECK(s.value()[4] == doctest::Approx(2));

    Tensor m = neighbor_aggregate(x, adj, true);
    CHECK(m.value()[2] == doctest::Approx(2));   // (1 + 3) / 2
    CHECK(m.value()[3] == doctest::Approx(20));
}

TEST_CASE("isolated nodes receive a zero message") {
    auto adj = edges_to_csr({{0, 1}}, 3);  // node 2 isolated
    Tensor x = Tensor::constant({3, 1}, {5, 6, 7});
    for (bool mean_agg : {false, true}) {
        Tensor y = neighbor_aggregate(x, adj, mean_agg);
        CHECK(y.value()[2] == doctest::Approx(0.0));
    }
}

TEST_CASE("neighbor aggregation is permutation equivariant") {
    Rng rng(9);
    // graph 0-1, 1-2, 2-3 and the relabeling p = (2, 0, 3, 1)
    auto adj = edges_to_csr({{0, 1}, {1, 2}, {2, 3}}, 4);
    const std::vector<std::size_t> p{2, 0, 3, 1};
    std::vector<std::pair<std::size_t, std::size_t>> pe;
    for (auto [u, v] : std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}, {2, 3}})
        pe.push_back({std::min(p[u], p[v]), std::max(p[u], p[v])});
    auto padj = edges_to_csr(pe, 4);

    std::vector<double> xv(8);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    Tensor x = Tensor::constant({4, 2}, xv);
    std::vector<double> pxv(8);
    for (std::size_t u = 0; u < 4; ++u)
        for (std::size_t j = 0; j < 2; ++j) pxv[p[u] * 2 + j] = xv[u * 2 + j];
    Tensor px = Tensor::constant({4, 2}, pxv);

    Tensor y = neighbor_aggregate(x, adj, true);
    Tensor py = neighbor_aggregate(px, padj, true);
    for (std::size_t u = 0; u < 4; ++u)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(py.value()[p[u] * 2 + j] == doctest::Approx(y.value()[u * 2 + j]));
}

TEST_CASE("row_group_sum applies descendant groups per block") {
    // 2 output rows: row 0 <- {0, 1}, row 1 <- {2}; two blocks of 3
    auto desc = std::make_shared<Csr>();
    desc->offsets = {0, 2, 3};
    desc->nbrs = {0, 1, 2};
    Tensor x = Tensor::constant({6, 1}, {1, 2, 3, 10, 20, 30});
    Tensor y = row_group_sum(x, desc, 2, 3);
    CHECK(y.rows() == 4);
    CHECK(y.value()[0] == doctest::Approx(3));
    CHECK(y.value()[1] == doctest::Approx(3));
    CHECK(y.value()[2] == doctest::Approx(30));
    CHECK(y.value()[3] == doctest::Approx(30));
}

TEST_CASE("horizontal pass is local: one hop of influence") {
    Fixture fx = make_fixture(tiny_config());
    Model model(fx.cfg, fx.hier.graph, fx.norm, false, 7);
    const BatchedGraph bg = make_batched_graph(fx.hier.graph, 1);
    const std::size_t origin = fx.ws.train.front();

    SampleBatch batch = model.make_batch(fx.hier.series, {origin});
    Model::Trace base;
    model.forward_initial_traced(bg, batch, &base);

    // find a pair (u, v) of non-adjacent bottom nodes
    auto adj = edges_to_csr(fx.hier.graph.edges[0], fx.hier.graph.nodes[0].size());
    std::size_t u = 0, v = 0;
    bool found = false;
    for (u = 0; u < adj->num_nodes() && !found; ++u)
        for (v = 0; v < adj->num_nodes() && !found; ++v) {
            if (u == v) continue;
            bool adjacent = false;
            for (std::size_t e = adj->offsets[u]; e < adj->offsets[u + 1]; ++e)
                adjacent = adjacent || adj->nbrs[e] == v;
            if (!adjacent) found = true;
        }
    REQUIRE(found);
    --u;
    --v;

    // perturb v's input; u's encoded and horizontal states must not move
    SampleBatch poked = model.make_batch(fx.hier.series, {origin});
    poked.inputs[0].value_mut()[v * fx.cfg.lookback + 3] += 2.5;
    Model::Trace after;
    model.forward_initial_traced(bg, poked, &after);

    const std::size_t F = fx.cfg.feature_dim();
    for (std::size_t j = 0; j < F; ++j) {
        CHECK(after.encoded[0].value()[u * F + j] ==
              doctest::Approx(base.encoded[0].value()[u * F + j]));
        CHECK(after.horizontal[0].value()[u * F + j] ==
              doctest::Approx(base.horizontal[0].value()[u * F + j]));
    }
}

TEST_CASE("hierarchical pass: top keeps its state, children see the parent") {
    Fixture fx = make_fixture(tiny_config());
    Model model(fx.cfg, fx.hier.graph, fx.norm, false, 7);
    const BatchedGraph bg = make_batched_graph(fx.hier.graph, 1);
    SampleBatch batch = model.make_batch(fx.hier.series, {fx.ws.train.front()});
    Model::Trace tr;
    model.forward_initial_traced(bg, batch, &tr);

    // the top layer is passed through unchanged
    for (std::size_t j = 0; j < fx.cfg.feature_dim(); ++j)
        CHECK(tr.hierarchical[2].value()[j] == doctest::Approx(tr.horizontal[2].value()[j]));

    // perturbing the top node's input moves the middle layer's output
    SampleBatch poked = model.make_batch(fx.hier.series, {fx.ws.train.front()});
    for (std::size_t s = 0; s < fx.cfg.lookback; ++s) poked.inputs[2].value_mut()[s] += 1.0;
    Model::Trace tr2;
    model.forward_initial_traced(bg, poked, &tr2);
    double delta = 0.0;
    for (std::size_t i = 0; i < tr.hierarchical[1].numel(); ++i)
        delta += std::abs(tr2.hierarchical[1].value()[i] - tr.hierarchical[1].value()[i]);
    CHECK(delta > 0.0);
}

TEST_CASE("finite differences through the graph passes") {
    ModelConfig cfg = tiny_config();
    cfg.embed_dim = 3;
    cfg.channels = 2;
    cfg.depth_kernel = 2;
    Fixture fx = make_fixture(cfg, 4, 4);
    Model model(fx.cfg, fx.hier.graph, fx.norm, false, 19);
    const BatchedGraph bg = make_batched_graph(fx.hier.graph, 2);
    SampleBatch batch =
        model.make_batch(fx.hier.series, {fx.ws.train[0], fx.ws.train[1]});

    auto loss_fn = [&] {
        Tensor pred = model.forward_initial(bg, batch);
        return sql_loss(pred, batch.targets_norm, fx.cfg.sql_z);
    };
    for (const std::string path : {"gnn.hier.t32.alloc", "gnn.hier.t21.alloc",
                                   "gnn.hor.L1.w", "gnn.hier.t21.b"}) {
        Tensor p = model.store().get(path);
        p.zero_grad();
        {
            Tape tape;
            tape.backward(loss_fn());
        }
        REQUIRE(p.has_grad());
        const std::vector<double> ad = p.grad();
        double worst = 0.0;
        const double eps = 1e-6;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double keep = p.value_mut()[i];
            p.value_mut()[i] = keep + eps;
            const double up = loss_fn().item();
            p.value_mut()[i] = keep - eps;
            const double dn = loss_fn().item();
            p.value_mut()[i] = keep;
            const double fd = (up - dn) / (2.0 * eps);
            worst = std::max(worst, std::abs(ad[i] - fd) /
                                        std::max({1.0, std::abs(ad[i]), std::abs(fd)}));
        }
        INFO(path);
        CHECK(worst < 1e-4);
    }
}
