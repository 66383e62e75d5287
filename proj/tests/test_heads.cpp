#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "hierflow/metrics.hpp"
#include "hierflow/rng.hpp"

using namespace hierflow;
using hierflow::testing::Fixture;
using hierflow::testing::make_fixture;
using hierflow::testing::tiny_config;

TEST_CASE("forcing the update gate to 1 freezes the hidden state") {
    Fixture fx = make_fixture(tiny_config());
    Model model(fx.cfg, fx.hier.graph, fx.norm, false, 3);
    ParameterStore& store = model.store();

    // saturate every update gate: z = sigmoid(large) ~ 1, so h stays at its
    // zero initialization and the head reduces to the output bias
    for (const auto& [path, t] : store.all()) {
        if (path.find(".gru.bz") != std::string::npos)
            for (auto& v : store.get(path).value_mut()) v = 50.0;
        if (path.find(".out.b") != std::string::npos) {
            std::size_t i = 0;
            for (auto& v : store.get(path).value_mut()) v = 0.25 * static_cast<double>(++i);
        }
    }

    const BatchedGraph bg = make_batched_graph(fx.hier.graph, 1);
    SampleBatch batch = model.make_batch(fx.hier.series, {fx.ws.train.front()});
    Tensor pred = model.forward_initial(bg, batch);
    const std::size_t T = fx.cfg.horizon;
    for (std::size_t r = 0; r < pred.rows(); ++r)
        for (std::size_t t = 0; t < T; ++t)
            CHECK(pred.value()[r * T + t] ==
                  doctest::Approx(0.25 * static_cast<double>(t + 1)).epsilon(1e-9));
}

TEST_CASE("coordinated forecasts satisfy parent = sum of children exactly") {
    Fixture fx = make_fixture(tiny_config());
    Model model(fx.cfg, fx.hier.graph, fx.norm, true, 5);
    const HierarchyMatrix hr = build_hr(fx.hier.graph);
    const auto relations = hierarchy_relations(fx.hier.graph);
    REQUIRE(!relations.empty());

    const std::size_t VPr = fx.hier.graph.prediction_count();
    const std::size_t T = fx.cfg.horizon;
    Rng rng(123);
    for (int trial = 0; trial < 20; ++trial) {
        // random coordination weights, not just the selector initialization
        for (auto& v : model.store().get("coord.w").value_mut()) v = rng.uniform(-1, 1);
        for (auto& v : model.store().get("coord.b").value_mut()) v = rng.uniform(-1, 1);
        std::vector<double> init(VPr * T);
        for (auto& v : init) v = rng.uniform(0, 100);
        Tensor coord = model.coordinate(Tensor::constant({VPr, T}, init), hr, 1);
        const auto err = hierarchical_error(coord.value(), T, relations);
        for (double e : err) CHECK(std::abs(e) <= 1e-9);
    }
}

TEST_CASE("sql loss: worked example and bounds") {
    // one row, T=2; only step 1 contributes: e^2/(e^2+z)/T = 1/1.5/2 = 1/3
    Tensor pred = Tensor::constant({1, 2}, {7.0, 3.0});
    Tensor target = Tensor::constant({1, 2}, {2.0, 2.0});
    CHECK(sql_loss(pred, target, 0.5).item() == doctest::Approx(1.0 / 3.0));

    // step 0 is never penalized
    Tensor p0 = Tensor::constant({1, 2}, {100.0, 2.0});
    CHECK(sql_loss(p0, target, 0.5).item() == doctest::Approx(0.0));

    // bounded: each step's term is < 1, so the mean is < 1
    Rng rng(8);
    std::vector<double> big(12);
    for (auto& v : big) v = rng.uniform(1e3, 1e6);
    Tensor huge = Tensor::constant({3, 4}, big);
    Tensor zero = Tensor::zeros({3, 4});
    const double loss = sql_loss(huge, zero, 0.5).item();
    CHECK(loss < 1.0);
    CHECK(loss > 0.0);

    CHECK_THROWS_AS(sql_loss(pred, target, 0.0), ConfigError);
    CHECK_THROWS_AS(sql_loss(pred, target, 1.0), ConfigError);
    CHECK_THROWS_AS(sql_loss(pred, Tensor::zeros({2, 2}), 0.5), DimensionError);
}

TEST_CASE("mae and rmse worked example") {
    MetricsAccumulator acc(1, 2);
    // errors 3 and 4: MAE 3.5, RMSE sqrt(12.5)
    acc.add({5.0, 6.0}, {2.0, 2.0}, 1);
    MetricsReport r = acc.report({"n0"});
    CHECK(r.mae[0] == doctest::Approx(3.5));
    CHECK(r.rmse[0] == doctest::Approx(3.5355339));
    CHECK(r.aggregate_mae == doctest::Approx(3.5));
}

TEST_CASE("hierarchical error worked example") {
    // parent forecast 10, children 3 + 4 -> error -3
    SeriesTable bottom;
    bottom.node_ids = {"b0", "b1"};
    bottom.slots = 24;
    bottom.values.assign(48, 1.0);
    HierarchyData h = build_hierarchy(bottom, {}, {0, 0}, PredictionLayerMode::All);
    const auto relations = hierarchy_relations(h.graph);
    // prediction rows: b0, b1, cluster_0, total
    const std::vector<double> pred{3.0, 4.0, 10.0, 10.0};
    const auto err = hierarchical_error(pred, 1, relations);
    REQUIRE(err.size() == 2);
    CHECK(err[0] == doctest::Approx(-3.0));  // cluster: 3 + 4 - 10
    CHECK(err[1] == doctest::Approx(0.0));   // total vs cluster
}

TEST_CASE("denormalize inverts normalize per prediction row") {
    Fixture fx = make_fixture(tiny_config());
    Model model(fx.cfg, fx.hier.graph, fx.norm, false, 3);
    const std::size_t VPr = fx.hier.graph.prediction_count();
    const std::size_t T = fx.cfg.horizon;
    Rng rng(4);
    std::vector<double> v(2 * VPr * T);
    for (auto& x : v) x = rng.uniform(-2, 2);
    Tensor norm = Tensor::constant({2 * VPr, T}, v);
    Tensor back = model.normalize_rows(model.denormalize(norm, 2), 2);
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(back.value()[i] == doctest::Approx(v[i]).epsilon(1e-9));
}
