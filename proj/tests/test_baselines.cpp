#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "hierflow/baselines.hpp"

using namespace hierflow;
using hierflow::testing::Fixture;
using hierflow::testing::make_fixture;
using hierflow::testing::tiny_config;

namespace {

// 4 bottom / 2 middle / 1 top toy with constant, distinct series.
Fixture toy_4_2_1() {
    Fixture fx;
    fx.cfg = tiny_config();
    SeriesTable bottom;
    bottom.node_ids = {"b0", "b1", "b2", "b3"};
    bottom.slots = 48;
    for (double level : {2.0, 6.0, 3.0, 9.0})
        for (std::size_t s = 0; s < 48; ++s) bottom.values.push_back(level);
    fx.assignment = {0, 0, 1, 1};
    fx.hier = build_hierarchy(bottom, {}, fx.assignment, PredictionLayerMode::All);
    return fx;
}

}  // namespace

TEST_CASE("ha forecast repeats the training slot-of-day profile") {
    SeriesTable bottom;
    bottom.node_ids = {"a"};
    bottom.slots = 12;  // 3 days of 4 slots, third day differs
    bottom.values = {1, 2, 3, 4, 1, 2, 3, 4, 9, 9, 9, 9};
    HierarchyData h = build_hierarchy(bottom, {}, {0}, PredictionLayerMode::BottomOnly);
    const auto profiles = layer_profiles(h, 4, 8);  // train on the first 2 days
    const LayerForecast f = ha_forecast(profiles, 4, 9, 4);
    // origin 9 -> slots-of-day 1, 2, 3, 0
    CHECK(f.layer[0][0] == doctest::Approx(2));
    CHECK(f.layer[0][1] == doctest::Approx(3));
    CHECK(f.layer[0][2] == doctest::Approx(4));
    CHECK(f.layer[0][3] == doctest::Approx(1));
}

TEST_CASE("proportions come from training totals") {
    Fixture fx = toy_4_2_1();
    const ProportionTable p = compute_proportions(fx.hier, 48);
    CHECK(p.bottom_share[0] == doctest::Approx(2.0 / 8.0));
    CHECK(p.bottom_share[1] == doctest::Approx(6.0 / 8.0));
    CHECK(p.bottom_share[2] == doctest::Approx(3.0 / 12.0));
    CHECK(p.middle_share[0] == doctest::Approx(8.0 / 20.0));
    CHECK(p.middle_share[1] == doctest::Approx(12.0 / 20.0));

    // scaling every series by a constant leaves the shares unchanged
    Fixture fx2 = toy_4_2_1();
    for (int m = 0; m < 3; ++m)
        for (auto& v : fx2.hier.series[m].values) v *= 7.0;
    const ProportionTable p2 = compute_proportions(fx2.hier, 48);
    for (std::size_t v = 0; v < 4; ++v)
        CHECK(p2.bottom_share[v] == doctest::Approx(p.bottom_share[v]));
}

TEST_CASE("reconciliation identities on the 4/2/1 toy") {
    Fixture fx = toy_4_2_1();
    const ProportionTable props = compute_proportions(fx.hier, 48);
    const HierarchyMatrix hr = build_hr(fx.hier.graph);
    const std::size_t T = 2;

    LayerForecast f;
    f.horizon = T;
    f.layer[0] = {1, 2, 5, 4, 2, 2, 8, 8};  // [4 x 2]
    f.layer[1] = {7, 7, 11, 9};             // [2 x 2]
    f.layer[2] = {20, 18};                  // [1 x 2]

    // BU equals the H^r construction on bottom forecasts
    const LayerForecast bu = bottom_up(f, fx.hier.graph);
    const std::vector<double> rows = prediction_rows(bu, fx.hier.graph);
    for (std::size_t r = 0; r < hr.rows; ++r)
        for (std::size_t t = 0; t < T; ++t) {
            double want = 0.0;
            for (std::size_t c = 0; c < hr.cols; ++c)
                want += hr.at(r, c) * f.layer[0][c * T + t];
            CHECK(rows[r * T + t] == doctest::Approx(want).epsilon(1e-12));
        }
    // A = B + C at the cluster level
    CHECK(bu.layer[1][0] == doctest::Approx(1 + 5));
    CHECK(bu.layer[2][0] == doctest::Approx(1 + 5 + 2 + 8));

    // MO keeps the middle layer and splits it by historical shares
    const LayerForecast mo = middle_out(f, fx.hier.graph, props);
    CHECK(mo.layer[1] == f.layer[1]);
    CHECK(mo.layer[0][0] == doctest::Approx(7 * 0.25));
    CHECK(mo.layer[0][2] == doctest::Approx(7 * 0.75));
    CHECK(mo.layer[2][0] == doctest::Approx(7 + 11));
    // coherent by construction
    CHECK(mo.layer[0][0] + mo.layer[0][2] == doctest::Approx(mo.layer[1][0]).epsilon(1e-12));

    // TD keeps the top and splits twice
    const LayerForecast td = top_down(f, fx.hier.graph, props);
    CHECK(td.layer[2] == f.layer[2]);
    CHECK(td.layer[1][0] == doctest::Approx(20 * 0.4));
    CHECK(td.layer[1][2] == doctest::Approx(20 * 0.6));
    CHECK(td.layer[0][0] == doctest::Approx(20 * 0.4 * 0.25));
    CHECK(td.layer[1][0] + td.layer[1][2] == doctest::Approx(20.0).epsilon(1e-12));

    // equal H^r construction from the top-down bottom series
    const std::vector<double> td_rows = prediction_rows(td, fx.hier.graph);
    for (std::size_t r = 0; r < hr.rows; ++r)
        for (std::size_t t = 0; t < T; ++t) {
            double want = 0.0;
            for (std::size_t c = 0; c < hr.cols; ++c)
                want += hr.at(r, c) * td.layer[0][c * T + t];
            CHECK(td_rows[r * T + t] == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("gru baseline trains and its loss decreases") {
    Fixture fx = make_fixture(tiny_config(), 4, 8, "bottom");
    const auto rows = prediction_series(fx.hier);
    const std::size_t train_slots = static_cast<std::size_t>(
        static_cast<double>(fx.hier.series[0].slots) * fx.cfg.train_frac);
    const NormStats norm = prediction_norm(fx.hier, train_slots);

    ModelConfig cfg = fx.cfg;
    cfg.epochs = 8;
    cfg.gru_hidden = 8;
    GruBaseline gru(8, cfg.horizon, cfg.seed);
    const auto losses = gru.fit(rows, norm, fx.ws, cfg);
    REQUIRE(losses.size() == 8);
    CHECK(losses.back() < losses.front());

    const auto pred = gru.predict(rows, norm, fx.ws.test.front(), cfg.lookback);
    CHECK(pred.size() == rows.size() * cfg.horizon);
    for (double v : pred) CHECK(std::isfinite(v));
}
