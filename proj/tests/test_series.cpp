#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "hierflow/errors.hpp"
#include "hierflow/series.hpp"
#include "hierflow/windows.hpp"

using namespace hierflow;

namespace {

void write(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

}  // namespace

TEST_CASE("pearson examples") {
    const std::vector<double> a{1, 2, 3}, b{1, 2, 4};
    CHECK(pearson(a, b) == doctest::Approx(0.981981).epsilon(1e-5));
    const std::vector<double> c{2, 4, 6};
    CHECK(pearson(a, c) == doctest::Approx(1.0));
    const std::vector<double> flat{5, 5, 5};
    CHECK(pearson(a, flat) == doctest::Approx(0.0));  // zero variance -> 0
}

TEST_CASE("wide csv round trip") {
    SeriesTable t;
    t.node_ids = {"s0", "s1"};
    t.slots = 3;
    t.values = {1, 2, 3, 4, 5, 6};
    save_series_csv(t, "/tmp/hf_series_rt.csv");
    SeriesTable back = load_series_csv("/tmp/hf_series_rt.csv");
    CHECK(back.node_ids == t.node_ids);
    CHECK(back.slots == 3);
    for (std::size_t i = 0; i < 6; ++i) CHECK(back.values[i] == doctest::Approx(t.values[i]));
}

TEST_CASE("long format csv") {
    write("/tmp/hf_long.csv",
          "node_id,timestamp,value\n"
          "a,0,1\na,1,2\nb,0,3\nb,1,4\n");
    SeriesTable t = load_series_csv("/tmp/hf_long.csv", true);
    CHECK(t.num_nodes() == 2);
    CHECK(t.slots == 2);
    CHECK(t.at(0, 1) == doctest::Approx(2));
    CHECK(t.at(1, 0) == doctest::Approx(3));
}

TEST_CASE("malformed input raises DataError") {
    write("/tmp/hf_bad1.csv", "node_id,slot_0,slot_1\na,1\n");  // short row
    CHECK_THROWS_AS(load_series_csv("/tmp/hf_bad1.csv"), DataError);

    write("/tmp/hf_bad2.csv", "node_id,slot_0\na,-3\n");  // negative count
    CHECK_THROWS_AS(load_series_csv("/tmp/hf_bad2.csv"), DataError);

    write("/tmp/hf_bad3.csv", "node_id,slot_0\na,1\na,2\n");  // duplicate id
    CHECK_THROWS_AS(load_series_csv("/tmp/hf_bad3.csv"), DataError);

    write("/tmp/hf_bad4.csv", "node_id,slot_0\na,abc\n");  // not a number
    CHECK_THROWS_AS(load_series_csv("/tmp/hf_bad4.csv"), DataError);

    CHECK_THROWS_AS(load_series_csv("/tmp/hf_nonexistent.csv"), DataError);
}

TEST_CASE("daily profile averages slot-of-day over the training span") {
    SeriesTable t;
    t.node_ids = {"a"};
    t.slots = 8;
    // two days of 4 slots; second day is first day + 2
    t.values = {1, 2, 3, 4, 3, 4, 5, 6};
    const auto prof = daily_profile(t, 0, 4, 8);
    CHECK(prof.size() == 4);
    CHECK(prof[0] == doctest::Approx(2.0));
    CHECK(prof[3] == doctest::Approx(5.0));
    // a training span shorter than one day is a contract violation
    CHECK_THROWS_AS(daily_profile(t, 0, 4, 3), ContractError);
}

TEST_CASE("norm stats use the training span only") {
    SeriesTable t;
    t.node_ids = {"a", "flat"};
    t.slots = 4;
    t.values = {1, 3, 100, 100, 7, 7, 7, 7};
    NormStats n = compute_norm_stats(t, 2);
    CHECK(n.mean[0] == doctest::Approx(2.0));
    CHECK(n.stddev[0] == doctest::Approx(1.0));
    CHECK(n.mean[1] == doctest::Approx(7.0));
    CHECK(n.stddev[1] == doctest::Approx(1.0));  // constant -> 1
}

TEST_CASE("window splitting follows the last target slot") {
    // 10 slots, L=3, T=2: origins 3..8
    WindowSet ws = make_windows(10, 3, 2, 10, 10);
    CHECK(ws.train.size() == 6);
    CHECK(ws.train.front() == 3);
    CHECK(ws.train.back() == 8);

    // 200 slots, L=72, T=36: 93 origins total
    WindowSet all = make_windows(200, 72, 36, 160, 180);
    CHECK(all.train.size() + all.val.size() + all.test.size() == 93);
    // boundary: last target slot of origin o is o+T-1; o=125 -> 160 (val)
    CHECK(all.train.back() == 124);
    CHECK(all.val.front() == 125);
    CHECK(all.val.back() == 144);
    CHECK(all.test.front() == 145);

    // too-short series yields no windows
    WindowSet none = make_windows(4, 3, 2, 3, 4);
    CHECK(none.train.empty());
    CHECK(none.test.empty());
}
