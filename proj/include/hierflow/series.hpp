#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace hierflow {

// Count time series on a uniform slot grid, one row per node. Slot 0 is the
// first slot of an operating day; slots outside operating hours are simply
// absent, so slot-of-day arithmetic is index % slots_per_day.
struct SeriesTable {
    std::vector<std::string> node_ids;
    std::size_t slots = 0;
    std::vector<double> values;  // [nodes x slots], row-major
    int granularity_minutes = 15;

    std::size_t num_nodes() const { return node_ids.size(); }
    double at(std::size_t node, std::size_t slot) const { return values[node * slots + slot]; }
    std::span<const double> row(std::size_t node) const {
        return {values.data() + node * slots, slots};
    }
};

// Wide format: header `node_id,slot_0,...`; long format: `node_id,timestamp,value`.
SeriesTable load_series_csv(const std::string& path, bool long_format = false);

void save_series_csv(const SeriesTable& table, const std::string& path);

// Per-slot-of-day mean over the first `train_slots` slots.
std::vector<double> daily_profile(const SeriesTable& series, std::size_t node,
                                  std::size_t slots_per_day, std::size_t train_slots);

// Pearson correlation; zero variance in either vector yields 0 (with a
// warning on stderr) rather than NaN.
double pearson(std::span<const double> a, std::span<const double> b);

// Per-node z-score statistics over the training span. A constant series
// gets sigma 1 so normalization stays invertible.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

NormStats compute_norm_stats(const SeriesTable& series, std::size_t train_slots);

}  // namespace hierflow
