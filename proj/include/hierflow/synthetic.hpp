#pragma once

#include <cstdint>
#include <vector>

#include "hierflow/series.hpp"

namespace hierflow {

// Synthetic count-series generator. Nodes are drawn from a small set of
// archetype daily shapes; a slow weekly amplitude cycle modulates every node
// so that a lookback window carries information a pure slot-of-day average
// cannot recover.
struct SyntheticOptions {
    std::size_t nodes = 12;
    std::size_t days = 30;
    std::size_t slots_per_day = 72;
    std::size_t archetypes = 2;  // at most 4
    double noise = 0.05;         // gaussian sigma as a fraction of the peak level
    std::uint64_t seed = 42;
    int granularity_minutes = 15;
};

struct SyntheticData {
    SeriesTable table;
    std::vector<std::size_t> archetype;  // per node
};

SyntheticData gen_synthetic(const SyntheticOptions& opt);

}  // namespace hierflow
