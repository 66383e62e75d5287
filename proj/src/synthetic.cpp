#include "hierflow/synthetic.hpp"

#include <cmath>
#include <string>

#include "hierflow/errors.hpp"
#include "hierflow/rng.hpp"

namespace hierflow {

namespace {

constexpr double kBase = 20.0;
constexpr double kPeak = 80.0;

// Weekly amplitude swing. Deliberately strong: a slot-of-day average cannot
// track it, while a lookback window can, so learned forecasters have an edge
// over the historical-average baseline.
constexpr double kWeeklyAmp = 0.4;

// Archetype daily shapes: a bump centred at a distinct fraction of the day.
double shape(std::size_t archetype, double frac_of_day) {
    static const double centers[] = {0.3, 0.72, 0.5, 0.12};
    static const double widths[] = {0.08, 0.10, 0.16, 0.06};
    const double d = frac_of_day - centers[archetype];
    return kBase + kPeak * std::exp(-(d * d) / (2.0 * widths[archetype] * widths[archetype]));
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticOptions& opt) {
    if (opt.nodes == 0 || opt.days == 0 || opt.slots_per_day == 0)
        throw ConfigError("synthetic generator needs nodes, days and slots_per_day >= 1");
    if (opt.archetypes == 0 || opt.archetypes > 4)
        throw ConfigError("archetypes must lie in [1, 4]");
    if (opt.archetypes > opt.nodes)
        throw ConfigError("more archetypes than nodes");
    if (opt.noise < 0.0) throw ConfigError("noise fraction must be >= 0");

    const std::size_t spd = opt.slots_per_day;
    const std::size_t slots = opt.days * spd;
    const double week = 7.0 * static_cast<double>(spd);

    Rng rng(opt.seed);
    SyntheticData out;
    out.table.slots = slots;
    out.table.granularity_minutes = opt.granularity_minutes;
    out.table.values.resize(opt.nodes * slots);

    for (std::size_t v = 0; v < opt.nodes; ++v) {
        out.table.node_ids.push_back("station_" + std::to_string(v));
        // Round-robin so every archetype is populated; scales stay within
        // +-10% so clustering is driven by shape, not magnitude.
        const std::size_t a = v % opt.archetypes;
        out.archetype.push_back(a);
        const double scale = rng.uniform(0.9, 1.1);
        for (std::size_t t = 0; t < slots; ++t) {
            const double frac = static_cast<double>(t % spd) / static_cast<double>(spd);
            const double amp = 1.0 + kWeeklyAmp * std::sin(2.0 * M_PI * static_cast<double>(t) / week);
            double x = scale * amp * shape(a, frac);
            x += rng.gaussian() * opt.noise * kPeak;
            out.table.values[v * slots + t] = std::max(0.0, std::round(x));
        }
    }
    return out;
}

}  // namespace hierflow
