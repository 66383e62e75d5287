#pragma once

#include <cstddef>
#include <vector>

namespace hierflow {

// A sample is identified by its forecast origin: the input window covers
// slots [t_origin - L, t_origin) and the target covers [t_origin,
// t_origin + T). A sample belongs to the split containing its last target
// slot, so inputs may reach back across a split boundary.
struct WindowSet {
    std::size_t L = 0, T = 0;
    std::vector<std::size_t> train, val, test;  // t_origin values, ascending
};

WindowSet make_windows(std::size_t slots, std::size_t L, std::size_t T,
                       std::size_t train_end, std::size_t val_end);

}  // namespace hierflow
