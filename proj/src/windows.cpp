#include "hierflow/windows.hpp"

#include <iostream>

#include "hierflow/errors.hpp"

namespace hierflow {

WindowSet make_windows(std::size_t slots, std::size_t L, std::size_t T,
                       std::size_t train_end, std::size_t val_end) {
    if (L == 0 || T == 0) throw ConfigError("make_windows needs L >= 1 and T >= 1");
    if (train_end > val_end || val_end > slots)
        throw ConfigError("make_windows split boundaries must satisfy train_end <= val_end <= slots");
    WindowSet w;
    w.L = L;
    w.T = T;
    if (slots < L + T) {
        std::cerr << "warning: series span " << slots << " shorter than L+T=" << L + T
                  << ", no samples\n";
        return w;
    }
    for (std::size_t origin = L; origin + T <= slots; ++origin) {
        const std::size_t last_target = origin + T - 1;
        if (last_target < train_end)
            w.train.push_back(origin);
        else if (last_target < val_end)
            w.val.push_back(origin);
        else
            w.test.push_back(origin);
    }
    return w;
}

}  // namespace hierflow
