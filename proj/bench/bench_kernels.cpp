#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "hierflow/kernels.hpp"
#include "hierflow/rng.hpp"

using hierflow::Rng;

namespace {

using clk = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    // one warm-up
    fn();
    const auto t0 = clk::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clk::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    Rng rng(7);
    std::printf("%8s %12s %12s %8s\n", "n", "serial(ms)", "parallel(ms)", "speedup");
    for (std::size_t n : {64, 128, 256, 512, 1024}) {
        std::vector<double> a(n * n), b(n * n);
        for (auto& v : a) v = rng.uniform(-1.0, 1.0);
        for (auto& v : b) v = rng.uniform(-1.0, 1.0);
        std::vector<double> c(n * n, 0.0);
        const int reps = n <= 256 ? 20 : 5;
        const double serial = time_ms(
            [&] { hierflow::kernels::matmul_nn_serial(a.data(), b.data(), c.data(), n, n, n); },
            reps);
        const double parallel = time_ms(
            [&] { hierflow::kernels::matmul_nn(a.data(), b.data(), c.data(), n, n, n); }, reps);
        std::printf("%8zu %12.3f %12.3f %8.2fx\n", n, serial, parallel, serial / parallel);
    }
    return 0;
}
