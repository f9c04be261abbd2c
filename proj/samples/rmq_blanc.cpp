// Recursive marginal quantization of the Blanc-Donier-Bouchaud variance:
// mean and standard deviation of the quantized variance along the grid.
//
//   rmq_blanc [N] [steps]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "pathquant/pathquant.hpp"

using namespace pathquant;

int main(int argc, char** argv) {
    RmqOptions opts;
    opts.level = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 32;
    const std::size_t steps = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 50;
    try {
        const auto state = run_rmq(blanc_model(BlancParams{}), 1.0, steps, opts);
        std::printf("%4s %8s %10s %10s %12s\n", "k", "t", "E[y]", "sd[y]", "distortion");
        for (std::size_t k = 0; k <= steps; ++k) {
            const double m = marginal_expectation(state, k, [](const Quintuple& q) { return q[kY]; });
            const double m2 = marginal_expectation(state, k, [](const Quintuple& q) { return q[kY] * q[kY]; });
            std::printf("%4zu %8.4f %10.6f %10.6f %12.4e\n", k, static_cast<double>(k) / static_cast<double>(steps), m,
                        std::sqrt(std::max(m2 - m * m, 0.0)), state.grids[k].distortion);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
