// Zero-coupon bond prices by functional quantization and by Monte Carlo for
// the Platen-Rendek model, over a small grid of lambda and maturities.
//
//   price_table [paths] [seed]

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "pathquant/pathquant.hpp"

using namespace pathquant;

int main(int argc, char** argv) {
    const std::size_t paths = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 10000;
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;
    const auto allocation = normalize_allocation({23, 7, 3, 2}, 966);
    try {
        std::printf("%6s %5s %9s %9s %19s %8s\n", "lambda", "T", "e^-rT", "FQ", "MC (95% CI)", "lost");
        for (double lambda : {1.0, 2.0, 3.0})
            for (double horizon : {0.5, 1.0}) {
                PlatenParams p;
                p.lambda = lambda;
                const MarketParams mkt{2.0, 0.03, horizon, 100};
                const ProductQuantizer pq(horizon, allocation);
                const auto fq = price_zcb_fq(p, pq, mkt);
                const auto mc = price_zcb_mc(p, mkt, paths, seed);
                std::printf("%6.1f %5.2f %9.4f %9.4f %9.4f (%.3f,%.3f) %8.1e\n", lambda, horizon,
                            std::exp(-mkt.r * horizon), fq.value, mc.value, *mc.ci_low, *mc.ci_high, fq.lost_weight);
            }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
