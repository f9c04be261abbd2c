#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "pathquant/errors.hpp"

namespace pathquant {

/// K-point Gauss-Hermite rule for E f(Z), Z ~ N(0,1): nodes ascending,
/// weights normalized to sum to one.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Newton iteration on the orthonormal Hermite recurrence (physicists'
/// convention), then rescaled to the standard normal.
inline GaussHermiteRule gauss_hermite(int k) {
    if (k < 1) throw DomainError("Gauss-Hermite rule needs at least one node");
    // beyond this the recurrence underflows at the outermost nodes
    if (k > 512) throw DomainError("Gauss-Hermite rule supports at most 512 nodes");
    const double pim4 = std::pow(std::numbers::pi, -0.25);
    std::vector<double> x(static_cast<std::size_t>(k)), w(static_cast<std::size_t>(k));
    const int m = (k + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0)
            z = std::sqrt(2.0 * k + 1.0) - 1.85575 * std::pow(2.0 * k + 1.0, -0.16667);
        else if (i == 1)
            z -= 1.14 * std::pow(static_cast<double>(k), 0.426) / z;
        else if (i == 2)
            z = 1.86 * z - 0.86 * x[0];
        else if (i == 3)
            z = 1.91 * z - 0.91 * x[1];
        else
            z = 2.0 * z - x[static_cast<std::size_t>(i - 2)];
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < k; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * k) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        x[static_cast<std::size_t>(i)] = z;
        x[static_cast<std::size_t>(k - 1 - i)] = -z;
        w[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(k - 1 - i)] = 2.0 / (pp * pp);
    }
    if (k % 2 == 1) x[static_cast<std::size_t>(m - 1)] = 0.0;

    GaussHermiteRule rule;
    double total = 0.0;
    for (double v : w) total += v;
    for (int i = k - 1; i >= 0; --i) {
        rule.nodes.push_back(std::numbers::sqrt2 * x[static_cast<std::size_t>(i)]);
        rule.weights.push_back(w[static_cast<std::size_t>(i)] / total);
    }
    return rule;
}

}  // namespace pathquant
