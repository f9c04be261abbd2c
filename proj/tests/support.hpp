#pragma once

// Test-only models and independent oracles. Nothing here calls into the
// library's own numerics for the quantity it is used to check.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "pathquant/model.hpp"

namespace pqtest {

using pathquant::ModelSpec;

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline ModelSpec blank_model(const char* name, double y0) {
    ModelSpec m;
    m.name = name;
    m.y0 = y0;
    auto zero3 = [](double, double, double, double) { return 0.0; };
    auto zero2 = [](double, double) { return 0.0; };
    m.drift = zero3;
    m.diffusion = zero3;
    m.diffusion_dy = zero3;
    m.g1 = zero2;
    m.g2 = zero2;
    m.g2_dy = zero2;
    m.h1 = zero2;
    m.h2 = zero2;
    return m;
}

/// dY = s dW.
inline ModelSpec constant_model(double s, double y0 = 0.0) {
    auto m = blank_model("constant", y0);
    m.diffusion = [s](double, double, double, double) { return s; };
    m.elliptic = s > 0.0;
    return m;
}

/// dY = sigma Y dW.
inline ModelSpec geometric_model(double sigma, double y0 = 1.0) {
    auto m = blank_model("geometric", y0);
    m.diffusion = [sigma](double, double y, double, double) { return sigma * y; };
    m.diffusion_dy = [sigma](double, double, double, double) { return sigma; };
    m.elliptic = sigma > 0.0;
    m.positive_state = true;
    return m;
}

/// a = sigma, g2 = y: the g2 slot accumulates the Ito integral of Y = sigma W.
inline ModelSpec ito_model(double sigma) {
    auto m = constant_model(sigma, 0.0);
    m.name = "ito";
    m.g2 = [](double, double y) { return y; };
    m.g2_dy = [](double, double) { return 1.0; };
    return m;
}

/// dY = c dt, no noise.
inline ModelSpec drift_only_model(double c, double y0) {
    auto m = blank_model("drift", y0);
    m.drift = [c](double, double, double, double) { return c; };
    return m;
}

/// Plain Lloyd iteration for N(0,1) written against std::erfc, from an arbitrary start.
inline std::vector<double> lloyd_oracle(std::vector<double> x, int iterations) {
    const std::size_t n = x.size();
    for (int it = 0; it < iterations; ++it) {
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double lo = i == 0 ? -INFINITY : 0.5 * (x[i - 1] + x[i]);
            const double hi = i + 1 == n ? INFINITY : 0.5 * (x[i] + x[i + 1]);
            const double mass = Phi(hi) - Phi(lo);
            const double moment = (std::isinf(lo) ? 0.0 : phi(lo)) - (std::isinf(hi) ? 0.0 : phi(hi));
            next[i] = moment / mass;
        }
        x = next;
    }
    return x;
}

/// Composite Simpson of f over [a, b] with m (even) panels.
template <class F>
double simpson(const F& f, double a, double b, int m) {
    const double h = (b - a) / m;
    double s = f(a) + f(b);
    for (int i = 1; i < m; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Squared quantization error of N(0,1) on a grid, by brute-force quadrature.
inline double distortion_by_quadrature(const std::vector<double>& grid) {
    auto f = [&](double x) {
        double best = INFINITY;
        for (double c : grid) best = std::min(best, (x - c) * (x - c));
        return best * phi(x);
    };
    // integrate between breakpoints so Simpson sees smooth pieces
    std::vector<double> cuts{-12.0};
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) cuts.push_back(0.5 * (grid[i] + grid[i + 1]));
    cuts.push_back(12.0);
    double s = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) s += simpson(f, cuts[i], cuts[i + 1], 2000);
    return s;
}

// E min_i (X - x_i)^2 for X ~ N(mu, var), cell by cell from truncated moments.
inline double gaussian_grid_distortion(std::vector<double> grid, double mu, double var) {
    std::sort(grid.begin(), grid.end());
    const double sd = std::sqrt(var);
    double d = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double a = i ? ((grid[i - 1] + grid[i]) / 2.0 - mu) / sd : -INFINITY;
        const double b = i + 1 < grid.size() ? ((grid[i] + grid[i + 1]) / 2.0 - mu) / sd : INFINITY;
        const double c = (grid[i] - mu) / sd;
        const double pa = std::isinf(a) ? 0.0 : phi(a), pb = std::isinf(b) ? 0.0 : phi(b);
        const double m0 = Phi(b) - Phi(a), m1 = pa - pb;
        const double m2 = m0 + (std::isinf(a) ? 0.0 : a * pa) - (std::isinf(b) ? 0.0 : b * pb);
        d += var * (m2 - 2.0 * c * m1 + c * c * m0);
    }
    return d;
}

}  // namespace pqtest
