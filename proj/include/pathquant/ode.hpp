#pragma once

// Classical fixed-step explicit integrators over std::array states.

#include <array>
#include <cstddef>

namespace pathquant {

enum class Method { euler, rk4 };

template <std::size_t D>
using Vec = std::array<double, D>;

template <std::size_t D>
Vec<D> axpy(const Vec<D>& x, double h, const Vec<D>& dx) {
    Vec<D> r;
    for (std::size_t i = 0; i < D; ++i) r[i] = x[i] + h * dx[i];
    return r;
}

/// One step of size h from (t, x); rhs(t, x) -> dx/dt.
template <std::size_t D, class Rhs>
Vec<D> ode_step(Method method, const Rhs& rhs, double t, const Vec<D>& x, double h) {
    if (method == Method::euler) return axpy(x, h, rhs(t, x));
    const Vec<D> k1 = rhs(t, x);
    const Vec<D> k2 = rhs(t + 0.5 * h, axpy(x, 0.5 * h, k1));
    const Vec<D> k3 = rhs(t + 0.5 * h, axpy(x, 0.5 * h, k2));
    const Vec<D> k4 = rhs(t + h, axpy(x, h, k3));
    Vec<D> r;
    for (std::size_t i = 0; i < D; ++i) r[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return r;
}

}  // namespace pathquant
