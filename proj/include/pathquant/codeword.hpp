#pragma once

// Codeword ODE system of a functionally quantized path-dependent SDE. Each
// Brownian codeword alpha drives
//
//   y'     = b(t, y, y^{g1}, y^{g2}) - a a_y / 2 + a alpha'(t)
//   y^{g1}' = g1(t, y)
//   y^{g2}' = g2(t, y) alpha'(t) - a g2_y / 2
//   y^{h}'  = h(t, y)
//
// with a evaluated at (t, y, y^h). The -a g2_y / 2 term turns the
// Stratonovich-type codeword integral into that of the Ito integral.

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "pathquant/brownian.hpp"
#include "pathquant/errors.hpp"
#include "pathquant/model.hpp"
#include "pathquant/ode.hpp"
#include "pathquant/parallel.hpp"

namespace pathquant {

struct CodewordState {
    double t = 0.0;
    double y = 0.0;
    double y_g1 = 0.0;
    double y_g2 = 0.0;
    double y_h = 0.0;
};

struct StateDerivative {
    double y = 0.0;
    double y_g1 = 0.0;
    double y_g2 = 0.0;
    double y_h = 0.0;
};

struct CodewordPath {
    std::vector<double> times;
    std::vector<CodewordState> states;
    std::size_t index = 0;  // lexicographic ordinal of the Brownian codeword
    double weight = 1.0;
    std::size_t clamp_events = 0;  // rhs evaluations with y below kStateFloor
    std::size_t evaluations = 0;
};

namespace detail {

inline std::string state_text(const CodewordState& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "t=%.6g y=%.6g y_g1=%.6g y_g2=%.6g y_h=%.6g", s.t, s.y, s.y_g1, s.y_g2, s.y_h);
    return buf;
}

inline double checked(double v, const char* term, const CodewordState& s) {
    if (!std::isfinite(v)) throw DomainError(std::string("coefficient ") + term + " is not finite at " + state_text(s));
    return v;
}

inline void require_codeword_model(const ModelSpec& model) {
    if (model.uses_h2)
        throw UnsupportedOperation(model.name +
                                   ": diffusion depends on a Brownian integral; use recursive marginal quantization");
}

}  // namespace detail

inline StateDerivative codeword_rhs(const ModelSpec& model, const CodewordState& s, double alpha_prime) {
    const double a = detail::checked(model.diffusion(s.t, s.y, s.y_h, 0.0), "a", s);
    const double aa = detail::checked(model.a_dady(s.t, s.y, s.y_h, 0.0), "a*da/dy", s);
    const double b = detail::checked(model.drift(s.t, s.y, s.y_g1, s.y_g2), "b", s);
    const double g1 = detail::checked(model.g1(s.t, s.y), "g1", s);
    const double g2 = detail::checked(model.g2(s.t, s.y), "g2", s);
    const double g2y = detail::checked(model.g2_dy(s.t, s.y), "dg2/dy", s);
    const double h = detail::checked(model.h1(s.t, s.y), "h", s);
    return {b - 0.5 * aa + a * alpha_prime, g1, g2 * alpha_prime - 0.5 * a * g2y, h};
}

/// Uniform grid t_i = i T / n with t_n = T exactly.
inline std::vector<double> uniform_times(double horizon, std::size_t steps) {
    std::vector<double> t(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) t[i] = horizon * static_cast<double>(i) / static_cast<double>(steps);
    return t;
}

inline CodewordPath integrate_codeword(const ModelSpec& model, const BrownianCodeword& alpha, std::size_t steps,
                                       Method method = Method::rk4) {
    detail::require_codeword_model(model);
    if (steps < 1) throw DomainError("step count must be >= 1");
    CodewordPath path;
    path.times = uniform_times(alpha.horizon, steps);
    path.weight = alpha.weight;
    path.states.reserve(steps + 1);

    auto rhs = [&](double t, const Vec<4>& x) {
        ++path.evaluations;
        if (model.positive_state && x[0] < kStateFloor) ++path.clamp_events;
        const auto d = codeword_rhs(model, {t, x[0], x[1], x[2], x[3]}, alpha.derivative(t));
        return Vec<4>{d.y, d.y_g1, d.y_g2, d.y_h};
    };

    Vec<4> x{model.y0, 0.0, 0.0, 0.0};
    path.states.push_back({0.0, x[0], 0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = path.times[i];
        x = ode_step(method, rhs, t, x, path.times[i + 1] - t);
        const CodewordState s{path.times[i + 1], x[0], x[1], x[2], x[3]};
        for (double v : x)
            if (!std::isfinite(v))
                throw IntegrationBlowup("non-finite state at step " + std::to_string(i + 1) + ": " + detail::state_text(s),
                                        i + 1);
        path.states.push_back(s);
    }
    return path;
}

inline CodewordPath integrate_codeword(const ModelSpec& model, const ProductQuantizer& pq, const MultiIndex& index,
                                       std::size_t steps, Method method = Method::rk4) {
    auto path = integrate_codeword(model, pq.codeword(index), steps, method);
    path.index = pq.flat_of(index);
    return path;
}

struct BundleFailure {
    std::size_t index = 0;
    double weight = 0.0;
    std::string message;
};

struct Bundle {
    std::vector<CodewordPath> paths;      // surviving codewords, lexicographic order
    std::vector<BundleFailure> failures;  // codewords whose integration failed

    double lost_weight() const {
        double w = 0.0;
        for (const auto& f : failures) w += f.weight;
        return w;
    }
};

/// Integrates every codeword of pq. Failures are isolated per codeword.
inline Bundle integrate_bundle(const ModelSpec& model, const ProductQuantizer& pq, std::size_t steps,
                               Method method = Method::rk4, unsigned threads = 1) {
    detail::require_codeword_model(model);
    const std::size_t count = pq.size();
    std::vector<CodewordPath> paths(count);
    std::vector<std::string> errors(count);
    std::vector<char> ok(count, 0);
    parallel_for(count, threads, [&](std::size_t i) {
        const auto alpha = pq.codeword(i);
        try {
            paths[i] = integrate_codeword(model, alpha, steps, method);
            paths[i].index = i;
            ok[i] = 1;
        } catch (const Error& e) {
            errors[i] = e.what();
            paths[i].weight = alpha.weight;
        }
    });
    Bundle bundle;
    for (std::size_t i = 0; i < count; ++i) {
        if (ok[i])
            bundle.paths.push_back(std::move(paths[i]));
        else
            bundle.failures.push_back({i, paths[i].weight, errors[i]});
    }
    return bundle;
}

inline void write_bundle_csv(std::ostream& out, const Bundle& bundle) {
    out << "t,index,weight,y,y_g1,y_g2,y_h\n";
    char buf[256];
    for (const auto& p : bundle.paths)
        for (const auto& s : p.states) {
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t, p.index, p.weight, s.y,
                          s.y_g1, s.y_g2, s.y_h);
            out << buf;
        }
}

// ---------------------------------------------------------------------------
// Extended Lamperti transform S(t, y, y^h) = int_anchor^y dz / a(t, z, y^h).

namespace detail {

inline void require_elliptic(const ModelSpec& model) {
    if (!model.elliptic) throw UnsupportedOperation(model.name + ": Lamperti transform needs an elliptic diffusion");
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm, double fb, double whole, double tol,
                        int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double integrate(const F& f, double a, double b, double tol = 1e-13) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

}  // namespace detail

/// Numerical S by adaptive quadrature of 1/a, ignoring any closed form.
inline double lamperti_quadrature(const ModelSpec& model, double t, double y, double yh, double anchor) {
    detail::require_elliptic(model);
    if (model.positive_state && y < 0.0) throw DomainError(model.name + ": Lamperti transform needs y >= 0");
    return detail::integrate([&](double z) { return 1.0 / model.diffusion(t, z, yh, 0.0); }, anchor, y);
}

inline double lamperti(const ModelSpec& model, double t, double y, double yh, double anchor) {
    detail::require_elliptic(model);
    if (model.lamperti) return model.lamperti->transform(t, y, yh, anchor);
    return lamperti_quadrature(model, t, y, yh, anchor);
}

inline double lamperti(const ModelSpec& model, double t, double y, double yh) {
    return lamperti(model, t, y, yh, model.y0);
}

/// Inverse by bracketing and bisection on the quadrature transform.
inline double lamperti_inverse_numeric(const ModelSpec& model, double t, double x, double yh, double anchor) {
    detail::require_elliptic(model);
    auto s = [&](double y) { return lamperti_quadrature(model, t, y, yh, anchor) - x; };
    double lo = anchor, hi = anchor;
    double step = 0.1 * std::max(std::abs(anchor), 1e-3);
    for (int k = 0; s(hi) < 0.0; ++k) {
        if (k > 200) throw DomainError("Lamperti inverse: no upper bracket");
        hi += step;
        step *= 2.0;
    }
    step = 0.1 * std::max(std::abs(anchor), 1e-3);
    for (int k = 0; s(lo) > 0.0; ++k) {
        if (k > 200) throw DomainError("Lamperti inverse: no lower bracket");
        if (model.positive_state) {
            if (lo == 0.0) throw DomainError("Lamperti inverse: x below the image of y = 0");
            lo = lo > 1e-300 ? 0.5 * lo : 0.0;
        } else {
            lo -= step;
            step *= 2.0;
        }
    }
    for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
        const double mid = 0.5 * (lo + hi);
        (s(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

inline double lamperti_inverse(const ModelSpec& model, double t, double x, double yh, double anchor) {
    detail::require_elliptic(model);
    if (model.lamperti) return model.lamperti->inverse(t, x, yh, anchor);
    return lamperti_inverse_numeric(model, t, x, yh, anchor);
}

inline double lamperti_inverse(const ModelSpec& model, double t, double x, double yh) {
    return lamperti_inverse(model, t, x, yh, model.y0);
}

/// dS/dy^h, closed form when available, otherwise a central difference of S.
inline double lamperti_dyh(const ModelSpec& model, double t, double y, double yh, double anchor) {
    detail::require_elliptic(model);
    if (model.lamperti && model.lamperti->d_dyh) return model.lamperti->d_dyh(t, y, yh, anchor);
    const double h = 1e-6 * std::max(1.0, std::abs(yh));
    return (lamperti(model, t, y, yh + h, anchor) - lamperti(model, t, y, yh - h, anchor)) / (2.0 * h);
}

/// Integrates the Lamperti-transformed equation
///   x' = b/a - a_y/2 + S_{y^h} h + S_t + alpha'(t),  y = S^{-1}(t, x, y^h),
/// together with the integral terms, and maps x back to y at every node.
/// Analytically identical to integrate_codeword; used as an independent route.
inline CodewordPath integrate_codeword_lamperti(const ModelSpec& model, const BrownianCodeword& alpha,
                                                std::size_t steps, Method method = Method::rk4) {
    detail::require_codeword_model(model);
    detail::require_elliptic(model);
    if (steps < 1) throw DomainError("step count must be >= 1");
    const double anchor = model.y0;
    CodewordPath path;
    path.times = uniform_times(alpha.horizon, steps);
    path.weight = alpha.weight;

    auto rhs = [&](double t, const Vec<4>& x) {
        ++path.evaluations;
        const double y = lamperti_inverse(model, t, x[0], x[3], anchor);
        const CodewordState s{t, y, x[1], x[2], x[3]};
        const double a = detail::checked(model.diffusion(t, y, x[3], 0.0), "a", s);
        const double ay = detail::checked(model.diffusion_dy(t, y, x[3], 0.0), "da/dy", s);
        const double b = detail::checked(model.drift(t, y, x[1], x[2]), "b", s);
        const double h = model.h1(t, y);
        double st = 0.0;
        if (model.time_dependent_diffusion) {
            const double dt = 1e-6 * std::max(1.0, alpha.horizon);
            const double tp = std::min(t + dt, alpha.horizon), tm = std::max(t - dt, 0.0);
            st = (lamperti(model, tp, y, x[3], anchor) - lamperti(model, tm, y, x[3], anchor)) / (tp - tm);
        }
        const double sh = h != 0.0 ? lamperti_dyh(model, t, y, x[3], anchor) : 0.0;
        const double ap = alpha.derivative(t);
        return Vec<4>{b / a - 0.5 * ay + sh * h + st + ap, model.g1(t, y),
                      model.g2(t, y) * ap - 0.5 * a * model.g2_dy(t, y), h};
    };

    Vec<4> x{lamperti(model, 0.0, model.y0, 0.0, anchor), 0.0, 0.0, 0.0};
    path.states.push_back({0.0, model.y0, 0.0, 0.0, 0.0});
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = path.times[i];
        x = ode_step(method, rhs, t, x, path.times[i + 1] - t);
        const double tn = path.times[i + 1];
        const CodewordState s{tn, lamperti_inverse(model, tn, x[0], x[3], anchor), x[1], x[2], x[3]};
        if (!std::isfinite(s.y) || !std::isfinite(x[1]) || !std::isfinite(x[2]))
            throw IntegrationBlowup("non-finite state at step " + std::to_string(i + 1) + ": " + detail::state_text(s),
                                    i + 1);
        path.states.push_back(s);
    }
    return path;
}

}  // namespace pathquant
