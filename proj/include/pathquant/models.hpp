#pragma once

// Guyon-Lekeufack, Platen-Rendek and extended Blanc-Donier-Bouchaud
// volatility models expressed as ModelSpec coefficient bundles.

#include <cmath>
#include <string>
#include <vector>

#include "pathquant/errors.hpp"
#include "pathquant/model.hpp"

namespace pathquant {

struct Diagnostic {
    enum class Severity { warning, error };
    Severity severity = Severity::error;
    std::string message;
};

inline bool has_errors(const std::vector<Diagnostic>& ds) {
    for (const auto& d : ds)
        if (d.severity == Diagnostic::Severity::error) return true;
    return false;
}

inline std::string describe(const std::vector<Diagnostic>& ds) {
    std::string s;
    for (const auto& d : ds) {
        if (!s.empty()) s += "; ";
        s += (d.severity == Diagnostic::Severity::error ? "error: " : "warning: ") + d.message;
    }
    return s;
}

namespace detail {

inline void require(std::vector<Diagnostic>& out, bool ok, const std::string& message) {
    if (!ok) out.push_back({Diagnostic::Severity::error, message});
}

inline void advise(std::vector<Diagnostic>& out, bool ok, const std::string& message) {
    if (!ok) out.push_back({Diagnostic::Severity::warning, message});
}

inline void throw_if_invalid(const std::string& model, const std::vector<Diagnostic>& ds) {
    if (has_errors(ds)) throw ValidationError(model + ": " + describe(ds));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Guyon-Lekeufack: sigma = beta0 + beta1 R1 + beta2 sqrt(R2), Y = sigma.

struct GuyonParams {
    double beta0 = 0.04, beta1 = 0.1, beta2 = 0.6;
    double lambda1 = 10.0, lambda2 = 5.0;
    double r1_0 = 0.0, r2_0 = 0.04;

    double sigma0() const { return beta0 + beta1 * r1_0 + beta2 * std::sqrt(std::max(r2_0, 0.0)); }
};

inline std::vector<Diagnostic> validate(const GuyonParams& p) {
    std::vector<Diagnostic> out;
    detail::require(out, p.beta0 >= 0.0 && p.beta1 >= 0.0 && p.beta2 >= 0.0, "beta0, beta1, beta2 must be >= 0");
    detail::require(out, p.lambda1 > 0.0 && p.lambda2 > 0.0, "lambda1 and lambda2 must be > 0");
    detail::require(out, p.r2_0 > 0.0, "r2_0 must be > 0");
    detail::require(out, p.sigma0() > 0.0, "sigma0 = beta0 + beta1 r1_0 + beta2 sqrt(r2_0) must be > 0");
    detail::advise(out, p.lambda2 < 2.0 * p.lambda1, "positivity condition lambda2 < 2 lambda1 violated");
    return out;
}

/// The volatility memory is carried by two integrals of the codeword path:
///   R1(t) = e^{-l1 t}(R1_0 + l1 int e^{l1 u} sigma_u dW_u)   -> the dW slot Y^{g2}, g2 = e^{l1 t} y
///   R2(t) = e^{-l2 t}(R2_0 + l2 int e^{l2 u} sigma_u^2 du)   -> the du slot Y^{g1}, g1 = e^{l2 t} y^2
/// The literal display pairs "g1(t,y) = e^{l1 t} y" with "int g1 dW" and
/// "g2(t,y) = e^{l2 t} y^2" with "int g2 d_u"; the slots are assigned by the
/// kind of integral, which is what the R1/R2 dynamics require.
inline ModelSpec guyon_model(const GuyonParams& p) {
    detail::throw_if_invalid("guyon", validate(p));
    ModelSpec m;
    m.name = "guyon";
    m.y0 = p.sigma0();
    m.parameters = {{"beta0", p.beta0}, {"beta1", p.beta1},   {"beta2", p.beta2}, {"lambda1", p.lambda1},
                    {"lambda2", p.lambda2}, {"r1_0", p.r1_0}, {"r2_0", p.r2_0}};
    const double k = p.beta1 * p.lambda1;
    m.drift = [p, k](double t, double y, double yg1, double yg2) {
        const double r1 = std::exp(-p.lambda1 * t) * (p.r1_0 + p.lambda1 * yg2);
        const double r2 = std::max(std::exp(-p.lambda2 * t) * (p.r2_0 + p.lambda2 * yg1), kStateFloor);
        return -k * r1 + 0.5 * p.beta2 * p.lambda2 * (y * y - r2) / std::sqrt(r2);
    };
    m.diffusion = [k](double, double y, double, double) { return k * y; };
    m.diffusion_dy = [k](double, double, double, double) { return k; };
    m.g1 = [p](double t, double y) { return std::exp(p.lambda2 * t) * y * y; };
    m.g2 = [p](double t, double y) { return std::exp(p.lambda1 * t) * y; };
    m.g2_dy = [p](double t, double) { return std::exp(p.lambda1 * t); };
    m.h1 = zero_integrand();
    m.h2 = zero_integrand();
    m.elliptic = k > 0.0;
    if (m.elliptic) {
        m.lamperti = LampertiClosedForm{
            [k](double, double y, double, double anchor) {
                if (!(y > 0.0)) throw DomainError("guyon Lamperti transform needs y > 0");
                return std::log(y / anchor) / k;
            },
            [k](double, double x, double, double anchor) { return anchor * std::exp(k * x); },
            [](double, double, double, double) { return 0.0; }};
    }
    return m;
}

// ---------------------------------------------------------------------------
// Platen-Rendek: Y is the inverse volatility factor of the growth optimal
// portfolio, dY = (alpha - beta Y) M dt + sigma sqrt(M Y) dW with market
// activity M = xi (lambda^2 (2 sqrt(Y) - Z)^2 + eta), Z = 2 lambda int e^{-lambda(t-s)} sqrt(Y_s) ds.

struct PlatenParams {
    double alpha = 1.0, beta = 1.0, sigma = 1.0;
    double xi = 0.05, lambda = 1.0, eta = 0.000314;
    double y0 = 0.1;
};

inline std::vector<Diagnostic> validate(const PlatenParams& p) {
    std::vector<Diagnostic> out;
    detail::require(out, p.alpha >= 0.0 && p.sigma >= 0.0 && p.xi >= 0.0 && p.lambda >= 0.0 && p.eta >= 0.0,
                    "alpha, sigma, xi, lambda, eta must be >= 0");
    detail::require(out, p.beta > 0.0, "beta must be > 0");
    detail::require(out, p.y0 > 0.0, "y0 must be > 0");
    detail::require(out, p.alpha >= 0.5 * p.sigma * p.sigma, "Feller-like condition alpha >= sigma^2/2 violated");
    return out;
}

namespace detail {

// 4 lambda^2 (sqrt(y) - lambda e^{-lambda t} y_int)^2 + eta
inline double platen_activity_factor(const PlatenParams& p, double t, double y, double y_int) {
    const double u = sqrt_floor(y) - p.lambda * std::exp(-p.lambda * t) * y_int;
    return 4.0 * p.lambda * p.lambda * u * u + p.eta;
}

}  // namespace detail

/// Market activity M = xi (4 lambda^2 (sqrt(y) - lambda e^{-lambda t} int e^{lambda u} sqrt(y_u) du)^2 + eta).
inline double platen_activity(const PlatenParams& p, double t, double y, double y_int) {
    return p.xi * detail::platen_activity_factor(p, t, y, y_int);
}

/// Lamperti transform of a(y) = sigma sqrt(xi y) sqrt(4 lambda^2 (sqrt y - m)^2 + eta),
/// m = lambda e^{-lambda t} y^h. Substituting u = sqrt(y) gives
///   S = [asinh(2 lambda (sqrt(y) - m) / sqrt(eta)) - asinh(2 lambda (sqrt(anchor) - m) / sqrt(eta))] / (lambda sigma sqrt(xi)),
/// an antiderivative equivalent to the inverse hyperbolic tangent form.
inline LampertiClosedForm platen_lamperti(const PlatenParams& p) {
    const double se = std::sqrt(p.eta);
    const double sx = std::sqrt(p.xi);
    const bool flat = p.lambda < 1e-12;
    auto shift = [p](double t, double yh) { return p.lambda * std::exp(-p.lambda * t) * yh; };
    auto arg = [p, se](double root, double m) { return 2.0 * p.lambda * (root - m) / se; };
    LampertiClosedForm f;
    f.transform = [=](double t, double y, double yh, double anchor) {
        if (y < 0.0) throw DomainError("platen Lamperti transform needs y >= 0");
        if (flat) return 2.0 * (std::sqrt(y) - std::sqrt(anchor)) / (p.sigma * sx * se);
        const double m = shift(t, yh);
        return (std::asinh(arg(std::sqrt(y), m)) - std::asinh(arg(std::sqrt(anchor), m))) / (p.lambda * p.sigma * sx);
    };
    f.inverse = [=](double t, double x, double yh, double anchor) {
        double root;
        if (flat) {
            root = std::sqrt(anchor) + 0.5 * x * p.sigma * sx * se;
        } else {
            const double m = shift(t, yh);
            root = m + se / (2.0 * p.lambda) *
                           std::sinh(p.lambda * p.sigma * sx * x + std::asinh(arg(std::sqrt(anchor), m)));
        }
        if (root < 0.0) throw DomainError("platen Lamperti inverse: x below the image of y = 0");
        return root * root;
    };
    f.d_dyh = [=](double t, double y, double yh, double anchor) {
        if (flat) return 0.0;
        const double m = shift(t, yh);
        const double zy = arg(std::sqrt(std::max(y, 0.0)), m);
        const double za = arg(std::sqrt(anchor), m);
        return -2.0 * p.lambda * std::exp(-p.lambda * t) / (p.sigma * sx * se) *
               (1.0 / std::sqrt(1.0 + zy * zy) - 1.0 / std::sqrt(1.0 + za * za));
    };
    return f;
}

inline ModelSpec platen_model(const PlatenParams& p) {
    detail::throw_if_invalid("platen", validate(p));
    ModelSpec m;
    m.name = "platen";
    m.y0 = p.y0;
    m.parameters = {{"alpha", p.alpha}, {"beta", p.beta},     {"sigma", p.sigma}, {"xi", p.xi},
                    {"lambda", p.lambda}, {"eta", p.eta}, {"y0", p.y0}};
    m.drift = [p](double t, double y, double yg1, double) {
        return p.xi * (p.alpha - p.beta * y) * detail::platen_activity_factor(p, t, y, yg1);
    };
    m.diffusion = [p](double t, double y, double yh, double) {
        return p.sigma * std::sqrt(p.xi * std::max(y, kStateFloor) * detail::platen_activity_factor(p, t, y, yh));
    };
    // a a' = (sigma^2 xi / 2) (8 lambda^2 y - 12 lambda^2 sqrt(y) m + 4 lambda^2 m^2 + eta)
    m.diffusion_a_dady = [p](double t, double y, double yh, double) {
        const double root = sqrt_floor(y);
        const double mm = p.lambda * std::exp(-p.lambda * t) * yh;
        const double l2 = p.lambda * p.lambda;
        return 0.5 * p.sigma * p.sigma * p.xi * (8.0 * l2 * root * root - 12.0 * l2 * root * mm + 4.0 * l2 * mm * mm + p.eta);
    };
    m.diffusion_dy = [m_aa = m.diffusion_a_dady, a = m.diffusion](double t, double y, double yh, double yh2) {
        return m_aa(t, y, yh, yh2) / a(t, y, yh, yh2);
    };
    m.g1 = [p](double t, double y) { return sqrt_floor(y) * std::exp(p.lambda * t); };
    m.h1 = m.g1;
    m.g2 = zero_integrand();
    m.g2_dy = zero_integrand();
    m.h2 = zero_integrand();
    m.positive_state = true;
    m.time_dependent_diffusion = p.lambda > 0.0;
    m.elliptic = p.sigma > 0.0 && p.xi > 0.0 && p.eta > 0.0;
    if (m.elliptic) m.lamperti = platen_lamperti(p);
    return m;
}

// ---------------------------------------------------------------------------
// Extended Blanc-Donier-Bouchaud: sigma^2 = beta0 + beta1 (R1 - alpha)^2 + beta2 R2, Y = sigma^2.

struct BlancParams {
    double beta0 = 0.01, beta1 = 0.1, beta2 = 0.5, alpha = 0.0;
    double lambda1 = 5.0, lambda2 = 2.0;
    double r1_0 = 0.1, r2_0 = 0.04;

    double y0() const { return beta0 + beta1 * (r1_0 - alpha) * (r1_0 - alpha) + beta2 * r2_0; }
};

inline std::vector<Diagnostic> validate(const BlancParams& p) {
    std::vector<Diagnostic> out;
    detail::require(out, p.beta0 >= 0.0 && p.beta1 >= 0.0 && p.beta2 >= 0.0 && p.alpha >= 0.0,
                    "beta0, beta1, beta2, alpha must be >= 0");
    detail::require(out, p.lambda1 > 0.0 && p.lambda2 > 0.0, "lambda1 and lambda2 must be > 0");
    detail::require(out, p.r2_0 >= 0.0, "r2_0 must be >= 0");
    detail::require(out, p.beta0 + p.beta2 * p.r2_0 > 0.0, "variance positivity needs beta0 + beta2 r2_0 > 0");
    return out;
}

/// Slots: g1 = e^{l2 t} y (du, feeds R2), g2 = h2 = e^{l1 t} sqrt(y) (dW, feeds R1), h1 = 0.
/// The drift follows from Ito's lemma on beta1 (R1 - alpha)^2 + beta2 R2:
///   b = (beta1 l1^2 + beta2 l2) y - beta2 l2 R2 - 2 beta1 l1 (R1 - alpha) R1.
inline ModelSpec blanc_model(const BlancParams& p) {
    detail::throw_if_invalid("blanc", validate(p));
    ModelSpec m;
    m.name = "blanc";
    m.y0 = p.y0();
    m.parameters = {{"beta0", p.beta0},     {"beta1", p.beta1},     {"beta2", p.beta2}, {"alpha", p.alpha},
                    {"lambda1", p.lambda1}, {"lambda2", p.lambda2}, {"r1_0", p.r1_0},   {"r2_0", p.r2_0}};
    auto r1 = [p](double t, double integral) { return std::exp(-p.lambda1 * t) * (p.r1_0 + p.lambda1 * integral); };
    auto r2 = [p](double t, double integral) { return std::exp(-p.lambda2 * t) * (p.r2_0 + p.lambda2 * integral); };
    m.drift = [p, r1, r2](double t, double y, double yg1, double yg2) {
        const double rr1 = r1(t, yg2);
        return (p.beta1 * p.lambda1 * p.lambda1 + p.beta2 * p.lambda2) * y - p.beta2 * p.lambda2 * r2(t, yg1) -
               2.0 * p.beta1 * p.lambda1 * (rr1 - p.alpha) * rr1;
    };
    m.diffusion = [p, r1](double t, double y, double, double yh2) {
        return 2.0 * p.beta1 * p.lambda1 * (r1(t, yh2) - p.alpha) * sqrt_floor(y);
    };
    m.diffusion_dy = [p, r1](double t, double y, double, double yh2) {
        return p.beta1 * p.lambda1 * (r1(t, yh2) - p.alpha) / sqrt_floor(y);
    };
    m.diffusion_a_dady = [p, r1](double t, double, double, double yh2) {
        const double c = r1(t, yh2) - p.alpha;
        return 2.0 * p.beta1 * p.beta1 * p.lambda1 * p.lambda1 * c * c;
    };
    m.g1 = [p](double t, double y) { return std::exp(p.lambda2 * t) * y; };
    m.g2 = [p](double t, double y) { return std::exp(p.lambda1 * t) * sqrt_floor(y); };
    m.g2_dy = [p](double t, double y) { return std::exp(p.lambda1 * t) * 0.5 / sqrt_floor(y); };
    m.h1 = zero_integrand();
    m.h2 = m.g2;
    m.uses_h2 = true;
    m.positive_state = true;
    m.time_dependent_diffusion = true;
    m.elliptic = false;
    return m;
}

}  // namespace pathquant
