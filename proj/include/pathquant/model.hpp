#pragma once

// Coefficient bundle of a path-dependent volatility SDE
//
//   dY = b(t, Y, Y^{g1}, Y^{g2}) dt + a(t, Y, Y^{h1}, Y^{h2}) dW,
//   Y^{g1} = int g1 du, Y^{g2} = int g2 dW, Y^{h1} = int h1 du, Y^{h2} = int h2 dW.
//
// The codeword ODE engine supports models whose diffusion ignores Y^{h2};
// recursive marginal quantization handles the general form.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace pathquant {

/// Floor applied to y before any square root in model coefficients.
inline constexpr double kStateFloor = 1e-12;

inline double sqrt_floor(double y) { return std::sqrt(std::max(y, kStateFloor)); }

/// Closed-form Lamperti transform S(t, y, y^h) = int_anchor^y dz / a(t, z, y^h).
struct LampertiClosedForm {
    std::function<double(double t, double y, double yh, double anchor)> transform;
    std::function<double(double t, double x, double yh, double anchor)> inverse;
    std::function<double(double t, double y, double yh, double anchor)> d_dyh;
};

struct ModelSpec {
    using Drift = std::function<double(double t, double y, double yg1, double yg2)>;
    using Diffusion = std::function<double(double t, double y, double yh1, double yh2)>;
    using Integrand = std::function<double(double t, double y)>;

    std::string name;
    double y0 = 0.0;

    Drift drift;                // b
    Diffusion diffusion;        // a
    Diffusion diffusion_dy;     // da/dy
    Diffusion diffusion_a_dady; // optional a * da/dy, finite where da/dy alone is not
    Integrand g1, g2, g2_dy, h1, h2;

    bool elliptic = false;        // a >= eps0 > 0 on the state space; Lamperti applies
    bool uses_h2 = false;         // diffusion depends on a Brownian integral
    bool positive_state = false;  // coefficients take sqrt(y); y is floored at kStateFloor
    bool time_dependent_diffusion = false;
    std::optional<LampertiClosedForm> lamperti;
    std::vector<std::pair<std::string, double>> parameters;

    double a_dady(double t, double y, double yh1, double yh2) const {
        if (diffusion_a_dady) return diffusion_a_dady(t, y, yh1, yh2);
        return diffusion(t, y, yh1, yh2) * diffusion_dy(t, y, yh1, yh2);
    }
};

inline ModelSpec::Integrand zero_integrand() {
    return [](double, double) { return 0.0; };
}

}  // namespace pathquant
