#pragma once

// Zero-coupon bond under the benchmark approach: P(0,T) = S_0 E[S_T^{-1}],
// S the growth optimal portfolio driven by the Platen market activity
//   dS/S = (r + M/Y) dt + sqrt(M/Y) dW.
// The FQ price replaces W by the Brownian codewords; the MC price is a
// plain Euler baseline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pathquant/brownian.hpp"
#include "pathquant/codeword.hpp"
#include "pathquant/errors.hpp"
#include "pathquant/models.hpp"
#include "pathquant/parallel.hpp"
#include "pathquant/rng.hpp"

namespace pathquant {

struct MarketParams {
    double s0 = 1.0;
    double r = 0.0;
    double horizon = 1.0;
    std::size_t steps = 100;

    double dt() const { return horizon / static_cast<double>(steps); }
};

inline void validate(const MarketParams& m) {
    if (!(m.s0 > 0.0)) throw ValidationError("market: s0 must be > 0");
    if (!(m.horizon > 0.0)) throw ValidationError("market: T must be > 0");
    if (m.steps < 1) throw ValidationError("market: n must be >= 1");
}

struct PriceResult {
    double value = 0.0;
    std::string method;
    std::optional<double> ci_low, ci_high;
    std::size_t used = 0;  // codewords or paths
    double lost_weight = 0.0;
    std::size_t clamp_events = 0;
    double runtime = 0.0;  // seconds
};

namespace detail {

// Market activity from a discretised Z_i = 2 lambda dt sum_{j<=i} e^{-lambda (s_i - s_j)} sqrt(Y_j),
// updated as Z_i = e^{-lambda dt} Z_{i-1} + 2 lambda dt sqrt(Y_i).
struct ActivityTracker {
    const PlatenParams& p;
    double dt;
    double decay;
    double z = 0.0;

    ActivityTracker(const PlatenParams& params, double step) : p(params), dt(step), decay(std::exp(-params.lambda * step)) {}

    double push(double root_y) {
        z = decay * z + 2.0 * p.lambda * dt * root_y;
        const double u = 2.0 * root_y - z;
        return p.xi * (p.lambda * p.lambda * u * u + p.eta);
    }
};

inline double clamp_state(double y, std::size_t& clamps) {
    if (y < kStateFloor) {
        ++clamps;
        return kStateFloor;
    }
    return y;
}

}  // namespace detail

/// S^{-1} along one codeword on the grid s_i = i dt: S^{-1}_0 = 1/s0 and
///   S^{-1}_i = S^{-1}_{i-1} exp(-dt (r + M_i / (2 Y_i) + alpha'(s_i) sqrt(M_i / Y_i))).
inline std::vector<double> gop_inverse_codeword(const PlatenParams& p, const CodewordPath& path,
                                                const BrownianCodeword& alpha, const MarketParams& mkt,
                                                std::size_t* clamp_events = nullptr) {
    if (path.states.size() != mkt.steps + 1)
        throw DomainError("codeword path has " + std::to_string(path.states.size()) + " states, expected n + 1");
    const double dt = mkt.dt();
    std::size_t clamps = 0;
    detail::ActivityTracker activity(p, dt);
    std::vector<double> inv(mkt.steps + 1);
    inv[0] = 1.0 / mkt.s0;
    activity.push(std::sqrt(detail::clamp_state(path.states[0].y, clamps)));
    for (std::size_t i = 1; i <= mkt.steps; ++i) {
        const double y = detail::clamp_state(path.states[i].y, clamps);
        const double m = activity.push(std::sqrt(y));
        const double s = static_cast<double>(i) * dt;
        const double drift = mkt.r + m / (2.0 * y);
        const double vol = std::sqrt(m / y);
        inv[i] = inv[i - 1] * std::exp(-dt * (drift + alpha.derivative(std::min(s, alpha.horizon)) * vol));
    }
    if (clamp_events) *clamp_events += clamps;
    return inv;
}

namespace detail {

struct FqTerminal {
    std::vector<double> inverse;  // S_T^{-1} per surviving codeword
    std::vector<double> weight;
    double lost_weight = 0.0;
    std::size_t clamps = 0;
};

inline FqTerminal fq_terminal(const PlatenParams& p, const ProductQuantizer& pq, const MarketParams& mkt,
                              Method method, unsigned threads) {
    validate(mkt);
    if (std::abs(pq.horizon() - mkt.horizon) > 1e-12 * mkt.horizon)
        throw DomainError("product quantizer horizon does not match market T");
    const auto model = platen_model(p);
    const auto bundle = integrate_bundle(model, pq, mkt.steps, method, threads);
    FqTerminal out;
    out.lost_weight = bundle.lost_weight();
    if (out.lost_weight > 1e-6)
        throw IntegrationBlowup("lost codeword weight " + std::to_string(out.lost_weight) + " exceeds 1e-6 (first failure: " +
                                    bundle.failures.front().message + ")",
                                bundle.failures.front().index);
    const std::size_t count = bundle.paths.size();
    out.inverse.resize(count);
    out.weight.resize(count);
    std::vector<std::size_t> clamps(count, 0);
    parallel_for(count, threads, [&](std::size_t i) {
        const auto& path = bundle.paths[i];
        out.inverse[i] = gop_inverse_codeword(p, path, pq.codeword(path.index), mkt, &clamps[i]).back();
        out.weight[i] = path.weight;
    });
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        total += out.weight[i];
        out.clamps += clamps[i];
    }
    for (double& w : out.weight) w /= total;
    return out;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// s0 sum_i pi_i S^{-1}_i(T) over the codeword bundle. Survivors are
/// renormalized when the failed weight is below 1e-6; above it the price aborts.
inline PriceResult price_zcb_fq(const PlatenParams& p, const ProductQuantizer& pq, const MarketParams& mkt,
                                Method method = Method::rk4, unsigned threads = 1) {
    const auto start = std::chrono::steady_clock::now();
    const auto term = detail::fq_terminal(p, pq, mkt, method, threads);
    PriceResult r;
    r.method = "fq";
    for (std::size_t i = 0; i < term.inverse.size(); ++i) r.value += term.weight[i] * term.inverse[i];
    r.value *= mkt.s0;
    r.used = term.inverse.size();
    r.lost_weight = term.lost_weight;
    r.clamp_events = term.clamps;
    r.runtime = detail::seconds_since(start);
    return r;
}

/// (S_T, weight) per codeword sorted by value; equal values are merged.
inline std::vector<std::pair<double, double>> terminal_distribution(const PlatenParams& p, const ProductQuantizer& pq,
                                                                    const MarketParams& mkt, Method method = Method::rk4,
                                                                    unsigned threads = 1) {
    const auto term = detail::fq_terminal(p, pq, mkt, method, threads);
    std::vector<std::pair<double, double>> atoms;
    atoms.reserve(term.inverse.size());
    for (std::size_t i = 0; i < term.inverse.size(); ++i) atoms.emplace_back(1.0 / term.inverse[i], term.weight[i]);
    std::sort(atoms.begin(), atoms.end());
    std::vector<std::pair<double, double>> merged;
    for (const auto& a : atoms) {
        if (!merged.empty() && merged.back().first == a.first)
            merged.back().second += a.second;
        else
            merged.push_back(a);
    }
    return merged;
}

/// One Euler path of (Y, I = int e^{lambda u} sqrt(Y_u) du) with log-Euler S^{-1};
/// returns s0 S_T^{-1}. The market activity uses the same discrete Z as the FQ price.
inline double zcb_mc_path(const PlatenParams& p, const MarketParams& mkt, PhiloxStream& rng, std::size_t& clamps) {
    const double dt = mkt.dt();
    const double sdt = std::sqrt(dt);
    detail::ActivityTracker activity(p, dt);
    double y = p.y0, integral = 0.0, log_inv = 0.0;
    double m = activity.push(std::sqrt(y));
    for (std::size_t i = 0; i < mkt.steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double root = std::sqrt(y);
        const double q = detail::platen_activity_factor(p, t, y, integral);
        const double dw = sdt * rng.normal();
        const double vol = std::sqrt(m / y);
        log_inv -= (mkt.r + 0.5 * vol * vol) * dt + vol * dw;
        const double y_next = y + p.xi * (p.alpha - p.beta * y) * q * dt + p.sigma * std::sqrt(p.xi * y * q) * dw;
        integral += std::exp(p.lambda * t) * root * dt;
        y = detail::clamp_state(y_next, clamps);
        m = activity.push(std::sqrt(y));
    }
    return std::exp(log_inv);
}

/// Mean and 95% normal CI of s0 S_T^{-1} over `paths` Euler paths; path k
/// draws from Philox stream k of `seed`, so the result does not depend on `threads`.
inline PriceResult price_zcb_mc(const PlatenParams& p, const MarketParams& mkt, std::size_t paths, std::uint64_t seed,
                                unsigned threads = 1, std::vector<double>* samples = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    detail::throw_if_invalid("platen", validate(p));
    validate(mkt);
    if (paths < 100) throw ValidationError("scheme: M must be >= 100");
    std::vector<double> value(paths);
    std::vector<std::size_t> clamps(paths, 0);
    parallel_for(paths, threads, [&](std::size_t k) {
        PhiloxStream rng(seed, k);
        value[k] = zcb_mc_path(p, mkt, rng, clamps[k]);
    });
    // shifted by the first sample, so identical samples give an exact zero spread
    double shift = 0.0;
    for (double v : value) shift += v - value[0];
    const double mean = value[0] + shift / static_cast<double>(paths);
    double ss = 0.0;
    for (double v : value) ss += (v - mean) * (v - mean);
    const double se = std::sqrt(ss / static_cast<double>(paths - 1) / static_cast<double>(paths));
    PriceResult r;
    r.method = "mc";
    r.value = mean;
    r.ci_low = mean - 1.96 * se;
    r.ci_high = mean + 1.96 * se;
    r.used = paths;
    for (auto c : clamps) r.clamp_events += c;
    r.runtime = detail::seconds_since(start);
    if (samples) *samples = std::move(value);
    return r;
}

}  // namespace pathquant
