#pragma once

// Karhunen-Loeve basis and product functional quantizers of Brownian motion.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "pathquant/errors.hpp"
#include "pathquant/quant1d.hpp"
#include "pathquant/rng.hpp"

namespace pathquant {

/// lambda_l = (T / (pi (l - 1/2)))^2, l >= 1.
inline double kl_eigenvalue(int l, double horizon) {
    if (l < 1) throw DomainError("KL index must be >= 1");
    const double w = horizon / (std::numbers::pi * (l - 0.5));
    return w * w;
}

namespace detail {

inline double checked_time(double t, double horizon) {
    const double slack = 1e-12 * horizon;
    if (!(t >= -slack && t <= horizon + slack))
        throw DomainError("time " + std::to_string(t) + " outside [0, " + std::to_string(horizon) + "]");
    return std::clamp(t, 0.0, horizon);
}

inline double kl_frequency(int l, double horizon) { return std::numbers::pi * (l - 0.5) / horizon; }

}  // namespace detail

/// e_l(t) = sqrt(2/T) sin(t / sqrt(lambda_l)).
inline double kl_eigenfunction(int l, double horizon, double t) {
    if (l < 1) throw DomainError("KL index must be >= 1");
    t = detail::checked_time(t, horizon);
    return std::sqrt(2.0 / horizon) * std::sin(detail::kl_frequency(l, horizon) * t);
}

struct KLBasis {
    double horizon = 1.0;
    int length = 0;

    double eigenvalue(int l) const { return kl_eigenvalue(l, horizon); }
    double eigenfunction(int l, double t) const { return kl_eigenfunction(l, horizon, t); }
    /// Sum of all eigenvalues beyond `length`: T^2/2 minus the retained head.
    double tail_variance(int from_length) const {
        double head = 0.0;
        for (int l = 1; l <= from_length; ++l) head += eigenvalue(l);
        return std::max(0.0, 0.5 * horizon * horizon - head);
    }
};

struct BitAllocation {
    std::vector<int> levels;  // nonincreasing, all >= 2
    long budget = 1;

    long product() const {
        long p = 1;
        for (int n : levels) p *= n;
        return p;
    }
    int length() const { return static_cast<int>(levels.size()); }
};

/// Supplies the 1-D normal quantizer for a given level.
using GridSource = std::function<Quantizer1D(int)>;

/// Process-wide memo of optimize(level); safe to call concurrently.
inline Quantizer1D optimal_grid(int level) {
    static std::mutex mutex;
    static std::map<int, Quantizer1D> memo;
    {
        std::lock_guard lock(mutex);
        if (auto it = memo.find(level); it != memo.end()) return it->second;
    }
    auto q = optimize(level, 1e-12, 1000);
    std::lock_guard lock(mutex);
    return memo.emplace(level, std::move(q)).first->second;
}

/// Distortion of the optimal N-level normal quantizer used when scoring
/// allocations. Exact up to 512 levels, Panter-Dite asymptotics beyond.
inline double modeled_level_distortion(int level, const GridSource& source) {
    if (level <= 1) return 1.0;
    if (level <= 512) return source(level).distortion;
    return std::numbers::pi * std::sqrt(3.0) / 2.0 / (static_cast<double>(level) * level);
}

/// Product-quantizer distortion sum_l lambda_l D(N_l) + sum_{l>d} lambda_l.
inline double modeled_distortion(const std::vector<int>& levels, double horizon, const GridSource& source = optimal_grid) {
    double d = 0.0;
    for (std::size_t l = 0; l < levels.size(); ++l)
        d += kl_eigenvalue(static_cast<int>(l) + 1, horizon) * modeled_level_distortion(levels[l], source);
    return d + KLBasis{horizon, static_cast<int>(levels.size())}.tail_variance(static_cast<int>(levels.size()));
}

inline BitAllocation normalize_allocation(std::vector<int> levels, long budget) {
    for (int n : levels)
        if (n < 1) throw DomainError("allocation levels must be >= 1");
    while (!levels.empty() && levels.back() == 1) levels.pop_back();
    BitAllocation a{std::move(levels), budget};
    if (a.product() > budget)
        throw DomainError("allocation product " + std::to_string(a.product()) + " exceeds budget " + std::to_string(budget));
    return a;
}

/// Allocation minimizing the modeled distortion subject to prod N_l <= budget
/// and d <= max_length. Branch-and-bound over nonincreasing level tuples:
/// assigning larger levels to larger eigenvalues is always at least as good.
inline BitAllocation allocate_levels(long budget, double horizon, int max_length = 8,
                                     const GridSource& source = optimal_grid) {
    if (budget < 1) throw DomainError("quantizer budget must be >= 1");
    std::vector<double> lambda(static_cast<std::size_t>(std::max(max_length, 0)));
    for (int l = 0; l < max_length; ++l) lambda[static_cast<std::size_t>(l)] = kl_eigenvalue(l + 1, horizon);
    std::map<int, double> dcache;
    auto dist = [&](int n) {
        auto it = dcache.find(n);
        if (it == dcache.end()) it = dcache.emplace(n, modeled_level_distortion(n, source)).first;
        return it->second;
    };
    const double total = 0.5 * horizon * horizon;

    std::vector<int> best;
    double best_value = total;
    std::vector<int> current;
    // `remaining` is the variance not yet assigned a level (tail beyond current.size()).
    std::function<void(long, int, double, double)> search = [&](long room, int cap, double value, double remaining) {
        if (value + remaining < best_value) {
            best_value = value + remaining;
            best = current;
        }
        const std::size_t l = current.size();
        if (static_cast<int>(l) >= max_length || room < 2) return;
        // Lower bound: every remaining eigenvalue quantized with the best level still affordable.
        const int top = static_cast<int>(std::min<long>(room, cap));
        if (value + remaining * dist(top) >= best_value) return;
        for (int n = 2; n <= top; ++n) {
            current.push_back(n);
            search(room / n, n, value + lambda[l] * dist(n), remaining - lambda[l]);
            current.pop_back();
        }
    };
    search(budget, static_cast<int>(std::min<long>(budget, 1L << 30)), 0.0, total);
    return BitAllocation{best, budget};
}

using MultiIndex = std::vector<int>;  // 0-based position in each level's grid

/// One Brownian codeword chi(t) = sum_l sqrt(lambda_l) e_l(t) x_{i_l} with its weight.
struct BrownianCodeword {
    double horizon = 1.0;
    std::vector<double> coefficients;  // x_{i_l}
    double weight = 1.0;

    double value(double t) const {
        t = detail::checked_time(t, horizon);
        double s = 0.0;
        for (std::size_t l = 0; l < coefficients.size(); ++l) {
            const int ll = static_cast<int>(l) + 1;
            s += std::sqrt(kl_eigenvalue(ll, horizon)) * std::sin(detail::kl_frequency(ll, horizon) * t) * coefficients[l];
        }
        return std::sqrt(2.0 / horizon) * s;
    }

    /// alpha'(t) = sum_l sqrt(2/T) cos(t / sqrt(lambda_l)) x_{i_l}.
    double derivative(double t) const {
        t = detail::checked_time(t, horizon);
        double s = 0.0;
        for (std::size_t l = 0; l < coefficients.size(); ++l)
            s += std::cos(detail::kl_frequency(static_cast<int>(l) + 1, horizon) * t) * coefficients[l];
        return std::sqrt(2.0 / horizon) * s;
    }
};

class ProductQuantizer {
public:
    ProductQuantizer(double horizon, BitAllocation allocation, const GridSource& source = optimal_grid)
        : allocation_(std::move(allocation)) {
        if (!(horizon > 0.0)) throw DomainError("horizon must be > 0");
        basis_ = KLBasis{horizon, allocation_.length()};
        for (int n : allocation_.levels) {
            auto g = source(n);
            if (g.level != n || g.grid.size() != static_cast<std::size_t>(n))
                throw DomainError("grid source returned wrong level for N=" + std::to_string(n));
            grids_.push_back(std::move(g));
        }
    }

    const KLBasis& basis() const { return basis_; }
    const BitAllocation& allocation() const { return allocation_; }
    const std::vector<Quantizer1D>& grids() const { return grids_; }
    double horizon() const { return basis_.horizon; }
    int length() const { return basis_.length; }
    std::size_t size() const { return static_cast<std::size_t>(allocation_.product()); }

    /// Lexicographic enumeration: the last level varies fastest.
    MultiIndex index_of(std::size_t flat) const {
        if (flat >= size()) throw IndexError("codeword " + std::to_string(flat) + " out of range");
        MultiIndex idx(allocation_.levels.size());
        for (std::size_t l = idx.size(); l-- > 0;) {
            const auto n = static_cast<std::size_t>(allocation_.levels[l]);
            idx[l] = static_cast<int>(flat % n);
            flat /= n;
        }
        return idx;
    }

    std::size_t flat_of(const MultiIndex& idx) const {
        check(idx);
        std::size_t flat = 0;
        for (std::size_t l = 0; l < idx.size(); ++l)
            flat = flat * static_cast<std::size_t>(allocation_.levels[l]) + static_cast<std::size_t>(idx[l]);
        return flat;
    }

    /// Per level, the grid point closest to zero (lower one on ties).
    MultiIndex median_index() const {
        MultiIndex idx;
        for (int n : allocation_.levels) idx.push_back((n - 1) / 2);
        return idx;
    }

    /// Index of the codeword with every coordinate reflected, i_l -> N_l - 1 - i_l.
    MultiIndex mirror(const MultiIndex& idx) const {
        check(idx);
        MultiIndex m(idx.size());
        for (std::size_t l = 0; l < idx.size(); ++l) m[l] = allocation_.levels[l] - 1 - idx[l];
        return m;
    }

    BrownianCodeword codeword(const MultiIndex& idx) const {
        check(idx);
        BrownianCodeword c{horizon(), {}, 1.0};
        for (std::size_t l = 0; l < idx.size(); ++l) {
            const auto i = static_cast<std::size_t>(idx[l]);
            c.coefficients.push_back(grids_[l].grid[i]);
            c.weight *= grids_[l].weights[i];
        }
        return c;
    }
    BrownianCodeword codeword(std::size_t flat) const { return codeword(index_of(flat)); }

    double value(const MultiIndex& idx, double t) const { return codeword(idx).value(t); }
    double derivative(const MultiIndex& idx, double t) const { return codeword(idx).derivative(t); }
    double weight(const MultiIndex& idx) const { return codeword(idx).weight; }

private:
    void check(const MultiIndex& idx) const {
        if (idx.size() != allocation_.levels.size())
            throw IndexError("multi-index has " + std::to_string(idx.size()) + " entries, expected " +
                             std::to_string(allocation_.levels.size()));
        for (std::size_t l = 0; l < idx.size(); ++l)
            if (idx[l] < 0 || idx[l] >= allocation_.levels[l])
                throw IndexError("multi-index entry " + std::to_string(l) + " = " + std::to_string(idx[l]) +
                                 " outside [0, " + std::to_string(allocation_.levels[l]) + ")");
    }

    KLBasis basis_;
    BitAllocation allocation_;
    std::vector<Quantizer1D> grids_;
};

struct ErrorEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

namespace detail {

inline std::size_t nearest_index(const std::vector<double>& grid, double x) {
    const auto it = std::lower_bound(grid.begin(), grid.end(), x);
    if (it == grid.begin()) return 0;
    if (it == grid.end()) return grid.size() - 1;
    const auto hi = static_cast<std::size_t>(it - grid.begin());
    // Midpoint ties go to the lower cell.
    return (x - grid[hi - 1] <= grid[hi] - x) ? hi - 1 : hi;
}

}  // namespace detail

/// Monte Carlo estimate of E ||W - W_hat||^2_{L^2[0,T]} through the KL
/// coordinates. The first `simulated_terms` coordinates are sampled; the rest
/// contribute their exact variance.
inline ErrorEstimate quantization_error(const ProductQuantizer& pq, std::size_t samples, std::uint64_t seed,
                                        int simulated_terms = 64) {
    if (samples < 1) throw DomainError("sample count must be >= 1");
    const int terms = std::max(simulated_terms, pq.length());
    std::vector<double> lambda(static_cast<std::size_t>(terms));
    for (int l = 0; l < terms; ++l) lambda[static_cast<std::size_t>(l)] = kl_eigenvalue(l + 1, pq.horizon());
    const double tail = pq.basis().tail_variance(terms);

    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        PhiloxStream rng(seed, s);
        double e = 0.0;
        for (int l = 0; l < terms; ++l) {
            const double xi = rng.normal();
            double hat = 0.0;
            if (l < pq.length()) {
                const auto& g = pq.grids()[static_cast<std::size_t>(l)].grid;
                hat = g[detail::nearest_index(g, xi)];
            }
            e += lambda[static_cast<std::size_t>(l)] * (xi - hat) * (xi - hat);
        }
        sum += e;
        sum_sq += e * e;
    }
    const double n = static_cast<double>(samples);
    const double mean = sum / n;
    const double var = samples > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0)) : 0.0;
    return {mean + tail, std::sqrt(var / n)};
}

}  // namespace pathquant
