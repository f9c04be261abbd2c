#pragma once

// Quadratic optimal quantizers of the scalar standard normal law.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "pathquant/errors.hpp"
#include "pathquant/normal.hpp"

namespace pathquant {

struct Quantizer1D {
    int level = 0;
    std::vector<double> grid;     // ascending codepoints
    std::vector<double> weights;  // Voronoi cell probabilities
    double distortion = 0.0;      // E min_i (X - x_i)^2

    bool operator==(const Quantizer1D&) const = default;
};

namespace detail {

// Cell probabilities p_i and first moments m_i = E[X; X in cell i] of the
// Voronoi partition of an ascending grid. Midpoints belong to the lower cell,
// which is irrelevant for a continuous law.
struct NormalCells {
    std::vector<double> mass;
    std::vector<double> moment;
    std::vector<double> bound_pdf;  // pdf at the N-1 interior midpoints
    std::vector<double> bounds;     // the N-1 interior midpoints
};

inline NormalCells normal_cells(const std::vector<double>& x) {
    const std::size_t n = x.size();
    NormalCells c;
    c.mass.resize(n);
    c.moment.resize(n);
    c.bounds.resize(n > 0 ? n - 1 : 0);
    c.bound_pdf.resize(c.bounds.size());
    for (std::size_t i = 0; i + 1 < n; ++i) {
        c.bounds[i] = 0.5 * (x[i] + x[i + 1]);
        c.bound_pdf[i] = normal::pdf(c.bounds[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = i == 0 ? -INFINITY : c.bounds[i - 1];
        const double hi = i + 1 == n ? INFINITY : c.bounds[i];
        const double pdf_lo = i == 0 ? 0.0 : c.bound_pdf[i - 1];
        const double pdf_hi = i + 1 == n ? 0.0 : c.bound_pdf[i];
        c.mass[i] = normal::mass(lo, hi);
        c.moment[i] = pdf_lo - pdf_hi;
    }
    return c;
}

inline double normal_distortion(const std::vector<double>& x, const NormalCells& c) {
    double d = 1.0;
    for (std::size_t i = 0; i < x.size(); ++i) d += x[i] * (x[i] * c.mass[i] - 2.0 * c.moment[i]);
    return std::max(d, 0.0);
}

inline double centroid_residual(const std::vector<double>& x, const NormalCells& c) {
    double r = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r = std::max(r, std::abs(x[i] - c.moment[i] / c.mass[i]));
    return r;
}

inline bool strictly_ascending(const std::vector<double>& x) {
    for (std::size_t i = 0; i + 1 < x.size(); ++i)
        if (!(x[i] < x[i + 1])) return false;
    return true;
}

// Newton step on the stationarity system p_i x_i - m_i = 0. The Jacobian is
// symmetric tridiagonal; returns false when the Thomas sweep meets a
// non-positive pivot (Hessian not positive definite at x).
inline bool newton_step(const std::vector<double>& x, const NormalCells& c, std::vector<double>& out) {
    const std::size_t n = x.size();
    std::vector<double> diag(n), off(n > 0 ? n - 1 : 0), rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
        double h = c.mass[i];
        if (i + 1 < n) h -= 0.5 * c.bound_pdf[i] * (c.bounds[i] - x[i]);
        if (i > 0) h -= 0.5 * c.bound_pdf[i - 1] * (x[i] - c.bounds[i - 1]);
        diag[i] = h;
        rhs[i] = -(c.mass[i] * x[i] - c.moment[i]);
        if (i + 1 < n) off[i] = -0.25 * c.bound_pdf[i] * (x[i + 1] - x[i]);
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!(diag[i - 1] > 0.0)) return false;
        const double f = off[i - 1] / diag[i - 1];
        diag[i] -= f * off[i - 1];
        rhs[i] -= f * rhs[i - 1];
    }
    if (!(diag[n - 1] > 0.0)) return false;
    out.assign(n, 0.0);
    out[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) out[i] = (rhs[i] - off[i] * out[i + 1]) / diag[i];
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i];
    return true;
}

inline Quantizer1D make_quantizer(std::vector<double> x) {
    const auto cells = normal_cells(x);
    Quantizer1D q;
    q.level = static_cast<int>(x.size());
    q.weights = cells.mass;
    q.distortion = normal_distortion(x, cells);
    q.grid = std::move(x);
    return q;
}

}  // namespace detail

/// Max over cells of |x_i - E[X | X in cell i]|, cells taken from q.grid.
inline double stationarity_residual(const Quantizer1D& q) {
    if (q.grid.empty()) return 0.0;
    return detail::centroid_residual(q.grid, detail::normal_cells(q.grid));
}

/// Lloyd fixed-point iteration polished by Newton on the distortion gradient,
/// started from the normal quantiles at (i - 1/2)/N.
inline Quantizer1D optimize(int level, double tolerance = 1e-12, int max_iterations = 500) {
    if (level < 1) throw DomainError("quantizer level must be >= 1");
    if (!(tolerance > 0.0)) throw DomainError("quantizer tolerance must be > 0");
    const auto n = static_cast<std::size_t>(level);

    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = normal::quantile((static_cast<double>(i) + 0.5) / level);

    std::vector<double> trial;
    double residual = INFINITY;
    for (int it = 0;; ++it) {
        const auto cells = detail::normal_cells(x);
        residual = detail::centroid_residual(x, cells);
        if (residual < tolerance) break;
        if (it >= max_iterations)
            throw ConvergenceError("normal quantizer N=" + std::to_string(level) + " did not converge", residual);

        const double current = detail::normal_distortion(x, cells);
        bool accepted = false;
        if (detail::newton_step(x, cells, trial) && detail::strictly_ascending(trial)) {
            const double next = detail::normal_distortion(trial, detail::normal_cells(trial));
            if (next <= current * (1.0 + 1e-14)) {
                x.swap(trial);
                accepted = true;
            }
        }
        if (!accepted)
            for (std::size_t i = 0; i < n; ++i) x[i] = cells.moment[i] / cells.mass[i];
    }

    // The optimum is symmetric; remove round-off asymmetry.
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double s = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = -s;
        x[n - 1 - i] = s;
    }
    if (n % 2 == 1) x[n / 2] = 0.0;
    return detail::make_quantizer(std::move(x));
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string grid_to_text(const Quantizer1D& q) {
    std::string s = "# quantizer1d level=" + std::to_string(q.level) +
                    " distortion=" + detail::format_g17(q.distortion) + "\n";
    for (std::size_t i = 0; i < q.grid.size(); ++i)
        s += detail::format_g17(q.grid[i]) + " " + detail::format_g17(q.weights[i]) + "\n";
    return s;
}

inline Quantizer1D grid_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    auto parse_double = [&](const std::string& tok, const char* what) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (tok.empty() || *end != '\0' || !std::isfinite(v))
            throw ParseError(std::string("bad ") + what + " '" + tok + "'", lineno);
        return v;
    };

    if (!std::getline(in, line)) throw ParseError("empty grid file", 1);
    ++lineno;
    std::istringstream header(line);
    std::string hash, tag, lv, dv;
    header >> hash >> tag >> lv >> dv;
    if (hash != "#" || tag != "quantizer1d" || lv.rfind("level=", 0) != 0 || dv.rfind("distortion=", 0) != 0)
        throw ParseError("expected '# quantizer1d level=<N> distortion=<d>'", lineno);
    Quantizer1D q;
    {
        const std::string ls = lv.substr(6);
        char* end = nullptr;
        const long level = std::strtol(ls.c_str(), &end, 10);
        if (ls.empty() || *end != '\0' || level < 1) throw ParseError("bad level '" + ls + "'", lineno);
        q.level = static_cast<int>(level);
    }
    q.distortion = parse_double(dv.substr(11), "distortion");

    while (q.grid.size() < static_cast<std::size_t>(q.level)) {
        if (!std::getline(in, line))
            throw ParseError("expected " + std::to_string(q.level) + " grid rows, got " +
                                 std::to_string(q.grid.size()),
                             lineno + 1);
        ++lineno;
        std::istringstream row(line);
        std::string xs, ps, extra;
        if (!(row >> xs >> ps) || (row >> extra)) throw ParseError("expected '<x> <weight>'", lineno);
        const double x = parse_double(xs, "codepoint");
        const double p = parse_double(ps, "weight");
        if (!q.grid.empty() && !(x > q.grid.back())) throw ParseError("grid not strictly ascending", lineno);
        if (!(p > 0.0)) throw ParseError("weight must be positive", lineno);
        q.grid.push_back(x);
        q.weights.push_back(p);
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") != std::string::npos) throw ParseError("trailing data", lineno);
    }
    double total = 0.0;
    for (double p : q.weights) total += p;
    if (std::abs(total - 1.0) > 1e-12) throw ParseError("weights sum to " + detail::format_g17(total), lineno);
    return q;
}

inline void save_grid(const Quantizer1D& q, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << grid_to_text(q);
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline Quantizer1D load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return grid_from_text(ss.str());
}

}  // namespace pathquant
