#pragma once

// Recursive marginal quantization of the Euler scheme of the Markov quintuple
// X = (Y, Y^{g1}, Y^{g2}, Y^{h1}, Y^{h2}). Each step quantizes the law of
// E_k(X_hat_k, Z) with Lloyd's algorithm; no sampling is involved anywhere.
// E_k is affine in Z, so every previous point maps to a line and its Voronoi
// cells are z-intervals: the exact mode integrates Z in closed form on them.
// The quadrature mode replaces Z by a Gauss-Hermite rule instead; its nodes
// also seed the exact mode.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "pathquant/errors.hpp"
#include "pathquant/gauss_hermite.hpp"
#include "pathquant/model.hpp"
#include "pathquant/normal.hpp"
#include "pathquant/parallel.hpp"

namespace pathquant {

/// Components: y, y_g1, y_g2, y_h1, y_h2.
using Quintuple = std::array<double, 5>;

enum Component : std::size_t { kY = 0, kYg1 = 1, kYg2 = 2, kYh1 = 3, kYh2 = 4 };

/// Affine form of one Euler step, E(x, z) = p + z v.
struct EulerImage {
    Quintuple p;
    Quintuple v;
};

inline EulerImage euler_image(const ModelSpec& model, const Quintuple& x, double t, double dt) {
    if (!(dt > 0.0)) throw DomainError("Euler step must be > 0");
    const double b = model.drift(t, x[kY], x[kYg1], x[kYg2]);
    const double a = model.diffusion(t, x[kY], x[kYh1], x[kYh2]);
    const double h = std::sqrt(dt);
    EulerImage e{{x[kY] + b * dt, x[kYg1] + model.g1(t, x[kY]) * dt, x[kYg2], x[kYh1] + model.h1(t, x[kY]) * dt, x[kYh2]},
                 {a * h, 0.0, model.g2(t, x[kY]) * h, 0.0, model.h2(t, x[kY]) * h}};
    for (std::size_t c = 0; c < 5; ++c)
        if (!std::isfinite(e.p[c]) || !std::isfinite(e.v[c]))
            throw DomainError(model.name + ": Euler operator produced a non-finite component");
    return e;
}

/// One Euler step: x + dt (b, g1, 0, h1, 0) + sqrt(dt) z (a, 0, g2, 0, h2),
/// coefficients evaluated at (t, x).
inline Quintuple euler_operator(const ModelSpec& model, const Quintuple& x, double z, double t, double dt) {
    if (!(dt > 0.0)) throw DomainError("Euler step must be > 0");
    const double b = model.drift(t, x[kY], x[kYg1], x[kYg2]);
    const double a = model.diffusion(t, x[kY], x[kYh1], x[kYh2]);
    const double dw = std::sqrt(dt) * z;
    Quintuple r{x[kY] + b * dt + a * dw, x[kYg1] + model.g1(t, x[kY]) * dt, x[kYg2] + model.g2(t, x[kY]) * dw,
                x[kYh1] + model.h1(t, x[kY]) * dt, x[kYh2] + model.h2(t, x[kY]) * dw};
    for (double v : r)
        if (!std::isfinite(v)) throw DomainError(model.name + ": Euler operator produced a non-finite component");
    return r;
}

struct RmqGrid {
    std::size_t step = 0;
    std::vector<Quintuple> points;
    std::vector<double> weights;
    std::vector<std::vector<double>> transitions;  // [from previous point][to point], rows sum to 1
    std::vector<double> distortion_history;        // Lloyd iterates, nonincreasing
    double distortion = 0.0;                       // distortion of the returned grid
};

enum class RmqIntegration { exact, quadrature };

struct RmqOptions {
    std::size_t level = 32;         // N, points per grid
    RmqIntegration integration = RmqIntegration::exact;
    int quad_nodes = 16;            // K, Gauss-Hermite nodes: Z in quadrature mode, seeds in both
    int lloyd_iterations = 1000;
    double lloyd_tolerance = 1e-12;  // relative distortion decrease that stops Lloyd
    Quintuple scale{1.0, 1.0, 1.0, 1.0, 1.0};  // per-component distance weights
    unsigned threads = 1;
};

struct RmqState {
    std::string model;
    double horizon = 1.0;
    std::size_t steps = 1;
    std::size_t level = 1;
    std::vector<RmqGrid> grids;  // grids[k], k = 0..steps
};

namespace detail {

struct Atom {
    Quintuple x;
    double mass;
    std::size_t source;
    double node_weight;
};

inline double distance2(const Quintuple& a, const Quintuple& b, const Quintuple& scale) {
    double d = 0.0;
    for (std::size_t c = 0; c < 5; ++c) d += scale[c] * (a[c] - b[c]) * (a[c] - b[c]);
    return d;
}

inline std::size_t nearest_point(const Quintuple& x, const std::vector<Quintuple>& points, const Quintuple& scale) {
    std::size_t best = 0;
    double best_d = distance2(x, points[0], scale);
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d = distance2(x, points[i], scale);
        if (d < best_d) {  // strict: the lowest index wins ties
            best_d = d;
            best = i;
        }
    }
    return best;
}

inline std::vector<Quintuple> distinct(std::vector<Quintuple> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

struct Assignment {
    std::vector<std::size_t> cell;
    std::vector<double> mass;
    std::vector<Quintuple> centroid;
    double distortion = 0.0;
};

inline Assignment assign(const std::vector<Atom>& atoms, const std::vector<Quintuple>& points, const Quintuple& scale,
                         unsigned threads) {
    Assignment a;
    a.cell.resize(atoms.size());
    parallel_for(atoms.size(), threads,
                 [&](std::size_t i) { a.cell[i] = nearest_point(atoms[i].x, points, scale); });
    a.mass.assign(points.size(), 0.0);
    a.centroid.assign(points.size(), Quintuple{});
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::size_t c = a.cell[i];
        a.mass[c] += atoms[i].mass;
        for (std::size_t k = 0; k < 5; ++k) a.centroid[c][k] += atoms[i].mass * atoms[i].x[k];
        a.distortion += atoms[i].mass * distance2(atoms[i].x, points[c], scale);
    }
    for (std::size_t c = 0; c < points.size(); ++c)
        if (a.mass[c] > 0.0)
            for (double& v : a.centroid[c]) v /= a.mass[c];
    return a;
}

// Moves an empty cell's point onto the farthest atom of the cell with the
// largest distortion contribution, whose own point moves to its centroid.
// Returns false when every cell is a single location.
inline bool repair_empty(std::vector<Quintuple>& points, const Assignment& a, const std::vector<Atom>& atoms,
                         const Quintuple& scale, std::size_t empty) {
    std::vector<double> share(points.size(), 0.0), far(points.size(), -1.0);
    std::vector<std::size_t> far_atom(points.size(), 0);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        const std::size_t c = a.cell[i];
        const double d = distance2(atoms[i].x, a.centroid[c], scale);
        share[c] += atoms[i].mass * d;
        if (d > far[c]) {
            far[c] = d;
            far_atom[c] = i;
        }
    }
    std::size_t worst = points.size();
    for (std::size_t c = 0; c < points.size(); ++c)
        if (far[c] > 0.0 && (worst == points.size() || share[c] > share[worst])) worst = c;
    if (worst == points.size()) return false;
    points[worst] = a.centroid[worst];
    points[empty] = atoms[far_atom[worst]].x;
    return true;
}

// z = 0 images, then images at the Gauss-Hermite nodes from the centre outwards.
inline std::vector<Quintuple> warm_start(const ModelSpec& model, const RmqGrid& prev, const std::vector<Atom>& atoms,
                                         const std::vector<Quintuple>& unique_atoms, const GaussHermiteRule& rule,
                                         double t_k, double dt, std::size_t level) {
    std::vector<Quintuple> seeds;
    auto offer = [&](const Quintuple& q) {
        if (seeds.size() < level && std::find(seeds.begin(), seeds.end(), q) == seeds.end()) seeds.push_back(q);
    };
    for (const auto& x : prev.points) offer(euler_operator(model, x, 0.0, t_k, dt));
    const std::size_t k = rule.nodes.size();
    for (std::size_t r = 0; r < (k + 1) / 2 && seeds.size() < level; ++r) {
        const std::size_t lo = (k - 1) / 2 - r, hi = k / 2 + r;
        for (std::size_t j = 0; j < prev.points.size() && seeds.size() < level; ++j) {
            offer(atoms[j * k + lo].x);
            offer(atoms[j * k + hi].x);
        }
    }
    for (std::size_t i = 0; i < unique_atoms.size() && seeds.size() < level; ++i) offer(unique_atoms[i]);
    return seeds;
}

// Centroids of N equal-mass slices of the atoms ordered along the leading
// principal axis of the (scaled) mixture.
inline std::vector<Quintuple> axis_start(const std::vector<Atom>& atoms, const std::vector<Quintuple>& unique_atoms,
                                         const RmqOptions& opts) {
    const std::size_t level = opts.level;
    Quintuple root{}, mean{};
    double total = 0.0;
    for (std::size_t c = 0; c < 5; ++c) root[c] = std::sqrt(opts.scale[c]);
    for (const auto& a : atoms) {
        total += a.mass;
        for (std::size_t c = 0; c < 5; ++c) mean[c] += a.mass * root[c] * a.x[c];
    }
    for (double& m : mean) m /= total;
    std::array<std::array<double, 5>, 5> cov{};
    for (const auto& a : atoms)
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                cov[i][j] += a.mass * (root[i] * a.x[i] - mean[i]) * (root[j] * a.x[j] - mean[j]);
    Quintuple v{1.0, 0.5, 0.25, 0.125, 0.0625};
    for (int it = 0; it < 500; ++it) {
        Quintuple w{};
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) w[i] += cov[i][j] * v[j];
        double norm = 0.0;
        for (double x : w) norm += x * x;
        if (!(norm > 0.0)) break;
        for (std::size_t i = 0; i < 5; ++i) v[i] = w[i] / std::sqrt(norm);
    }
    std::vector<double> proj(atoms.size(), 0.0);
    for (std::size_t i = 0; i < atoms.size(); ++i)
        for (std::size_t c = 0; c < 5; ++c) proj[i] += v[c] * root[c] * atoms[i].x[c];
    std::vector<std::size_t> order(atoms.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return proj[l] < proj[r]; });

    std::vector<Quintuple> sum(level, Quintuple{});
    std::vector<double> mass(level, 0.0);
    double before = 0.0;
    for (std::size_t i : order) {
        const auto g = std::min(level - 1, static_cast<std::size_t>((before + atoms[i].mass / 2.0) / total *
                                                                    static_cast<double>(level)));
        before += atoms[i].mass;
        mass[g] += atoms[i].mass;
        for (std::size_t c = 0; c < 5; ++c) sum[g][c] += atoms[i].mass * atoms[i].x[c];
    }
    std::vector<Quintuple> seeds;
    auto offer = [&](const Quintuple& q) {
        if (seeds.size() < level && std::find(seeds.begin(), seeds.end(), q) == seeds.end()) seeds.push_back(q);
    };
    for (std::size_t g = 0; g < level; ++g)
        if (mass[g] > 0.0) {
            for (double& x : sum[g]) x /= mass[g];
            offer(sum[g]);
        }
    for (std::size_t i = 0; i < unique_atoms.size() && seeds.size() < level; ++i) offer(unique_atoms[i]);
    return seeds;
}

struct LloydRun {
    Assignment a;
    std::vector<double> history;
};

// Lloyd's algorithm on the atoms from `points`; empty cells are repaired and
// restart the (monotone) distortion history.
inline LloydRun lloyd(const std::vector<Atom>& atoms, std::vector<Quintuple> points, const RmqOptions& opts,
                      std::size_t step) {
    LloydRun run;
    int repairs = 0;
    for (int it = 0;; ++it) {
        run.a = assign(atoms, points, opts.scale, opts.threads);
        const auto empty = std::find(run.a.mass.begin(), run.a.mass.end(), 0.0);
        if (empty != run.a.mass.end()) {
            if (++repairs > static_cast<int>(2 * opts.level) + 8 ||
                !repair_empty(points, run.a, atoms, opts.scale, static_cast<std::size_t>(empty - run.a.mass.begin())))
                throw DegenerateGridError("step " + std::to_string(step) + ": empty Voronoi cell could not be repaired",
                                          step);
            run.history.clear();
            continue;
        }
        const bool settled =
            !run.history.empty() && run.history.back() - run.a.distortion <= opts.lloyd_tolerance * run.history.back();
        run.history.push_back(run.a.distortion);
        if (settled || it >= opts.lloyd_iterations + repairs) break;
        points = run.a.centroid;
    }
    return run;
}

// ---- exact mode ----

struct Line {
    EulerImage e;
    double mass;
};

struct Segment {
    std::size_t cell;
    double lo, hi;
    double m0, m1, m2;  // E[Z^k; lo < Z <= hi], k = 0, 1, 2
};

inline double dot(const Quintuple& a, const Quintuple& b, const Quintuple& scale) {
    double d = 0.0;
    for (std::size_t c = 0; c < 5; ++c) d += scale[c] * a[c] * b[c];
    return d;
}

inline bool is_point(const EulerImage& e) {
    return std::all_of(e.v.begin(), e.v.end(), [](double x) { return x == 0.0; });
}

inline Segment make_segment(std::size_t cell, double lo, double hi) {
    const double m0 = normal::mass(lo, hi);
    const double flo = normal::pdf(lo), fhi = normal::pdf(hi);
    const double tlo = std::isinf(lo) ? 0.0 : lo * flo, thi = std::isinf(hi) ? 0.0 : hi * fhi;
    return {cell, lo, hi, m0, flo - fhi, m0 + tlo - thi};
}

// Voronoi cells of `points` along z -> p + z v: the lower envelope of the
// lines z -> |p - x|^2 + 2 z <v, p - x>, the common |v|^2 z^2 dropped.
inline std::vector<Segment> segments_of(const EulerImage& e, const std::vector<Quintuple>& points, const Quintuple& scale) {
    if (is_point(e)) return {Segment{nearest_point(e.p, points, scale), -INFINITY, INFINITY, 1.0, 0.0, 1.0}};
    const std::size_t n = points.size();
    std::vector<double> slope(n), icpt(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        Quintuple d;
        for (std::size_t c = 0; c < 5; ++c) d[c] = e.p[c] - points[i][c];
        slope[i] = 2.0 * dot(e.v, d, scale);
        icpt[i] = dot(d, d, scale);
        order[i] = i;
    }
    // Steepest first: it is the lowest line as z -> -inf.
    std::sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        if (slope[l] != slope[r]) return slope[l] > slope[r];
        if (icpt[l] != icpt[r]) return icpt[l] < icpt[r];
        return l < r;
    });
    auto cross = [&](std::size_t l, std::size_t r) { return (icpt[r] - icpt[l]) / (slope[l] - slope[r]); };
    std::vector<std::size_t> hull;
    for (std::size_t i : order) {
        if (!hull.empty() && slope[hull.back()] == slope[i]) continue;
        while (hull.size() >= 2 && cross(hull[hull.size() - 2], i) <= cross(hull[hull.size() - 2], hull.back()))
            hull.pop_back();
        hull.push_back(i);
    }
    std::vector<Segment> out;
    double lo = -INFINITY;
    for (std::size_t h = 0; h < hull.size(); ++h) {
        const double hi = h + 1 < hull.size() ? cross(hull[h], hull[h + 1]) : INFINITY;
        if (hi > lo) {
            out.push_back(make_segment(hull[h], lo, hi));
            lo = hi;
        }
    }
    return out;
}

struct LineAssignment {
    std::vector<std::vector<Segment>> segments;  // per line
    std::vector<double> mass;
    std::vector<Quintuple> centroid;
    std::vector<double> share;  // distortion contribution per cell
    double distortion = 0.0;
};

inline double segment_distortion(const Line& l, const Segment& s, const Quintuple& x, const Quintuple& scale) {
    Quintuple d;
    for (std::size_t c = 0; c < 5; ++c) d[c] = l.e.p[c] - x[c];
    const double v = dot(d, d, scale) * s.m0 + 2.0 * dot(l.e.v, d, scale) * s.m1 + dot(l.e.v, l.e.v, scale) * s.m2;
    return std::max(v, 0.0);
}

inline LineAssignment assign_lines(const std::vector<Line>& lines, const std::vector<Quintuple>& points,
                                   const Quintuple& scale, unsigned threads) {
    LineAssignment a;
    a.segments.resize(lines.size());
    parallel_for(lines.size(), threads, [&](std::size_t j) { a.segments[j] = segments_of(lines[j].e, points, scale); });
    a.mass.assign(points.size(), 0.0);
    a.centroid.assign(points.size(), Quintuple{});
    a.share.assign(points.size(), 0.0);
    for (std::size_t j = 0; j < lines.size(); ++j)
        for (const auto& sg : a.segments[j]) {
            const double w = lines[j].mass;
            a.mass[sg.cell] += w * sg.m0;
            for (std::size_t c = 0; c < 5; ++c) a.centroid[sg.cell][c] += w * (lines[j].e.p[c] * sg.m0 + lines[j].e.v[c] * sg.m1);
            const double d = w * segment_distortion(lines[j], sg, points[sg.cell], scale);
            a.share[sg.cell] += d;
            a.distortion += d;
        }
    for (std::size_t c = 0; c < points.size(); ++c)
        if (a.mass[c] > 0.0)
            for (double& v : a.centroid[c]) v /= a.mass[c];
    return a;
}

// New location for an empty (or missing) point: the conditional mean of one
// half of a segment, or a point image, of the cell with the largest
// distortion share, whichever lies farthest from that cell's centroid.
inline bool split_cell(std::vector<Quintuple>& points, const LineAssignment& a, const std::vector<Line>& lines,
                       const Quintuple& scale, std::size_t target) {
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < a.mass.size(); ++c)
        if (a.mass[c] > 0.0 && a.share[c] > 0.0) cells.push_back(c);
    std::stable_sort(cells.begin(), cells.end(), [&](std::size_t l, std::size_t r) { return a.share[l] > a.share[r]; });
    for (std::size_t c : cells) {
        Quintuple best{};
        double best_d = 0.0;
        auto consider = [&](const Quintuple& q) {
            if (std::find(points.begin(), points.end(), q) != points.end()) return;
            const double d = distance2(q, a.centroid[c], scale);
            if (d > best_d) {
                best_d = d;
                best = q;
            }
        };
        for (std::size_t j = 0; j < lines.size(); ++j)
            for (const auto& sg : a.segments[j]) {
                if (sg.cell != c || !(sg.m0 > 0.0)) continue;
                const auto& e = lines[j].e;
                if (is_point(e)) {
                    consider(e.p);
                    continue;
                }
                const double mid = sg.lo >= 0.0 ? -normal::quantile(normal::sf(sg.lo) - sg.m0 / 2.0)
                                                : normal::quantile(normal::cdf(sg.lo) + sg.m0 / 2.0);
                const double half = sg.m0 / 2.0;
                for (double z : {(normal::pdf(sg.lo) - normal::pdf(mid)) / half, (normal::pdf(mid) - normal::pdf(sg.hi)) / half}) {
                    if (!std::isfinite(z)) continue;
                    Quintuple q;
                    for (std::size_t k = 0; k < 5; ++k) q[k] = e.p[k] + z * e.v[k];
                    consider(q);
                }
            }
        if (best_d > 0.0) {
            points[c] = a.centroid[c];
            if (target == points.size())
                points.push_back(best);
            else
                points[target] = best;
            return true;
        }
    }
    return false;
}

struct LineRun {
    LineAssignment a;
    std::vector<Quintuple> points;
    std::vector<double> history;
};

// Lloyd's algorithm on the exact law. Starts with fewer than N points are
// completed by splitting; points that cannot be given mass are dropped.
inline LineRun lloyd_lines(const std::vector<Line>& lines, std::vector<Quintuple> points, const RmqOptions& opts,
                           std::size_t step) {
    LineRun run;
    int repairs = 0;
    std::size_t want = opts.level;
    for (int it = 0;; ++it) {
        run.a = assign_lines(lines, points, opts.scale, opts.threads);
        const auto empty = std::find(run.a.mass.begin(), run.a.mass.end(), 0.0);
        if (empty != run.a.mass.end() || points.size() < want) {
            if (++repairs > static_cast<int>(4 * opts.level) + 8)
                throw DegenerateGridError("step " + std::to_string(step) + ": empty Voronoi cell could not be repaired",
                                          step);
            const std::size_t target =
                empty != run.a.mass.end() ? static_cast<std::size_t>(empty - run.a.mass.begin()) : points.size();
            if (!split_cell(points, run.a, lines, opts.scale, target)) {
                // The law has fewer than N support points left to separate.
                if (target < points.size()) points.erase(points.begin() + static_cast<std::ptrdiff_t>(target));
                want = points.size();
            }
            run.history.clear();
            continue;
        }
        const bool settled =
            !run.history.empty() && run.history.back() - run.a.distortion <= opts.lloyd_tolerance * run.history.back();
        run.history.push_back(run.a.distortion);
        if (settled || it >= opts.lloyd_iterations + repairs) break;
        points = run.a.centroid;
    }
    run.points = std::move(points);
    return run;
}

}  // namespace detail

/// Quantizes the one-step image of `prev` (time t_k) at time t_k + dt.
inline RmqGrid rmq_step(const ModelSpec& model, const RmqGrid& prev, double t_k, double dt, const RmqOptions& opts,
                        const GaussHermiteRule& rule) {
    if (opts.level < 1) throw DomainError("RMQ level must be >= 1");
    const std::size_t next_step = prev.step + 1;
    std::vector<detail::Atom> atoms;
    atoms.reserve(prev.points.size() * rule.nodes.size());
    for (std::size_t j = 0; j < prev.points.size(); ++j)
        for (std::size_t m = 0; m < rule.nodes.size(); ++m)
            atoms.push_back({euler_operator(model, prev.points[j], rule.nodes[m], t_k, dt), prev.weights[j] * rule.weights[m],
                             j, rule.weights[m]});

    std::vector<Quintuple> all;
    for (const auto& a : atoms) all.push_back(a.x);
    const auto unique_atoms = detail::distinct(all);

    RmqGrid grid;
    grid.step = next_step;
    grid.transitions.assign(prev.points.size(), {});

    if (opts.integration == RmqIntegration::quadrature) {
        detail::LloydRun run;
        if (unique_atoms.size() <= opts.level) {
            run = detail::lloyd(atoms, unique_atoms, opts, next_step);
        } else {
            // Two deterministic starts; the lower final distortion wins, the warm start on ties.
            run = detail::lloyd(atoms, detail::warm_start(model, prev, atoms, unique_atoms, rule, t_k, dt, opts.level),
                                opts, next_step);
            auto other = detail::lloyd(atoms, detail::axis_start(atoms, unique_atoms, opts), opts, next_step);
            if (other.history.back() < run.history.back()) run = std::move(other);
        }
        const auto& a = run.a;
        grid.distortion_history = std::move(run.history);
        // Report the centroids of the final partition, so that grid weights,
        // transitions and points describe one and the same quantization.
        grid.points = a.centroid;
        grid.weights = a.mass;
        for (std::size_t i = 0; i < atoms.size(); ++i)
            grid.distortion += atoms[i].mass * detail::distance2(atoms[i].x, grid.points[a.cell[i]], opts.scale);
        for (auto& row : grid.transitions) row.assign(grid.points.size(), 0.0);
        for (std::size_t i = 0; i < atoms.size(); ++i) grid.transitions[atoms[i].source][a.cell[i]] += atoms[i].node_weight;
    } else {
        std::vector<detail::Line> lines;
        for (std::size_t j = 0; j < prev.points.size(); ++j)
            lines.push_back({euler_image(model, prev.points[j], t_k, dt), prev.weights[j]});
        detail::LineRun run;
        if (unique_atoms.size() <= opts.level) {
            run = detail::lloyd_lines(lines, unique_atoms, opts, next_step);
        } else {
            run = detail::lloyd_lines(
                lines, detail::warm_start(model, prev, atoms, unique_atoms, rule, t_k, dt, opts.level), opts, next_step);
            auto other = detail::lloyd_lines(lines, detail::axis_start(atoms, unique_atoms, opts), opts, next_step);
            if (other.history.back() < run.history.back()) run = std::move(other);
        }
        const auto& a = run.a;
        grid.distortion_history = std::move(run.history);
        grid.points = a.centroid;
        grid.weights = a.mass;
        for (auto& row : grid.transitions) row.assign(grid.points.size(), 0.0);
        for (std::size_t j = 0; j < lines.size(); ++j)
            for (const auto& sg : a.segments[j]) {
                grid.transitions[j][sg.cell] += sg.m0;
                grid.distortion += lines[j].mass * detail::segment_distortion(lines[j], sg, grid.points[sg.cell], opts.scale);
            }
    }
    grid.distortion_history.push_back(std::min(grid.distortion, grid.distortion_history.back()));
    return grid;
}

inline RmqGrid rmq_initial_grid(const ModelSpec& model) {
    RmqGrid g;
    g.points = {Quintuple{model.y0, 0.0, 0.0, 0.0, 0.0}};
    g.weights = {1.0};
    return g;
}

inline RmqState run_rmq(const ModelSpec& model, double horizon, std::size_t steps, const RmqOptions& opts) {
    if (steps < 1) throw DomainError("RMQ needs at least one step");
    if (!(horizon > 0.0)) throw DomainError("horizon must be > 0");
    const auto rule = gauss_hermite(opts.quad_nodes);
    const double dt = horizon / static_cast<double>(steps);
    RmqState state{model.name, horizon, steps, opts.level, {rmq_initial_grid(model)}};
    for (std::size_t k = 0; k < steps; ++k) {
        try {
            state.grids.push_back(rmq_step(model, state.grids.back(), static_cast<double>(k) * dt, dt, opts, rule));
        } catch (const DegenerateGridError&) {
            throw;
        } catch (const Error& e) {
            throw DegenerateGridError("step " + std::to_string(k + 1) + ": " + e.what(), k + 1);
        }
    }
    return state;
}

inline double marginal_expectation(const RmqState& state, std::size_t k, const std::function<double(const Quintuple&)>& payoff) {
    if (k >= state.grids.size()) throw IndexError("RMQ step " + std::to_string(k) + " beyond horizon");
    const auto& g = state.grids[k];
    double s = 0.0;
    for (std::size_t j = 0; j < g.points.size(); ++j) s += g.weights[j] * payoff(g.points[j]);
    return s;
}

inline void write_rmq_grid_csv(std::ostream& out, const RmqGrid& g) {
    out << "k,j,weight,y,y_g1,y_g2,y_h1,y_h2\n";
    char buf[320];
    for (std::size_t j = 0; j < g.points.size(); ++j) {
        const auto& p = g.points[j];
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", g.step, j, g.weights[j], p[0], p[1],
                      p[2], p[3], p[4]);
        out << buf;
    }
}

inline void write_rmq_transitions_csv(std::ostream& out, const RmqState& s) {
    out << "k,from,to,prob\n";
    char buf[128];
    for (const auto& g : s.grids)
        for (std::size_t from = 0; from < g.transitions.size(); ++from)
            for (std::size_t to = 0; to < g.transitions[from].size(); ++to)
                if (g.transitions[from][to] > 0.0) {
                    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", g.step, from, to, g.transitions[from][to]);
                    out << buf;
                }
}

}  // namespace pathquant
