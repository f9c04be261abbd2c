#pragma once

// Command implementations behind the pathquant executable. Each command
// returns a process exit code; see exit_code() for the error mapping.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pathquant/brownian.hpp"
#include "pathquant/codeword.hpp"
#include "pathquant/config.hpp"
#include "pathquant/errors.hpp"
#include "pathquant/pricing.hpp"
#include "pathquant/quant1d.hpp"
#include "pathquant/rmq.hpp"

namespace pathquant::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kIo = 2, kValidation = 3, kIntegration = 4, kRmq = 5, kInternal = 1 };

struct Globals {
    std::optional<std::string> config;
    std::optional<std::string> out;  // else output.directory, else "."
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
};

/// Runs fn and maps library errors onto exit codes, reporting on err.
inline int guarded(std::ostream& err, const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const DegenerateGridError& e) {
        err << "error: " << e.what() << "\n";
        return kRmq;
    } catch (const ParseError& e) {
        err << "error: config " << e.what() << "\n";
        return kValidation;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const UnsupportedOperation& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const IndexError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const IntegrationBlowup& e) {
        err << "error: " << e.what() << "\n";
        return kIntegration;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return kIntegration;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kIntegration;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kInternal;
    }
}

// ---------------------------------------------------------------------------
// Files

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << content;
    f.close();
    if (!f) throw IoError("write failed for " + path.string());
}

/// Exclusive marker file guarding an output directory for one run.
class OutputLock {
public:
    explicit OutputLock(const fs::path& dir) : path_(dir / ".pathquant.lock") {
        ensure_directory(dir);
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f) {
            if (fs::exists(path_)) throw IoError("output directory " + dir.string() + " is locked by another run");
            throw IoError("cannot create lock file in " + dir.string());
        }
        std::fclose(f);
    }
    ~OutputLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    fs::path path_;
};

inline std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string hash_line(const Config& c) { return "# config_hash=" + c.hash() + "\n"; }

// ---------------------------------------------------------------------------
// Grid cache

/// PATHQUANT_CACHE, else quantizer.cache, else ./pathquant-cache.
inline fs::path cache_directory(const Config* c) {
    if (const char* env = std::getenv("PATHQUANT_CACHE"); env && *env) return env;
    if (c && c->has("quantizer", "cache")) return c->text("quantizer", "cache");
    return "pathquant-cache";
}

inline fs::path grid_file(const fs::path& dir, int level) {
    char name[40];
    std::snprintf(name, sizeof name, "normal_%04d.txt", level);
    return dir / name;
}

/// Loads a cached grid, or computes and stores it. Returns whether it was a cache hit.
inline bool ensure_grid(const fs::path& dir, int level, Quantizer1D* out = nullptr) {
    const auto file = grid_file(dir, level);
    if (fs::exists(file)) {
        try {
            auto q = load_grid(file.string());
            if (q.level == level) {
                if (out) *out = std::move(q);
                return true;
            }
        } catch (const Error&) {
            // unreadable or stale entry: recompute below
        }
    }
    auto q = optimal_grid(level);
    save_grid(q, file.string());
    if (out) *out = std::move(q);
    return false;
}

inline GridSource cached_source(const fs::path& dir) {
    ensure_directory(dir);
    return [dir](int level) {
        Quantizer1D q;
        ensure_grid(dir, level, &q);
        return q;
    };
}

inline std::pair<int, int> parse_level_range(const std::string& text) {
    const auto dots = text.find("..");
    try {
        std::size_t used = 0;
        if (dots == std::string::npos) {
            const int v = std::stoi(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            return {v, v};
        }
        const std::string a = text.substr(0, dots), b = text.substr(dots + 2);
        const int lo = std::stoi(a, &used);
        if (used != a.size()) throw std::invalid_argument(text);
        const int hi = std::stoi(b, &used);
        if (used != b.size()) throw std::invalid_argument(text);
        return {lo, hi};
    } catch (const std::logic_error&) {
        throw ValidationError("--levels expects a..b, got '" + text + "'");
    }
}

inline int cmd_grids(const std::string& levels, const fs::path& dir, std::ostream& out) {
    const auto [lo, hi] = parse_level_range(levels);
    if (lo < 1 || hi < lo) throw ValidationError("--levels needs 1 <= a <= b");
    ensure_directory(dir);
    int hits = 0, computed = 0;
    for (int n = lo; n <= hi; ++n) {
        try {
            (ensure_grid(dir, n) ? hits : computed) += 1;
        } catch (const ConvergenceError& e) {
            throw IoError("level " + std::to_string(n) + ": " + e.what());
        }
    }
    out << "grids " << lo << ".." << hi << " in " << dir.string() << ": " << computed << " computed, " << hits
        << " cached\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// Config helpers

inline Config load_config(const Globals& g) {
    if (!g.config) throw ValidationError("--config is required for this command");
    auto c = Config::load(*g.config);
    if (g.seed) c.set("scheme", "seed", std::to_string(*g.seed));
    return c;
}

inline fs::path output_directory(const Globals& g, const Config& c) {
    if (g.out) return *g.out;
    return c.text_or("output", "directory", ".");
}

inline void report(const std::vector<Diagnostic>& ds, std::ostream& err) {
    for (const auto& d : ds)
        if (d.severity == Diagnostic::Severity::warning) err << "warning: " << d.message << "\n";
}

inline Method integrator(const Config& c) {
    const auto name = c.text_or("scheme", "integrator", "rk4");
    if (name == "rk4") return Method::rk4;
    if (name == "euler") return Method::euler;
    throw ValidationError("scheme.integrator must be rk4 or euler, got '" + name + "'");
}

inline std::size_t positive_count(const Config& c, const std::string& section, const std::string& key) {
    const long v = c.integer(section, key);
    if (v < 1) throw ValidationError(section + "." + key + " must be >= 1");
    return static_cast<std::size_t>(v);
}

inline BitAllocation allocation_from(const Config& c, double horizon, const GridSource& source) {
    if (c.has("quantizer", "allocation")) {
        std::vector<int> levels;
        for (double v : c.numbers("quantizer", "allocation")) {
            if (v < 1 || v != static_cast<double>(static_cast<int>(v)))
                throw ValidationError("quantizer.allocation entries must be integers >= 1");
            levels.push_back(static_cast<int>(v));
        }
        long product = 1;
        for (int n : levels) product *= n;
        const long budget = c.has("quantizer", "budget") ? c.integer("quantizer", "budget") : product;
        if (product > budget) throw ValidationError("quantizer.allocation product exceeds quantizer.budget");
        return normalize_allocation(levels, budget);
    }
    if (!c.has("quantizer", "budget")) throw ValidationError("missing quantizer.budget (or quantizer.allocation)");
    const long budget = c.integer("quantizer", "budget");
    if (budget < 1) throw ValidationError("quantizer.budget must be >= 1");
    return allocate_levels(budget, horizon, static_cast<int>(c.integer_or("quantizer", "max_length", 8)), source);
}

inline double single_horizon(const Config& c) {
    const auto ts = c.numbers("market", "T");
    if (ts.size() != 1) throw ValidationError("market.T must be a single value for this command");
    return ts[0];
}

// ---------------------------------------------------------------------------
// quantize

inline int cmd_quantize(const Globals& g, std::ostream& err) {
    const auto cfg = load_config(g);
    if (cfg.text("model", "name") == "platen" && cfg.numbers("model", "lambda").size() != 1)
        throw ValidationError("model.lambda must be a single value for quantize");
    const auto model = model_from_config(cfg);
    report(model.diagnostics, err);
    const double horizon = single_horizon(cfg);
    const std::size_t steps = positive_count(cfg, "scheme", "n");
    const auto method = integrator(cfg);
    const auto source = cached_source(cache_directory(&cfg));
    const ProductQuantizer pq(horizon, allocation_from(cfg, horizon, source), source);

    const auto out_dir = output_directory(g, cfg);
    OutputLock lock(out_dir);
    const auto bundle = integrate_bundle(model.spec, pq, steps, method, g.threads);
    if (bundle.lost_weight() > 1e-6)
        throw IntegrationBlowup(std::to_string(bundle.failures.size()) + " codewords failed, lost weight " +
                                    g17(bundle.lost_weight()) + " exceeds 1e-6; first: " + bundle.failures.front().message,
                                bundle.failures.front().index);
    for (const auto& f : bundle.failures) err << "warning: codeword " << f.index << " dropped: " << f.message << "\n";
    std::size_t clamps = 0;
    for (const auto& p : bundle.paths) clamps += p.clamp_events;
    if (clamps) err << "warning: " << clamps << " state clamp events at floor " << kStateFloor << "\n";

    std::ostringstream csv;
    csv << hash_line(cfg);
    write_bundle_csv(csv, bundle);
    write_file(out_dir / "bundle.csv", csv.str());
    return kOk;
}

// ---------------------------------------------------------------------------
// price

inline int cmd_price(const Globals& g, std::ostream& err) {
    const auto cfg = load_config(g);
    if (cfg.text("model", "name") != "platen") throw ValidationError("price supports model.name = platen only");
    const auto lambdas = cfg.numbers("model", "lambda");
    const auto horizons = cfg.numbers("market", "T");
    const auto methods = cfg.list("scheme", "method");
    for (const auto& m : methods)
        if (m != "fq" && m != "mc") throw ValidationError("scheme.method entries must be fq or mc, got '" + m + "'");
    const bool want_fq = std::find(methods.begin(), methods.end(), "fq") != methods.end();
    const bool want_mc = std::find(methods.begin(), methods.end(), "mc") != methods.end();
    const bool timing = cfg.flag_or("output", "timing", false);
    std::vector<std::string> formats{"csv"};
    if (cfg.has("output", "formats")) formats = cfg.list("output", "formats");
    const bool terminal = std::find(formats.begin(), formats.end(), "terminal") != formats.end();

    MarketParams mkt;
    mkt.s0 = cfg.number("market", "s0");
    mkt.r = cfg.number("market", "r");
    mkt.steps = positive_count(cfg, "scheme", "n");
    const auto method = integrator(cfg);
    std::size_t paths = 0;
    std::uint64_t seed = 0;
    if (want_mc) {
        paths = positive_count(cfg, "scheme", "M");
        seed = static_cast<std::uint64_t>(cfg.integer("scheme", "seed"));
    }
    for (double lambda : lambdas) {
        const auto p = platen_params(cfg, lambda);
        const auto ds = validate(p);
        if (has_errors(ds)) throw ValidationError("platen: " + describe(ds));
        report(ds, err);
    }
    for (double t : horizons)
        if (!(t > 0.0)) throw ValidationError("market.T entries must be > 0");
    validate(MarketParams{mkt.s0, mkt.r, 1.0, mkt.steps});

    std::optional<GridSource> source;
    std::map<double, ProductQuantizer> quantizers;
    if (want_fq) {
        source = cached_source(cache_directory(&cfg));
        for (double t : horizons) quantizers.emplace(t, ProductQuantizer(t, allocation_from(cfg, t, *source), *source));
    }

    const auto out_dir = output_directory(g, cfg);
    OutputLock lock(out_dir);
    std::ostringstream csv;
    csv << hash_line(cfg) << "method,lambda,T,N,n,value,ci_low,ci_high,runtime_s\n";
    auto row = [&](const PriceResult& r, double lambda, double t) {
        csv << r.method << ',' << g17(lambda) << ',' << g17(t) << ',' << r.used << ',' << mkt.steps << ','
            << g17(r.value) << ',' << (r.ci_low ? g17(*r.ci_low) : "") << ',' << (r.ci_high ? g17(*r.ci_high) : "")
            << ',' << g17(timing ? r.runtime : 0.0) << '\n';
    };
    std::size_t clamps = 0;
    for (double lambda : lambdas) {
        const auto p = platen_params(cfg, lambda);
        for (double t : horizons) {
            mkt.horizon = t;
            if (want_fq) {
                const auto& pq = quantizers.at(t);
                const auto r = price_zcb_fq(p, pq, mkt, method, g.threads);
                if (r.lost_weight > 0.0)
                    err << "warning: fq lambda=" << lambda << " T=" << t << " renormalized over surviving codewords, lost weight "
                        << r.lost_weight << "\n";
                clamps += r.clamp_events;
                row(r, lambda, t);
                if (terminal) {
                    std::ostringstream dist;
                    dist << hash_line(cfg) << "value,weight\n";
                    for (const auto& [v, w] : terminal_distribution(p, pq, mkt, method, g.threads))
                        dist << g17(v) << ',' << g17(w) << '\n';
                    write_file(out_dir / ("terminal_lambda" + g17(lambda) + "_T" + g17(t) + ".csv"), dist.str());
                }
            }
            if (want_mc) {
                const auto r = price_zcb_mc(p, mkt, paths, seed, g.threads);
                clamps += r.clamp_events;
                row(r, lambda, t);
            }
        }
    }
    if (clamps) err << "warning: " << clamps << " state clamp events at floor " << kStateFloor << "\n";
    write_file(out_dir / "prices.csv", csv.str());
    return kOk;
}

// ---------------------------------------------------------------------------
// rmq

inline std::size_t component_index(const std::string& name) {
    static const std::map<std::string, std::size_t> names{
        {"y", kY}, {"y_g1", kYg1}, {"y_g2", kYg2}, {"y_h1", kYh1}, {"y_h2", kYh2}};
    const auto it = names.find(name);
    if (it == names.end()) throw ValidationError("--expect must be one of y, y_g1, y_g2, y_h1, y_h2");
    return it->second;
}

inline RmqOptions rmq_options(const Config& c, unsigned threads) {
    RmqOptions o;
    o.level = positive_count(c, "scheme", "N");
    const auto integration = c.text_or("scheme", "integration", "exact");
    if (integration == "quadrature")
        o.integration = RmqIntegration::quadrature;
    else if (integration != "exact")
        throw ValidationError("scheme.integration must be exact or quadrature");
    o.quad_nodes = static_cast<int>(c.integer_or("scheme", "K", 16));
    if (o.quad_nodes < 1 || o.quad_nodes > 512) throw ValidationError("scheme.K must be in 1..512");
    o.lloyd_iterations = static_cast<int>(c.integer_or("scheme", "lloyd_iterations", RmqOptions{}.lloyd_iterations));
    if (o.lloyd_iterations < 1) throw ValidationError("scheme.lloyd_iterations must be >= 1");
    if (c.has("scheme", "scale")) {
        const auto s = c.numbers("scheme", "scale");
        if (s.size() != 5) throw ValidationError("scheme.scale needs 5 entries");
        for (std::size_t k = 0; k < 5; ++k) {
            if (s[k] < 0.0) throw ValidationError("scheme.scale entries must be >= 0");
            o.scale[k] = s[k];
        }
    }
    o.threads = threads;
    return o;
}

inline int cmd_rmq(const Globals& g, const std::optional<std::string>& expect, const std::optional<std::size_t>& at,
                   std::ostream& out, std::ostream& err) {
    const auto cfg = load_config(g);
    if (cfg.text("model", "name") == "platen" && cfg.numbers("model", "lambda").size() != 1)
        throw ValidationError("model.lambda must be a single value for rmq");
    const auto model = model_from_config(cfg);
    report(model.diagnostics, err);
    const double horizon = single_horizon(cfg);
    const std::size_t steps = positive_count(cfg, "scheme", "n");
    const auto opts = rmq_options(cfg, g.threads);
    std::optional<std::size_t> component;
    if (expect) component = component_index(*expect);
    if (at && *at > steps) throw ValidationError("--at " + std::to_string(*at) + " beyond scheme.n");

    const auto out_dir = output_directory(g, cfg);
    OutputLock lock(out_dir);
    const auto state = run_rmq(model.spec, horizon, steps, opts);
    for (const auto& grid : state.grids) {
        std::ostringstream csv;
        csv << hash_line(cfg);
        write_rmq_grid_csv(csv, grid);
        char name[40];
        std::snprintf(name, sizeof name, "rmq_grid_%04zu.csv", grid.step);
        write_file(out_dir / name, csv.str());
    }
    std::ostringstream tr;
    tr << hash_line(cfg);
    write_rmq_transitions_csv(tr, state);
    write_file(out_dir / "rmq_transitions.csv", tr.str());

    if (component) {
        const std::size_t k = at.value_or(steps);
        const std::size_t c = *component;
        out << g17(marginal_expectation(state, k, [c](const Quintuple& q) { return q[c]; })) << "\n";
    }
    return kOk;
}

}  // namespace pathquant::cli
