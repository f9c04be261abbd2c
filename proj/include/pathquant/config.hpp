#pragma once

// Run configuration: flat sections of key = value lines.
//
//   [model]
//   name = platen
//   lambda = 1, 2, 3      # comma lists sweep a parameter
//
// '#' and ';' start comments. Keys are case sensitive.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pathquant/errors.hpp"
#include "pathquant/models.hpp"

namespace pathquant {

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"model",
         {"name", "beta0", "beta1", "beta2", "lambda1", "lambda2", "r1_0", "r2_0", "alpha", "beta", "sigma", "xi", "lambda",
          "eta", "y0"}},
        {"quantizer", {"budget", "allocation", "max_length", "cache"}},
        {"scheme", {"method", "n", "integrator", "K", "M", "seed", "N", "lloyd_iterations", "scale", "integration"}},
        {"market", {"s0", "r", "T"}},
        {"output", {"directory", "formats", "timing"}},
    };
    return schema;
}

}  // namespace detail

class Config {
public:
    using Section = std::map<std::string, std::string>;

    static Config parse(const std::string& text) {
        Config c;
        std::istringstream in(text);
        std::string raw, section;
        int line = 0;
        while (std::getline(in, raw)) {
            ++line;
            const auto cut = raw.find_first_of("#;");
            const std::string s = detail::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
            if (s.empty()) continue;
            if (s.front() == '[') {
                if (s.back() != ']') throw ParseError("unterminated section header", line);
                section = detail::trim(s.substr(1, s.size() - 2));
                if (!detail::config_schema().count(section)) throw ParseError("unknown section [" + section + "]", line);
                c.sections_[section];
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw ParseError("expected key = value", line);
            if (section.empty()) throw ParseError("key outside a section", line);
            const std::string key = detail::trim(s.substr(0, eq));
            const std::string value = detail::trim(s.substr(eq + 1));
            if (key.empty()) throw ParseError("empty key", line);
            if (!detail::config_schema().at(section).count(key))
                throw ParseError("unknown key " + section + "." + key, line);
            if (c.sections_[section].count(key)) throw ParseError("duplicate key " + section + "." + key, line);
            c.sections_[section][key] = canonical_value(value);
        }
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read config " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    /// Canonical text: sections and keys sorted, lists as "a, b".
    std::string serialize() const {
        std::string out;
        for (const auto& [name, keys] : sections_) {
            if (!out.empty()) out += "\n";
            out += "[" + name + "]\n";
            for (const auto& [k, v] : keys) out += k + " = " + v + "\n";
        }
        return out;
    }

    /// FNV-1a 64 of the canonical text, as 16 hex digits.
    std::string hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char ch : serialize()) {
            h ^= ch;
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    bool operator==(const Config&) const = default;

    bool has(const std::string& section, const std::string& key) const {
        const auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key);
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        if (!detail::config_schema().count(section) || !detail::config_schema().at(section).count(key))
            throw ValidationError("unknown key " + section + "." + key);
        sections_[section][key] = canonical_value(value);
    }

    const std::string& text(const std::string& section, const std::string& key) const {
        if (!has(section, key)) throw ValidationError("missing " + section + "." + key);
        return sections_.at(section).at(key);
    }

    std::string text_or(const std::string& section, const std::string& key, const std::string& fallback) const {
        return has(section, key) ? text(section, key) : fallback;
    }

    std::vector<std::string> list(const std::string& section, const std::string& key) const {
        return detail::split_list(text(section, key));
    }

    std::vector<double> numbers(const std::string& section, const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : list(section, key)) out.push_back(to_number(section, key, item));
        return out;
    }

    double number(const std::string& section, const std::string& key) const {
        const auto v = numbers(section, key);
        if (v.size() != 1) throw ValidationError(section + "." + key + " must be a single value");
        return v[0];
    }

    double number_or(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? number(section, key) : fallback;
    }

    long integer(const std::string& section, const std::string& key) const {
        const double v = number(section, key);
        if (v != static_cast<double>(static_cast<long>(v))) throw ValidationError(section + "." + key + " must be an integer");
        return static_cast<long>(v);
    }

    long integer_or(const std::string& section, const std::string& key, long fallback) const {
        return has(section, key) ? integer(section, key) : fallback;
    }

    bool flag_or(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const auto& v = text(section, key);
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ValidationError(section + "." + key + " must be true or false");
    }

private:
    static std::string canonical_value(const std::string& value) {
        const auto items = detail::split_list(value);
        std::string out;
        for (std::size_t i = 0; i < items.size(); ++i) out += (i ? ", " : "") + items[i];
        return out;
    }

    static double to_number(const std::string& section, const std::string& key, const std::string& item) {
        errno = 0;
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v))
            throw ValidationError(section + "." + key + ": '" + item + "' is not a number");
        return v;
    }

    std::map<std::string, Section> sections_;
};

// Model parameters from [model]; every parameter of the named model is required.

inline GuyonParams guyon_params(const Config& c) {
    GuyonParams p;
    p.beta0 = c.number("model", "beta0");
    p.beta1 = c.number("model", "beta1");
    p.beta2 = c.number("model", "beta2");
    p.lambda1 = c.number("model", "lambda1");
    p.lambda2 = c.number("model", "lambda2");
    p.r1_0 = c.number("model", "r1_0");
    p.r2_0 = c.number("model", "r2_0");
    return p;
}

/// Platen parameters for one value of the (possibly swept) lambda.
inline PlatenParams platen_params(const Config& c, double lambda) {
    PlatenParams p;
    p.alpha = c.number("model", "alpha");
    p.beta = c.number("model", "beta");
    p.sigma = c.number("model", "sigma");
    p.xi = c.number("model", "xi");
    p.eta = c.number("model", "eta");
    p.y0 = c.number("model", "y0");
    p.lambda = lambda;
    return p;
}

inline BlancParams blanc_params(const Config& c) {
    BlancParams p;
    p.beta0 = c.number("model", "beta0");
    p.beta1 = c.number("model", "beta1");
    p.beta2 = c.number("model", "beta2");
    p.alpha = c.number("model", "alpha");
    p.lambda1 = c.number("model", "lambda1");
    p.lambda2 = c.number("model", "lambda2");
    p.r1_0 = c.number("model", "r1_0");
    p.r2_0 = c.number("model", "r2_0");
    return p;
}

struct ConfiguredModel {
    ModelSpec spec;
    std::vector<Diagnostic> diagnostics;
};

/// Builds the configured model; for Platen the first lambda of a sweep is used.
/// Hard validation failures throw ValidationError, warnings are returned.
inline ConfiguredModel model_from_config(const Config& c) {
    const auto& name = c.text("model", "name");
    ConfiguredModel m;
    if (name == "guyon") {
        const auto p = guyon_params(c);
        m.diagnostics = validate(p);
        m.spec = guyon_model(p);
    } else if (name == "platen") {
        const auto p = platen_params(c, c.numbers("model", "lambda").front());
        m.diagnostics = validate(p);
        m.spec = platen_model(p);
    } else if (name == "blanc") {
        const auto p = blanc_params(c);
        m.diagnostics = validate(p);
        m.spec = blanc_model(p);
    } else {
        throw ValidationError("model.name must be guyon, platen or blanc, got '" + name + "'");
    }
    return m;
}

}  // namespace pathquant
