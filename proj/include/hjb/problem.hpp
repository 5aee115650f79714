#pragma once

// The controlled drift-diffusion problem: domain, a finite list of controls
// with coefficient expressions (b, sigma, l), and the regularity constants.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/error.hpp"
#include "hjb/expr.hpp"
#include "hjb/geometry.hpp"

namespace hjb {

struct RegularityConstants {
    double B = 1.0;
    double eta = 1.0;
    double beta = 1.0;

    void check() const {
        if (!(B > 0.0)) throw PreconditionError("regularity: B must be > 0");
        if (!(eta > 0.0 && eta <= 1.0)) throw PreconditionError("regularity: eta must lie in (0, 1]");
        if (!(beta > 0.5 && beta <= 1.0)) throw PreconditionError("regularity: beta must lie in (1/2, 1]");
    }
};

struct Control {
    std::string label;
    std::vector<Expr> b;                   // N components
    std::vector<std::vector<Expr>> sigma;  // N rows, r columns
    Expr l;
};

/// Coefficients of one control evaluated at one point; a = sigma sigma^T.
struct CoefficientSample {
    Point b{};
    Mat2 a{};
    Mat2 sigma{};  // only the first r <= 2 columns are meaningful
    int r = 1;
    double l = 0.0;
};

struct ControlProblem {
    std::string name;
    Domain domain;
    std::vector<Control> controls;
    RegularityConstants reg;

    int dim() const { return domain.dim(); }

    CoefficientSample evaluate(const Control& c, const Point& x, double d) const {
        Bindings bind;
        bind.set(Var::x1, x[0]).set(Var::d, d);
        if (dim() == 2) bind.set(Var::x2, x[1]);
        CoefficientSample s;
        const int n = dim();
        for (int i = 0; i < n; ++i) s.b[i] = c.b[i].eval(bind);
        s.r = static_cast<int>(c.sigma[0].size());
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < s.r; ++j) s.sigma[i][j] = c.sigma[i][j].eval(bind);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int k = 0; k < s.r; ++k) acc += s.sigma[i][k] * s.sigma[j][k];
                s.a[i][j] = acc;
            }
        s.l = c.l.eval(bind);
        return s;
    }

    CoefficientSample evaluate(std::size_t control, const Point& x) const {
        return evaluate(controls.at(control), x, distance(domain, x).d);
    }

    /// Copy restricted to a subset of controls (by index).
    ControlProblem restrict_controls(const std::vector<std::size_t>& keep) const {
        ControlProblem out = *this;
        out.controls.clear();
        for (auto k : keep) out.controls.push_back(controls.at(k));
        if (out.controls.empty()) throw PreconditionError("control list is empty");
        return out;
    }

    /// Canonical text of the problem; equal problems give equal text.
    std::string canonical() const {
        std::string s = domain.describe() + ";";
        for (const auto& c : controls) {
            s += "[" + c.label + "|b:";
            for (const auto& e : c.b) s += e.to_string() + ",";
            s += "|sigma:";
            for (const auto& row : c.sigma) {
                for (const auto& e : row) s += e.to_string() + ",";
                s += ";";
            }
            s += "|l:" + c.l.to_string() + "]";
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "reg:%.17g,%.17g,%.17g", reg.B, reg.eta, reg.beta);
        return s + buf;
    }
};

/// 64-bit FNV-1a, used for content hashes in manifests and metadata.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char ch : data) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string problem_hash(const ControlProblem& p) { return hex64(fnv1a(p.canonical())); }

namespace detail {

inline Expr parse_coefficient(const std::string& src, const std::string& what, int dim) {
    Expr e;
    try {
        e = parse(src);
    } catch (const ParseError& err) {
        throw ParseError(what + ": " + err.what(), err.offset());
    }
    for (const auto& v : e.free_vars()) {
        if (v == "x2" && dim == 1) throw PreconditionError(what + ": variable x2 is not defined on an interval");
    }
    return e;
}

inline std::vector<std::string> as_string_list(const nlohmann::json& j, const std::string& what) {
    if (j.is_string()) return {j.get<std::string>()};
    if (!j.is_array()) throw PreconditionError(what + ": expected a string or an array of strings");
    std::vector<std::string> out;
    for (const auto& e : j) {
        if (!e.is_string()) throw PreconditionError(what + ": expected string entries");
        out.push_back(e.get<std::string>());
    }
    return out;
}

inline Domain parse_domain(const nlohmann::json& j) {
    if (!j.is_object()) throw PreconditionError("domain: expected an object");
    const std::string kind = j.value("kind", std::string("interval"));
    if (kind == "interval") return Domain::interval(j.value("lo", 0.0), j.value("hi", 1.0));
    if (kind == "disk") {
        Point c{0.0, 0.0};
        if (j.contains("center")) {
            const auto& jc = j.at("center");
            if (!jc.is_array() || jc.size() != 2) throw PreconditionError("domain: disk center must have 2 entries");
            c = {jc[0].get<double>(), jc[1].get<double>()};
        }
        return Domain::disk(c, j.value("radius", 1.0));
    }
    throw PreconditionError("domain: unknown kind '" + kind + "'");
}

inline Control parse_control(const nlohmann::json& j, const Domain& dom, std::size_t index) {
    const int n = dom.dim();
    const std::string tag = "control " + std::to_string(index);
    if (!j.is_object()) throw PreconditionError(tag + ": expected an object");
    for (const char* key : {"b", "sigma", "l"})
        if (!j.contains(key)) throw PreconditionError(tag + ": missing '" + key + "'");
    Control c;
    c.label = j.value("label", "a" + std::to_string(index + 1));

    const auto b = as_string_list(j.at("b"), tag + ".b");
    if (static_cast<int>(b.size()) != n)
        throw PreconditionError(tag + ".b: dimension mismatch, expected " + std::to_string(n) + " component(s), got " +
                                std::to_string(b.size()));
    for (std::size_t i = 0; i < b.size(); ++i)
        c.b.push_back(parse_coefficient(b[i], tag + ".b[" + std::to_string(i) + "]", n));

    // sigma: "expr" (1D), ["row0", ...] (one column), or [["..",".."], ...]
    const auto& js = j.at("sigma");
    std::vector<std::vector<std::string>> rows;
    if (js.is_string()) {
        rows.push_back({js.get<std::string>()});
    } else if (js.is_array() && !js.empty() && js[0].is_array()) {
        for (const auto& row : js) rows.push_back(as_string_list(row, tag + ".sigma"));
    } else {
        for (const auto& e : as_string_list(js, tag + ".sigma")) rows.push_back({e});
    }
    if (static_cast<int>(rows.size()) != n)
        throw PreconditionError(tag + ".sigma: dimension mismatch, expected " + std::to_string(n) + " row(s), got " +
                                std::to_string(rows.size()));
    const std::size_t r = rows[0].size();
    if (r == 0 || r > 2) throw PreconditionError(tag + ".sigma: number of columns must be 1 or 2");
    for (const auto& row : rows)
        if (row.size() != r) throw PreconditionError(tag + ".sigma: ragged matrix");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<Expr> er;
        for (std::size_t k = 0; k < r; ++k)
            er.push_back(parse_coefficient(rows[i][k], tag + ".sigma[" + std::to_string(i) + "][" + std::to_string(k) + "]", n));
        c.sigma.push_back(std::move(er));
    }
    if (dom.kind == Domain::Kind::disk) {
        // Only diagonal diffusion is discretized on the disk.
        if (r != 2) throw PreconditionError(tag + ".sigma: disk problems require a 2x2 diagonal sigma");
        for (int i = 0; i < 2; ++i) {
            const Expr& off = c.sigma[i][1 - i];
            if (!off.is_constant() || off.eval(Bindings{}) != 0.0)
                throw PreconditionError(tag + ".sigma: disk problems require a diagonal sigma");
        }
    }
    if (!j.at("l").is_string()) throw PreconditionError(tag + ".l: expected a string");
    c.l = parse_coefficient(j.at("l").get<std::string>(), tag + ".l", n);
    return c;
}

inline nlohmann::json control_json(const std::string& label, const std::string& b, const std::string& sigma,
                                   const std::string& l) {
    return {{"label", label}, {"b", {b}}, {"sigma", {{sigma}}}, {"l", l}};
}

}  // namespace detail

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"constantL", "smoothA", "degenerateB", "twoControlA"};
    return names;
}

/// Configuration JSON of a built-in preset. `L` only affects constantL.
inline nlohmann::json preset_config(const std::string& name, double L = 2.0) {
    using nlohmann::json;
    const json unit = {{"kind", "interval"}, {"lo", 0.0}, {"hi", 1.0}};
    const json smooth_reg = {{"B", 3.0}, {"eta", 1.0}, {"beta", 1.0}};
    if (name == "constantL") {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", L);
        return {{"name", name},
                {"domain", unit},
                {"controls", json::array({detail::control_json("a1", "1-2*x1", "x1*(1-x1)", buf)})},
                {"regularity", smooth_reg}};
    }
    if (name == "smoothA")
        return {{"name", name},
                {"domain", unit},
                {"controls", json::array({detail::control_json("a1", "1-2*x1", "x1*(1-x1)", "x1")})},
                {"regularity", smooth_reg}};
    if (name == "degenerateB")
        return {{"name", name},
                {"domain", unit},
                {"controls", json::array({detail::control_json("a1", "(x1*(1-x1))^0.4*(1-2*x1)", "(x1*(1-x1))^0.75", "x1")})},
                {"regularity", {{"B", 2.0}, {"eta", 0.4}, {"beta", 0.75}}}};
    if (name == "twoControlA")
        return {{"name", name},
                {"domain", unit},
                {"controls", json::array({detail::control_json("a1", "1-2*x1", "x1*(1-x1)", "x1"),
                                          detail::control_json("a2", "1.5*(1-2*x1)", "x1*(1-x1)", "x1+0.1")})},
                {"regularity", {{"B", 4.0}, {"eta", 1.0}, {"beta", 1.0}}}};
    throw PreconditionError("unknown preset '" + name + "'");
}

/// Builds a problem from a configuration object. A "preset" key expands to
/// the built-in definition; explicit domain/controls/regularity keys override it.
inline ControlProblem assemble_problem(const nlohmann::json& config);

namespace detail {
inline ControlProblem assemble_unchecked(const nlohmann::json& config) {
    if (!config.is_object()) throw PreconditionError("configuration must be a JSON object");
    nlohmann::json merged = nlohmann::json::object();
    if (config.contains("preset")) {
        const auto& jp = config.at("preset");
        if (!jp.is_string()) throw PreconditionError("preset must be a string");
        merged = preset_config(jp.get<std::string>(), config.value("L", 2.0));
    }
    for (const char* key : {"name", "domain", "controls", "regularity"})
        if (config.contains(key)) merged[key] = config.at(key);

    for (const char* key : {"domain", "controls", "regularity"})
        if (!merged.contains(key)) throw PreconditionError(std::string("configuration is missing '") + key + "'");

    ControlProblem p;
    p.name = merged.value("name", std::string("custom"));
    p.domain = detail::parse_domain(merged.at("domain"));
    const auto& jc = merged.at("controls");
    if (!jc.is_array()) throw PreconditionError("controls must be an array");
    if (jc.empty()) throw PreconditionError("control list is empty");
    for (std::size_t i = 0; i < jc.size(); ++i) p.controls.push_back(detail::parse_control(jc[i], p.domain, i));
    const auto& jr = merged.at("regularity");
    if (!jr.is_object()) throw PreconditionError("regularity must be an object");
    p.reg.B = jr.value("B", 0.0);
    p.reg.eta = jr.value("eta", 0.0);
    p.reg.beta = jr.value("beta", 0.0);
    p.reg.check();
    return p;
}
}  // namespace detail

inline ControlProblem assemble_problem(const nlohmann::json& config) {
    try {
        return detail::assemble_unchecked(config);
    } catch (const nlohmann::json::exception& e) {
        throw PreconditionError(std::string("configuration: ") + e.what());
    }
}

inline ControlProblem preset(const std::string& name, double L = 2.0) {
    return assemble_problem(preset_config(name, L));
}

}  // namespace hjb
