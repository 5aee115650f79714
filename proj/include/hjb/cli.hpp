#pragma once

// Command-line front end. Every subcommand reads a JSON problem
// configuration, prints its report as JSON on stdout and, with --out DIR,
// writes the report files plus manifest.json into DIR. Nothing is written
// when the run ends with a configuration or precondition error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hjb/hjb.hpp"

namespace hjb::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode { ok = 0, numerical_failure = 1, usage_error = 2 };

namespace detail {

using nlohmann::json;

/// Flag values layered over the config's "run" object and built-in defaults.
class Params {
public:
    Params(const json& run, const std::map<std::string, std::string>& flags, const CLI::App& sub)
        : run_(run.is_object() ? run : json::object()), flags_(flags), sub_(sub) {}

    bool given(const std::string& key) const { return flag_given(key) || run_.contains(key); }

    double number(const std::string& key, double fallback) {
        double v = fallback;
        if (flag_given(key)) {
            const std::string& s = flags_.at(key);
            char* end = nullptr;
            v = std::strtod(s.c_str(), &end);
            if (s.empty() || end != s.c_str() + s.size()) throw PreconditionError("--" + key + ": not a number: " + s);
        } else if (run_.contains(key)) {
            if (!run_.at(key).is_number()) throw PreconditionError("run." + key + ": expected a number");
            v = run_.at(key).get<double>();
        }
        effective_[key] = v;
        return v;
    }

    std::string text(const std::string& key, const std::string& fallback) {
        std::string v = fallback;
        if (flag_given(key))
            v = flags_.at(key);
        else if (run_.contains(key)) {
            if (!run_.at(key).is_string()) throw PreconditionError("run." + key + ": expected a string");
            v = run_.at(key).get<std::string>();
        }
        effective_[key] = v;
        return v;
    }

    const json& effective() const { return effective_; }

private:
    bool flag_given(const std::string& key) const {
        const auto* opt = sub_.get_option_no_throw("--" + key);
        return opt && opt->count() > 0;
    }

    json run_;
    const std::map<std::string, std::string>& flags_;
    const CLI::App& sub_;
    json effective_ = json::object();
};

struct Output {
    json report;
    std::map<std::string, std::string> files;  // relative name -> content
    int code = ok;
};

struct Context {
    std::string command;
    std::string config_path;
    std::string config_text;
    json config;
    ControlProblem problem;
    Params* params = nullptr;
    double h = 0.0;
    std::uint64_t seed = 0;
};

inline GridField initial_field(const Grid& g, const std::string& spec, std::uint64_t seed) {
    if (spec == "random") {
        std::mt19937_64 rng(seed);
        GridField u(g.size());
        for (auto& v : u) v = 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
        return u;
    }
    const Expr e = parse(spec);
    for (const auto& v : e.free_vars())
        if (v == "x2" && g.problem.dim() == 1) throw PreconditionError("--u0: x2 is not defined on an interval");
    return sample_expr(g, e);
}

inline ErgodicSolverParams ergodic_params(Params& P, const std::string& method) {
    ErgodicSolverParams prm;
    prm.tolerance = P.number("tol", prm.tolerance);
    prm.max_iterations = static_cast<int>(P.number("max-iter", prm.max_iterations));
    if (method == "rvi") {
        prm.rvi_dt = P.number("dt", 0.0);
        prm.anchor_node = static_cast<int>(P.number("anchor", -1));
    } else {
        if (P.given("anchor")) throw PreconditionError("--anchor only applies to --method rvi");
        prm.longtime_dt = P.number("dt", prm.longtime_dt);
        prm.T1 = P.number("T1", prm.T1);
        prm.T2 = P.number("T2", prm.T2);
    }
    return prm;
}

inline std::string convergence_csv(const ConvergenceReport& r) {
    std::string s = "t,inf_gap,sup_gap,uniform_error\n";
    for (std::size_t k = 0; k < r.times.size(); ++k)
        s += format_double(r.times[k]) + "," + format_double(r.inf_gap[k]) + "," + format_double(r.sup_gap[k]) + "," +
             format_double(r.uniform_error[k]) + "\n";
    return s;
}

/// Largest certified barrier width: power barrier at M, further limited
/// by the collar where F[-1/d] <= 0.
inline double certified_delta(const ControlProblem& p, double rho, double M, double step,
                              const DegeneracyCertificate& cert) {
    const double barrier = find_barrier_delta(p, rho, M, step, cert).delta;
    const double lyap = find_lyapunov_delta(p, 1.0, 0.0, step).delta;
    return std::min(barrier, lyap);
}

inline Output run_validate(Context& cx) {
    Params& P = *cx.params;
    const double tol = P.number("tol", 1e-2);
    const auto rep = validate_assumptions(cx.problem, SamplingPlan{}, tol);
    const Grid g = build_grid(cx.problem, cx.h);
    Output o;
    o.report = to_json(rep);
    o.report["stencil"] = to_json(g.report, false);
    o.files["validation.json"] = dump_json(o.report);
    o.files["stencil.json"] = dump_json(to_json(g.report, true));
    o.code = rep.pass ? ok : numerical_failure;
    return o;
}

inline Output run_certify(Context& cx) {
    Params& P = *cx.params;
    const std::string family = P.text("family", "");
    if (family != "lyapunov" && family != "barrier") throw PreconditionError("--family must be lyapunov or barrier");
    if (!P.given("param")) throw PreconditionError("--param is required");
    const double param = P.number("param", 0.0);
    const double M = P.number("M", 1.0);
    const double step = P.number("step", 1e-3);
    const BarrierCertificate c = family == "lyapunov"
                                     ? find_lyapunov_delta(cx.problem, param, M, step)
                                     : find_barrier_delta(cx.problem, param, M, step, degeneracy_certificate(cx.problem));
    Output o;
    o.report = to_json(c);
    o.files["certificate.json"] = dump_json(o.report);
    o.code = (c.margin <= 0.0 && c.ordering_holds) ? ok : numerical_failure;
    return o;
}

inline Output run_solve(Context& cx) {
    Params& P = *cx.params;
    if (!P.given("T")) throw PreconditionError("--T is required");
    const double T = P.number("T", 0.0);
    const std::string mode_name = P.text("mode", "explicit");
    const double dt = P.number("dt", 0.0);
    const double snap = P.number("snap", T);
    const std::string u0s = P.text("u0", "0");
    const Grid g = build_grid(cx.problem, cx.h);
    StepMode mode;
    if (mode_name == "explicit") {
        mode = StepMode::explicit_cfl();
        if (dt > 0.0) {
            if (dt > cfl_dt(g) * (1.0 + 1e-12))
                throw PreconditionError("--dt exceeds the CFL bound " + format_double(cfl_dt(g)) + " for explicit mode");
            mode.dt = dt;
        }
    } else if (mode_name == "implicit") {
        mode = StepMode::implicit(dt > 0.0 ? dt : 10.0 * cfl_dt(g));
    } else {
        throw PreconditionError("--mode must be explicit or implicit");
    }
    const GridField u0 = initial_field(g, u0s, cx.seed);
    const Trajectory tr = evolve(g, u0, T, mode, snap);
    Output o;
    json meta = trajectory_metadata(tr);
    json snaps = json::array();
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "snap_%04zu.csv", k);
        o.files[name] = field_csv(g, tr.snapshots[k], "u");
        const auto& s = tr.snapshots[k];
        snaps.push_back({{"t", tr.times[k]},
                         {"file", name},
                         {"min", *std::min_element(s.begin(), s.end())},
                         {"max", *std::max_element(s.begin(), s.end())},
                         {"apriori_bound", sup_norm(u0) + l_sup(g) * tr.times[k]}});
    }
    meta["snapshots"] = snaps;
    o.report = meta;
    o.files["metadata.json"] = dump_json(meta);
    return o;
}

inline Output run_ergodic(Context& cx) {
    Params& P = *cx.params;
    const std::string method = P.text("method", "rvi");
    if (method != "rvi" && method != "longtime") throw PreconditionError("--method must be rvi or longtime");
    const auto prm = ergodic_params(P, method);
    const Grid g = build_grid(cx.problem, cx.h);
    const ErgodicPair pair = solve_ergodic(g, method, prm);
    Output o;
    o.report = to_json(pair);
    o.files["ergodic.json"] = dump_json(o.report);
    o.files["chi.csv"] = field_csv(g, pair.chi, "chi");
    return o;
}

inline Output run_converge(Context& cx) {
    Params& P = *cx.params;
    const std::string u0s = P.text("u0", "0");
    const std::string mode_name = P.text("mode", "implicit");
    const double dt = P.number("dt", 1e-2);
    ConvergenceParams cp;
    cp.stop_error = P.number("stop", cp.stop_error);
    cp.T_max = P.number("Tmax", cp.T_max);
    if (mode_name == "explicit")
        cp.mode = StepMode::explicit_cfl();
    else if (mode_name == "implicit")
        cp.mode = StepMode::implicit(dt);
    else
        throw PreconditionError("--mode must be explicit or implicit");
    ErgodicSolverParams prm;
    prm.tolerance = P.number("tol", 1e-11);
    prm.rvi_dt = P.number("ergodic-dt", 1e-2);
    const Grid g = build_grid(cx.problem, cx.h);
    const GridField u0 = initial_field(g, u0s, cx.seed);
    const ErgodicPair pair = solve_ergodic_rvi(g, prm);
    const ConvergenceReport r = run_convergence(g, pair, u0, cp);
    Output o;
    o.report = to_json(r);
    o.report["c"] = pair.c;
    o.files["convergence.json"] = dump_json(o.report);
    o.files["convergence.csv"] = convergence_csv(r);
    o.code = (r.monotone && r.bracketed && r.converged) ? ok : numerical_failure;
    return o;
}

inline Output run_holder(Context& cx) {
    Params& P = *cx.params;
    if (cx.problem.dim() != 1) throw PreconditionError("holder: interval domains only");
    const std::string side = P.text("side", "left");
    const double diam = cx.problem.domain.diameter();
    const double dmin = P.number("dmin", 10.0 * cx.h);
    const double dmax = P.number("dmax", 0.05 * diam);
    const std::string field = P.text("field", "");
    const Grid g = build_grid(cx.problem, cx.h);
    GridField chi;
    Output o;
    if (field.empty()) {
        ErgodicSolverParams prm;
        prm.tolerance = P.number("tol", 1e-9);
        prm.rvi_dt = P.number("ergodic-dt", 1e-2);
        const ErgodicPair pair = solve_ergodic_rvi(g, prm);
        chi = pair.chi;
        o.report["ergodic"] = to_json(pair);
    } else {
        chi = sample_expr(g, parse(field));
    }
    const HolderFit f = holder_fit(g, chi, side, dmin, dmax);
    o.report["fit"] = to_json(f);
    o.files["holder.json"] = dump_json(o.report);
    return o;
}

inline Output run_envelope(Context& cx) {
    Params& P = *cx.params;
    if (!P.given("rho")) throw PreconditionError("--rho is required");
    const double rho = P.number("rho", 0.0);
    const double step = P.number("step", 1e-5);
    const double viol_tol = P.number("viol-tol", 2e-2);
    const bool evolutive = P.given("t");
    const double t = evolutive ? P.number("t", 1.0) : 0.0;
    if (evolutive && t < 1.0) throw PreconditionError("--t must be >= 1 for the evolutive envelope");
    const std::string u0s = P.text("u0", "0");
    const double dt = P.number("dt", 1e-3);
    const auto cert = degeneracy_certificate(cx.problem);
    if (!(rho > 0.0 && rho < 1.0 - cert.gamma))
        throw PreconditionError("--rho must lie in (0, 1 - gamma) with gamma = " + format_double(cert.gamma));
    const Grid g = build_grid(cx.problem, cx.h);
    Output o;
    GridField value;
    double M = 0.0;
    if (evolutive) {
        const GridField u0 = initial_field(g, u0s, cx.seed);
        M = P.number("M", 2.0 * sup_norm(u0) + l_sup(g));
        const double dbar = certified_delta(cx.problem, rho, M, step, cert);
        const double delta = P.number("delta", dbar);
        RimTracker rim(g, delta);
        const Trajectory tr = evolve(g, u0, t, StepMode::implicit(dt), t, [&](const CauchyState& s) { rim.observe(s.u); });
        auto r = boundary_envelope_check(g, tr.snapshots.back(), rim.min(), rim.max(), rho, delta, {cert.gamma, dbar}, t);
        r.rim_nodes = rim.size();
        o.report = to_json(r);
        o.report["delta_bar"] = dbar;
        o.code = r.violation() <= viol_tol ? ok : numerical_failure;
    } else {
        ErgodicSolverParams prm;
        prm.tolerance = P.number("tol", 1e-9);
        prm.rvi_dt = P.number("ergodic-dt", 1e-2);
        const ErgodicPair pair = solve_ergodic_rvi(g, prm);
        M = P.number("M", 2.0 * std::fabs(pair.c) + l_sup(g));
        const double dbar = certified_delta(cx.problem, rho, M, step, cert);
        const double delta = P.number("delta", dbar);
        const auto r = boundary_envelope_check(g, pair.chi, rho, delta, {cert.gamma, dbar});
        o.report = to_json(r);
        o.report["delta_bar"] = dbar;
        o.report["c"] = pair.c;
        o.code = r.violation() <= viol_tol ? ok : numerical_failure;
    }
    o.report["M"] = M;
    o.report["gamma"] = cert.gamma;
    o.files["envelope.json"] = dump_json(o.report);
    return o;
}

struct Command {
    const char* name;
    const char* help;
    std::vector<std::pair<const char*, const char*>> options;
    Output (*run)(Context&);
};

inline const std::vector<Command>& commands() {
    static const std::vector<Command> cmds = {
        {"validate", "check the standing assumptions and fit the degeneracy certificate",
         {{"--tol", "sampling tolerance"}},
         run_validate},
        {"certify", "find the collar width of a Lyapunov function or barrier",
         {{"--family", "lyapunov or barrier"},
          {"--param", "lambda (lyapunov) or rho (barrier)"},
          {"--M", "required margin F <= -M"},
          {"--step", "delta search lattice step"}},
         run_certify},
        {"solve", "evolve the Cauchy problem",
         {{"--T", "final time"},
          {"--mode", "explicit or implicit"},
          {"--dt", "time step (explicit: at most the CFL step)"},
          {"--snap", "snapshot interval"},
          {"--u0", "initial data: expression in x1, x2, d, or 'random'"}},
         run_solve},
        {"ergodic", "compute the ergodic pair (c, chi)",
         {{"--method", "rvi or longtime"},
          {"--tol", "stopping tolerance"},
          {"--dt", "implicit time step"},
          {"--anchor", "rvi anchor node index"},
          {"--max-iter", "iteration budget"},
          {"--T1", "longtime: first window start"},
          {"--T2", "longtime: first window end"}},
         run_ergodic},
        {"converge", "long-time convergence of u + c t - chi to a constant",
         {{"--u0", "initial data: expression in x1, x2, d, or 'random'"},
          {"--mode", "explicit or implicit"},
          {"--dt", "implicit time step"},
          {"--stop", "stop when the uniform error falls below this"},
          {"--Tmax", "time budget"},
          {"--tol", "ergodic tolerance"},
          {"--ergodic-dt", "rvi time step"}},
         run_converge},
        {"holder", "fit the boundary Hoelder exponent of chi (or of --field)",
         {{"--side", "left or right"},
          {"--dmin", "fit range lower end"},
          {"--dmax", "fit range upper end"},
          {"--field", "fit a sampled expression instead of chi"},
          {"--tol", "ergodic tolerance"},
          {"--ergodic-dt", "rvi time step"}},
         run_holder},
        {"envelope", "check the boundary envelope of chi, or of u at time --t",
         {{"--rho", "envelope exponent"},
          {"--delta", "collar width (default: certified width)"},
          {"--t", "evolutive check at this time (>= 1)"},
          {"--u0", "initial data for the evolutive check"},
          {"--M", "barrier margin (default from the estimate's proof)"},
          {"--step", "delta search lattice step"},
          {"--dt", "implicit time step of the evolution"},
          {"--viol-tol", "largest accepted violation"},
          {"--tol", "ergodic tolerance"},
          {"--ergodic-dt", "rvi time step"}},
         run_envelope},
    };
    return cmds;
}

inline double default_h(const ControlProblem& p) {
    return p.domain.kind == Domain::Kind::interval ? 1e-3 * p.domain.diameter() : p.domain.radius / 16.0;
}

}  // namespace detail

/// Runs one command line. Returns the exit code; report JSON goes to `out`,
/// diagnostics to `err`.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    using detail::json;
    CLI::App app{"Laboratory for HJB equations degenerating at the boundary", "hjb"};
    app.set_help_flag("--help", "print help");  // -h would clash with --h
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    std::map<std::string, std::map<std::string, std::string>> flags;
    std::map<std::string, std::string> config_path;
    for (const auto& cmd : detail::commands()) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        auto& f = flags[cmd.name];
        sub->add_option("config", config_path[cmd.name], "problem configuration (JSON)")->required();
        sub->add_option("--h", f["h"], "grid step");
        sub->add_option("--L", f["L"], "constant running cost of the constantL preset");
        sub->add_option("--seed", f["seed"], "seed for random initial data");
        sub->add_option("--out", f["out"], "output directory");
        for (const auto& [name, help] : cmd.options) sub->add_option(name, f[std::string(name).substr(2)], help);
    }

    if (!args.empty() && !args[0].empty() && args[0][0] != '-') {
        bool known = false;
        for (const auto& c : detail::commands()) known = known || args[0] == c.name;
        if (!known) {
            err << "hjb: unknown subcommand '" << args[0] << "'\n";
            return usage_error;
        }
    }
    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << "\n";
        return ok;
    } catch (const CLI::ParseError& e) {
        err << "hjb: " << e.what() << "\n";
        return usage_error;
    }

    const detail::Command* cmd = nullptr;
    CLI::App* sub = nullptr;
    for (const auto& c : detail::commands())
        if (app.got_subcommand(c.name)) {
            cmd = &c;
            sub = app.get_subcommand(c.name);
        }

    try {
        detail::Context cx;
        cx.command = cmd->name;
        cx.config_path = config_path[cmd->name];
        cx.config_text = read_file(cx.config_path);
        try {
            cx.config = json::parse(cx.config_text);
        } catch (const json::parse_error& e) {
            throw PreconditionError("cannot parse " + cx.config_path + ": " + e.what());
        }
        if (!cx.config.is_object()) throw PreconditionError("configuration must be a JSON object");
        auto& f = flags[cmd->name];
        detail::Params P(cx.config.value("run", json::object()), f, *sub);
        cx.params = &P;
        json problem_config = cx.config;
        if (P.given("L")) {
            if (!cx.config.contains("preset"))
                throw PreconditionError("--L applies only to configurations that name a preset");
            problem_config["L"] = P.number("L", 2.0);
        }
        cx.problem = assemble_problem(problem_config);
        cx.h = P.number("h", detail::default_h(cx.problem));
        cx.seed = static_cast<std::uint64_t>(P.number("seed", 0.0));
        const std::string out_dir = P.text("out", "");

        detail::Output o = cmd->run(cx);

        json effective = cx.config;
        json run = P.effective();
        run.erase("out");
        effective["run"] = run;
        json files = json::array();
        for (const auto& kv : o.files) files.push_back(kv.first);
        files.push_back("manifest.json");
        const json manifest = {{"tool", "hjb"},
                               {"version", kVersion},
                               {"command", cx.command},
                               {"config_path", cx.config_path},
                               {"config_hash", hex64(fnv1a(cx.config_text))},
                               {"problem_hash", problem_hash(cx.problem)},
                               {"effective_config", effective},
                               {"h", cx.h},
                               {"seed", cx.seed},
                               {"exit_code", o.code},
                               {"files", files}};
        if (!out_dir.empty()) {
            const std::filesystem::path dir(out_dir);
            for (const auto& [name, content] : o.files) write_atomic(dir / name, content);
            write_atomic(dir / "manifest.json", dump_json(manifest));
        }
        out << o.report.dump(2) << "\n";
        return o.code;
    } catch (const PreconditionError& e) {
        err << "hjb " << cmd->name << ": " << e.what() << "\n";
        return usage_error;
    } catch (const NumericalError& e) {
        err << "hjb " << cmd->name << ": " << e.what() << "\n";
        return numerical_failure;
    } catch (const std::exception& e) {
        err << "hjb " << cmd->name << ": " << e.what() << "\n";
        return numerical_failure;
    }
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args, out, err);
}

}  // namespace hjb::cli
