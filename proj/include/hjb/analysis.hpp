#pragma once

// Checks on computed solutions: boundary envelopes, Hoelder exponents at the
// boundary, long-time convergence to the ergodic profile, and a Fokker-Planck
// oracle for the ergodic constant of single-control 1D problems.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/cauchy.hpp"
#include "hjb/discretization.hpp"
#include "hjb/ergodic.hpp"
#include "hjb/error.hpp"
#include "hjb/fit.hpp"

namespace hjb {

// ---------------------------------------------------------------- envelopes

struct EnvelopeReport {
    double rho = 0.0;
    double delta = 0.0;
    double lower_violation = 0.0;
    double upper_violation = 0.0;
    std::optional<double> checked_at_t;  // empty: stationary
    double rim_min = 0.0;
    double rim_max = 0.0;
    std::size_t rim_nodes = 0;
    std::size_t collar_nodes = 0;

    double violation() const { return std::max(lower_violation, upper_violation); }
};

/// Nodes nearest to the level set d = delta (within h/2).
inline std::vector<std::size_t> rim_nodes(const Grid& g, double delta) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (std::fabs(g.dist[i].d - delta) <= 0.5 * g.h() * (1.0 + 1e-9)) out.push_back(i);
    if (out.empty()) throw PreconditionError("envelope: no grid node lies within h/2 of d = delta");
    return out;
}

/// Running extrema of u over the rim nodes, fed by an evolution observer.
class RimTracker {
public:
    RimTracker(const Grid& g, double delta) : rim_(rim_nodes(g, delta)) {}

    void observe(const GridField& u) {
        for (auto i : rim_) {
            lo_ = std::min(lo_, u[i]);
            hi_ = std::max(hi_, u[i]);
        }
    }
    double min() const { return lo_; }
    double max() const { return hi_; }
    std::size_t size() const { return rim_.size(); }

private:
    std::vector<std::size_t> rim_;
    double lo_ = std::numeric_limits<double>::infinity();
    double hi_ = -std::numeric_limits<double>::infinity();
};

/// Admissible range for an envelope check.
struct EnvelopeBounds {
    double gamma = 0.0;      // from the degeneracy certificate
    double delta_bar = 0.0;  // certified barrier width
};

/// rim_min - delta^rho + d^rho <= value <= rim_max + delta^rho - d^rho on d < delta.
inline EnvelopeReport boundary_envelope_check(const Grid& g, const GridField& value, double rim_min, double rim_max,
                                              double rho, double delta, const EnvelopeBounds& bounds,
                                              std::optional<double> t = std::nullopt) {
    if (!(rho > 0.0 && rho < 1.0 - bounds.gamma))
        throw PreconditionError("envelope: rho must lie in (0, 1 - gamma) with gamma = " + std::to_string(bounds.gamma));
    if (!(delta > 0.0 && delta <= bounds.delta_bar))
        throw PreconditionError("envelope: delta must lie in (0, " + std::to_string(bounds.delta_bar) +
                                "], the certified barrier width");
    if (t && *t < 1.0) throw PreconditionError("envelope: the evolutive check requires t >= 1");
    if (value.size() != g.size()) throw PreconditionError("envelope: field length does not match the grid");
    EnvelopeReport r;
    r.rho = rho;
    r.delta = delta;
    r.checked_at_t = t;
    r.rim_min = rim_min;
    r.rim_max = rim_max;
    const double dr = std::pow(delta, rho);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = g.dist[i].d;
        if (!(d < delta)) continue;
        ++r.collar_nodes;
        const double lower = rim_min - dr + std::pow(d, rho);
        const double upper = rim_max + dr - std::pow(d, rho);
        r.lower_violation = std::max(r.lower_violation, lower - value[i]);
        r.upper_violation = std::max(r.upper_violation, value[i] - upper);
    }
    return r;
}

/// Stationary form: rim extrema taken from the field itself.
inline EnvelopeReport boundary_envelope_check(const Grid& g, const GridField& value, double rho, double delta,
                                              const EnvelopeBounds& bounds) {
    RimTracker rim(g, delta);
    rim.observe(value);
    auto r = boundary_envelope_check(g, value, rim.min(), rim.max(), rho, delta, bounds);
    r.rim_nodes = rim.size();
    return r;
}

inline nlohmann::json to_json(const EnvelopeReport& r) {
    return {{"rho", r.rho},
            {"delta", r.delta},
            {"lower_violation", r.lower_violation},
            {"upper_violation", r.upper_violation},
            {"checked_at_t", r.checked_at_t ? nlohmann::json(*r.checked_at_t) : nlohmann::json("stationary")},
            {"rim_min", r.rim_min},
            {"rim_max", r.rim_max},
            {"rim_nodes", r.rim_nodes},
            {"collar_nodes", r.collar_nodes}};
}

// ---------------------------------------------------------------- Hoelder fits

struct HolderFit {
    std::string side;
    double exponent = 0.0;          // capped at 1
    double uncapped_exponent = 0.0;
    double d_min = 0.0, d_max = 0.0;
    double r_squared = 0.0;
    double boundary_limit_value = 0.0;
    std::size_t samples = 0;
    bool lipschitz_consistent = false;
    bool flat = false;
};

/// Log-log fit of |chi - chi(boundary)| against d on one side of an interval.
/// The boundary value is extrapolated from the nodes nearest d_min, 2 d_min
/// and 4 d_min by Aitken's delta-squared, which is exact for chi = L + C d^p.
/// Nodes closer to the boundary than d_min are not used: the scheme loses
/// consistency in the layer where the drift dominates the diffusion.
inline HolderFit holder_fit(const Grid& g, const GridField& chi, const std::string& side, double d_min, double d_max,
                            int n_levels = 24) {
    if (g.problem.dim() != 1) throw PreconditionError("holder fit: interval domains only");
    if (side != "left" && side != "right") throw PreconditionError("holder fit: side must be left or right");
    if (chi.size() != g.size()) throw PreconditionError("holder fit: field length does not match the grid");
    const double mid = 0.5 * (g.domain().lo + g.domain().hi);
    // Side nodes ordered by increasing d.
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = g.lattice.nodes[i][0];
        if (side == "left" ? x < mid : x > mid) idx.push_back(i);
    }
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return g.dist[a].d < g.dist[b].d; });
    if (idx.size() < 4) throw PreconditionError("holder fit: too few nodes on this side");
    if (!(d_min > 0.0 && d_min < d_max && d_max < g.domain().collar_width() * (1.0 + 1e-12)))
        throw PreconditionError("holder fit: fit range must lie inside the collar");

    HolderFit f;
    f.side = side;
    f.d_min = d_min;
    f.d_max = d_max;
    auto nearest = [&](double d) {
        std::size_t best = idx[0];
        for (auto i : idx)
            if (std::fabs(g.dist[i].d - d) < std::fabs(g.dist[best].d - d)) best = i;
        return best;
    };
    const double va = chi[nearest(d_min)], vb = chi[nearest(2.0 * d_min)], vc = chi[nearest(4.0 * d_min)];
    const double d1 = vb - va, d2 = vc - vb;
    const double den = d2 - d1;
    f.boundary_limit_value = std::fabs(den) > 1e-300 ? va - d1 * d1 / den : va;

    // One node per geometric level, nearest in d.
    std::vector<std::size_t> picked;
    for (double lev : geometric_samples(d_min, d_max, n_levels)) {
        const std::size_t best = nearest(lev);
        if (g.dist[best].d < d_min * (1.0 - 1e-9) || g.dist[best].d > d_max * (1.0 + 1e-9)) continue;
        if (picked.empty() || picked.back() != best) picked.push_back(best);
    }
    if (picked.size() < 10) throw PreconditionError("holder fit: fewer than 10 distinct nodes in the fit range");
    std::vector<double> xs, ys;
    for (auto i : picked) {
        const double r = std::fabs(chi[i] - f.boundary_limit_value);
        if (r < 1e-12) continue;
        xs.push_back(g.dist[i].d);
        ys.push_back(r);
    }
    f.samples = picked.size();
    if (xs.size() < 10) {
        f.flat = true;
        return f;
    }
    const auto lf = fit_loglog(xs, ys);
    f.uncapped_exponent = lf.slope;
    f.exponent = std::min(1.0, lf.slope);
    f.r_squared = lf.r_squared;
    f.lipschitz_consistent = lf.slope >= 0.95;
    return f;
}

inline nlohmann::json to_json(const HolderFit& f) {
    return {{"side", f.side},
            {"exponent", f.flat ? nlohmann::json(nullptr) : nlohmann::json(f.exponent)},
            {"uncapped_exponent", f.flat ? nlohmann::json(nullptr) : nlohmann::json(f.uncapped_exponent)},
            {"fit_range", {f.d_min, f.d_max}},
            {"r_squared", f.r_squared},
            {"boundary_limit_value", f.boundary_limit_value},
            {"samples", f.samples},
            {"lipschitz_consistent", f.lipschitz_consistent},
            {"flat", f.flat}};
}

// ---------------------------------------------------------------- long-time convergence

struct ConvergenceReport {
    std::vector<double> times;
    std::vector<double> inf_gap;  // min of w = u + c t - chi
    std::vector<double> sup_gap;  // max of w
    std::vector<double> uniform_error;
    double K = 0.0;
    bool monotone = true;
    double max_monotone_violation = 0.0;
    bool bracketed = true;
    bool converged = false;
    double stop_time = 0.0;
};

namespace detail {
inline void monotone_extrema(const GridField& u, double t, double c, const GridField& chi, double& lo, double& hi) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double w = u[i] + c * t - chi[i];
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
}

inline void finish_report(ConvergenceReport& r, double tol) {
    const std::size_t n = r.times.size();
    for (std::size_t k = 1; k < n; ++k) {
        r.max_monotone_violation = std::max(r.max_monotone_violation, r.inf_gap[k - 1] - r.inf_gap[k]);
        r.max_monotone_violation = std::max(r.max_monotone_violation, r.sup_gap[k] - r.sup_gap[k - 1]);
    }
    r.monotone = r.max_monotone_violation <= tol;
    r.K = -0.5 * (r.inf_gap.back() + r.sup_gap.back());
    r.uniform_error.resize(n);
    r.bracketed = true;
    for (std::size_t k = 0; k < n; ++k) {
        r.uniform_error[k] = std::max(r.sup_gap[k] + r.K, -(r.inf_gap[k] + r.K));
        if (r.K < -r.sup_gap[k] - tol || r.K > -r.inf_gap[k] + tol) r.bracketed = false;
    }
    r.stop_time = r.times.back();
}
}  // namespace detail

/// Diagnostics on the snapshots of an existing trajectory.
inline ConvergenceReport convergence_diagnostics(const Grid& g, const Trajectory& tr, const ErgodicPair& pair,
                                                 double tol = 1e-9) {
    if (pair.chi.size() != g.size() || tr.snapshots.empty() || tr.snapshots.front().size() != g.size())
        throw PreconditionError("convergence: trajectory and ergodic pair live on different grids");
    if (tr.problem_hash != problem_hash(g.problem) || std::fabs(tr.h - g.h()) > 1e-15)
        throw PreconditionError("convergence: trajectory was computed on another grid");
    ConvergenceReport r;
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        double lo, hi;
        detail::monotone_extrema(tr.snapshots[k], tr.times[k], pair.c, pair.chi, lo, hi);
        r.times.push_back(tr.times[k]);
        r.inf_gap.push_back(lo);
        r.sup_gap.push_back(hi);
    }
    detail::finish_report(r, tol);
    r.converged = r.uniform_error.back() < 1e-3;
    return r;
}

struct ConvergenceParams {
    StepMode mode = StepMode::implicit(1e-2);
    double stop_error = 5e-4;  // stop once (max w - min w) / 2 falls below this
    double T_max = 200.0;
    double tol = 1e-9;         // per-step monotonicity tolerance
};

/// Evolves u0, recording min/max of w = u + c t - chi at every step, until the
/// uniform error of the midpoint shift drops below stop_error.
inline ConvergenceReport run_convergence(const Grid& g, const ErgodicPair& pair, const GridField& u0,
                                         const ConvergenceParams& prm = {}) {
    if (pair.chi.size() != g.size() || u0.size() != g.size())
        throw PreconditionError("convergence: fields do not match the grid");
    ConvergenceReport r;
    CauchyState s = initial_state(g, u0);
    auto record = [&](const CauchyState& cs) {
        double lo, hi;
        detail::monotone_extrema(cs.u, cs.t, pair.c, pair.chi, lo, hi);
        r.times.push_back(cs.t);
        r.inf_gap.push_back(lo);
        r.sup_gap.push_back(hi);
        return 0.5 * (hi - lo);
    };
    double err = record(s);
    const double dt = max_step(g, prm.mode);
    while (err >= prm.stop_error && s.t < prm.T_max) {
        advance_to(g, s, s.t + dt, prm.mode);
        err = record(s);
    }
    detail::finish_report(r, prm.tol);
    r.converged = err < prm.stop_error;
    return r;
}

inline nlohmann::json to_json(const ConvergenceReport& r) {
    return {{"K", r.K},
            {"monotone", r.monotone},
            {"max_monotone_violation", r.max_monotone_violation},
            {"bracketed", r.bracketed},
            {"converged", r.converged},
            {"stop_time", r.stop_time},
            {"final_uniform_error", r.uniform_error.empty() ? 0.0 : r.uniform_error.back()},
            {"records", r.times.size()}};
}

// ---------------------------------------------------------------- Fokker-Planck oracle

/// Ergodic constant -int l dmu of a single-control 1D problem, with mu the
/// zero-flux stationary density: (a mu)' = b mu, hence a mu = exp(int b/a).
/// Computed on a grid four times finer than g.
inline double linear_oracle_c(const ControlProblem& p, const Grid& g) {
    if (p.controls.size() != 1) throw PreconditionError("linear oracle: exactly one control required");
    if (p.dim() != 1) throw PreconditionError("linear oracle: interval domains only");
    const Domain& dom = p.domain;
    const double hf = g.h() / 4.0;
    const long m = std::lround((dom.hi - dom.lo) / hf);
    const Control& ctl = p.controls[0];
    auto coef = [&](double x) { return p.evaluate(ctl, {x, 0.0}, distance(dom, {x, 0.0}).d); };
    auto ratio = [&](double x) {
        const auto s = coef(x);
        if (!(s.a[0][0] > 0.0)) throw PreconditionError("linear oracle: diffusion vanishes inside the domain");
        return s.b[0] / s.a[0][0];
    };
    std::vector<double> xs, logmu, ls;
    double phi = 0.0;
    for (long i = 1; i < m; ++i) {
        const double x = i == m - 1 ? dom.hi - hf : dom.lo + static_cast<double>(i) * hf;
        if (i > 1) {
            // composite Simpson for int b/a over [x_prev, x]
            const double x0 = xs.back();
            const int sub = 8;
            const double hs = (x - x0) / sub;
            double acc = ratio(x0) + ratio(x);
            for (int k = 1; k < sub; ++k) acc += (k % 2 ? 4.0 : 2.0) * ratio(x0 + k * hs);
            phi += acc * hs / 3.0;
        }
        const auto s = coef(x);
        xs.push_back(x);
        logmu.push_back(phi - std::log(s.a[0][0]));
        ls.push_back(s.l);
    }
    const auto imax = static_cast<std::size_t>(std::max_element(logmu.begin(), logmu.end()) - logmu.begin());
    if (imax == 0 || imax + 1 == logmu.size())
        throw NumericalError("linear oracle: density is not normalizable (mass accumulates at the boundary)");
    const double top = logmu[imax];
    double mass = 0.0, cost = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double w = (i == 0 || i + 1 == xs.size()) ? 0.5 : 1.0;
        const double mu = std::exp(logmu[i] - top);
        mass += w * mu;
        cost += w * mu * ls[i];
    }
    return -cost / mass;
}

}  // namespace hjb
