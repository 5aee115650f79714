#pragma once

// F evaluated on radial test functions g(d(x)) by the chain rule, and the
// collar widths on which the Lyapunov function -d^{-lambda} and the barrier
// d^rho - 1 are strict supersolutions of F = -M.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/error.hpp"
#include "hjb/fit.hpp"
#include "hjb/geometry.hpp"
#include "hjb/problem.hpp"
#include "hjb/validation.hpp"

namespace hjb {

/// g(d) = scale * d^power + offset, with closed-form derivatives.
struct RadialProfile {
    double scale = 0.0;
    double power = 0.0;
    double offset = 0.0;

    static RadialProfile constant(double c) { return {0.0, 0.0, c}; }
    static RadialProfile power_law(double scale, double power, double offset = 0.0) { return {scale, power, offset}; }
    /// -d^{-lambda}
    static RadialProfile lyapunov(double lambda) { return {-1.0, -lambda, 0.0}; }
    /// d^rho - 1
    static RadialProfile barrier(double rho) { return {1.0, rho, -1.0}; }

    RadialProfile negated() const { return {-scale, power, -offset}; }

    double value(double d) const { return scale == 0.0 ? offset : scale * std::pow(d, power) + offset; }
    double d1(double d) const { return scale == 0.0 ? 0.0 : scale * power * std::pow(d, power - 1.0); }
    double d2(double d) const {
        return scale == 0.0 ? 0.0 : scale * power * (power - 1.0) * std::pow(d, power - 2.0);
    }
};

/// max over controls of -(b.Dd) g' - tr(a D^2 d) g' - (Dd^T a Dd) g''.
inline double eval_F_radial(const ControlProblem& p, const RadialProfile& g, const Point& x) {
    const Domain& dom = p.domain;
    const auto dist = distance(dom, x);
    if (!(dist.d < dom.collar_width())) throw PreconditionError("eval_F_radial: point outside the collar");
    const double g1 = g.d1(dist.d);
    const double g2 = g.d2(dist.d);
    if (!std::isfinite(g1) || !std::isfinite(g2)) throw PreconditionError("eval_F_radial: profile singular at d(x)");
    const int n = p.dim();
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : p.controls) {
        const auto s = p.evaluate(c, x, dist.d);
        double bdd = 0.0, trh = 0.0, ann = 0.0;
        for (int i = 0; i < n; ++i) {
            bdd += s.b[i] * dist.grad[i];
            for (int j = 0; j < n; ++j) {
                trh += s.a[i][j] * dist.hess[j][i];
                ann += dist.grad[i] * s.a[i][j] * dist.grad[j];
            }
        }
        best = std::max(best, -bdd * g1 - trh * g1 - ann * g2);
    }
    return best;
}

struct BarrierSpec {
    enum class Family { lyapunov, barrier };
    Family family = Family::barrier;
    double param = 0.5;  // lambda or rho
    double M = 1.0;
};

struct BarrierSample {
    double d = 0.0;
    double F = 0.0;      // worst (largest) F over the sampled directions at this d
    // Sufficient upper bounds for the barrier family (NaN otherwise):
    //   printed: rho d^{gamma+rho-1} (-k + (rho-1) B^2 d^{2 beta-gamma-1})
    //   bound:   same with (1-rho), the sign the chain rule actually gives.
    double printed_bound = 0.0;
    double bound = 0.0;
};

struct BarrierCertificate {
    BarrierSpec spec;
    double delta = 0.0;
    double margin = 0.0;  // max over samples of Omega_delta of F + M
    double collar_width = 0.0;
    double grid_step = 0.0;
    bool ordering_holds = true;
    std::size_t ordering_violations = 0;
    std::size_t bound_violations = 0;          // samples where exact F exceeds `bound`
    std::size_t printed_bound_violations = 0;  // same against `printed_bound`
    std::vector<BarrierSample> witness_table;
};

struct BarrierSampling {
    int n_geometric = 400;
    double d_min_factor = 1e-6;
    int n_directions = 16;
};

namespace detail {

inline BarrierCertificate find_delta(const ControlProblem& p, const BarrierSpec& spec, double grid_step,
                                     const BarrierSampling& plan, const DegeneracyCertificate* cert) {
    const Domain& dom = p.domain;
    const double W = dom.collar_width();
    if (!(grid_step > 0.0 && grid_step < W)) throw PreconditionError("grid_step must lie in (0, collar width)");
    const bool lyap = spec.family == BarrierSpec::Family::lyapunov;
    const RadialProfile g = lyap ? RadialProfile::lyapunov(spec.param) : RadialProfile::barrier(spec.param);
    // -F[d^{-lambda}] <= F[-d^{-lambda}] and -F[1 - d^rho] <= F[d^rho - 1]
    const RadialProfile g_pair = g.negated();

    std::vector<double> ds = geometric_samples(plan.d_min_factor * dom.diameter(), W, plan.n_geometric);
    ds.pop_back();  // d = W is the collar edge itself
    const double fine = grid_step / 4.0;
    for (double d = fine; d < W - 0.5 * fine; d += fine) ds.push_back(d);
    std::sort(ds.begin(), ds.end());

    BarrierCertificate out;
    out.spec = spec;
    out.collar_width = W;
    out.grid_step = grid_step;
    std::vector<BarrierSample> samples;
    for (double d : ds) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        BarrierSample s{d, -std::numeric_limits<double>::infinity(), nan, nan};
        for (const auto& x : points_at_distance(dom, d, plan.n_directions)) {
            const double f = eval_F_radial(p, g, x);
            s.F = std::max(s.F, f);
            const double f_pair = eval_F_radial(p, g_pair, x);
            if (-f_pair > f + 1e-12 * (1.0 + std::fabs(f))) {
                out.ordering_holds = false;
                ++out.ordering_violations;
            }
        }
        if (!lyap && cert) {
            const double rho = spec.param;
            const double lead = rho * std::pow(d, cert->gamma + rho - 1.0);
            const double tail = p.reg.B * p.reg.B * std::pow(d, 2.0 * p.reg.beta - cert->gamma - 1.0);
            s.printed_bound = lead * (-cert->k + (rho - 1.0) * tail);
            s.bound = lead * (-cert->k + (1.0 - rho) * tail);
        }
        samples.push_back(s);
    }

    // Prefix maxima of F over d-sorted samples, then descend the lattice.
    std::vector<double> prefix(samples.size());
    double run = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < samples.size(); ++i) prefix[i] = run = std::max(run, samples[i].F);

    const int k_max = static_cast<int>(std::floor(W / grid_step + 1e-9));
    for (int k = 0; k < k_max; ++k) {
        const double delta = W - k * grid_step;
        if (delta < 0.5 * grid_step) break;
        const auto last = std::lower_bound(ds.begin(), ds.end(), delta) - ds.begin();
        if (last == 0) continue;
        const double margin = prefix[last - 1] + spec.M;
        if (margin <= 0.0) {
            out.delta = delta;
            out.margin = margin;
            out.witness_table.assign(samples.begin(), samples.begin() + last);
            for (const auto& s : out.witness_table) {
                if (std::isfinite(s.bound) && s.F > s.bound + 1e-9 * (1.0 + std::fabs(s.bound))) ++out.bound_violations;
                if (std::isfinite(s.printed_bound) && s.F > s.printed_bound + 1e-9 * (1.0 + std::fabs(s.printed_bound)))
                    ++out.printed_bound_violations;
            }
            return out;
        }
    }
    throw NumericalError("no admissible delta found down to the minimum lattice value " + std::to_string(grid_step));
}

}  // namespace detail

inline BarrierCertificate find_lyapunov_delta(const ControlProblem& p, double lambda, double M, double grid_step = 1e-3,
                                              const BarrierSampling& plan = {}) {
    if (!(lambda > 0.0)) throw PreconditionError("lyapunov: lambda must be > 0");
    if (!(M >= 0.0)) throw PreconditionError("lyapunov: M must be >= 0");
    return detail::find_delta(p, {BarrierSpec::Family::lyapunov, lambda, M}, grid_step, plan, nullptr);
}

inline BarrierCertificate find_barrier_delta(const ControlProblem& p, double rho, double M, double grid_step,
                                             const DegeneracyCertificate& cert, const BarrierSampling& plan = {}) {
    if (!(rho > 0.0 && rho < 1.0 - cert.gamma))
        throw PreconditionError("barrier: rho must lie in (0, 1 - gamma) with gamma = " + std::to_string(cert.gamma));
    if (!(M > 0.0)) throw PreconditionError("barrier: M must be > 0");
    return detail::find_delta(p, {BarrierSpec::Family::barrier, rho, M}, grid_step, plan, &cert);
}

inline BarrierCertificate find_barrier_delta(const ControlProblem& p, double rho, double M, double grid_step = 1e-3) {
    return find_barrier_delta(p, rho, M, grid_step, degeneracy_certificate(p));
}

inline nlohmann::json to_json(const BarrierCertificate& c) {
    nlohmann::json table = nlohmann::json::array();
    for (const auto& s : c.witness_table) {
        nlohmann::json row = {s.d, s.F};
        for (double v : {s.bound, s.printed_bound})
            row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
        table.push_back(row);
    }
    const bool lyap = c.spec.family == BarrierSpec::Family::lyapunov;
    return {{"family", lyap ? "lyapunov" : "barrier"},
            {lyap ? "lambda" : "rho", c.spec.param},
            {"M", c.spec.M},
            {"delta", c.delta},
            {"margin", c.margin},
            {"collar_width", c.collar_width},
            {"grid_step", c.grid_step},
            {"ordering_holds", c.ordering_holds},
            {"ordering_violations", c.ordering_violations},
            {"bound_violations", c.bound_violations},
            {"printed_bound_violations", c.printed_bound_violations},
            {"witness_columns", {"d", "F", "bound", "printed_bound"}},
            {"witness_table", table}};
}

}  // namespace hjb
