#pragma once

// The ergodic pair H[chi] = c, sup chi = 0, by long-time evolution and by
// relative value iteration on implicit steps.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <json.hpp>

#include "hjb/cauchy.hpp"
#include "hjb/discretization.hpp"
#include "hjb/error.hpp"

namespace hjb {

struct ErgodicPair {
    std::string method;
    double c = 0.0;
    GridField chi;
    double residual = 0.0;           // sup of |H[chi] - c| over nodes with d >= layer
    double boundary_residual = 0.0;  // same over the excluded layer d < layer
    double layer = 0.0;
    long iterations = 0;
};

struct ErgodicSolverParams {
    double tolerance = 1e-9;
    int max_iterations = 200000;  // rvi steps; longtime doublings use max_doublings
    int max_doublings = 16;
    int anchor_node = -1;         // -1: node of largest d
    double T1 = 1.0;
    double T2 = 2.0;
    double rvi_dt = 0.0;          // 0: max(10 * cfl_dt, 1e-2)
    double longtime_dt = 1e-2;    // implicit step for the long-time evolution
    double layer_factor = 10.0;   // residual excludes d < layer_factor * h
};

inline GridField normalize_chi(const GridField& chi) {
    if (chi.empty()) return chi;
    for (double v : chi)
        if (!std::isfinite(v)) throw PreconditionError("normalize_chi: non-finite value");
    const double m = *std::max_element(chi.begin(), chi.end());
    GridField out(chi.size());
    for (std::size_t i = 0; i < chi.size(); ++i) out[i] = chi[i] - m;
    return out;
}

/// Fills residual, boundary_residual and layer of `pair` from H[chi] - c.
inline void ergodic_residuals(const Grid& g, ErgodicPair& pair, double layer_factor) {
    const GridField hchi = apply_H(g, pair.chi);
    pair.layer = layer_factor * g.h();
    pair.residual = 0.0;
    pair.boundary_residual = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double r = std::fabs(hchi[i] - pair.c);
        if (g.dist[i].d >= pair.layer)
            pair.residual = std::max(pair.residual, r);
        else
            pair.boundary_residual = std::max(pair.boundary_residual, r);
    }
}

inline int default_anchor(const Grid& g) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.size(); ++i)
        if (g.dist[i].d > g.dist[best].d) best = i;
    return static_cast<int>(best);
}

namespace detail {
inline double node_mean(const GridField& u) {
    double s = 0.0;
    for (double v : u) s += v;
    return s / static_cast<double>(u.size());
}

// Evolves s to t_end, subtracting the anchor value after every step and
// accumulating it in offset. H ignores constants, so s.u + offset is the
// evolved field, while s.u stays of the size of the oscillation and the
// stencil does not amplify the rounding of a growing c t.
inline void advance_anchored(const Grid& g, CauchyState& s, double& offset, double t_end, const StepMode& mode,
                             std::size_t anchor) {
    const double span = t_end - s.t;
    if (span <= 0.0) return;
    const long steps = std::max(1L, static_cast<long>(std::ceil(span / max_step(g, mode) * (1.0 - 1e-12))));
    const double dt = span / static_cast<double>(steps);
    const double t0 = s.t;
    for (long k = 1; k <= steps; ++k) {
        s = step(g, s, mode, dt);
        s.t = k == steps ? t_end : t0 + dt * static_cast<double>(k);
        const double shift = s.u[anchor];
        for (double& v : s.u) v -= shift;
        offset += shift;
    }
}
}  // namespace detail

inline ErgodicPair solve_ergodic_longtime(const Grid& g, const ErgodicSolverParams& prm = {}) {
    if (!(prm.tolerance > 0.0)) throw PreconditionError("ergodic: tolerance must be > 0");
    if (!(prm.T1 >= 1.0 && prm.T1 < prm.T2)) throw PreconditionError("ergodic: need 1 <= T1 < T2");
    const StepMode mode = prm.longtime_dt > 0.0 ? StepMode::implicit(prm.longtime_dt) : StepMode::explicit_cfl();
    const auto anchor = static_cast<std::size_t>(default_anchor(g));
    CauchyState s = initial_state(g, GridField(g.size(), 0.0));
    double offset = 0.0;
    double t1 = prm.T1, t2 = prm.T2;
    detail::advance_anchored(g, s, offset, t1, mode, anchor);
    double mean1 = detail::node_mean(s.u) + offset;
    double c_prev = std::numeric_limits<double>::quiet_NaN();
    GridField chi_prev;
    ErgodicPair pair;
    pair.method = "longtime";
    for (int k = 0; k <= prm.max_doublings; ++k) {
        detail::advance_anchored(g, s, offset, t2, mode, anchor);
        const double mean2 = detail::node_mean(s.u) + offset;
        const double c = -(mean2 - mean1) / (t2 - t1);
        GridField chi = normalize_chi(s.u);
        pair.iterations = k + 1;
        // The node-average slope can settle long before the profile does (for
        // symmetric problems it is exact at once), so the profile must settle too.
        if (std::isfinite(c_prev) && std::fabs(c - c_prev) < prm.tolerance) {
            double change = 0.0;
            for (std::size_t i = 0; i < chi.size(); ++i) change = std::max(change, std::fabs(chi[i] - chi_prev[i]));
            if (change < prm.tolerance * (t2 - t1)) {
                pair.c = c;
                pair.chi = chi;
                ergodic_residuals(g, pair, prm.layer_factor);
                if (pair.residual <= prm.tolerance) return pair;
            }
        }
        c_prev = c;
        chi_prev = std::move(chi);
        t1 = t2;
        mean1 = mean2;
        t2 *= 2.0;
    }
    throw NumericalError("longtime ergodic solve did not converge within " + std::to_string(prm.max_doublings) +
                         " doublings");
}

inline ErgodicPair solve_ergodic_rvi(const Grid& g, const ErgodicSolverParams& prm = {}) {
    if (!(prm.tolerance > 0.0)) throw PreconditionError("ergodic: tolerance must be > 0");
    const int anchor = prm.anchor_node < 0 ? default_anchor(g) : prm.anchor_node;
    if (anchor >= static_cast<int>(g.size())) throw PreconditionError("ergodic: anchor node out of range");
    // The fixed point does not depend on dt, only the contraction rate does.
    const double dt = prm.rvi_dt > 0.0 ? prm.rvi_dt : std::max(10.0 * cfl_dt(g), 1e-2);
    if (!std::isfinite(dt)) throw PreconditionError("ergodic: rvi needs dt (no finite CFL bound)");

    CauchyState s = initial_state(g, GridField(g.size(), 0.0));
    ErgodicPair pair;
    pair.method = "rvi";
    double prev_update = std::numeric_limits<double>::infinity();
    int growing = 0;
    for (long it = 1; it <= prm.max_iterations; ++it) {
        CauchyState next = step_implicit_policy(g, s, dt);
        const double va = next.u[static_cast<std::size_t>(anchor)];
        double update = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            next.u[i] -= va;
            update = std::max(update, std::fabs(next.u[i] - s.u[i]));
        }
        update /= dt;
        next.t = 0.0;
        s = std::move(next);
        pair.iterations = it;
        if (update < prm.tolerance) {
            pair.c = -va / dt;
            pair.chi = normalize_chi(s.u);
            ergodic_residuals(g, pair, prm.layer_factor);
            return pair;
        }
        growing = update > prev_update * (1.0 + 1e-12) ? growing + 1 : 0;
        if (growing >= 100)
            throw NumericalError("rvi: anchored updates stopped contracting (oscillation) at iteration " +
                                 std::to_string(it));
        prev_update = update;
    }
    throw NumericalError("rvi did not converge within " + std::to_string(prm.max_iterations) + " iterations");
}

inline ErgodicPair solve_ergodic(const Grid& g, const std::string& method, const ErgodicSolverParams& prm = {}) {
    if (method == "longtime") return solve_ergodic_longtime(g, prm);
    if (method == "rvi") return solve_ergodic_rvi(g, prm);
    throw PreconditionError("unknown ergodic method '" + method + "'");
}

inline nlohmann::json to_json(const ErgodicPair& p) {
    return {{"method", p.method},
            {"c", p.c},
            {"residual", p.residual},
            {"boundary_residual", p.boundary_residual},
            {"layer", p.layer},
            {"iterations", p.iterations},
            {"chi_sup", sup_norm(p.chi)}};
}

}  // namespace hjb
