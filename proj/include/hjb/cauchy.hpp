#pragma once

// Time stepping for u_t + H[u] = 0 on a Grid: explicit Euler under the CFL
// bound and implicit Euler solved by Howard policy iteration.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/banded.hpp"
#include "hjb/discretization.hpp"
#include "hjb/error.hpp"

namespace hjb {

struct CauchyState {
    double t = 0.0;
    GridField u;
    double u0_sup = 0.0;
    double l_sup = 0.0;
    long step_count = 0;
};

inline CauchyState initial_state(const Grid& g, GridField u0) {
    if (u0.size() != g.size()) throw PreconditionError("initial data length does not match the grid");
    for (std::size_t i = 0; i < u0.size(); ++i)
        if (!std::isfinite(u0[i])) throw PreconditionError("initial data is not finite at node " + std::to_string(i));
    CauchyState s;
    s.u0_sup = sup_norm(u0);
    s.l_sup = l_sup(g);
    s.u = std::move(u0);
    return s;
}

/// ||u0|| + ||l|| t, the a-priori bound.
inline double apriori_bound(const CauchyState& s) { return s.u0_sup + s.l_sup * s.t; }

namespace detail {

inline void check_finite(const GridField& u, double t) {
    for (std::size_t i = 0; i < u.size(); ++i)
        if (!std::isfinite(u[i]))
            throw NumericalError("non-finite value at node " + std::to_string(i) + " at t = " + std::to_string(t));
}

inline void check_bound(const CauchyState& s) {
    const double bound = apriori_bound(s);
    const double m = sup_norm(s.u);
    if (m > bound + 1e-9 * std::max(1.0, bound))
        throw NumericalError("a-priori bound violated at t = " + std::to_string(s.t) + ": |u| = " + std::to_string(m) +
                             " > " + std::to_string(bound));
}

}  // namespace detail

namespace detail {
inline void check_dt_explicit(const Grid& g, double dt) {
    if (!(dt > 0.0)) throw PreconditionError("explicit step: dt must be > 0");
    const double cfl = cfl_dt(g);
    if (dt > cfl * (1.0 + 1e-12))
        throw PreconditionError("explicit step: dt = " + std::to_string(dt) + " exceeds the CFL bound " + std::to_string(cfl));
}

/// u <- u - dt H[u] in place; `work` is scratch space.
inline void explicit_update(const Grid& g, GridField& u, double dt, double t_new, GridField& work) {
    apply_H_into(g, u, work);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] -= dt * work[i];
    check_finite(u, t_new);
}
}  // namespace detail

inline CauchyState step_explicit(const Grid& g, const CauchyState& s, double dt) {
    detail::check_dt_explicit(g, dt);
    CauchyState out = s;
    GridField work;
    detail::explicit_update(g, out.u, dt, s.t + dt, work);
    out.t = s.t + dt;
    ++out.step_count;
    return out;
}

struct PolicyStats {
    int sweeps = 0;
    double residual = 0.0;  // ||u + dt H[u] - u_old||
};

/// Implicit Euler step u + dt H[u] = u_old by policy iteration. Each
/// frozen-policy system I + dt A is an M-matrix solved by banded LU.
inline CauchyState step_implicit_policy(const Grid& g, const CauchyState& s, double dt, PolicyStats* stats = nullptr,
                                        int max_sweeps = 100) {
    if (!(dt > 0.0)) throw PreconditionError("implicit step: dt must be > 0");
    const std::size_t n = g.size();
    const int sides = g.lattice.sides();
    const auto& nbr = g.lattice.neighbors;
    std::vector<int> policy;
    apply_H(g, s.u, &policy);

    GridField u = s.u;
    BandMatrix A(n, g.lattice.bandwidth);
    PolicyStats st;
    for (;;) {
        if (st.sweeps >= max_sweeps)
            throw NumericalError("policy iteration exceeded " + std::to_string(max_sweeps) +
                                 " sweeps, residual = " + std::to_string(st.residual));
        ++st.sweeps;
        A.clear();
        for (std::size_t i = 0; i < n; ++i) {
            const NodeStencil& ns = g.st(static_cast<std::size_t>(policy[i]), i);
            A.at(i, i) = 1.0 + dt * ns.row_sum;
            for (int k = 0; k < sides; ++k)
                if (nbr[i][k] >= 0) A.at(i, static_cast<std::size_t>(nbr[i][k])) -= dt * ns.w[k];
            u[i] = s.u[i] + dt * ns.l;
        }
        A.solve(u);
        detail::check_finite(u, s.t + dt);

        // Improve the policy only on strict gains so the iteration terminates.
        bool changed = false;
        st.residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const int cur = policy[i];
            double best = apply_H_node(g, static_cast<std::size_t>(cur), i, u);
            const double base = best;
            int arg = cur;
            for (std::size_t c = 0; c < g.n_controls; ++c) {
                if (static_cast<int>(c) == cur) continue;
                const double v = apply_H_node(g, c, i, u);
                if (v > best) {
                    best = v;
                    arg = static_cast<int>(c);
                }
            }
            if (arg != cur && best - base > 1e-13 * (1.0 + std::fabs(base))) {
                policy[i] = arg;
                changed = true;
            }
            st.residual = std::max(st.residual, std::fabs(u[i] + dt * best - s.u[i]));
        }
        if (!changed || st.residual < 1e-12) break;
    }
    if (stats) *stats = st;
    CauchyState out = s;
    out.u = std::move(u);
    out.t = s.t + dt;
    ++out.step_count;
    return out;
}

struct StepMode {
    enum class Kind { explicit_euler, implicit_policy };
    Kind kind = Kind::explicit_euler;
    double dt = 0.0;  // implicit: requested step; explicit: 0 = CFL step

    static StepMode explicit_cfl() { return {}; }
    static StepMode implicit(double dt) { return {Kind::implicit_policy, dt}; }
    std::string name() const { return kind == Kind::explicit_euler ? "explicit" : "implicit"; }
};

/// Largest step the mode will take on this grid.
inline double max_step(const Grid& g, const StepMode& mode) {
    const double cfl = cfl_dt(g);
    if (mode.kind == StepMode::Kind::explicit_euler) {
        const double dt = mode.dt > 0.0 ? std::min(mode.dt, cfl) : cfl;
        if (!std::isfinite(dt)) throw PreconditionError("explicit stepping needs a finite CFL bound; give --dt");
        return dt;
    }
    if (!(mode.dt > 0.0)) throw PreconditionError("implicit stepping requires dt > 0");
    return mode.dt;
}

inline CauchyState step(const Grid& g, const CauchyState& s, const StepMode& mode, double dt,
                        PolicyStats* stats = nullptr) {
    return mode.kind == StepMode::Kind::explicit_euler ? step_explicit(g, s, dt) : step_implicit_policy(g, s, dt, stats);
}

/// Advances s to time t_end in equal steps no larger than the mode's step,
/// calling observer after every step. The a-priori bound is checked each step.
inline void advance_to(const Grid& g, CauchyState& s, double t_end, const StepMode& mode,
                       const std::function<void(const CauchyState&)>& observer = {}) {
    const double span = t_end - s.t;
    if (span <= 0.0) return;
    const double hmax = max_step(g, mode);
    const long steps = std::max(1L, static_cast<long>(std::ceil(span / hmax * (1.0 - 1e-12))));
    const double dt = span / static_cast<double>(steps);
    const double t0 = s.t;
    const bool expl = mode.kind == StepMode::Kind::explicit_euler;
    if (expl) detail::check_dt_explicit(g, dt);
    GridField work;
    for (long k = 1; k <= steps; ++k) {
        const double t_new = k == steps ? t_end : t0 + dt * static_cast<double>(k);
        if (expl) {
            detail::explicit_update(g, s.u, dt, t_new, work);
            ++s.step_count;
        } else {
            s = step_implicit_policy(g, s, dt);
        }
        s.t = t_new;
        detail::check_bound(s);
        if (observer) observer(s);
    }
}

struct Trajectory {
    std::vector<double> times;
    std::vector<GridField> snapshots;
    std::vector<double> step_times;  // every step, for extrema curves
    std::vector<double> step_min;
    std::vector<double> step_max;
    std::string problem_hash;
    double h = 0.0;
    double dt = 0.0;
    std::string mode;
};

/// Evolves u0 to time T; snapshots at t = 0, snapshot_every, 2 snapshot_every, ..., T.
inline Trajectory evolve(const Grid& g, const GridField& u0, double T, const StepMode& mode, double snapshot_every,
                         const std::function<void(const CauchyState&)>& observer = {}) {
    if (!(T > 0.0)) throw PreconditionError("evolve: T must be > 0");
    if (!(snapshot_every > 0.0)) snapshot_every = T;
    Trajectory tr;
    tr.problem_hash = problem_hash(g.problem);
    tr.h = g.h();
    tr.dt = max_step(g, mode);
    tr.mode = mode.name();
    CauchyState s = initial_state(g, u0);
    auto record = [&](const CauchyState& cs) {
        tr.step_times.push_back(cs.t);
        tr.step_min.push_back(*std::min_element(cs.u.begin(), cs.u.end()));
        tr.step_max.push_back(*std::max_element(cs.u.begin(), cs.u.end()));
    };
    record(s);
    if (observer) observer(s);
    tr.times.push_back(0.0);
    tr.snapshots.push_back(s.u);
    const long n_snap = std::max(1L, static_cast<long>(std::ceil(T / snapshot_every * (1.0 - 1e-12))));
    for (long k = 1; k <= n_snap; ++k) {
        const double target = k == n_snap ? T : snapshot_every * static_cast<double>(k);
        advance_to(g, s, target, mode, [&](const CauchyState& cs) {
            record(cs);
            if (observer) observer(cs);
        });
        tr.times.push_back(s.t);
        tr.snapshots.push_back(s.u);
    }
    return tr;
}

inline nlohmann::json trajectory_metadata(const Trajectory& tr) {
    return {{"problem_hash", tr.problem_hash},
            {"h", tr.h},
            {"dt", tr.dt},
            {"mode", tr.mode},
            {"times", tr.times},
            {"steps", tr.step_times.size() - 1}};
}

}  // namespace hjb
