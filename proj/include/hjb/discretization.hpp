#pragma once

// Monotone finite differences for H on interior lattices. Each node carries,
// per control, a stencil H_a[u]_i = sum_j w_ij (u_i - u_j) - l_i with w_ij >= 0.
// Drift is upwinded per axis; diffusion uses the node diffusivity, except on a
// side whose neighbour lies outside the domain, where the normal diffusivity
// at the boundary foot point is used and clamped to zero below h^2. No
// boundary values are ever read.

#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/error.hpp"
#include "hjb/geometry.hpp"
#include "hjb/parallel.hpp"
#include "hjb/problem.hpp"

namespace hjb {

using GridField = std::vector<double>;

/// Side order: -x1, +x1, -x2, +x2.
struct Lattice {
    Domain domain;
    double h = 0.0;
    std::vector<Point> nodes;
    std::vector<std::array<int, 4>> neighbors;  // -1 = outside the domain
    std::size_t bandwidth = 0;                  // max |i - j| over neighbour pairs

    std::size_t size() const { return nodes.size(); }
    int sides() const { return domain.dim() == 1 ? 2 : 4; }
};

inline Lattice build_lattice(const Domain& dom, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw PreconditionError("grid step h must be positive");
    Lattice lat;
    lat.domain = dom;
    lat.h = h;
    if (dom.kind == Domain::Kind::interval) {
        const double q = (dom.hi - dom.lo) / h;
        const double m = std::round(q);
        if (std::fabs(q - m) > 1e-9 * q) throw PreconditionError("grid step h does not divide the interval length");
        const int n = static_cast<int>(m) - 1;
        if (n < 3) throw PreconditionError("grid step h too coarse: fewer than 3 interior nodes");
        for (int i = 1; i <= n; ++i) {
            lat.nodes.push_back({i == n ? dom.hi - h : dom.lo + i * h, 0.0});
            lat.neighbors.push_back({i == 1 ? -1 : i - 2, i == n ? -1 : i, -1, -1});
        }
        lat.bandwidth = 1;
        return lat;
    }
    const int m = static_cast<int>(std::ceil(dom.radius / h)) + 1;
    std::map<std::pair<int, int>, int> index;
    for (int j = -m; j <= m; ++j)
        for (int i = -m; i <= m; ++i) {
            if (std::hypot(i * h, j * h) < dom.radius) {
                index[{i, j}] = static_cast<int>(lat.nodes.size());
                lat.nodes.push_back({dom.center[0] + i * h, dom.center[1] + j * h});
            }
        }
    if (lat.nodes.size() < 3) throw PreconditionError("grid step h too coarse: fewer than 3 interior nodes");
    auto find = [&](int i, int j) {
        auto it = index.find({i, j});
        return it == index.end() ? -1 : it->second;
    };
    lat.neighbors.resize(lat.nodes.size());
    for (const auto& [ij, k] : index) {
        const auto [i, j] = ij;
        lat.neighbors[k] = {find(i - 1, j), find(i + 1, j), find(i, j - 1), find(i, j + 1)};
        for (int nb : lat.neighbors[k])
            if (nb >= 0) lat.bandwidth = std::max<std::size_t>(lat.bandwidth, static_cast<std::size_t>(std::abs(nb - k)));
    }
    return lat;
}

struct NodeStencil {
    std::array<double, 4> w{};  // coefficient of (u_i - u_neighbor) per side
    double l = 0.0;
    double row_sum = 0.0;       // sum of w
};

struct StencilEntry {
    int node = 0;
    int control = 0;
    std::array<char, 2> upwind{'0', '0'};  // per axis: '+' forward, '-' backward, '0' no drift
    std::array<double, 4> diffusivity{};   // diffusion coefficient used on each side (before / h^2)
    double row_sum = 0.0;
    double min_offdiag = 0.0;               // min over sides of w (>= 0 for a monotone row)
    double cfl_contribution = 0.0;          // sum |w|
    bool exterior_reference = false;        // a boundary side kept a nonzero diffusivity
    bool outward_drift = false;             // drift pointed out of the domain at this node
};

struct StencilReport {
    std::vector<StencilEntry> entries;
    std::size_t exterior_references = 0;
    std::size_t negative_coefficients = 0;
    std::size_t outward_drift_nodes = 0;
    std::size_t clamped_boundary_sides = 0;
    bool monotone() const { return negative_coefficients == 0; }
};

/// Interior lattice of a problem with per-node caches and stencils.
struct Grid {
    ControlProblem problem;
    Lattice lattice;
    std::vector<DistanceInfo> dist;
    std::size_t n_controls = 0;
    std::vector<CoefficientSample> coef;  // control-major: coef[c * n + i]
    std::vector<NodeStencil> stencil;     // control-major
    StencilReport report;
    double cfl = 0.0;  // 1 / max sum |w|, see cfl_dt

    std::size_t size() const { return lattice.size(); }
    double h() const { return lattice.h; }
    const Domain& domain() const { return lattice.domain; }
    const NodeStencil& st(std::size_t c, std::size_t i) const { return stencil[c * size() + i]; }
    const CoefficientSample& cf(std::size_t c, std::size_t i) const { return coef[c * size() + i]; }
};

namespace detail {

inline DistanceInfo node_distance(const Domain& dom, const Point& x) {
    if (dom.kind == Domain::Kind::disk && x[0] == dom.center[0] && x[1] == dom.center[1]) {
        DistanceInfo di;
        di.d = dom.radius;  // Dd and D^2 d are undefined here and never used off the collar
        return di;
    }
    return distance(dom, x);
}

inline double foot_normal_diffusivity(const ControlProblem& p, const Control& c, const Point& x) {
    const double eps = 1e-6 * p.domain.diameter();
    const Point foot = near_foot_point(p.domain, x, eps);
    const auto di = distance(p.domain, foot);
    const auto s = p.evaluate(c, foot, di.d);
    const int n = p.dim();
    double v = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v += di.grad[i] * s.a[i][j] * di.grad[j];
    return v;
}

}  // namespace detail

inline Grid build_grid(const ControlProblem& p, double h) {
    if (p.domain.kind == Domain::Kind::disk && h > p.domain.radius / 8.0 * (1.0 + 1e-12))
        throw PreconditionError("grid step h too coarse for the disk: h must be <= R/8");
    Grid g;
    g.problem = p;
    g.lattice = build_lattice(p.domain, h);
    const std::size_t n = g.lattice.size();
    const int dim = p.dim();
    const int sides = g.lattice.sides();
    g.n_controls = p.controls.size();
    g.dist.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.dist[i] = detail::node_distance(p.domain, g.lattice.nodes[i]);
    g.coef.resize(g.n_controls * n);
    g.stencil.resize(g.n_controls * n);
    const double h2 = h * h;
    for (std::size_t c = 0; c < g.n_controls; ++c) {
        const Control& ctl = p.controls[c];
        for (std::size_t i = 0; i < n; ++i) {
            const Point& x = g.lattice.nodes[i];
            const auto s = p.evaluate(ctl, x, g.dist[i].d);
            g.coef[c * n + i] = s;
            NodeStencil ns;
            ns.l = s.l;
            StencilEntry e;
            e.node = static_cast<int>(i);
            e.control = static_cast<int>(c);
            const auto& nb = g.lattice.neighbors[i];
            double foot_a = -1.0;
            for (int k = 0; k < dim; ++k) {
                const int lo = 2 * k, hi = 2 * k + 1;
                // diffusion
                for (int side : {lo, hi}) {
                    double coef = s.a[k][k];
                    if (nb[side] < 0) {
                        if (foot_a < 0.0) foot_a = detail::foot_normal_diffusivity(p, ctl, x);
                        coef = foot_a;
                        if (coef < h2) {
                            coef = 0.0;
                            ++g.report.clamped_boundary_sides;
                        } else {
                            e.exterior_reference = true;
                            ++g.report.exterior_references;
                            coef = 0.0;  // no exterior value exists; the term is dropped
                            e.diffusivity[side] = foot_a;
                            continue;
                        }
                    }
                    e.diffusivity[side] = coef;
                    ns.w[side] += coef / h2;
                }
                // drift: -b_k D_k u, forward difference for b_k > 0
                const double bk = s.b[k];
                if (bk > 0.0) {
                    if (nb[hi] >= 0) {
                        ns.w[hi] += bk / h;
                        e.upwind[k] = '+';
                    } else {
                        ns.w[lo] -= bk / h;
                        e.upwind[k] = '-';
                        e.outward_drift = true;
                    }
                } else if (bk < 0.0) {
                    if (nb[lo] >= 0) {
                        ns.w[lo] += -bk / h;
                        e.upwind[k] = '-';
                    } else {
                        ns.w[hi] -= -bk / h;
                        e.upwind[k] = '+';
                        e.outward_drift = true;
                    }
                }
            }
            e.min_offdiag = std::numeric_limits<double>::infinity();
            for (int side = 0; side < sides; ++side) {
                ns.row_sum += ns.w[side];
                e.cfl_contribution += std::fabs(ns.w[side]);
                e.min_offdiag = std::min(e.min_offdiag, ns.w[side]);
                if (ns.w[side] < 0.0) ++g.report.negative_coefficients;
            }
            e.row_sum = ns.row_sum;
            if (e.outward_drift) ++g.report.outward_drift_nodes;
            g.stencil[c * n + i] = ns;
            g.report.entries.push_back(e);
        }
    }
    double worst = 0.0;
    for (const auto& e : g.report.entries) worst = std::max(worst, e.cfl_contribution);
    g.cfl = worst == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / worst;
    return g;
}

/// Value of the frozen-control operator at node i.
inline double apply_H_node(const Grid& g, std::size_t c, std::size_t i, const GridField& u) {
    const NodeStencil& ns = g.st(c, i);
    const auto& nb = g.lattice.neighbors[i];
    double v = 0.0;
    const int sides = g.lattice.sides();
    for (int s = 0; s < sides; ++s)
        if (nb[s] >= 0) v += ns.w[s] * (u[i] - u[nb[s]]);
    return v - ns.l;
}

/// H_h[u] into `out`; if `policy` is given it receives the maximizing control
/// per node (ties go to the lowest index).
inline void apply_H_into(const Grid& g, const GridField& u, GridField& out, std::vector<int>* policy = nullptr) {
    const std::size_t n = g.size();
    if (u.size() != n) throw PreconditionError("apply_H: field length does not match the grid");
    out.resize(n);
    if (policy) policy->assign(n, 0);
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double best = apply_H_node(g, 0, i, u);
            int arg = 0;
            for (std::size_t c = 1; c < g.n_controls; ++c) {
                const double v = apply_H_node(g, c, i, u);
                if (v > best) {
                    best = v;
                    arg = static_cast<int>(c);
                }
            }
            out[i] = best;
            if (policy) (*policy)[i] = arg;
        }
    });
}

inline GridField apply_H(const Grid& g, const GridField& u, std::vector<int>* policy = nullptr) {
    GridField out;
    apply_H_into(g, u, out, policy);
    return out;
}

inline GridField apply_H(const ControlProblem& p, const Grid& g, const GridField& u) {
    if (p.canonical() != g.problem.canonical()) throw PreconditionError("apply_H: grid was built for another problem");
    return apply_H(g, u);
}

/// Largest explicit step keeping u - dt H[u] monotone: 1 / max sum |w|.
inline double cfl_dt(const Grid& g) { return g.cfl; }

/// max over nodes and controls of |l|.
inline double l_sup(const Grid& g) {
    double m = 0.0;
    for (const auto& s : g.stencil) m = std::max(m, std::fabs(s.l));
    return m;
}

inline double sup_norm(const GridField& u) {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::fabs(v));
    return m;
}

/// Samples a function of (x, d) on the grid nodes.
template <class Fn>
GridField sample_field(const Grid& g, Fn&& fn) {
    GridField u(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) u[i] = fn(g.lattice.nodes[i], g.dist[i].d);
    return u;
}

/// Samples an expression in {x1, x2, d}.
inline GridField sample_expr(const Grid& g, const Expr& e) {
    const bool two = g.problem.dim() == 2;
    return sample_field(g, [&](const Point& x, double d) {
        Bindings b;
        b.set(Var::x1, x[0]).set(Var::d, d);
        if (two) b.set(Var::x2, x[1]);
        return e.eval(b);
    });
}

inline nlohmann::json to_json(const StencilReport& r, bool with_entries = true) {
    nlohmann::json j = {{"exterior_references", r.exterior_references},
                        {"negative_coefficients", r.negative_coefficients},
                        {"outward_drift_nodes", r.outward_drift_nodes},
                        {"clamped_boundary_sides", r.clamped_boundary_sides},
                        {"monotone", r.monotone()}};
    if (with_entries) {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& e : r.entries) {
            rows.push_back({{"node", e.node},
                            {"control", e.control},
                            {"upwind", std::string(e.upwind.begin(), e.upwind.end())},
                            {"diffusivity", e.diffusivity},
                            {"row_sum", e.row_sum},
                            {"min_offdiag", e.min_offdiag},
                            {"cfl_contribution", e.cfl_contribution},
                            {"exterior_reference", e.exterior_reference},
                            {"outward_drift", e.outward_drift}});
        }
        j["entries"] = rows;
    }
    return j;
}

}  // namespace hjb
