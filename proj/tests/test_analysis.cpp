#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hjb/analysis.hpp"
#include "hjb/barrier.hpp"

using namespace hjb;
using nlohmann::json;

namespace {

ControlProblem zero_cost_smooth() {
    json cfg = preset_config("smoothA");
    cfg["controls"][0]["l"] = "0";
    return assemble_problem(cfg);
}

std::size_t node_at(const Grid& g, double x) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < g.size(); ++i)
        if (std::fabs(g.lattice.nodes[i][0] - x) < std::fabs(g.lattice.nodes[best][0] - x)) best = i;
    return best;
}

// Certified width for rho at margin M, capped by the lambda = 1 Lyapunov width.
double certified_width(const ControlProblem& p, double rho, double M, double step = 1e-5) {
    const auto cert = degeneracy_certificate(p);
    return std::min(find_barrier_delta(p, rho, M, step, cert).delta, find_lyapunov_delta(p, 1.0, 0.0, step).delta);
}

// Continuum exponent of chi - chi(0) on [lo, hi] for a 1D single-control
// problem: chi' = p solves a p' + b p = -(c + l), and the solution bounded at
// 0 is p = -E^-1 int_0^x E (c + l) / a with E = exp(int b / a). Trapezoids on
// a geometric grid; log-log least squares over [lo, hi].
double continuum_exponent(const ControlProblem& p, double c, double lo, double hi) {
    const std::size_t n = 400001;
    std::vector<double> s(n), r(n), f(n), logE(n), I(n), chi(n), aa(n), ll(n);
    const double a0 = std::log(1e-14), a1 = std::log(0.3);
    const auto& ctl = p.controls[0];
    for (std::size_t k = 0; k < n; ++k) {
        s[k] = std::exp(a0 + (a1 - a0) * static_cast<double>(k) / static_cast<double>(n - 1));
        const auto cf = p.evaluate(ctl, {s[k], 0.0}, s[k]);
        aa[k] = cf.a[0][0];
        ll[k] = cf.l;
        r[k] = cf.b[0] / aa[k];
    }
    logE[0] = 0.0;
    for (std::size_t k = 1; k < n; ++k) logE[k] = logE[k - 1] + 0.5 * (r[k] + r[k - 1]) * (s[k] - s[k - 1]);
    const double top = logE[n - 1];
    for (auto& v : logE) v -= top;
    for (std::size_t k = 0; k < n; ++k) f[k] = std::exp(logE[k]) * (c + ll[k]) / aa[k];
    I[0] = 0.0;
    for (std::size_t k = 1; k < n; ++k) I[k] = I[k - 1] + 0.5 * (f[k] + f[k - 1]) * (s[k] - s[k - 1]);
    chi[0] = 0.0;
    double prev = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        const double pk = -I[k] / std::exp(logE[k]);
        chi[k] = chi[k - 1] + 0.5 * (pk + prev) * (s[k] - s[k - 1]);
        prev = pk;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0, m = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (s[k] < lo || s[k] > hi) continue;
        const double x = std::log(s[k]), y = std::log(std::fabs(chi[k]));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

}  // namespace

TEST(Envelope, FormulaSanity) {
    const auto g = build_grid(preset("smoothA"), 1e-2);
    GridField v(g.size(), 0.0);
    const std::size_t i = node_at(g, 0.05);
    v[i] = 1.25;
    const auto r = boundary_envelope_check(g, v, -10.0, 1.0, 0.5, 0.2, {0.0, 0.25});
    EXPECT_NEAR(1.0 + std::sqrt(0.2) - std::sqrt(0.05), 1.2236, 1e-4);
    EXPECT_NEAR(r.upper_violation, 1.25 - (1.0 + std::sqrt(0.2) - std::sqrt(g.dist[i].d)), 1e-12);
    EXPECT_EQ(r.lower_violation, 0.0);
}

TEST(Envelope, ZeroCorrectorHasNoViolation) {
    const auto p = preset("constantL");
    const auto g = build_grid(p, 1e-3);
    const auto pair = solve_ergodic_rvi(g);
    for (double rho : {0.1, 0.4, 0.9})
        for (double delta : {0.02, 0.1, 0.2}) {
            const auto r = boundary_envelope_check(g, GridField(g.size(), 0.0), rho, delta, {0.0, 0.25});
            EXPECT_EQ(r.violation(), 0.0);
            EXPECT_LT(sup_norm(pair.chi), 1e-9);
        }
}

TEST(Envelope, SmoothAStationaryCorrector) {
    const auto p = preset("smoothA");
    const auto g = build_grid(p, 1e-3);
    const auto pair = solve_ergodic_rvi(g);
    // M = 1 certifies a collar wider than 0.1 for rho = 0.4.
    const double dbar = certified_width(p, 0.4, 1.0);
    ASSERT_GE(dbar, 0.1);
    const auto r = boundary_envelope_check(g, pair.chi, 0.4, 0.1, {0.0, dbar});
    EXPECT_LE(r.violation(), 2e-2);
    EXPECT_GT(r.rim_nodes, 0u);
    EXPECT_GT(r.collar_nodes, 0u);
}

TEST(Envelope, EvolutiveCheckFromRimHistory) {
    const auto p = preset("smoothA");
    const auto g = build_grid(p, 1e-3);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    GridField u0(g.size());
    for (auto& v : u0) v = U(rng);
    const double delta = 0.02;
    RimTracker rim(g, delta);
    rim.observe(u0);
    CauchyState s = initial_state(g, u0);
    advance_to(g, s, 1.0, StepMode::implicit(1e-3), [&](const CauchyState& cs) { rim.observe(cs.u); });
    const double dbar = certified_width(p, 0.4, 2.0 * sup_norm(u0) + 1.0);
    ASSERT_GE(dbar, delta);
    const auto r = boundary_envelope_check(g, s.u, rim.min(), rim.max(), 0.4, delta, {0.0, dbar}, 1.0);
    EXPECT_LE(r.violation(), 2e-2);
    EXPECT_EQ(r.checked_at_t.value(), 1.0);
    EXPECT_EQ(to_json(r)["checked_at_t"], 1.0);
}

TEST(Envelope, Preconditions) {
    const auto g = build_grid(preset("degenerateB"), 1e-2);
    const GridField v(g.size(), 0.0);
    const EnvelopeBounds b{0.4, 0.05};
    EXPECT_THROW(boundary_envelope_check(g, v, 0.6, 0.02, b), PreconditionError);
    EXPECT_THROW(boundary_envelope_check(g, v, 0.0, 0.02, b), PreconditionError);
    EXPECT_THROW(boundary_envelope_check(g, v, 0.3, 0.1, b), PreconditionError);
    EXPECT_THROW(boundary_envelope_check(g, v, 0.0, 1.0, 0.3, 0.02, b, 0.5), PreconditionError);
    EXPECT_THROW(boundary_envelope_check(g, GridField(3, 0.0), 0.3, 0.02, b), PreconditionError);
    EXPECT_NO_THROW(boundary_envelope_check(g, v, 0.3, 0.02, b));
}

TEST(Holder, SyntheticSquareRoot) {
    const auto g = build_grid(preset("smoothA"), 1e-3);
    GridField chi(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) chi[i] = -std::sqrt(g.dist[i].d);
    for (const char* side : {"left", "right"}) {
        const auto f = holder_fit(g, chi, side, 1e-2, 0.05);
        EXPECT_NEAR(f.exponent, 0.5, 1e-3) << side;
        EXPECT_GT(f.r_squared, 0.999);
        EXPECT_NEAR(f.boundary_limit_value, 0.0, 1e-9);
        EXPECT_FALSE(f.lipschitz_consistent);
        EXPECT_GE(f.samples, 10u);
    }
}

TEST(Holder, FlatField) {
    const auto g = build_grid(preset("smoothA"), 1e-3);
    const auto f = holder_fit(g, GridField(g.size(), -0.25), "left", 1e-2, 0.05);
    EXPECT_TRUE(f.flat);
    EXPECT_TRUE(to_json(f)["exponent"].is_null());
}

TEST(Holder, SmoothAIsLipschitzConsistent) {
    const auto g = build_grid(preset("smoothA"), 1e-3);
    const auto chi = solve_ergodic_rvi(g).chi;
    for (const char* side : {"left", "right"}) {
        const auto f = holder_fit(g, chi, side, 1e-2, 0.05);
        EXPECT_TRUE(f.lipschitz_consistent) << side << " slope " << f.uncapped_exponent;
        EXPECT_EQ(f.exponent, std::min(1.0, f.uncapped_exponent));
    }
}

TEST(Holder, DegenerateBNonLipschitz) {
    const auto p = preset("degenerateB");
    const auto g = build_grid(p, 1e-3);
    const auto pair = solve_ergodic_rvi(g);
    const auto f = holder_fit(g, pair.chi, "left", 1e-2, 0.05);
    EXPECT_GE(f.exponent, 0.4);
    EXPECT_LE(f.exponent, 0.7);
    EXPECT_LT(f.uncapped_exponent, 0.95);
    EXPECT_FALSE(f.lipschitz_consistent);
    // Against the continuum corrector on the same fit range.
    const double oracle = continuum_exponent(p, pair.c, 1e-2, 0.05);
    EXPECT_NEAR(oracle, 0.63, 0.01);
    EXPECT_NEAR(f.exponent, oracle, 0.05);
}

TEST(Holder, Preconditions) {
    const auto g = build_grid(preset("smoothA"), 1e-3);
    const GridField chi(g.size(), 0.0);
    EXPECT_THROW(holder_fit(g, chi, "up", 1e-2, 0.05), PreconditionError);
    EXPECT_THROW(holder_fit(g, chi, "left", 1e-2, 0.3), PreconditionError);
    EXPECT_THROW(holder_fit(g, chi, "left", 0.05, 0.01), PreconditionError);
    EXPECT_THROW(holder_fit(g, GridField(5, 0.0), "left", 1e-2, 0.05), PreconditionError);
    EXPECT_THROW(holder_fit(build_grid(preset("smoothA"), 1e-2), GridField(99, 0.0), "left", 1e-2, 0.02),
                 PreconditionError);
}

TEST(Convergence, ConstantDataWithoutCost) {
    const auto g = build_grid(zero_cost_smooth(), 1e-2);
    ErgodicPair pair;
    pair.c = 0.0;
    pair.chi = GridField(g.size(), 0.0);
    const double C = 0.75;
    const auto tr = evolve(g, GridField(g.size(), C), 2.0, StepMode::implicit(0.1), 0.5);
    const auto r = convergence_diagnostics(g, tr, pair);
    EXPECT_NEAR(r.K, -C, 1e-12);
    for (double e : r.uniform_error) EXPECT_NEAR(e, 0.0, 1e-12);
    EXPECT_TRUE(r.monotone);
    EXPECT_TRUE(r.bracketed);
    EXPECT_TRUE(r.converged);
}

TEST(Convergence, ConstantLExactCancellation) {
    const auto g = build_grid(preset("constantL"), 1e-2);
    const auto pair = solve_ergodic_rvi(g);
    const auto r = run_convergence(g, pair, GridField(g.size(), 0.0));
    EXPECT_NEAR(r.K, 0.0, 1e-9);
    for (double e : r.uniform_error) EXPECT_LT(e, 1e-9);
    EXPECT_TRUE(r.converged);
}

TEST(Convergence, SmoothASineDecays) {
    const auto g = build_grid(preset("smoothA"), 1e-3);
    const auto pair = solve_ergodic_rvi(g);
    const auto u0 = sample_field(g, [](const Point& x, double) { return std::sin(2 * M_PI * x[0]); });
    const auto r = run_convergence(g, pair, u0);
    EXPECT_TRUE(r.monotone) << r.max_monotone_violation;
    EXPECT_TRUE(r.bracketed);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.uniform_error.back(), 1e-3);
    // Step-by-step restatement of the monotone bounds.
    for (std::size_t k = 1; k < r.times.size(); ++k) {
        EXPECT_GE(r.inf_gap[k], r.inf_gap[k - 1] - 1e-9);
        EXPECT_LE(r.sup_gap[k], r.sup_gap[k - 1] + 1e-9);
        EXPECT_GE(r.K, -r.sup_gap[k] - 1e-9);
        EXPECT_LE(r.K, -r.inf_gap[k] + 1e-9);
    }
}

TEST(Convergence, MismatchedGrids) {
    const auto g1 = build_grid(preset("smoothA"), 1e-2);
    const auto g2 = build_grid(preset("smoothA"), 2e-2);
    const auto pair = solve_ergodic_rvi(g1);
    const auto tr = evolve(g2, GridField(g2.size(), 0.0), 0.1, StepMode::implicit(0.05), 0.1);
    EXPECT_THROW(convergence_diagnostics(g1, tr, pair), PreconditionError);
    const auto g3 = build_grid(preset("degenerateB"), 1e-2);
    const auto tr3 = evolve(g3, GridField(g3.size(), 0.0), 0.1, StepMode::implicit(0.05), 0.1);
    EXPECT_THROW(convergence_diagnostics(g1, tr3, pair), PreconditionError);
    EXPECT_THROW(run_convergence(g1, pair, GridField(3, 0.0)), PreconditionError);
}

TEST(Convergence, JsonShape) {
    const auto g = build_grid(preset("constantL"), 1e-2);
    const auto j = to_json(run_convergence(g, solve_ergodic_rvi(g), GridField(g.size(), 0.0)));
    for (const char* key : {"K", "monotone", "bracketed", "converged", "stop_time", "final_uniform_error"})
        EXPECT_TRUE(j.contains(key)) << key;
}
