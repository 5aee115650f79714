#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hjb/cauchy.hpp"

using namespace hjb;
using nlohmann::json;

namespace {

ControlProblem zero_cost_smooth() {
    json cfg = preset_config("smoothA");
    cfg["controls"][0]["l"] = "0";
    return assemble_problem(cfg);
}

GridField random_field(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> U(lo, hi);
    GridField u(n);
    for (auto& v : u) v = U(rng);
    return u;
}

double max_abs_diff(const GridField& a, const GridField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST(Explicit, ConstantLOneStep) {
    const auto g = build_grid(preset("constantL"), 0.01);
    ASSERT_GT(cfl_dt(g), 1e-4);
    const auto s = step_explicit(g, initial_state(g, GridField(g.size(), 0.0)), 1e-4);
    for (double v : s.u) EXPECT_DOUBLE_EQ(v, 2e-4);
    EXPECT_EQ(s.step_count, 1);
    EXPECT_DOUBLE_EQ(s.t, 1e-4);
}

TEST(Explicit, StationaryConstantWithoutCost) {
    const auto g = build_grid(zero_cost_smooth(), 0.01);
    auto s = initial_state(g, GridField(g.size(), 5.0));
    advance_to(g, s, 0.5, StepMode::explicit_cfl());
    for (double v : s.u) EXPECT_EQ(v, 5.0);
}

TEST(Explicit, ShiftByThreeStaysExact) {
    const auto g = build_grid(preset("smoothA"), 0.01);
    std::vector<double> base(g.size());
    // Values in [1, 2) share one binade with [4, 5), so adding 3 is exact.
    std::mt19937_64 rng(2);
    for (auto& v : base) v = 1.0 + std::ldexp(static_cast<double>(rng() >> 12), -52);
    GridField shifted = base;
    for (auto& v : shifted) v += 3.0;
    auto a = initial_state(g, base), b = initial_state(g, shifted);
    for (int k = 0; k < 50; ++k) {
        a = step_explicit(g, a, cfl_dt(g));
        b = step_explicit(g, b, cfl_dt(g));
    }
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(b.u[i] - a.u[i], 3.0, 1e-12);
}

TEST(Explicit, RejectsStepAboveCfl) {
    const auto g = build_grid(preset("smoothA"), 0.01);
    const auto s = initial_state(g, GridField(g.size(), 0.0));
    EXPECT_THROW(step_explicit(g, s, 2.0 * cfl_dt(g)), PreconditionError);
    EXPECT_THROW(step_explicit(g, s, 0.0), PreconditionError);
}

TEST(InitialState, RejectsBadData) {
    const auto g = build_grid(preset("smoothA"), 0.1);
    EXPECT_THROW(initial_state(g, GridField(3, 0.0)), PreconditionError);
    GridField u(g.size(), 0.0);
    u[4] = std::nan("");
    EXPECT_THROW(initial_state(g, u), PreconditionError);
}

TEST(Implicit, ConstantDataOneSweep) {
    const auto g = build_grid(zero_cost_smooth(), 0.01);
    PolicyStats st;
    const auto s = step_implicit_policy(g, initial_state(g, GridField(g.size(), 1.5)), 0.3, &st);
    EXPECT_EQ(st.sweeps, 1);
    for (double v : s.u) EXPECT_NEAR(v, 1.5, 1e-12);
}

TEST(Implicit, ConstantLUnitStep) {
    const auto g = build_grid(preset("constantL"), 0.01);
    const auto s = step_implicit_policy(g, initial_state(g, GridField(g.size(), 0.0)), 1.0);
    for (double v : s.u) EXPECT_NEAR(v, 2.0, 1e-12);
}

TEST(Implicit, TwoControlsAgainstChainedExplicit) {
    const auto g = build_grid(preset("twoControlA"), 0.01);
    std::mt19937_64 rng(4);
    auto s0 = initial_state(g, random_field(g.size(), rng));
    const double dt = 10.0 * cfl_dt(g);
    PolicyStats st;
    const auto imp = step_implicit_policy(g, s0, dt, &st);
    EXPECT_LE(st.sweeps, 5);
    EXPECT_LT(st.residual, 1e-12);
    // Independent residual check of u + dt H[u] = u_old.
    const auto H = apply_H(g, imp.u);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(imp.u[i] + dt * H[i], s0.u[i], 1e-11);

    auto ex = s0;
    for (int k = 0; k < 10; ++k) ex = step_explicit(g, ex, cfl_dt(g));
    EXPECT_LT(max_abs_diff(imp.u, ex.u), 1.0);
}

TEST(Implicit, FirstOrderInTime) {
    const auto g = build_grid(preset("twoControlA"), 2e-2);
    const auto u0 = sample_field(g, [](const Point& x, double) { return std::sin(M_PI * x[0]); });
    const double T = 0.2;
    const auto ref = evolve(g, u0, T, StepMode::implicit(1e-5), T).snapshots.back();
    std::vector<double> err;
    for (double dt : {1e-2, 5e-3, 2.5e-3}) err.push_back(max_abs_diff(evolve(g, u0, T, StepMode::implicit(dt), T).snapshots.back(), ref));
    for (std::size_t k = 1; k < err.size(); ++k) EXPECT_NEAR(std::log2(err[k - 1] / err[k]), 1.0, 0.1);
}

TEST(Evolve, ConstantLLinearInTime) {
    const auto g = build_grid(preset("constantL"), 0.01);
    for (const StepMode mode : {StepMode::explicit_cfl(), StepMode::implicit(0.05)}) {
        const auto tr = evolve(g, GridField(g.size(), 0.0), 3.0, mode, 1.0);
        ASSERT_EQ(tr.times.size(), 4u);
        EXPECT_EQ(tr.times.back(), 3.0);
        for (double v : tr.snapshots.back()) EXPECT_NEAR(v, 6.0, 1e-9);
    }
}

TEST(Evolve, SmoothAFromZeroRespectsBound) {
    const auto g = build_grid(preset("smoothA"), 1e-2);
    const auto tr = evolve(g, GridField(g.size(), 0.0), 1.0, StepMode::explicit_cfl(), 0.25);
    EXPECT_LE(sup_norm(tr.snapshots.back()), 1.0 * 1.0 + 1e-12);
    for (std::size_t k = 1; k < tr.times.size(); ++k) EXPECT_GT(tr.times[k], tr.times[k - 1]);
    EXPECT_EQ(tr.step_times.size(), tr.step_min.size());
    EXPECT_EQ(tr.mode, "explicit");
}

TEST(Evolve, UnitShiftKeepsGap) {
    const auto g = build_grid(preset("smoothA"), 1e-2);
    const auto u0 = sample_field(g, [](const Point& x, double) { return std::sin(2 * M_PI * x[0]); });
    GridField v0 = u0;
    for (auto& v : v0) v += 1.0;
    for (const StepMode mode : {StepMode::explicit_cfl(), StepMode::implicit(0.01)}) {
        const auto a = evolve(g, u0, 1.0, mode, 0.1);
        const auto b = evolve(g, v0, 1.0, mode, 0.1);
        for (std::size_t k = 0; k < a.times.size(); ++k)
            for (std::size_t i = 0; i < g.size(); ++i) {
                EXPECT_GE(b.snapshots[k][i] - a.snapshots[k][i], 1.0 - 1e-9);
                EXPECT_LE(b.snapshots[k][i] - a.snapshots[k][i], 1.0 + 1e-9);
            }
    }
}

TEST(Evolve, Preconditions) {
    const auto g = build_grid(preset("smoothA"), 1e-1);
    EXPECT_THROW(evolve(g, GridField(g.size(), 0.0), 0.0, StepMode::explicit_cfl(), 1.0), PreconditionError);
    EXPECT_THROW(evolve(g, GridField(g.size(), 0.0), 1.0, StepMode::implicit(0.0), 1.0), PreconditionError);
}

TEST(Evolve, DiscontinuousDataAccepted) {
    const auto g = build_grid(preset("smoothA"), 1e-2);
    const auto u0 = sample_field(g, [](const Point& x, double) { return x[0] < 0.5 ? -1.0 : 1.0; });
    const auto tr = evolve(g, u0, 0.5, StepMode::implicit(0.01), 0.5);
    EXPECT_LE(sup_norm(tr.snapshots.back()), 1.0 + 0.5 + 1e-12);
}

TEST(Property, ComparisonOfOrderedPairs) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> gap(0.0, 0.5);
    for (const char* name : {"smoothA", "degenerateB", "twoControlA"}) {
        const auto g = build_grid(preset(name), 2e-2);
        for (const StepMode mode : {StepMode::explicit_cfl(), StepMode::implicit(0.05)}) {
            for (int trial = 0; trial < 5; ++trial) {
                const GridField u0 = random_field(g.size(), rng);
                GridField v0 = u0;
                for (auto& v : v0) v += gap(rng);
                auto a = initial_state(g, u0), b = initial_state(g, v0);
                advance_to(g, a, 0.2, mode, [&](const CauchyState&) {});
                advance_to(g, b, 0.2, mode);
                for (std::size_t i = 0; i < g.size(); ++i) EXPECT_LE(a.u[i], b.u[i] + 1e-9) << name;
            }
        }
    }
}

TEST(Property, SupInfOfDifferenceMonotone) {
    std::mt19937_64 rng(23);
    const auto g = build_grid(preset("twoControlA"), 2e-2);
    for (const StepMode mode : {StepMode::explicit_cfl(), StepMode::implicit(0.02)}) {
        auto a = initial_state(g, random_field(g.size(), rng));
        auto b = initial_state(g, random_field(g.size(), rng));
        auto extrema = [&] {
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t i = 0; i < g.size(); ++i) {
                lo = std::min(lo, a.u[i] - b.u[i]);
                hi = std::max(hi, a.u[i] - b.u[i]);
            }
            return std::pair{lo, hi};
        };
        auto [lo, hi] = extrema();
        const double dt = max_step(g, mode);
        for (int k = 0; k < 200; ++k) {
            a = step(g, a, mode, dt);
            b = step(g, b, mode, dt);
            const auto [nlo, nhi] = extrema();
            EXPECT_GE(nlo, lo - 1e-9);
            EXPECT_LE(nhi, hi + 1e-9);
            lo = nlo;
            hi = nhi;
        }
    }
}

TEST(Property, AprioriBoundEveryStep) {
    std::mt19937_64 rng(29);
    for (const auto& name : preset_names()) {
        const auto g = build_grid(preset(name), 2e-2);
        const GridField u0 = random_field(g.size(), rng, -2.0, 3.0);
        const double bound0 = sup_norm(u0), lsup = l_sup(g);
        for (const StepMode mode : {StepMode::explicit_cfl(), StepMode::implicit(0.1)}) {
            auto s = initial_state(g, u0);
            advance_to(g, s, 2.0, mode, [&](const CauchyState& cs) {
                EXPECT_LE(sup_norm(cs.u), (bound0 + lsup * cs.t) * (1.0 + 1e-9)) << name;
            });
        }
    }
}

TEST(Property, ExplicitImplicitAgreeFirstOrder) {
    const auto g = build_grid(preset("smoothA"), 2e-2);
    const auto u0 = sample_field(g, [](const Point& x, double) { return std::cos(3 * x[0]); });
    const double T = 0.5, cfl = cfl_dt(g);
    const auto ref = evolve(g, u0, T, StepMode::implicit(1e-5), T).snapshots.back();
    std::vector<double> ex, im;
    for (double k : {1.0, 2.0, 4.0}) {
        const StepMode e{StepMode::Kind::explicit_euler, cfl / k};
        ex.push_back(max_abs_diff(evolve(g, u0, T, e, T).snapshots.back(), ref));
        im.push_back(max_abs_diff(evolve(g, u0, T, StepMode::implicit(cfl / k), T).snapshots.back(), ref));
    }
    for (std::size_t k = 1; k < ex.size(); ++k) {
        EXPECT_GT(std::log2(ex[k - 1] / ex[k]), 0.8);
        EXPECT_GT(std::log2(im[k - 1] / im[k]), 0.8);
    }
}

TEST(Serialize, TrajectoryMetadata) {
    const auto g = build_grid(preset("smoothA"), 1e-1);
    const auto tr = evolve(g, GridField(g.size(), 0.0), 0.1, StepMode::implicit(0.05), 0.05);
    const auto j = trajectory_metadata(tr);
    EXPECT_EQ(j["mode"], "implicit");
    EXPECT_EQ(j["dt"], 0.05);
    EXPECT_EQ(j["steps"], 2);
    EXPECT_EQ(j["problem_hash"], problem_hash(preset("smoothA")));
    EXPECT_EQ(j["times"].size(), 3u);
}
