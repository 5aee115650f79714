#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <random>

#include "hjb/barrier.hpp"
#include "hjb/discretization.hpp"

using namespace hjb;
using nlohmann::json;

namespace {

ControlProblem with_control(const std::string& name, const std::string& key, const json& value) {
    json cfg = preset_config(name);
    cfg["controls"][0][key] = value;
    return assemble_problem(cfg);
}

// Random field with values on the dyadic lattice 2^-20 Z in [-1, 1]; sums with
// small integers are then exact.
GridField dyadic_field(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<long> k(-(1L << 20), 1L << 20);
    GridField u(n);
    for (auto& v : u) v = std::ldexp(static_cast<double>(k(rng)), -20);
    return u;
}

bool bit_equal(const GridField& a, const GridField& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Lattice, IntervalTenth) {
    const auto g = build_grid(preset("smoothA"), 0.1);
    ASSERT_EQ(g.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(g.lattice.nodes[i][0], 0.1 * (i + 1), 1e-15);
    EXPECT_EQ(g.lattice.neighbors[0][0], -1);
    EXPECT_EQ(g.lattice.neighbors[8][1], -1);
}

TEST(Lattice, Errors) {
    EXPECT_THROW(build_grid(preset("smoothA"), 0.3), PreconditionError);
    EXPECT_THROW(build_grid(preset("smoothA"), 0.5), PreconditionError);
    EXPECT_THROW(build_grid(preset("smoothA"), -0.1), PreconditionError);
}

// Every point of (0.5 Z)^2 with |x| < 1: the axis points and the four
// diagonal points at radius 0.707.
TEST(Lattice, DiskHalf) {
    const auto lat = build_lattice(Domain::disk({0, 0}, 1.0), 0.5);
    ASSERT_EQ(lat.size(), 9u);
    std::set<std::pair<double, double>> pts;
    for (const auto& x : lat.nodes) pts.insert({x[0], x[1]});
    std::set<std::pair<double, double>> expected;
    for (double a : {-0.5, 0.0, 0.5})
        for (double b : {-0.5, 0.0, 0.5}) expected.insert({a, b});
    EXPECT_EQ(pts, expected);
}

TEST(Lattice, DiskGridStepLimit) {
    json ctrl = {{"b", {"-x1", "-x2"}}, {"sigma", json::array({json::array({"d", "0"}), json::array({"0", "d"})})},
                 {"l", "x1"}};
    const auto p = assemble_problem(json{{"domain", {{"kind", "disk"}, {"radius", 1.0}}},
                                         {"controls", {ctrl}},
                                         {"regularity", {{"B", 4.0}, {"eta", 1.0}, {"beta", 1.0}}}});
    EXPECT_THROW(build_grid(p, 0.5), PreconditionError);
    const auto g = build_grid(p, 1.0 / 16);
    for (const auto& x : g.lattice.nodes) EXPECT_LT(std::hypot(x[0], x[1]), 1.0);
    EXPECT_EQ(g.report.exterior_references, 0u);
    EXPECT_TRUE(g.report.monotone());
}

TEST(Cache, MatchesDirectEvaluation) {
    const auto p = preset("twoControlA");
    const auto g = build_grid(p, 0.01);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < g.size(); i += 7) {
            const auto s = p.evaluate(c, g.lattice.nodes[i]);
            EXPECT_EQ(g.cf(c, i).b[0], s.b[0]);
            EXPECT_EQ(g.cf(c, i).a[0][0], s.a[0][0]);
            EXPECT_EQ(g.cf(c, i).l, s.l);
        }
}

TEST(ApplyH, ConstantFieldGivesMinusMinL) {
    const auto g = build_grid(preset("constantL"), 0.01);
    for (double v : apply_H(g, GridField(g.size(), 3.25))) EXPECT_EQ(v, -2.0);
    const auto g2 = build_grid(preset("twoControlA"), 0.01);
    const auto h2 = apply_H(g2, GridField(g2.size(), -1.0));
    for (std::size_t i = 0; i < g2.size(); ++i) EXPECT_EQ(h2[i], -g2.cf(0, i).l);
}

TEST(ApplyH, SqrtBarrierNearBoundary) {
    const auto p = preset("smoothA");
    const auto g = build_grid(p, 1e-3);
    const auto u = sample_field(g, [](const Point&, double d) { return std::sqrt(d) - 1.0; });
    const auto H = apply_H(g, u);
    const std::size_t i = 99;  // x = 0.1
    ASSERT_NEAR(g.lattice.nodes[i][0], 0.1, 1e-12);
    const double F = eval_F_radial(p, RadialProfile::barrier(0.5), g.lattice.nodes[i]);
    EXPECT_NEAR(F - 0.1, -1.3009, 1e-4);
    EXPECT_NEAR(H[i], F - 0.1, std::sqrt(1e-3));
}

TEST(ApplyH, AgreesWithRadialClosedFormToFirstOrder) {
    // Halving h should roughly halve the gap at fixed collar points.
    const auto p = preset("degenerateB");
    const RadialProfile prof = RadialProfile::lyapunov(0.5);
    double prev = 0.0;
    for (double h : {4e-3, 2e-3, 1e-3}) {
        const auto g = build_grid(p, h);
        const auto u = sample_field(g, [&](const Point&, double d) { return prof.value(d); });
        const auto H = apply_H(g, u);
        double gap = 0.0;
        for (double x : {0.05, 0.1, 0.2}) {
            const std::size_t i = static_cast<std::size_t>(std::lround(x / h)) - 1;
            gap = std::max(gap, std::fabs(H[i] - (eval_F_radial(p, prof, g.lattice.nodes[i]) - g.cf(0, i).l)));
        }
        if (prev > 0.0) {
            EXPECT_LT(gap, 0.6 * prev);
        }
        prev = gap;
    }
}

TEST(ApplyH, ConsistencyOrderOnSmoothProfile) {
    const auto p = preset("smoothA");
    auto exact = [](double x) {
        const double b = 1 - 2 * x, a = x * x * (1 - x) * (1 - x);
        return -b * M_PI * std::cos(M_PI * x) + a * M_PI * M_PI * std::sin(M_PI * x) - x;
    };
    std::vector<double> err;
    for (double h : {1.0 / 100, 1.0 / 200, 1.0 / 400, 1.0 / 800}) {
        const auto g = build_grid(p, h);
        const auto H = apply_H(g, sample_field(g, [](const Point& x, double) { return std::sin(M_PI * x[0]); }));
        double e = 0.0;
        for (double x : {0.25, 0.3, 0.5, 0.7}) {
            const std::size_t i = static_cast<std::size_t>(std::lround(x / h)) - 1;
            e = std::max(e, std::fabs(H[i] - exact(g.lattice.nodes[i][0])));
        }
        err.push_back(e);
    }
    for (std::size_t k = 1; k < err.size(); ++k) EXPECT_GE(std::log2(err[k - 1] / err[k]), 0.9);
}

TEST(ApplyH, RejectsForeignProblemAndWrongLength) {
    const auto g = build_grid(preset("smoothA"), 0.01);
    EXPECT_THROW(apply_H(preset("degenerateB"), g, GridField(g.size(), 0.0)), PreconditionError);
    EXPECT_THROW(apply_H(g, GridField(3, 0.0)), PreconditionError);
    EXPECT_NO_THROW(apply_H(preset("smoothA"), g, GridField(g.size(), 0.0)));
}

TEST(ApplyH, TiesGoToLowestControl) {
    // Two identical controls: every node must report control 0.
    json cfg = preset_config("smoothA");
    cfg["controls"].push_back(cfg["controls"][0]);
    const auto g = build_grid(assemble_problem(cfg), 0.01);
    std::vector<int> policy;
    apply_H(g, sample_field(g, [](const Point& x, double) { return x[0] * x[0]; }), &policy);
    for (int c : policy) EXPECT_EQ(c, 0);
}

TEST(Cfl, HeatEquation) {
    json cfg = preset_config("smoothA");
    cfg["controls"][0]["b"] = {"0"};
    cfg["controls"][0]["sigma"] = {{"0.5"}};
    const auto g = build_grid(assemble_problem(cfg), 0.01);
    EXPECT_NEAR(cfl_dt(g), 0.01 * 0.01 / (2 * 0.25), 1e-18);
    EXPECT_GT(g.report.exterior_references, 0u);
}

TEST(Cfl, SmoothAHundredth) {
    const auto g = build_grid(preset("smoothA"), 0.01);
    EXPECT_NEAR(cfl_dt(g), 8.0e-4, 1e-5);
    const auto gl = build_grid(preset("constantL"), 0.01);
    EXPECT_EQ(cfl_dt(gl), cfl_dt(g));
    // Independent recomputation of the bound from the cached coefficients.
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        worst = std::max(worst, std::fabs(g.cf(0, i).b[0]) / 0.01 + 2 * g.cf(0, i).a[0][0] / 1e-4);
    EXPECT_NEAR(cfl_dt(g), 1.0 / worst, 1e-3 / worst);
}

TEST(Stencil, ClosureOnPresets) {
    for (const auto& name : preset_names()) {
        const auto g = build_grid(preset(name), 1e-3);
        EXPECT_EQ(g.report.exterior_references, 0u) << name;
        EXPECT_EQ(g.report.negative_coefficients, 0u) << name;
        EXPECT_EQ(g.report.outward_drift_nodes, 0u) << name;
        EXPECT_GT(g.report.clamped_boundary_sides, 0u) << name;
        for (const auto& e : g.report.entries) EXPECT_GE(e.min_offdiag, 0.0);
    }
}

TEST(Stencil, NonDegenerateDiffusionNeedsExteriorData) {
    const auto g = build_grid(with_control("smoothA", "sigma", {{"1"}}), 1e-2);
    EXPECT_EQ(g.report.exterior_references, 2u);
    EXPECT_TRUE(g.report.entries.front().exterior_reference);
    EXPECT_TRUE(g.report.entries.back().exterior_reference);
}

TEST(Stencil, OutwardDriftIsFlagged) {
    const auto g = build_grid(with_control("smoothA", "b", {"2*x1-1"}), 1e-2);
    EXPECT_EQ(g.report.outward_drift_nodes, 2u);
    EXPECT_GT(g.report.negative_coefficients, 0u);
    EXPECT_FALSE(g.report.monotone());
}

TEST(Property, TranslationInvarianceBitExact) {
    std::mt19937_64 rng(5);
    for (const char* name : {"smoothA", "degenerateB", "twoControlA"}) {
        const auto g = build_grid(preset(name), 1e-3);
        for (int trial = 0; trial < 20; ++trial) {
            const GridField u = dyadic_field(g.size(), rng);
            for (double K : {7.0, -3.0, 0.5}) {
                GridField v = u;
                for (auto& x : v) x += K;
                EXPECT_TRUE(bit_equal(apply_H(g, u), apply_H(g, v))) << name;
            }
        }
    }
}

TEST(Property, ExplicitStepMonotoneAtTouchingNode) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> gap(0.0, 1.0);
    for (const char* name : {"smoothA", "degenerateB", "twoControlA"}) {
        const auto g = build_grid(preset(name), 1e-2);
        const double dt = cfl_dt(g);
        for (int trial = 0; trial < 50; ++trial) {
            const GridField u = dyadic_field(g.size(), rng);
            GridField v = u;
            const std::size_t i = rng() % g.size();
            for (std::size_t j = 0; j < g.size(); ++j)
                if (j != i) v[j] += gap(rng);
            const auto Hu = apply_H(g, u), Hv = apply_H(g, v);
            EXPECT_LE(u[i] - dt * Hu[i], v[i] - dt * Hv[i] + 1e-12) << name << " node " << i;
        }
    }
}

TEST(Property, DeterministicAcrossWorkerCounts) {
    const auto g = build_grid(preset("twoControlA"), 1e-4);
    ASSERT_GE(g.size(), 4096u);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-1, 1);
    GridField u(g.size());
    for (auto& v : u) v = U(rng);
    ::setenv("HJB_THREADS", "1", 1);
    std::vector<int> p1, p4;
    const auto h1 = apply_H(g, u, &p1);
    ::setenv("HJB_THREADS", "4", 1);
    const auto h4 = apply_H(g, u, &p4);
    ::unsetenv("HJB_THREADS");
    EXPECT_TRUE(bit_equal(h1, h4));
    EXPECT_EQ(p1, p4);
}

TEST(Serialize, StencilJson) {
    const auto g = build_grid(preset("smoothA"), 0.1);
    const auto j = to_json(g.report);
    EXPECT_EQ(j["exterior_references"], 0);
    EXPECT_EQ(j["monotone"], true);
    EXPECT_EQ(j["entries"].size(), 9u);
    EXPECT_FALSE(to_json(g.report, false).contains("entries"));
}
