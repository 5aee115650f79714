#pragma once

// Numerical validation of the standing assumptions on a ControlProblem:
// Hoelder regularity of the coefficients, interior ellipticity, boundary
// degeneracy of the normal diffusion, and the inward drift condition
//     inf_a (b . Dd + tr(a D^2 d)) >= k d^gamma   near the boundary,
// whose constants (k, gamma, delta) are fitted here and returned as a
// certificate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hjb/fit.hpp"
#include "hjb/geometry.hpp"
#include "hjb/problem.hpp"

namespace hjb {

struct SamplingPlan {
    int n_interior = 65;
    int n_collar = 120;             // geometric levels in the collar
    double d_min_factor = 1e-6;     // boundary-limit samples sit at d = d_min_factor * diam
    int n_directions = 16;          // boundary normals sampled on a disk
    double collar_fraction = 0.8;   // drift collar delta = collar_fraction * collar width
    double rate_fit_max_factor = 1e-2;  // power-law fits use d <= rate_fit_max_factor * diam
    double gamma_resolution = 0.01;     // fitted gamma is rounded up to this grid
};

struct Witness {
    Point x{};
    double d = 0.0;
};

struct AssumptionCheck {
    std::string name;
    bool pass = true;
    double value = 0.0;      // measured quantity
    double threshold = 0.0;  // bound it is compared against
    std::optional<Witness> witness;
    std::string message;
};

struct DriftSample {
    double d = 0.0;
    double value = 0.0;  // inf over controls and directions of b . Dd + tr(a D^2 d)
};

struct DegeneracyCertificate {
    double k = 0.0;
    double gamma = 0.0;
    double gamma_fit = 0.0;         // raw log-log slope before rounding up
    double delta = 0.0;
    double boundary_residual = 0.0; // max |sigma^T Dd| at the boundary-limit samples
    double sigma_rate = 0.0;        // fitted slope of |sigma^T Dd| against d
    std::vector<DriftSample> drift_fit;
};

struct ValidationReport {
    bool pass = true;
    std::string first_violation;  // empty when everything passes
    std::vector<AssumptionCheck> checks;
    DegeneracyCertificate certificate;

    const AssumptionCheck* find(const std::string& name) const {
        for (const auto& c : checks)
            if (c.name == name) return &c;
        return nullptr;
    }
};

namespace detail {

struct PointSample {
    Point x{};
    DistanceInfo dist;
    std::vector<CoefficientSample> coef;  // per control
};

inline double norm_diff(const Point& a, const Point& b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

inline double frob_diff(const Mat2& a, const Mat2& b, int n, int r) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < r; ++j) s += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
    return std::sqrt(s);
}

inline double max_abs(const Mat2& a, int n) {
    double m = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m = std::max(m, std::fabs(a[i][j]));
    return m;
}

/// |sigma^T Dd|
inline double normal_sigma(const CoefficientSample& s, const Point& grad, int n) {
    double acc = 0.0;
    for (int k = 0; k < s.r; ++k) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += s.sigma[i][k] * grad[i];
        acc += v * v;
    }
    return std::sqrt(acc);
}

/// b . Dd + tr(a D^2 d)
inline double drift_term(const CoefficientSample& s, const DistanceInfo& dist, int n) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += s.b[i] * dist.grad[i];
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v += s.a[i][j] * dist.hess[j][i];
    return v;
}

inline PointSample sample_point(const ControlProblem& p, const Point& x) {
    PointSample ps;
    ps.x = x;
    ps.dist = distance(p.domain, x);
    for (const auto& c : p.controls) ps.coef.push_back(p.evaluate(c, x, ps.dist.d));
    return ps;
}

inline std::vector<Point> interior_points(const Domain& dom, int n) {
    std::vector<Point> out;
    if (dom.kind == Domain::Kind::interval) {
        for (int i = 0; i < n; ++i) out.push_back({dom.lo + (dom.hi - dom.lo) * (i + 1) / (n + 1), 0.0});
        return out;
    }
    const int rings = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(n))));
    for (int j = 0; j < rings; ++j) {
        const double r = dom.radius * (j + 0.5) / rings;
        const int m = 4 * (j + 1);
        for (int k = 0; k < m; ++k) {
            const double th = 2.0 * M_PI * (k + 0.25) / m;
            out.push_back({dom.center[0] + r * std::cos(th), dom.center[1] + r * std::sin(th)});
        }
    }
    return out;
}

}  // namespace detail

inline ValidationReport validate_assumptions(const ControlProblem& p, const SamplingPlan& plan = {},
                                             double tol = 1e-2) {
    using detail::PointSample;
    const Domain& dom = p.domain;
    const int n = p.dim();
    const double diam = dom.diameter();
    const double d_lim = plan.d_min_factor * diam;
    const double delta = plan.collar_fraction * dom.collar_width();
    const double fit_max = plan.rate_fit_max_factor * diam;

    ValidationReport rep;
    auto add = [&](AssumptionCheck c) {
        if (!c.pass && rep.pass) {
            rep.pass = false;
            rep.first_violation = c.name;
        }
        rep.checks.push_back(std::move(c));
    };

    // Collar levels (geometric in d) and interior points.
    const auto levels = geometric_samples(d_lim, delta, plan.n_collar);
    std::vector<std::vector<PointSample>> collar(levels.size());
    for (std::size_t li = 0; li < levels.size(); ++li)
        for (const auto& x : points_at_distance(dom, levels[li], plan.n_directions))
            collar[li].push_back(detail::sample_point(p, x));
    std::vector<PointSample> all;
    for (const auto& x : detail::interior_points(dom, plan.n_interior)) all.push_back(detail::sample_point(p, x));
    for (const auto& lv : collar) all.insert(all.end(), lv.begin(), lv.end());

    // Positive semidefiniteness and interior ellipticity.
    {
        AssumptionCheck psd{"psd", true, std::numeric_limits<double>::infinity(), 0.0, {}, {}};
        AssumptionCheck ell{"ellipticity", true, std::numeric_limits<double>::infinity(), 0.0, {}, {}};
        for (const auto& s : all)
            for (const auto& c : s.coef) {
                const double ev = min_eigenvalue(c.a, n);
                const double floor = -1e-12 * (1.0 + detail::max_abs(c.a, n));
                if (ev < psd.value) psd.value = ev;
                if (ev < floor && psd.pass) {
                    psd.pass = false;
                    psd.witness = Witness{s.x, s.dist.d};
                }
                if (ev < ell.value) {
                    ell.value = ev;
                    if (!(ev > 0.0)) {
                        ell.pass = false;
                        ell.witness = Witness{s.x, s.dist.d};
                    }
                }
            }
        psd.message = "minimum eigenvalue of a over all samples";
        ell.message = "a must be positive definite at interior points";
        add(psd);
        add(ell);
    }

    // Hoelder ratios over all sample pairs.
    {
        AssumptionCheck hb{"holder_b", true, 0.0, p.reg.B, {}, "max |b(x)-b(y)|/|x-y|^eta"};
        AssumptionCheck hl{"holder_l", true, 0.0, p.reg.B, {}, "max |l(x)-l(y)|/|x-y|^eta"};
        AssumptionCheck hs{"holder_sigma", true, 0.0, p.reg.B, {}, "max |sigma(x)-sigma(y)|/|x-y|^beta"};
        for (std::size_t i = 0; i < all.size(); ++i)
            for (std::size_t j = i + 1; j < all.size(); ++j) {
                const double dist = detail::norm_diff(all[i].x, all[j].x, n);
                if (dist == 0.0) continue;
                const double se = std::pow(dist, p.reg.eta);
                const double sb = std::pow(dist, p.reg.beta);
                for (std::size_t c = 0; c < p.controls.size(); ++c) {
                    const auto& ci = all[i].coef[c];
                    const auto& cj = all[j].coef[c];
                    const double rb = detail::norm_diff(ci.b, cj.b, n) / se;
                    const double rl = std::fabs(ci.l - cj.l) / se;
                    const double rs = detail::frob_diff(ci.sigma, cj.sigma, n, ci.r) / sb;
                    if (rb > hb.value) {
                        hb.value = rb;
                        hb.witness = Witness{all[i].x, all[i].dist.d};
                    }
                    if (rl > hl.value) {
                        hl.value = rl;
                        hl.witness = Witness{all[i].x, all[i].dist.d};
                    }
                    if (rs > hs.value) {
                        hs.value = rs;
                        hs.witness = Witness{all[i].x, all[i].dist.d};
                    }
                }
            }
        for (auto* c : {&hb, &hl, &hs}) {
            c->pass = c->value <= p.reg.B;
            if (c->pass) c->witness.reset();
            add(*c);
        }
    }

    DegeneracyCertificate& cert = rep.certificate;
    cert.delta = delta;

    // Degeneracy of the normal diffusion at the boundary and its rate.
    {
        AssumptionCheck bd{"degeneracy_boundary", true, 0.0, tol, {}, "max |sigma^T Dd| at d = d_min"};
        for (const auto& x : points_at_distance(dom, d_lim, plan.n_directions)) {
            const auto s = detail::sample_point(p, x);
            for (const auto& c : s.coef) {
                const double v = detail::normal_sigma(c, s.dist.grad, n);
                if (v > bd.value) {
                    bd.value = v;
                    bd.witness = Witness{s.x, s.dist.d};
                }
            }
        }
        bd.pass = bd.value <= tol;
        if (bd.pass) bd.witness.reset();
        cert.boundary_residual = bd.value;
        add(bd);

        std::vector<double> ds, vs;
        for (std::size_t li = 0; li < levels.size(); ++li) {
            if (levels[li] > fit_max) break;
            double worst = 0.0;
            for (const auto& s : collar[li])
                for (const auto& c : s.coef) worst = std::max(worst, detail::normal_sigma(c, s.dist.grad, n));
            if (worst > 0.0) {
                ds.push_back(levels[li]);
                vs.push_back(worst);
            }
        }
        AssumptionCheck rate{"degeneracy_rate", true, std::numeric_limits<double>::infinity(), p.reg.beta - tol, {},
                             "log-log slope of |sigma^T Dd| against d"};
        if (ds.size() >= 2) rate.value = fit_loglog(ds, vs).slope;
        rate.pass = rate.value >= p.reg.beta - tol;
        if (!rate.pass) rate.witness = Witness{collar.front().front().x, levels.front()};
        cert.sigma_rate = rate.value;
        add(rate);
    }

    // Inward drift condition.
    {
        AssumptionCheck pos{"drift_positive", true, std::numeric_limits<double>::infinity(), 0.0, {},
                            "inf of b . Dd + tr(a D^2 d) over the collar"};
        for (std::size_t li = 0; li < levels.size(); ++li) {
            double worst = std::numeric_limits<double>::infinity();
            for (const auto& s : collar[li])
                for (const auto& c : s.coef) {
                    const double q = detail::drift_term(c, s.dist, n);
                    if (q < worst) worst = q;
                    if (q < pos.value) {
                        pos.value = q;
                        if (!(q > 0.0)) {
                            pos.pass = false;
                            if (!pos.witness) pos.witness = Witness{s.x, s.dist.d};
                        }
                    }
                }
            cert.drift_fit.push_back({levels[li], worst});
        }
        add(pos);

        AssumptionCheck expo{"drift_exponent", pos.pass, 0.0, 2.0 * p.reg.beta - 1.0, {}, "fitted gamma < 2 beta - 1"};
        AssumptionCheck verify{"drift_verification", pos.pass, 0.0, -tol, {},
                               "min over collar of inf(b . Dd + tr(a D^2 d)) - k d^gamma"};
        if (pos.pass) {
            std::vector<double> ds, qs;
            for (const auto& s : cert.drift_fit)
                if (s.d <= fit_max) {
                    ds.push_back(s.d);
                    qs.push_back(s.value);
                }
            cert.gamma_fit = fit_loglog(ds, qs).slope;
            // Rounding up keeps the certificate valid: d^gamma decreases in gamma on d < 1.
            cert.gamma = std::ceil(cert.gamma_fit / plan.gamma_resolution - 1e-9) / std::round(1.0 / plan.gamma_resolution) + 0.0;
            double k = std::numeric_limits<double>::infinity();
            for (const auto& s : cert.drift_fit) k = std::min(k, s.value / std::pow(s.d, cert.gamma));
            cert.k = k;
            expo.value = cert.gamma;
            expo.pass = cert.gamma < 2.0 * p.reg.beta - 1.0 && k > 0.0;
            double worst = std::numeric_limits<double>::infinity();
            for (const auto& s : cert.drift_fit) {
                const double slack = s.value - k * std::pow(s.d, cert.gamma);
                if (slack < worst) {
                    worst = slack;
                    verify.witness = Witness{{}, s.d};
                }
            }
            verify.value = worst;
            verify.pass = worst >= -tol;
            if (verify.pass) verify.witness.reset();
        }
        add(expo);
        add(verify);
    }
    return rep;
}

inline DegeneracyCertificate degeneracy_certificate(const ControlProblem& p, const SamplingPlan& plan = {}) {
    return validate_assumptions(p, plan).certificate;
}

inline nlohmann::json to_json(const Witness& w) { return {{"x", {w.x[0], w.x[1]}}, {"d", w.d}}; }

inline nlohmann::json to_json(const DegeneracyCertificate& c) {
    nlohmann::json fit = nlohmann::json::array();
    for (const auto& s : c.drift_fit) fit.push_back({s.d, s.value});
    return {{"k", c.k},
            {"gamma", c.gamma},
            {"gamma_fit", c.gamma_fit},
            {"delta", c.delta},
            {"boundary_residual", c.boundary_residual},
            {"sigma_rate", c.sigma_rate},
            {"drift_fit", fit}};
}

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : r.checks) {
        nlohmann::json jc = {{"name", c.name},
                             {"pass", c.pass},
                             {"value", std::isfinite(c.value) ? nlohmann::json(c.value) : nlohmann::json(nullptr)},
                             {"threshold", c.threshold},
                             {"message", c.message}};
        if (c.witness) jc["witness"] = to_json(*c.witness);
        checks.push_back(jc);
    }
    return {{"pass", r.pass},
            {"first_violation", r.first_violation.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.first_violation)},
            {"checks", checks},
            {"certificate", to_json(r.certificate)}};
}

}  // namespace hjb
