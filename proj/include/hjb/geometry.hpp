#pragma once

// Domains supported by the solver (intervals and disks) and their exact
// distance-to-boundary functions.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "hjb/error.hpp"

namespace hjb {

using Point = std::array<double, 2>;
using Mat2 = std::array<std::array<double, 2>, 2>;

struct Domain {
    enum class Kind { interval, disk };

    Kind kind = Kind::interval;
    double lo = 0.0;   // interval
    double hi = 1.0;   // interval
    Point center{};    // disk
    double radius = 1.0;

    static Domain interval(double lo, double hi) {
        if (!(lo < hi)) throw PreconditionError("interval requires lo < hi");
        Domain d;
        d.kind = Kind::interval;
        d.lo = lo;
        d.hi = hi;
        return d;
    }

    static Domain disk(Point center, double radius) {
        if (!(radius > 0.0)) throw PreconditionError("disk requires radius > 0");
        Domain d;
        d.kind = Kind::disk;
        d.center = center;
        d.radius = radius;
        return d;
    }

    int dim() const { return kind == Kind::interval ? 1 : 2; }
    double diameter() const { return kind == Kind::interval ? hi - lo : 2.0 * radius; }
    double inradius() const { return kind == Kind::interval ? 0.5 * (hi - lo) : radius; }

    /// Width of the collar in which distance queries are meaningful: half the
    /// inradius. For the interval this stays clear of the midpoint kink.
    double collar_width() const { return 0.5 * inradius(); }

    bool contains(const Point& x) const {
        if (kind == Kind::interval) return x[0] > lo && x[0] < hi;
        return std::hypot(x[0] - center[0], x[1] - center[1]) < radius;
    }

    std::string describe() const {
        if (kind == Kind::interval) return "interval(" + std::to_string(lo) + ", " + std::to_string(hi) + ")";
        return "disk(center=(" + std::to_string(center[0]) + ", " + std::to_string(center[1]) +
               "), R=" + std::to_string(radius) + ")";
    }
};

/// d, Dd and D^2 d at an interior point.
struct DistanceInfo {
    double d = 0.0;
    Point grad{};
    Mat2 hess{};
};

/// Distance to the boundary with its gradient and Hessian, in closed form.
/// On the interval the midpoint is assigned the left branch (Dd = +1).
inline DistanceInfo distance(const Domain& dom, const Point& x) {
    if (!dom.contains(x)) throw PreconditionError("point outside " + dom.describe());
    DistanceInfo out;
    if (dom.kind == Domain::Kind::interval) {
        const double left = x[0] - dom.lo;
        const double right = dom.hi - x[0];
        if (left <= right) {
            out.d = left;
            out.grad = {1.0, 0.0};
        } else {
            out.d = right;
            out.grad = {-1.0, 0.0};
        }
        return out;
    }
    const double dx = x[0] - dom.center[0];
    const double dy = x[1] - dom.center[1];
    const double r = std::hypot(dx, dy);
    if (r == 0.0) throw PreconditionError("distance gradient undefined at the disk center");
    const double nx = dx / r;
    const double ny = dy / r;
    out.d = dom.radius - r;
    out.grad = {-nx, -ny};
    // D^2 d = -(I - n n^T) / r
    out.hess = {{{-(1.0 - nx * nx) / r, nx * ny / r}, {nx * ny / r, -(1.0 - ny * ny) / r}}};
    return out;
}

/// The point at distance `eps` from the boundary on the normal line through x,
/// i.e. the boundary foot point of x pulled inward by eps.
inline Point near_foot_point(const Domain& dom, const Point& x, double eps) {
    if (dom.kind == Domain::Kind::interval) {
        const double left = x[0] - dom.lo;
        const double right = dom.hi - x[0];
        return {left <= right ? dom.lo + eps : dom.hi - eps, 0.0};
    }
    const double dx = x[0] - dom.center[0];
    const double dy = x[1] - dom.center[1];
    const double r = std::hypot(dx, dy);
    if (r == 0.0) throw PreconditionError("foot point undefined at the disk center");
    const double s = (dom.radius - eps) / r;
    return {dom.center[0] + s * dx, dom.center[1] + s * dy};
}

/// Points at distance `d` from the boundary along `n_dirs` boundary normals
/// (two sides of an interval, equally spaced angles on a disk).
inline std::vector<Point> points_at_distance(const Domain& dom, double d, int n_dirs) {
    std::vector<Point> out;
    if (dom.kind == Domain::Kind::interval) {
        out.push_back({dom.lo + d, 0.0});
        out.push_back({dom.hi - d, 0.0});
        return out;
    }
    const double r = dom.radius - d;
    for (int k = 0; k < n_dirs; ++k) {
        const double th = 2.0 * M_PI * (k + 0.5) / n_dirs;
        out.push_back({dom.center[0] + r * std::cos(th), dom.center[1] + r * std::sin(th)});
    }
    return out;
}

inline double min_eigenvalue(const Mat2& a, int dim) {
    if (dim == 1) return a[0][0];
    const double tr = a[0][0] + a[1][1];
    const double det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    const double disc = std::sqrt(std::fmax(0.0, 0.25 * tr * tr - det));
    return 0.5 * tr - disc;
}

}  // namespace hjb
