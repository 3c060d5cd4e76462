#ifndef FOCP_GEOMETRY_HPP
#define FOCP_GEOMETRY_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace focp {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Triangle given by its three corners. Positive orientation is not assumed
// by the metric helpers below.
struct Tri {
    std::array<Vec2, 3> v;

    double signed_area() const {
        return 0.5 * (v[1] - v[0]).cross(v[2] - v[0]);
    }
    double area() const { return std::abs(signed_area()); }
    Vec2 centroid() const {
        return {(v[0].x + v[1].x + v[2].x) / 3.0, (v[0].y + v[1].y + v[2].y) / 3.0};
    }
    double diameter() const {
        return std::max({(v[1] - v[0]).norm(), (v[2] - v[1]).norm(), (v[0] - v[2]).norm()});
    }
    Vec2 map(double r, double s) const {
        // reference triangle (0,0),(1,0),(0,1)
        return v[0] + r * (v[1] - v[0]) + s * (v[2] - v[0]);
    }
    std::array<double, 3> barycentric(const Vec2& p) const {
        const double d = (v[1] - v[0]).cross(v[2] - v[0]);
        const double l1 = (p - v[0]).cross(v[2] - v[0]) / d;
        const double l2 = (v[1] - v[0]).cross(p - v[0]) / d;
        return {1.0 - l1 - l2, l1, l2};
    }
    bool contains(const Vec2& p, double tol = 1e-12) const {
        const auto b = barycentric(p);
        return b[0] >= -tol && b[1] >= -tol && b[2] >= -tol;
    }
};

inline double dist_point_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double t = std::clamp(ab.dot(p - a) / ab.norm2(), 0.0, 1.0);
    return (p - (a + t * ab)).norm();
}

// Distance from a point to the triangle boundary (zero on edges).
inline double dist_point_tri_boundary(const Vec2& p, const Tri& t) {
    return std::min({dist_point_segment(p, t.v[0], t.v[1]),
                     dist_point_segment(p, t.v[1], t.v[2]),
                     dist_point_segment(p, t.v[2], t.v[0])});
}

inline double dist_segment_segment(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                   const Vec2& b1) {
    // segments intersect -> zero
    const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
        return (q - p).cross(r - p);
    };
    const double o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
    const double o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
    if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0))) return 0.0;
    return std::min({dist_point_segment(b0, a0, a1), dist_point_segment(b1, a0, a1),
                     dist_point_segment(a0, b0, b1), dist_point_segment(a1, b0, b1)});
}

// Distance between two disjoint triangles (zero when they touch or overlap).
inline double dist_tri_tri(const Tri& s, const Tri& t) {
    double d = std::numeric_limits<double>::max();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            d = std::min(d, dist_segment_segment(s.v[i], s.v[(i + 1) % 3], t.v[j],
                                                 t.v[(j + 1) % 3]));
    if (s.contains(t.v[0]) || t.contains(s.v[0])) return 0.0;
    return d;
}

inline std::array<double, 3> tri_angles(const Tri& t) {
    std::array<double, 3> ang{};
    for (int i = 0; i < 3; ++i) {
        const Vec2 u = t.v[(i + 1) % 3] - t.v[i];
        const Vec2 w = t.v[(i + 2) % 3] - t.v[i];
        ang[i] = std::acos(std::clamp(u.dot(w) / (u.norm() * w.norm()), -1.0, 1.0));
    }
    return ang;
}

}  // namespace focp

#endif
