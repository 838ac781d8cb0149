#include "mtdrive/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mtdrive {

double Vec2::norm() const { return std::hypot(x, y); }

double normalize_angle(double radians) {
    double a = std::fmod(radians + kPi, 2.0 * kPi);
    if (a <= 0.0) {
        a += 2.0 * kPi;
    }
    return a - kPi;
}

std::array<Vec2, 4> box_corners(const OrientedBox& box) {
    const double c = std::cos(box.heading);
    const double s = std::sin(box.heading);
    const double hl = 0.5 * box.length;
    const double hw = 0.5 * box.width;
    const Vec2 fwd{c * hl, s * hl};
    const Vec2 left{-s * hw, c * hw};
    const Vec2 center{box.center_x, box.center_y};
    return {center + fwd + left, center + fwd - left, center - fwd - left, center - fwd + left};
}

namespace {

// Projects both boxes onto `axis` and reports a separating gap. Strict
// inequality: touching projections do not separate.
bool axis_separates(const Vec2& axis, const Vec2& delta, double half_a_l, double half_a_w,
                    const Vec2& a_dir, const Vec2& a_nrm, double half_b_l, double half_b_w,
                    const Vec2& b_dir, const Vec2& b_nrm) {
    const double ra = half_a_l * std::fabs(axis.dot(a_dir)) + half_a_w * std::fabs(axis.dot(a_nrm));
    const double rb = half_b_l * std::fabs(axis.dot(b_dir)) + half_b_w * std::fabs(axis.dot(b_nrm));
    return std::fabs(axis.dot(delta)) > ra + rb;
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    const Vec2 a_dir{std::cos(a.heading), std::sin(a.heading)};
    const Vec2 a_nrm{-a_dir.y, a_dir.x};
    const Vec2 b_dir{std::cos(b.heading), std::sin(b.heading)};
    const Vec2 b_nrm{-b_dir.y, b_dir.x};
    const Vec2 delta{b.center_x - a.center_x, b.center_y - a.center_y};
    const double al = 0.5 * a.length, aw = 0.5 * a.width;
    const double bl = 0.5 * b.length, bw = 0.5 * b.width;

    for (const Vec2& axis : {a_dir, a_nrm, b_dir, b_nrm}) {
        if (axis_separates(axis, delta, al, aw, a_dir, a_nrm, bl, bw, b_dir, b_nrm)) {
            return false;
        }
    }
    return true;
}

bool point_in_polygon(const Vec2& p, const Polygon& poly) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();

    // Boundary counts as inside; test segment membership first.
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2& a = v[i];
        const Vec2& b = v[(i + 1) % n];
        const Vec2 ab = b - a;
        const Vec2 ap = p - a;
        const double cross = ab.cross(ap);
        const double len2 = ab.dot(ab);
        if (cross * cross <= 1e-24 * std::max(len2, 1.0) * std::max(len2, 1.0)) {
            const double t = len2 > 0.0 ? ab.dot(ap) / len2 : 0.0;
            if (t >= -1e-12 && t <= 1.0 + 1e-12) {
                const Vec2 closest = a + ab * std::clamp(t, 0.0, 1.0);
                if ((p - closest).norm() <= 1e-9) {
                    return true;
                }
            }
        }
    }

    // Crossing number with a ray in +x direction.
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = v[i];
        const Vec2& b = v[j];
        const bool straddles = (a.y > p.y) != (b.y > p.y);
        if (straddles) {
            const double x_hit = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if (p.x < x_hit) {
                inside = !inside;
            }
        }
    }
    return inside;
}

bool box_in_polygon(const OrientedBox& box, const Polygon& poly) {
    for (const Vec2& corner : box_corners(box)) {
        if (!point_in_polygon(corner, poly)) {
            return false;
        }
    }
    return true;
}

OrientedBox footprint_at(const Pose2D& pose, double length, double width) {
    OrientedBox box;
    box.center_x = pose.x;
    box.center_y = pose.y;
    box.center_z = 0.75;
    box.length = length;
    box.width = width;
    box.height = 1.5;
    box.heading = normalize_angle(pose.heading);
    box.class_name = "ego";
    return box;
}

double polygon_signed_area(const Polygon& poly) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    double twice_area = 0.0;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        twice_area += v[j].cross(v[i]);
    }
    return 0.5 * twice_area;
}

namespace {

bool segments_properly_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    const double d1 = (b - a).cross(c - a);
    const double d2 = (b - a).cross(d - a);
    const double d3 = (d - c).cross(a - c);
    const double d4 = (d - c).cross(b - c);
    return ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0));
}

}  // namespace

bool polygon_valid(const Polygon& poly, std::string* why) {
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    auto fail = [&](const char* reason) {
        if (why != nullptr) {
            *why = reason;
        }
        return false;
    };
    if (n < 3) {
        return fail("polygon needs at least 3 vertices");
    }
    for (const Vec2& p : v) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            return fail("polygon vertex not finite");
        }
    }
    const double area = polygon_signed_area(poly);
    if (std::fabs(area) < 1e-9) {
        return fail("polygon area is zero");
    }
    if (area < 0.0) {
        return fail("polygon winding is clockwise");
    }
    // Non-adjacent edge pairs must not cross. Polygons here are small, the
    // quadratic sweep is fine.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
            if (adjacent) {
                continue;
            }
            if (segments_properly_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) {
                return fail("polygon is self-intersecting");
            }
        }
    }
    return true;
}

}  // namespace mtdrive
