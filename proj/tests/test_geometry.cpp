#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "mtdrive/geometry.hpp"
#include "mtdrive/rng.hpp"

using namespace mtdrive;

namespace {

// --- independent oracles -----------------------------------------------------

// Corner set recomputed with an explicit rotation matrix, different formula
// path than box_corners.
std::array<Vec2, 4> oracle_corners(const OrientedBox& b) {
    const double c = std::cos(b.heading);
    const double s = std::sin(b.heading);
    std::array<Vec2, 4> local{Vec2{b.length / 2, b.width / 2}, Vec2{b.length / 2, -b.width / 2},
                              Vec2{-b.length / 2, -b.width / 2}, Vec2{-b.length / 2, b.width / 2}};
    std::array<Vec2, 4> world;
    for (int i = 0; i < 4; ++i) {
        world[static_cast<std::size_t>(i)] =
            Vec2{b.center_x + c * local[static_cast<std::size_t>(i)].x - s * local[static_cast<std::size_t>(i)].y,
                 b.center_y + s * local[static_cast<std::size_t>(i)].x + c * local[static_cast<std::size_t>(i)].y};
    }
    return world;
}

bool oracle_point_in_box(const Vec2& p, const OrientedBox& b, double slack = 0.0) {
    const double c = std::cos(b.heading);
    const double s = std::sin(b.heading);
    const double dx = p.x - b.center_x;
    const double dy = p.y - b.center_y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::fabs(lx) <= b.length / 2 + slack && std::fabs(ly) <= b.width / 2 + slack;
}

bool oracle_segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
    auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) { return (q - p).cross(r - p); };
    const double d1 = orient(c, d, a);
    const double d2 = orient(c, d, b);
    const double d3 = orient(a, b, c);
    const double d4 = orient(a, b, d);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

// Dense point sampling plus corner containment plus edge crossings.
bool oracle_boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    const auto ca = oracle_corners(a);
    const auto cb = oracle_corners(b);
    for (const Vec2& p : ca) {
        if (oracle_point_in_box(p, b)) {
            return true;
        }
    }
    for (const Vec2& p : cb) {
        if (oracle_point_in_box(p, a)) {
            return true;
        }
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (oracle_segments_cross(ca[static_cast<std::size_t>(i)], ca[static_cast<std::size_t>((i + 1) % 4)],
                                      cb[static_cast<std::size_t>(j)], cb[static_cast<std::size_t>((j + 1) % 4)])) {
                return true;
            }
        }
    }
    // interior sampling; contact-only cases are caught by the tests above
    for (int i = 0; i <= 20; ++i) {
        for (int j = 0; j <= 20; ++j) {
            const double u = -1.0 + 0.1 * i;
            const double v = -1.0 + 0.1 * j;
            const double c = std::cos(a.heading);
            const double s = std::sin(a.heading);
            const Vec2 p{a.center_x + c * (u * a.length / 2) - s * (v * a.width / 2),
                         a.center_y + s * (u * a.length / 2) + c * (v * a.width / 2)};
            if (oracle_point_in_box(p, b)) {
                return true;
            }
        }
    }
    return false;
}

// Signed separation margin recomputed independently; used only to skip
// near-tie pairs per the declared +-1e-3 m band.
double oracle_sat_margin(const OrientedBox& a, const OrientedBox& b) {
    const auto axes = [](const OrientedBox& box) {
        const double c = std::cos(box.heading);
        const double s = std::sin(box.heading);
        return std::array<Vec2, 2>{Vec2{c, s}, Vec2{-s, c}};
    };
    const auto aa = axes(a);
    const auto ab = axes(b);
    const Vec2 d{b.center_x - a.center_x, b.center_y - a.center_y};
    double best = -1e18;
    for (const Vec2& axis : {aa[0], aa[1], ab[0], ab[1]}) {
        const double ra =
            a.length / 2 * std::fabs(axis.dot(aa[0])) + a.width / 2 * std::fabs(axis.dot(aa[1]));
        const double rb =
            b.length / 2 * std::fabs(axis.dot(ab[0])) + b.width / 2 * std::fabs(axis.dot(ab[1]));
        best = std::max(best, std::fabs(axis.dot(d)) - ra - rb);
    }
    return best;
}

// Even-odd rule with a tilted ray, nothing shared with the implementation.
bool oracle_point_in_polygon(const Vec2& p, const Polygon& poly) {
    const Vec2 dir{0.9063077870366499, 0.4226182617406994};
    int crossings = 0;
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2 a = v[i];
        const Vec2 b = v[(i + 1) % v.size()];
        const Vec2 e = b - a;
        const double denom = dir.cross(e);
        if (std::fabs(denom) < 1e-15) {
            continue;
        }
        const Vec2 ap = a - p;
        const double t = ap.cross(e) / denom;
        const double s = ap.cross(dir) / denom;
        if (t > 0.0 && s >= 0.0 && s < 1.0) {
            ++crossings;
        }
    }
    return crossings % 2 == 1;
}

double distance_to_boundary(const Vec2& p, const Polygon& poly) {
    double best = 1e18;
    const auto& v = poly.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec2 a = v[i];
        const Vec2 b = v[(i + 1) % v.size()];
        const Vec2 e = b - a;
        const double len2 = e.dot(e);
        const double t = len2 > 0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, (p - (a + e * t)).norm());
    }
    return best;
}

OrientedBox random_box(SplitMix64& rng, double span) {
    OrientedBox b;
    b.center_x = rng.next_range(-span, span);
    b.center_y = rng.next_range(-span, span);
    b.length = rng.next_range(0.5, 8.0);
    b.width = rng.next_range(0.5, 4.0);
    b.height = 1.5;
    b.heading = rng.next_range(-kPi, kPi);
    b.class_name = "vehicle";
    return b;
}

Polygon concave_test_polygon() {
    // an L-shaped corridor
    Polygon poly;
    poly.vertices = {{0, 0}, {10, 0}, {10, 4}, {6, 4}, {6, 10}, {0, 10}};
    return poly;
}

}  // namespace

TEST_CASE("normalize_angle wraps into (-pi, pi] and is idempotent") {
    CHECK(normalize_angle(kPi) == doctest::Approx(kPi));
    CHECK(normalize_angle(-kPi) == doctest::Approx(kPi));
    CHECK(normalize_angle(3 * kPi) == doctest::Approx(kPi));
    CHECK(normalize_angle(0.25) == doctest::Approx(0.25));
    SplitMix64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.next_range(-40.0, 40.0);
        const double n = normalize_angle(a);
        CHECK(n > -kPi - 1e-12);
        CHECK(n <= kPi + 1e-12);
        CHECK(normalize_angle(n) == doctest::Approx(n).epsilon(1e-12));
        CHECK(std::fabs(std::remainder(n - a, 2 * kPi)) < 1e-9);
    }
}

TEST_CASE("footprint_at produces the expected corners") {
    const OrientedBox box = footprint_at(Pose2D{0, 0, 0}, 4.6, 1.9);
    CHECK(box.class_name == "ego");
    for (const Vec2& c : box_corners(box)) {
        CHECK(std::fabs(c.x) == doctest::Approx(2.3));
        CHECK(std::fabs(c.y) == doctest::Approx(0.95));
    }

    // a quarter turn swaps the extents
    for (const Vec2& c : box_corners(footprint_at(Pose2D{0, 0, kPi / 2}, 4.6, 1.9))) {
        CHECK(std::fabs(c.x) == doctest::Approx(0.95));
        CHECK(std::fabs(c.y) == doctest::Approx(2.3));
    }
}

TEST_CASE("box corners match the rotation-matrix oracle at random poses") {
    SplitMix64 rng(23);
    for (int i = 0; i < 500; ++i) {
        const Pose2D pose{rng.next_range(-50, 50), rng.next_range(-50, 50),
                          rng.next_range(-kPi, kPi)};
        const OrientedBox box =
            footprint_at(pose, rng.next_range(1.0, 8.0), rng.next_range(0.5, 3.0));
        const auto got = box_corners(box);
        const auto want = oracle_corners(box);
        for (int k = 0; k < 4; ++k) {
            CHECK(got[static_cast<std::size_t>(k)].x ==
                  doctest::Approx(want[static_cast<std::size_t>(k)].x).epsilon(1e-9));
            CHECK(got[static_cast<std::size_t>(k)].y ==
                  doctest::Approx(want[static_cast<std::size_t>(k)].y).epsilon(1e-9));
        }
    }
}

TEST_CASE("boxes_overlap trivial cases") {
    OrientedBox a;
    a.center_x = 0;
    a.center_y = 0;
    a.length = 2;
    a.width = 2;
    a.height = 1;
    a.class_name = "vehicle";
    OrientedBox b = a;
    CHECK(boxes_overlap(a, b));  // a box overlaps itself
    b.center_x = 10.0;
    CHECK_FALSE(boxes_overlap(a, b));  // disjoint by inspection
    b.center_x = 2.0;
    CHECK(boxes_overlap(a, b));  // boundary contact counts as overlap
}

TEST_CASE("boxes_overlap agrees with the point-sampling oracle off the margin band") {
    SplitMix64 rng(37);
    int checked = 0;
    for (int i = 0; i < 4000; ++i) {
        const OrientedBox a = random_box(rng, 6.0);
        const OrientedBox b = random_box(rng, 6.0);
        if (std::fabs(oracle_sat_margin(a, b)) < 1e-3) {
            continue;
        }
        ++checked;
        CHECK(boxes_overlap(a, b) == oracle_boxes_overlap(a, b));
    }
    CHECK(checked > 3000);
}

TEST_CASE("boxes_overlap is symmetric and rigid-motion invariant") {
    SplitMix64 rng(41);
    for (int i = 0; i < 1500; ++i) {
        const OrientedBox a = random_box(rng, 5.0);
        const OrientedBox b = random_box(rng, 5.0);
        const bool base = boxes_overlap(a, b);
        CHECK(base == boxes_overlap(b, a));

        OrientedBox at = a;
        OrientedBox bt = b;
        const double tx = rng.next_range(-30, 30);
        const double ty = rng.next_range(-30, 30);
        at.center_x += tx;
        at.center_y += ty;
        bt.center_x += tx;
        bt.center_y += ty;
        CHECK(base == boxes_overlap(at, bt));

        const double phi = rng.next_range(-kPi, kPi);
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        auto rotate = [&](const OrientedBox& box) {
            OrientedBox r = box;
            r.center_x = c * box.center_x - s * box.center_y;
            r.center_y = s * box.center_x + c * box.center_y;
            r.heading = normalize_angle(box.heading + phi);
            return r;
        };
        CHECK(base == boxes_overlap(rotate(a), rotate(b)));
    }
}

TEST_CASE("point_in_polygon basics") {
    Polygon square;
    square.vertices = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
    CHECK(point_in_polygon(Vec2{2, 2}, square));        // centroid
    CHECK(point_in_polygon(Vec2{0, 2}, square));        // boundary counts as inside
    CHECK(point_in_polygon(Vec2{4, 4}, square));        // vertex
    CHECK_FALSE(point_in_polygon(Vec2{5, 2}, square));  // one beyond the bbox

    const Polygon ell = concave_test_polygon();
    CHECK(point_in_polygon(Vec2{2, 8}, ell));
    CHECK_FALSE(point_in_polygon(Vec2{8, 8}, ell));  // in the notch
}

TEST_CASE("point_in_polygon agrees with an independent ray-casting oracle") {
    const Polygon ell = concave_test_polygon();
    Polygon hexagon;
    for (int i = 0; i < 6; ++i) {
        const double a = 2 * kPi * i / 6;
        hexagon.vertices.push_back(Vec2{5 * std::cos(a), 5 * std::sin(a)});
    }
    SplitMix64 rng(53);
    for (const Polygon& poly : {ell, hexagon}) {
        int checked = 0;
        for (int i = 0; i < 2000; ++i) {
            const Vec2 p{rng.next_range(-8, 14), rng.next_range(-8, 14)};
            if (distance_to_boundary(p, poly) < 1e-9) {
                continue;
            }
            ++checked;
            CHECK(point_in_polygon(p, poly) == oracle_point_in_polygon(p, poly));
        }
        CHECK(checked > 1900);
    }
}

TEST_CASE("box_in_polygon equals the corner-enumeration oracle") {
    Polygon corridor;
    corridor.vertices = {{-10, -4}, {60, -4}, {60, 4}, {-10, 4}};
    CHECK(box_in_polygon(footprint_at(Pose2D{10, 0, 0}, 4.6, 1.9), corridor));
    CHECK_FALSE(box_in_polygon(footprint_at(Pose2D{10, 3.5, 0}, 4.6, 1.9), corridor));

    SplitMix64 rng(67);
    const Polygon ell = concave_test_polygon();
    for (int i = 0; i < 1000; ++i) {
        const OrientedBox box = footprint_at(
            Pose2D{rng.next_range(-2, 12), rng.next_range(-2, 12), rng.next_range(-kPi, kPi)},
            rng.next_range(0.5, 3.0), rng.next_range(0.3, 1.5));
        bool oracle = true;
        for (const Vec2& c : oracle_corners(box)) {
            if (!point_in_polygon(c, ell)) {
                oracle = false;
                break;
            }
        }
        CHECK(box_in_polygon(box, ell) == oracle);
    }
}

TEST_CASE("polygon_valid rejects malformed polygons") {
    std::string why;
    Polygon two;
    two.vertices = {{0, 0}, {1, 0}};
    CHECK_FALSE(polygon_valid(two, &why));

    Polygon clockwise;
    clockwise.vertices = {{0, 0}, {0, 4}, {4, 4}, {4, 0}};
    CHECK_FALSE(polygon_valid(clockwise, &why));
    CHECK(why == "polygon winding is clockwise");

    Polygon bowtie;
    bowtie.vertices = {{0, 0}, {4, 4}, {4, 0}, {0, 4}};
    CHECK_FALSE(polygon_valid(bowtie, &why));

    Polygon degenerate;
    degenerate.vertices = {{0, 0}, {1, 0}, {2, 0}};
    CHECK_FALSE(polygon_valid(degenerate, &why));

    Polygon square;
    square.vertices = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
    CHECK(polygon_valid(square));
}
