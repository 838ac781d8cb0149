#pragma once

#include <array>
#include <string>
#include <vector>

namespace mtdrive {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Wrap an angle into (-pi, pi]. Idempotent.
double normalize_angle(double radians);

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const;
};

// Ego-frame pose: +x forward, +y left, heading in (-pi, pi].
struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
};

// Planar oriented box with the 3D fields carried along for feedback text.
// Collision math is BEV-only: z and height are never consulted.
struct OrientedBox {
    double center_x = 0.0;
    double center_y = 0.0;
    double center_z = 0.0;
    double length = 0.0;  // extent along heading
    double width = 0.0;   // extent perpendicular to heading
    double height = 0.0;
    double heading = 0.0;
    std::string class_name;
};

// Simple polygon, counter-clockwise, >= 3 vertices, nonzero area.
struct Polygon {
    std::vector<Vec2> vertices;
};

// Footprint corners in order: front-left, front-right, rear-right, rear-left.
std::array<Vec2, 4> box_corners(const OrientedBox& box);

// Separating-axis test over the four edge normals. Boundary contact counts
// as overlap.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

// Crossing-number test; points on the boundary count as inside.
bool point_in_polygon(const Vec2& p, const Polygon& poly);

// True iff all four footprint corners are inside (or on) the polygon.
bool box_in_polygon(const OrientedBox& box, const Polygon& poly);

// Ego box placed at a trajectory pose. class_name is "ego".
OrientedBox footprint_at(const Pose2D& pose, double length, double width);

double polygon_signed_area(const Polygon& poly);

// Checks the Polygon invariants; fills `why` with the first violation.
bool polygon_valid(const Polygon& poly, std::string* why = nullptr);

}  // namespace mtdrive
