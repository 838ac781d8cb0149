#include "mtdrive/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"

namespace mtdrive {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr double kVehicleLength = 4.8;
constexpr double kVehicleWidth = 2.0;
constexpr double kVehicleHeight = 1.6;
constexpr double kPedSize = 0.7;
constexpr double kPedHeight = 1.75;

double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace

OrientedBox agent_box_at(const AgentTrack& agent, double t, PerceptionMode mode) {
    if (mode == PerceptionMode::KINEMATIC) {
        OrientedBox box = agent.box;
        box.center_x += agent.velocity.x * t;
        box.center_y += agent.velocity.y * t;
        return box;
    }
    if (!agent.gt_track.has_value()) {
        throw ConfigError("GT_ORACLE perception requires agents with gt_track");
    }
    const auto& track = *agent.gt_track;
    const int last = static_cast<int>(track.size()) - 1;
    // Bracketing samples on the 0.5 s grid; outside the sampled range the
    // boundary segment is extended so a constant-velocity track matches the
    // kinematic setting at every t.
    double u = t / kTrajectoryDt;
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, last - 1);
    const double alpha = u - static_cast<double>(i);
    const OrientedBox& a = track[static_cast<std::size_t>(i)];
    const OrientedBox& b = track[static_cast<std::size_t>(i + 1)];
    OrientedBox out = a;
    out.center_x = lerp(a.center_x, b.center_x, alpha);
    out.center_y = lerp(a.center_y, b.center_y, alpha);
    out.center_z = lerp(a.center_z, b.center_z, alpha);
    out.heading = normalize_angle(a.heading + alpha * normalize_angle(b.heading - a.heading));
    return out;
}

std::string nav_to_string(NavCommand nav) {
    switch (nav) {
        case NavCommand::GO_STRAIGHT: return "GO_STRAIGHT";
        case NavCommand::TURN_LEFT: return "TURN_LEFT";
        case NavCommand::TURN_RIGHT: return "TURN_RIGHT";
    }
    return "GO_STRAIGHT";
}

NavCommand nav_from_string(const std::string& s) {
    if (s == "GO_STRAIGHT") {
        return NavCommand::GO_STRAIGHT;
    }
    if (s == "TURN_LEFT") {
        return NavCommand::TURN_LEFT;
    }
    if (s == "TURN_RIGHT") {
        return NavCommand::TURN_RIGHT;
    }
    throw DataError("unknown nav command: " + s);
}

bool trajectory_valid(const Trajectory& traj, std::string* why) {
    for (const Pose2D& p : traj.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.heading)) {
            if (why != nullptr) {
                *why = "trajectory point not finite";
            }
            return false;
        }
        if (std::fabs(p.x) > 200.0 || std::fabs(p.y) > 200.0) {
            if (why != nullptr) {
                *why = "trajectory point outside the 200 m sanity bound";
            }
            return false;
        }
    }
    return true;
}

bool scenario_valid(const Scenario& s, std::string* why) {
    auto fail = [&](const std::string& reason) {
        if (why != nullptr) {
            *why = reason;
        }
        return false;
    };
    const Pose2D& anchor = s.ego_history[3];
    if (std::fabs(anchor.x) > 1e-9 || std::fabs(anchor.y) > 1e-9 || std::fabs(anchor.heading) > 1e-9) {
        return fail("ego_history[3] must anchor the frame at (0,0,0)");
    }
    for (const Pose2D& p : s.ego_history) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.heading)) {
            return fail("ego_history pose not finite");
        }
    }
    if (!std::isfinite(s.ego_speed) || s.ego_speed < 0.0) {
        return fail("ego_speed must be finite and nonnegative");
    }
    std::string poly_why;
    if (!polygon_valid(s.drivable_area, &poly_why)) {
        return fail("drivable_area: " + poly_why);
    }
    if (s.centerline.size() < 2) {
        return fail("centerline needs at least 2 points");
    }
    if (s.centerline.front().norm() > 1.0) {
        return fail("centerline must start within 1 m of the origin");
    }
    if (!box_in_polygon(footprint_at(Pose2D{}, kDefaultEgoLength, kDefaultEgoWidth), s.drivable_area)) {
        return fail("drivable_area must contain the origin footprint");
    }
    for (std::size_t ai = 0; ai < s.agents.size(); ++ai) {
        const AgentTrack& a = s.agents[ai];
        const std::string where = "agent " + std::to_string(ai);
        if (a.box.length <= 0.0 || a.box.width <= 0.0 || a.box.height <= 0.0) {
            return fail(where + ": box extents must be positive");
        }
        if (!std::isfinite(a.velocity.x) || !std::isfinite(a.velocity.y)) {
            return fail(where + ": velocity not finite");
        }
        if (a.gt_track.has_value()) {
            if (a.gt_track->size() != kGtTrackSamples) {
                return fail(where + ": gt_track must hold exactly 9 samples");
            }
            for (const OrientedBox& b : *a.gt_track) {
                if (std::fabs(b.length - a.box.length) > 1e-9 || std::fabs(b.width - a.box.width) > 1e-9) {
                    return fail(where + ": gt_track extents must stay constant");
                }
            }
        }
    }
    if (s.gt_trajectory.has_value()) {
        std::string traj_why;
        if (!trajectory_valid(*s.gt_trajectory, &traj_why)) {
            return fail("gt_trajectory: " + traj_why);
        }
    }
    return true;
}

double polyline_length(const std::vector<Vec2>& pts) {
    double total = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        total += (pts[i] - pts[i - 1]).norm();
    }
    return total;
}

double project_arc_length(const std::vector<Vec2>& pts, const Vec2& p) {
    double best_dist2 = std::numeric_limits<double>::max();
    double best_arc = 0.0;
    double arc = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Vec2 a = pts[i];
        const Vec2 d = pts[i + 1] - a;
        const double len2 = d.dot(d);
        double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
        const Vec2 closest = a + d * t;
        const double dist2 = (p - closest).dot(p - closest);
        if (dist2 < best_dist2) {
            best_dist2 = dist2;
            best_arc = arc + std::sqrt(len2) * t;
        }
        arc += std::sqrt(len2);
    }
    return best_arc;
}

void polyline_sample(const std::vector<Vec2>& pts, double s, Vec2* point, Vec2* tangent) {
    double remaining = std::max(0.0, s);
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const Vec2 a = pts[i];
        const Vec2 d = pts[i + 1] - a;
        const double len = d.norm();
        if (remaining <= len || i + 2 == pts.size()) {
            const double t = len > 0.0 ? std::min(remaining, len) / len : 0.0;
            if (point != nullptr) {
                *point = a + d * t;
            }
            if (tangent != nullptr) {
                *tangent = len > 0.0 ? d * (1.0 / len) : Vec2{1.0, 0.0};
            }
            return;
        }
        remaining -= len;
    }
    if (point != nullptr) {
        *point = pts.empty() ? Vec2{} : pts.front();
    }
    if (tangent != nullptr) {
        *tangent = Vec2{1.0, 0.0};
    }
}

// ---------------------------------------------------------------------------
// JSONL corpus

namespace {

ordered_json pose_to_json(const Pose2D& p) { return ordered_json::array({p.x, p.y, p.heading}); }

ordered_json box_to_json(const OrientedBox& b) {
    return ordered_json::array({b.center_x, b.center_y, b.center_z, b.length, b.width, b.height, b.heading});
}

ordered_json traj_to_json(const Trajectory& t) {
    ordered_json arr = ordered_json::array();
    for (const Pose2D& p : t.points) {
        arr.push_back(pose_to_json(p));
    }
    return arr;
}

const ordered_json& require_field(const ordered_json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw DataError(std::string("missing field \"") + key + "\"");
    }
    return *it;
}

double as_number(const ordered_json& j, const char* field) {
    if (!j.is_number()) {
        throw DataError(std::string("field \"") + field + "\" must be a number");
    }
    return j.get<double>();
}

Pose2D pose_from_json(const ordered_json& j, const char* field) {
    if (!j.is_array() || j.size() != 3) {
        throw DataError(std::string("field \"") + field + "\" must be [x, y, heading]");
    }
    return Pose2D{as_number(j[0], field), as_number(j[1], field), as_number(j[2], field)};
}

OrientedBox box_from_json(const ordered_json& j, const char* field, const std::string& class_name) {
    if (!j.is_array() || j.size() != 7) {
        throw DataError(std::string("field \"") + field + "\" must be [x, y, z, l, w, h, heading]");
    }
    OrientedBox b;
    b.center_x = as_number(j[0], field);
    b.center_y = as_number(j[1], field);
    b.center_z = as_number(j[2], field);
    b.length = as_number(j[3], field);
    b.width = as_number(j[4], field);
    b.height = as_number(j[5], field);
    b.heading = as_number(j[6], field);
    b.class_name = class_name;
    return b;
}

Trajectory traj_from_json(const ordered_json& j, const char* field) {
    if (!j.is_array() || j.size() != kTrajectoryPoints) {
        throw DataError(std::string("field \"") + field + "\" must hold exactly 8 points");
    }
    Trajectory t;
    for (int i = 0; i < kTrajectoryPoints; ++i) {
        t.points[static_cast<std::size_t>(i)] = pose_from_json(j[static_cast<std::size_t>(i)], field);
    }
    return t;
}

ordered_json scenario_to_json(const Scenario& s) {
    ordered_json j;
    j["id"] = s.id;
    ordered_json hist = ordered_json::array();
    for (const Pose2D& p : s.ego_history) {
        hist.push_back(pose_to_json(p));
    }
    j["ego_history"] = hist;
    j["ego_speed"] = s.ego_speed;
    ordered_json agents = ordered_json::array();
    for (const AgentTrack& a : s.agents) {
        ordered_json aj;
        aj["box"] = box_to_json(a.box);
        aj["class"] = a.box.class_name;
        aj["vel"] = ordered_json::array({a.velocity.x, a.velocity.y});
        if (a.gt_track.has_value()) {
            ordered_json track = ordered_json::array();
            for (const OrientedBox& b : *a.gt_track) {
                track.push_back(box_to_json(b));
            }
            aj["gt_track"] = track;
        } else {
            aj["gt_track"] = nullptr;
        }
        agents.push_back(aj);
    }
    j["agents"] = agents;
    ordered_json area = ordered_json::array();
    for (const Vec2& v : s.drivable_area.vertices) {
        area.push_back(ordered_json::array({v.x, v.y}));
    }
    j["drivable_area"] = area;
    ordered_json line = ordered_json::array();
    for (const Vec2& v : s.centerline) {
        line.push_back(ordered_json::array({v.x, v.y}));
    }
    j["centerline"] = line;
    j["nav"] = nav_to_string(s.nav);
    if (s.gt_trajectory.has_value()) {
        j["gt_trajectory"] = traj_to_json(*s.gt_trajectory);
    } else {
        j["gt_trajectory"] = nullptr;
    }
    return j;
}

Scenario scenario_from_json(const ordered_json& j) {
    Scenario s;
    const ordered_json& id = require_field(j, "id");
    if (!id.is_string()) {
        throw DataError("field \"id\" must be a string");
    }
    s.id = id.get<std::string>();

    const ordered_json& hist = require_field(j, "ego_history");
    if (!hist.is_array() || hist.size() != kEgoHistorySamples) {
        throw DataError("field \"ego_history\" must hold exactly 4 poses");
    }
    for (int i = 0; i < kEgoHistorySamples; ++i) {
        s.ego_history[static_cast<std::size_t>(i)] = pose_from_json(hist[static_cast<std::size_t>(i)], "ego_history");
    }
    s.ego_speed = as_number(require_field(j, "ego_speed"), "ego_speed");

    const ordered_json& agents = require_field(j, "agents");
    if (!agents.is_array()) {
        throw DataError("field \"agents\" must be an array");
    }
    for (const ordered_json& aj : agents) {
        AgentTrack a;
        const ordered_json& cls = require_field(aj, "class");
        if (!cls.is_string()) {
            throw DataError("field \"class\" must be a string");
        }
        a.box = box_from_json(require_field(aj, "box"), "box", cls.get<std::string>());
        const ordered_json& vel = require_field(aj, "vel");
        if (!vel.is_array() || vel.size() != 2) {
            throw DataError("field \"vel\" must be [vx, vy]");
        }
        a.velocity = Vec2{as_number(vel[0], "vel"), as_number(vel[1], "vel")};
        const ordered_json& track = require_field(aj, "gt_track");
        if (!track.is_null()) {
            if (!track.is_array() || track.size() != kGtTrackSamples) {
                throw DataError("field \"gt_track\" must hold exactly 9 boxes");
            }
            std::vector<OrientedBox> boxes;
            boxes.reserve(kGtTrackSamples);
            for (const ordered_json& bj : track) {
                boxes.push_back(box_from_json(bj, "gt_track", a.box.class_name));
            }
            a.gt_track = std::move(boxes);
        }
        s.agents.push_back(std::move(a));
    }

    const ordered_json& area = require_field(j, "drivable_area");
    if (!area.is_array()) {
        throw DataError("field \"drivable_area\" must be an array");
    }
    for (const ordered_json& vj : area) {
        if (!vj.is_array() || vj.size() != 2) {
            throw DataError("field \"drivable_area\" must hold [x, y] pairs");
        }
        s.drivable_area.vertices.push_back(Vec2{as_number(vj[0], "drivable_area"), as_number(vj[1], "drivable_area")});
    }

    const ordered_json& line = require_field(j, "centerline");
    if (!line.is_array()) {
        throw DataError("field \"centerline\" must be an array");
    }
    for (const ordered_json& vj : line) {
        if (!vj.is_array() || vj.size() != 2) {
            throw DataError("field \"centerline\" must hold [x, y] pairs");
        }
        s.centerline.push_back(Vec2{as_number(vj[0], "centerline"), as_number(vj[1], "centerline")});
    }

    const ordered_json& nav = require_field(j, "nav");
    if (!nav.is_string()) {
        throw DataError("field \"nav\" must be a string");
    }
    s.nav = nav_from_string(nav.get<std::string>());

    const ordered_json& gt = require_field(j, "gt_trajectory");
    if (!gt.is_null()) {
        s.gt_trajectory = traj_from_json(gt, "gt_trajectory");
    }
    return s;
}

}  // namespace

void save_corpus(const std::vector<Scenario>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    for (const Scenario& s : corpus) {
        out << scenario_to_json(s).dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

std::vector<Scenario> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open corpus: " + path);
    }
    std::vector<Scenario> corpus;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const ordered_json j = ordered_json::parse(line);
            Scenario s = scenario_from_json(j);
            std::string why;
            if (!scenario_valid(s, &why)) {
                throw DataError("invariant violation: " + why);
            }
            corpus.push_back(std::move(s));
        } catch (const ordered_json::parse_error& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        } catch (const DataError& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Procedural generation

const std::vector<std::string> kScenarioFamilies = {
    "straight_corridor",   "lane_narrowing",     "lead_vehicle_brake",
    "crosswalk_pedestrian", "intersection_queue", "rear_approach",
};

namespace {

using SpeedProfile = std::array<double, kTrajectoryPoints>;

std::array<Pose2D, kEgoHistorySamples> make_history(double v0, SplitMix64& rng) {
    std::array<Pose2D, kEgoHistorySamples> hist;
    for (int i = 0; i < 3; ++i) {
        const double t = -1.5 + 0.5 * i;
        hist[static_cast<std::size_t>(i)] =
            Pose2D{v0 * t, rng.next_range(-0.03, 0.03), rng.next_range(-0.008, 0.008)};
    }
    hist[3] = Pose2D{0.0, 0.0, 0.0};
    return hist;
}

// Ring around a path: right side forward, left side backward (CCW for a
// forward-running path).
Polygon corridor_polygon(const std::vector<Vec2>& line, const std::vector<double>& left_w,
                         const std::vector<double>& right_w) {
    const std::size_t n = line.size();
    auto normal_at = [&](std::size_t i) {
        Vec2 d;
        if (i == 0) {
            d = line[1] - line[0];
        } else if (i + 1 == n) {
            d = line[n - 1] - line[n - 2];
        } else {
            const Vec2 a = line[i] - line[i - 1];
            const Vec2 b = line[i + 1] - line[i];
            d = Vec2{a.x / std::max(a.norm(), 1e-12) + b.x / std::max(b.norm(), 1e-12),
                     a.y / std::max(a.norm(), 1e-12) + b.y / std::max(b.norm(), 1e-12)};
        }
        const double len = std::max(d.norm(), 1e-12);
        return Vec2{-d.y / len, d.x / len};  // left normal
    };
    Polygon poly;
    poly.vertices.reserve(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        poly.vertices.push_back(line[i] - normal_at(i) * right_w[i]);
    }
    for (std::size_t i = n; i-- > 0;) {
        poly.vertices.push_back(line[i] + normal_at(i) * left_w[i]);
    }
    return poly;
}

// Expert built by walking `speeds` along the centerline. Headings are the
// atan2 of consecutive deltas with the last one copied, matching the token
// codec's heading rule.
Trajectory expert_from_profile(const std::vector<Vec2>& centerline, const SpeedProfile& speeds) {
    std::array<Vec2, kTrajectoryPoints> pos;
    double s = 0.0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        s += speeds[static_cast<std::size_t>(k)] * kTrajectoryDt;
        polyline_sample(centerline, s, &pos[static_cast<std::size_t>(k)], nullptr);
    }
    Trajectory traj;
    Vec2 prev{0.0, 0.0};
    double heading = 0.0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        const Vec2 cur = pos[static_cast<std::size_t>(k)];
        const Vec2 next = k + 1 < kTrajectoryPoints ? pos[static_cast<std::size_t>(k + 1)] : cur;
        const Vec2 delta = next - cur;
        if (delta.norm() > 1e-9) {
            heading = std::atan2(delta.y, delta.x);
        } else if ((cur - prev).norm() > 1e-9) {
            heading = std::atan2(cur.y - prev.y, cur.x - prev.x);
        }
        traj.points[static_cast<std::size_t>(k)] = Pose2D{cur.x, cur.y, normalize_angle(heading)};
        prev = cur;
    }
    return traj;
}

SpeedProfile constant_speeds(double v) {
    SpeedProfile s;
    s.fill(v);
    return s;
}

// Constant-deceleration stop: speeds[k] = max(0, v0 - a*dt*(k+1)). Picks the
// gentlest deceleration on a grid whose travel fits the budget; 4.0 m/s^2 is
// the comfort-safe ceiling on the 0.5 s grid.
SpeedProfile stop_profile(double v0, double distance_budget) {
    for (double a = 0.8; a <= 4.01; a += 0.05) {
        SpeedProfile s;
        double travelled = 0.0;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            s[static_cast<std::size_t>(k)] = std::max(0.0, v0 - a * kTrajectoryDt * (k + 1));
            travelled += s[static_cast<std::size_t>(k)] * kTrajectoryDt;
        }
        const bool stopped = s.back() <= 1e-9;
        if (stopped && travelled <= distance_budget) {
            return s;
        }
    }
    SpeedProfile s;
    double v = v0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        v = std::max(0.0, v - 4.0 * kTrajectoryDt);
        s[static_cast<std::size_t>(k)] = v;
    }
    return s;
}

// Acceleration ramp capped both by per-step delta (comfort) and by the token
// codec's 6 m per 0.5 s ceiling.
SpeedProfile ramp_profile(double v0, double v_target) {
    SpeedProfile s;
    double v = v0;
    double dv_prev = 0.0;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        double dv = std::clamp(v_target - v, -1.8, 1.8);
        dv = std::clamp(dv, dv_prev - 1.8, dv_prev + 1.8);
        v = std::clamp(v + dv, 0.0, 11.4);
        s[static_cast<std::size_t>(k)] = v;
        dv_prev = dv;
    }
    return s;
}

std::vector<Vec2> straight_line(double x0, double x1, double step) {
    std::vector<Vec2> pts;
    for (double x = x0; x < x1 + 0.5 * step; x += step) {
        pts.push_back(Vec2{x, 0.0});
    }
    return pts;
}

OrientedBox vehicle_box(double x, double y, double heading) {
    OrientedBox b;
    b.center_x = x;
    b.center_y = y;
    b.center_z = 0.5 * kVehicleHeight;
    b.length = kVehicleLength;
    b.width = kVehicleWidth;
    b.height = kVehicleHeight;
    b.heading = normalize_angle(heading);
    b.class_name = "vehicle";
    return b;
}

OrientedBox pedestrian_box(double x, double y, double heading) {
    OrientedBox b;
    b.center_x = x;
    b.center_y = y;
    b.center_z = 0.5 * kPedHeight;
    b.length = kPedSize;
    b.width = kPedSize;
    b.height = kPedHeight;
    b.heading = normalize_angle(heading);
    b.class_name = "pedestrian";
    return b;
}

std::vector<OrientedBox> track_from_positions(const OrientedBox& base,
                                              const std::vector<Vec2>& centers,
                                              const std::vector<double>& headings) {
    std::vector<OrientedBox> track;
    track.reserve(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        OrientedBox b = base;
        b.center_x = centers[i].x;
        b.center_y = centers[i].y;
        b.heading = normalize_angle(headings[i]);
        track.push_back(b);
    }
    return track;
}

AgentTrack constant_velocity_agent(const OrientedBox& box, const Vec2& vel) {
    AgentTrack agent;
    agent.box = box;
    agent.velocity = vel;
    std::vector<Vec2> centers;
    std::vector<double> headings;
    for (int i = 0; i < kGtTrackSamples; ++i) {
        const double t = kTrajectoryDt * i;
        centers.push_back(Vec2{box.center_x + vel.x * t, box.center_y + vel.y * t});
        headings.push_back(box.heading);
    }
    agent.gt_track = track_from_positions(box, centers, headings);
    return agent;
}

// Vehicle moving along +x that starts braking at t_brake with rate decel.
AgentTrack braking_agent(const OrientedBox& box, double speed, double t_brake, double decel) {
    AgentTrack agent;
    agent.box = box;
    agent.velocity = Vec2{speed * std::cos(box.heading), speed * std::sin(box.heading)};
    std::vector<Vec2> centers;
    std::vector<double> headings;
    const double dir_x = std::cos(box.heading);
    const double dir_y = std::sin(box.heading);
    double pos = 0.0;
    double v = speed;
    double t = 0.0;
    for (int i = 0; i < kGtTrackSamples; ++i) {
        centers.push_back(Vec2{box.center_x + dir_x * pos, box.center_y + dir_y * pos});
        headings.push_back(box.heading);
        // integrate the next 0.5 s in 0.05 s slices
        for (int sub = 0; sub < 10; ++sub) {
            if (t >= t_brake) {
                v = std::max(0.0, v - decel * 0.05);
            }
            pos += v * 0.05;
            t += 0.05;
        }
    }
    agent.gt_track = track_from_positions(box, centers, headings);
    return agent;
}

struct FamilyContext {
    SplitMix64 rng;
    Scenario scenario;
};

void finish_scenario(Scenario& s, const std::vector<Vec2>& support_line,
                     const std::vector<double>& left_w, const std::vector<double>& right_w) {
    s.drivable_area = corridor_polygon(support_line, left_w, right_w);
}

std::vector<Vec2> extended_support(const std::vector<Vec2>& centerline) {
    // The drivable area extends behind the origin so the ego footprint and
    // recent history stay inside.
    std::vector<Vec2> support;
    const Vec2 front = centerline.front();
    const Vec2 dir = centerline.size() > 1 ? centerline[1] - centerline[0] : Vec2{1.0, 0.0};
    const double len = std::max(dir.norm(), 1e-9);
    support.push_back(front - Vec2{dir.x / len, dir.y / len} * 12.0);
    for (const Vec2& p : centerline) {
        support.push_back(p);
    }
    return support;
}

Scenario family_straight_corridor(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(6.5, 10.5);
    const double half_w = rng.next_range(3.6, 4.6);
    const bool curved = rng.next_double() < 0.5;

    std::vector<Vec2> line;
    double bend_total = 0.0;
    if (curved) {
        const double radius = rng.next_range(28.0, 60.0) * (rng.next_double() < 0.5 ? 1.0 : -1.0);
        const double bend_start = rng.next_range(12.0, 20.0);
        double heading = 0.0;
        Vec2 p{0.0, 0.0};
        line.push_back(p);
        double travelled = 0.0;
        const double step = 2.0;
        while (travelled < 70.0) {
            if (travelled >= bend_start) {
                heading += step / radius;
                bend_total += step / radius;
            }
            p = p + Vec2{std::cos(heading), std::sin(heading)} * step;
            line.push_back(p);
            travelled += step;
        }
    } else {
        line = straight_line(0.0, 70.0, 2.0);
    }
    s.centerline = line;
    s.nav = bend_total > 0.3    ? NavCommand::TURN_LEFT
            : bend_total < -0.3 ? NavCommand::TURN_RIGHT
                                : NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    finish_scenario(s, support, std::vector<double>(support.size(), half_w),
                    std::vector<double>(support.size(), half_w));

    if (!curved && rng.next_double() < 0.7) {
        // oncoming traffic in the opposite half of the corridor
        const double oy = half_w - 1.1;
        const double ox = rng.next_range(30.0, 55.0);
        s.agents.push_back(constant_velocity_agent(vehicle_box(ox, oy, kPi), Vec2{-rng.next_range(5.0, 8.0), 0.0}));
    }
    if (rng.next_double() < 0.5) {
        // parked vehicle just outside the corridor
        Vec2 anchor;
        Vec2 tangent;
        polyline_sample(line, rng.next_range(22.0, 45.0), &anchor, &tangent);
        const double side = rng.next_double() < 0.5 ? 1.0 : -1.0;
        const Vec2 normal{-tangent.y, tangent.x};
        const Vec2 pos = anchor + normal * (side * (half_w + 1.6));
        s.agents.push_back(constant_velocity_agent(
            vehicle_box(pos.x, pos.y, std::atan2(tangent.y, tangent.x)), Vec2{0.0, 0.0}));
    }
    s.gt_trajectory = expert_from_profile(line, constant_speeds(v0));
    return s;
}

Scenario family_lane_narrowing(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(6.5, 9.5);
    const double side = rng.next_double() < 0.5 ? 1.0 : -1.0;
    const double lane_center = side * rng.next_range(1.1, 1.5);
    const double lane_half = rng.next_range(1.3, 1.6);
    // taper long enough that following the route stays comfortable at v0
    const double taper = std::clamp(2.2 * v0, 14.0, 22.0);
    const double x_narrow = taper + rng.next_range(2.0, 8.0);
    const double wide_half = 4.2;

    // route shifts into the surviving lane through the taper
    auto route_y = [&](double x) {
        if (x >= x_narrow) {
            return lane_center;
        }
        if (x <= x_narrow - taper) {
            return 0.0;
        }
        const double t = (x - (x_narrow - taper)) / taper;
        return lane_center * (3.0 * t * t - 2.0 * t * t * t);
    };
    std::vector<Vec2> line;
    for (double x = 0.0; x <= 72.0; x += 2.0) {
        line.push_back(Vec2{x, route_y(x)});
    }
    s.centerline = line;
    s.nav = NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    std::vector<double> left_w(support.size());
    std::vector<double> right_w(support.size());
    for (std::size_t i = 0; i < support.size(); ++i) {
        const double x = support[i].x;
        const double t = std::clamp((x - (x_narrow - taper)) / taper, 0.0, 1.0);
        const double bound_left = lerp(wide_half, lane_center + lane_half, t);
        const double bound_right = lerp(-wide_half, lane_center - lane_half, t);
        left_w[i] = bound_left - support[i].y;
        right_w[i] = support[i].y - bound_right;
    }
    finish_scenario(s, support, left_w, right_w);

    if (rng.next_double() < 0.6) {
        // blocked lane: stationary works vehicle on the closed side
        const double bx = x_narrow + rng.next_range(6.0, 14.0);
        const double by = -side * rng.next_range(1.6, 2.4);
        s.agents.push_back(constant_velocity_agent(vehicle_box(bx, by, 0.0), Vec2{0.0, 0.0}));
    }
    s.gt_trajectory = expert_from_profile(line, constant_speeds(v0));
    return s;
}

Scenario family_lead_vehicle_brake(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(7.0, 9.5);
    const double gap0 = rng.next_range(14.0, 18.0);
    const double lead_decel = rng.next_range(2.6, 3.4);
    const double t_brake = rng.next_range(0.0, 0.5);
    const double half_w = rng.next_range(3.6, 4.4);

    const std::vector<Vec2> line = straight_line(0.0, 72.0, 2.0);
    s.centerline = line;
    s.nav = NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    finish_scenario(s, support, std::vector<double>(support.size(), half_w),
                    std::vector<double>(support.size(), half_w));

    AgentTrack lead = braking_agent(vehicle_box(gap0, 0.0, 0.0), v0, t_brake, lead_decel);
    const OrientedBox lead_final = lead.gt_track->back();
    s.agents.push_back(std::move(lead));

    // stop short of where the lead ends up
    const double budget = lead_final.center_x - 0.5 * kVehicleLength - 0.5 * kDefaultEgoLength - 2.6;
    s.gt_trajectory = expert_from_profile(line, stop_profile(v0, std::max(4.0, budget)));
    return s;
}

Scenario family_crosswalk_pedestrian(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(6.5, 9.0);
    const double x_cross = rng.next_range(std::max(15.0, v0 * v0 / 6.0 + 8.0), 24.0);
    const double walk_speed = rng.next_range(1.2, 1.7);
    const double half_w = rng.next_range(3.6, 4.4);
    const double from_side = rng.next_double() < 0.5 ? 1.0 : -1.0;

    const std::vector<Vec2> line = straight_line(0.0, 70.0, 2.0);
    s.centerline = line;
    s.nav = NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    finish_scenario(s, support, std::vector<double>(support.size(), half_w),
                    std::vector<double>(support.size(), half_w));

    // timed so the pedestrian reaches the route when a constant-speed ego
    // arrives at the crosswalk
    const double t_conflict = x_cross / v0;
    const double y_start = -from_side * walk_speed * t_conflict;
    s.agents.push_back(constant_velocity_agent(
        pedestrian_box(x_cross, y_start, from_side * kPi / 2.0), Vec2{0.0, from_side * walk_speed}));

    const double budget = x_cross - 1.5 - 0.5 * kDefaultEgoLength - 1.0;
    s.gt_trajectory = expert_from_profile(line, stop_profile(v0, std::max(4.0, budget)));
    return s;
}

Scenario family_intersection_queue(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(6.5, 9.0);
    const double x_queue = rng.next_range(std::max(16.0, v0 * v0 / 6.0 + 9.0), 25.0);
    const double half_w = rng.next_range(3.6, 4.4);
    const int queue_len = 2 + static_cast<int>(rng.next_below(2));

    const std::vector<Vec2> line = straight_line(0.0, 72.0, 2.0);
    s.centerline = line;
    s.nav = NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    finish_scenario(s, support, std::vector<double>(support.size(), half_w),
                    std::vector<double>(support.size(), half_w));

    for (int i = 0; i < queue_len; ++i) {
        const double x = x_queue + i * rng.next_range(6.5, 8.0);
        const double y = rng.next_range(-0.3, 0.3);
        s.agents.push_back(constant_velocity_agent(vehicle_box(x, y, 0.0), Vec2{0.0, 0.0}));
    }

    const double budget = x_queue - 0.5 * kVehicleLength - 0.5 * kDefaultEgoLength - 2.2;
    s.gt_trajectory = expert_from_profile(line, stop_profile(v0, std::max(4.0, budget)));
    return s;
}

Scenario family_rear_approach(SplitMix64& rng) {
    Scenario s;
    const double v0 = rng.next_range(6.0, 8.0);
    const double x_rear = -rng.next_range(11.0, 13.5);
    const double closing = rng.next_range(4.0, 5.0);
    const double t_react = rng.next_range(1.6, 2.0);
    const double half_w = rng.next_range(3.6, 4.4);

    const std::vector<Vec2> line = straight_line(0.0, 78.0, 2.0);
    s.centerline = line;
    s.nav = NavCommand::GO_STRAIGHT;
    s.ego_speed = v0;
    s.ego_history = make_history(v0, rng);

    const std::vector<Vec2> support = extended_support(line);
    finish_scenario(s, support, std::vector<double>(support.size(), half_w),
                    std::vector<double>(support.size(), half_w));

    s.agents.push_back(braking_agent(vehicle_box(x_rear, 0.0, 0.0), v0 + closing, t_react, 3.0));

    s.gt_trajectory = expert_from_profile(line, ramp_profile(v0, v0 + 5.0));
    return s;
}

Scenario build_family(const std::string& family, SplitMix64& rng) {
    if (family == "straight_corridor") {
        return family_straight_corridor(rng);
    }
    if (family == "lane_narrowing") {
        return family_lane_narrowing(rng);
    }
    if (family == "lead_vehicle_brake") {
        return family_lead_vehicle_brake(rng);
    }
    if (family == "crosswalk_pedestrian") {
        return family_crosswalk_pedestrian(rng);
    }
    if (family == "intersection_queue") {
        return family_intersection_queue(rng);
    }
    if (family == "rear_approach") {
        return family_rear_approach(rng);
    }
    throw ConfigError("unknown scenario family: " + family);
}

}  // namespace

std::vector<Scenario> generate_scenarios(std::uint64_t seed, int count,
                                         const std::vector<std::string>& catalog) {
    if (count <= 0) {
        throw ConfigError("scenario count must be positive");
    }
    const std::vector<std::string>& families = catalog.empty() ? kScenarioFamilies : catalog;
    for (const std::string& f : families) {
        if (std::find(kScenarioFamilies.begin(), kScenarioFamilies.end(), f) == kScenarioFamilies.end()) {
            throw ConfigError("unknown scenario family: " + f);
        }
    }
    std::vector<Scenario> corpus;
    corpus.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::string& family = families[static_cast<std::size_t>(i) % families.size()];
        SplitMix64 rng(hash_mix(hash_mix(seed, static_cast<std::uint64_t>(i)), hash_str(family)));
        Scenario s = build_family(family, rng);
        std::ostringstream id;
        id << "g" << seed << '-';
        id.fill('0');
        id.width(6);
        id << i;
        id << '-' << family;
        s.id = id.str();
        corpus.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace mtdrive
