#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtdrive/geometry.hpp"

namespace mtdrive {

constexpr int kTrajectoryPoints = 8;
constexpr double kTrajectoryDt = 0.5;       // waypoint spacing, seconds
constexpr double kTrajectoryHorizon = 4.0;  // seconds
constexpr int kGtTrackSamples = 9;          // t = 0.0, 0.5, ..., 4.0
constexpr int kEgoHistorySamples = 4;       // t = -1.5, -1.0, -0.5, 0.0

constexpr double kDefaultEgoLength = 4.6;
constexpr double kDefaultEgoWidth = 1.9;

// 8 future poses at t = 0.5, 1.0, ..., 4.0 s in the ego frame.
struct Trajectory {
    std::array<Pose2D, kTrajectoryPoints> points;
};

// Time of waypoint k (0-based).
inline double waypoint_time(int k) { return kTrajectoryDt * static_cast<double>(k + 1); }

enum class NavCommand { GO_STRAIGHT, TURN_LEFT, TURN_RIGHT };

// KINEMATIC: agent futures by constant-velocity extrapolation.
// GT_ORACLE: agent futures read from the stored ground-truth track.
enum class PerceptionMode { KINEMATIC, GT_ORACLE };

struct AgentTrack {
    OrientedBox box;  // state at t = 0
    Vec2 velocity;    // m/s, drives the kinematic setting
    std::optional<std::vector<OrientedBox>> gt_track;  // kGtTrackSamples entries at 0.5 s
};

struct Scenario {
    std::string id;
    std::array<Pose2D, kEgoHistorySamples> ego_history;  // ego_history[3] == (0,0,0)
    double ego_speed = 0.0;
    std::vector<AgentTrack> agents;
    Polygon drivable_area;
    std::vector<Vec2> centerline;  // route, starts near the origin
    NavCommand nav = NavCommand::GO_STRAIGHT;
    std::optional<Trajectory> gt_trajectory;  // scripted expert; curation + EP reference only
};

// Agent state at time t. KINEMATIC translates the t=0 box by velocity*t;
// GT_ORACLE interpolates the track linearly (heading along the shortest arc)
// and extrapolates from the boundary segments outside the sampled range, so
// a constant-velocity track behaves identically in both modes.
// Throws ConfigError if GT_ORACLE is requested without a track.
OrientedBox agent_box_at(const AgentTrack& agent, double t, PerceptionMode mode);

extern const std::vector<std::string> kScenarioFamilies;

// Deterministic in (seed, count, catalog). Empty catalog means all families,
// cycled. Throws ConfigError on an unknown family name or count <= 0.
std::vector<Scenario> generate_scenarios(std::uint64_t seed, int count,
                                         const std::vector<std::string>& catalog = {});

// JSONL, one scenario per line. load(save(x)) == x within 1e-9 per float.
void save_corpus(const std::vector<Scenario>& corpus, const std::string& path);

// Throws DataError naming the line and field on malformed input, and on any
// scenario invariant violation.
std::vector<Scenario> load_corpus(const std::string& path);

std::string nav_to_string(NavCommand nav);
NavCommand nav_from_string(const std::string& s);

bool trajectory_valid(const Trajectory& traj, std::string* why = nullptr);
bool scenario_valid(const Scenario& s, std::string* why = nullptr);

// Polyline helpers shared by EP scoring and context encoding.
double polyline_length(const std::vector<Vec2>& pts);
// Arc length of the closest point of the polyline to p.
double project_arc_length(const std::vector<Vec2>& pts, const Vec2& p);
// Point and unit tangent at arc length s (clamped to [0, length]).
void polyline_sample(const std::vector<Vec2>& pts, double s, Vec2* point, Vec2* tangent);

}  // namespace mtdrive
