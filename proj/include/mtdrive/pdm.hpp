#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mtdrive/scenario.hpp"

namespace mtdrive {

// Weights of the weighted-average half of the PDMS composition. NAVSIM v1
// convention by default; fully configurable.
struct PdmsWeights {
    double ep = 5.0;
    double ttc = 5.0;
    double comfort = 2.0;
};

// nuPlan-style bounds, closed intervals.
struct ComfortBounds {
    double max_abs_lon_accel = 4.89;   // m/s^2
    double max_abs_lat_accel = 4.89;   // m/s^2
    double max_abs_jerk = 8.37;        // m/s^3
    double max_abs_yaw_rate = 0.95;    // rad/s
    double max_abs_yaw_accel = 1.93;   // rad/s^2
};

struct PdmConfig {
    double ego_length = kDefaultEgoLength;
    double ego_width = kDefaultEgoWidth;
    double ttc_horizon = 1.0;  // s
    double ttc_dt = 0.1;       // s
    ComfortBounds comfort;
    PdmsWeights weights;
    // When false the training reward is restricted to {NC, DAC, TTC} exactly.
    bool reward_includes_comfort = true;
};

// One offending (waypoint, box) pair. point_index is 0-based.
struct BoxViolation {
    int point_index = 0;
    OrientedBox box;
};

struct MetricReport {
    int nc = 1;
    int dac = 1;
    int ttc = 1;
    int comfort = 1;
    double ep = 1.0;
    std::vector<BoxViolation> nc_evidence;   // first violating waypoint per agent
    std::vector<BoxViolation> ttc_evidence;  // every violating (waypoint, agent) pair
    std::vector<int> dac_evidence;           // violating waypoint indices
};

// One rendered violation: the trajectory point plus any offending boxes.
struct FeedbackRecord {
    int point_index = 0;
    Pose2D point;
    std::vector<OrientedBox> boxes;  // empty for DAC records
};

struct Feedback {
    std::vector<FeedbackRecord> nc;
    std::vector<FeedbackRecord> dac;
    std::vector<FeedbackRecord> ttc;

    bool empty() const { return nc.empty() && dac.empty() && ttc.empty(); }
};

std::pair<int, std::vector<BoxViolation>> score_nc(const Trajectory& traj, const Scenario& scenario,
                                                   PerceptionMode mode, const PdmConfig& cfg = {});

std::pair<int, std::vector<int>> score_dac(const Trajectory& traj, const Scenario& scenario,
                                           const PdmConfig& cfg = {});

// Projects the ego footprint forward from each waypoint at its local speed
// (finite difference of consecutive waypoints) along its heading, in steps of
// cfg.ttc_dt up to cfg.ttc_horizon, against agent boxes at the projected time.
std::pair<int, std::vector<BoxViolation>> score_ttc(const Trajectory& traj, const Scenario& scenario,
                                                    PerceptionMode mode, const PdmConfig& cfg = {});

// Finite-difference dynamics over the 0.5 s grid with the t=0 pose prepended.
int score_comfort(const Trajectory& traj, const std::array<Pose2D, kEgoHistorySamples>& ego_history,
                  const ComfortBounds& bounds = {});

// Route progress of the trajectory endpoint relative to the expert's, both
// measured as arc length of the projection onto the centerline.
double score_ep(const Trajectory& traj, const Scenario& scenario);

// Penalties times weighted average. Throws ConfigError on a nonpositive
// weight sum.
double compose_pdms(const MetricReport& report, const PdmsWeights& weights = {});

// Reward-time score: the PDM-Agent metric set {NC, DAC, TTC} plus comfort,
// never EP. This is the p fed to the turn reward.
double agent_pdm_score_from_report(const MetricReport& report, const PdmConfig& cfg = {});
double agent_pdm_score(const Trajectory& traj, const Scenario& scenario, PerceptionMode mode,
                       const PdmConfig& cfg = {});

// Runs NC, DAC, TTC, comfort, and (when with_ep) EP.
MetricReport evaluate_trajectory(const Trajectory& traj, const Scenario& scenario,
                                 PerceptionMode mode, const PdmConfig& cfg = {}, bool with_ep = false);

// Structured violation records for each failed metric; empty iff
// nc = dac = ttc = 1.
Feedback extract_feedback(const MetricReport& report, const Trajectory& traj);

// Canonical text rendering; byte-deterministic. Format documented in
// docs/feedback-format.md.
std::string feedback_text(const Feedback& feedback);

// 2-decimal rendering with one trailing zero stripped ("3.10" -> "3.1",
// "0.00" -> "0.0") and an explicit '+' on positive values when requested.
std::string format_feedback_value(double v, bool explicit_plus);

}  // namespace mtdrive
