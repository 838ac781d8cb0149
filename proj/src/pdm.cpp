#include "mtdrive/pdm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mtdrive/errors.hpp"

namespace mtdrive {

namespace {

double waypoint_speed(const Trajectory& traj, int k) {
    // Speed over the segment leaving waypoint k; the last waypoint reuses the
    // incoming segment.
    const int hi = std::min(k + 1, kTrajectoryPoints - 1);
    const int lo = hi - 1;
    const Pose2D& a = traj.points[static_cast<std::size_t>(lo)];
    const Pose2D& b = traj.points[static_cast<std::size_t>(hi)];
    return std::hypot(b.x - a.x, b.y - a.y) / kTrajectoryDt;
}

}  // namespace

std::pair<int, std::vector<BoxViolation>> score_nc(const Trajectory& traj, const Scenario& scenario,
                                                   PerceptionMode mode, const PdmConfig& cfg) {
    std::vector<BoxViolation> evidence;
    for (const AgentTrack& agent : scenario.agents) {
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            const double t = waypoint_time(k);
            const OrientedBox ego = footprint_at(traj.points[static_cast<std::size_t>(k)],
                                                 cfg.ego_length, cfg.ego_width);
            const OrientedBox other = agent_box_at(agent, t, mode);
            if (boxes_overlap(ego, other)) {
                evidence.push_back(BoxViolation{k, other});
                break;  // first violating waypoint per agent
            }
        }
    }
    std::stable_sort(evidence.begin(), evidence.end(),
                     [](const BoxViolation& a, const BoxViolation& b) { return a.point_index < b.point_index; });
    const int score = evidence.empty() ? 1 : 0;
    return {score, std::move(evidence)};
}

std::pair<int, std::vector<int>> score_dac(const Trajectory& traj, const Scenario& scenario,
                                           const PdmConfig& cfg) {
    std::vector<int> evidence;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        const OrientedBox ego = footprint_at(traj.points[static_cast<std::size_t>(k)],
                                             cfg.ego_length, cfg.ego_width);
        if (!box_in_polygon(ego, scenario.drivable_area)) {
            evidence.push_back(k);
        }
    }
    const int score = evidence.empty() ? 1 : 0;
    return {score, std::move(evidence)};
}

std::pair<int, std::vector<BoxViolation>> score_ttc(const Trajectory& traj, const Scenario& scenario,
                                                    PerceptionMode mode, const PdmConfig& cfg) {
    if (cfg.ttc_horizon <= 0.0 || cfg.ttc_dt <= 0.0) {
        throw ConfigError("ttc horizon and dt must be positive");
    }
    std::vector<BoxViolation> evidence;
    const int steps = static_cast<int>(std::round(cfg.ttc_horizon / cfg.ttc_dt));
    for (std::size_t ai = 0; ai < scenario.agents.size(); ++ai) {
        const AgentTrack& agent = scenario.agents[ai];
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            const Pose2D& pose = traj.points[static_cast<std::size_t>(k)];
            const double speed = waypoint_speed(traj, k);
            const double dir_x = std::cos(pose.heading);
            const double dir_y = std::sin(pose.heading);
            bool hit = false;
            for (int step = 1; step <= steps && !hit; ++step) {
                const double tau = cfg.ttc_dt * step;
                const Pose2D projected{pose.x + dir_x * speed * tau, pose.y + dir_y * speed * tau,
                                       pose.heading};
                const OrientedBox ego = footprint_at(projected, cfg.ego_length, cfg.ego_width);
                const OrientedBox other = agent_box_at(agent, waypoint_time(k) + tau, mode);
                if (boxes_overlap(ego, other)) {
                    evidence.push_back(BoxViolation{k, other});
                    hit = true;
                }
            }
        }
    }
    std::stable_sort(evidence.begin(), evidence.end(),
                     [](const BoxViolation& a, const BoxViolation& b) { return a.point_index < b.point_index; });
    const int score = evidence.empty() ? 1 : 0;
    return {score, std::move(evidence)};
}

int score_comfort(const Trajectory& traj, const std::array<Pose2D, kEgoHistorySamples>& ego_history,
                  const ComfortBounds& bounds) {
    // 9 poses on the 0.5 s grid: the t=0 history pose plus the 8 waypoints.
    std::array<Pose2D, kTrajectoryPoints + 1> poses;
    poses[0] = ego_history[kEgoHistorySamples - 1];
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        poses[static_cast<std::size_t>(k + 1)] = traj.points[static_cast<std::size_t>(k)];
    }

    std::array<Vec2, kTrajectoryPoints> vel;
    for (int i = 0; i < kTrajectoryPoints; ++i) {
        vel[static_cast<std::size_t>(i)] =
            Vec2{(poses[static_cast<std::size_t>(i + 1)].x - poses[static_cast<std::size_t>(i)].x) / kTrajectoryDt,
                 (poses[static_cast<std::size_t>(i + 1)].y - poses[static_cast<std::size_t>(i)].y) / kTrajectoryDt};
    }
    std::array<Vec2, kTrajectoryPoints - 1> acc;
    for (int i = 0; i + 1 < kTrajectoryPoints; ++i) {
        acc[static_cast<std::size_t>(i)] =
            (vel[static_cast<std::size_t>(i + 1)] - vel[static_cast<std::size_t>(i)]) * (1.0 / kTrajectoryDt);
    }

    for (int i = 0; i + 1 < kTrajectoryPoints; ++i) {
        const double heading = poses[static_cast<std::size_t>(i + 1)].heading;
        const Vec2 dir{std::cos(heading), std::sin(heading)};
        const Vec2 nrm{-dir.y, dir.x};
        const Vec2& a = acc[static_cast<std::size_t>(i)];
        if (std::fabs(a.dot(dir)) > bounds.max_abs_lon_accel) {
            return 0;
        }
        if (std::fabs(a.dot(nrm)) > bounds.max_abs_lat_accel) {
            return 0;
        }
    }
    for (int i = 0; i + 2 < kTrajectoryPoints; ++i) {
        const Vec2 jerk =
            (acc[static_cast<std::size_t>(i + 1)] - acc[static_cast<std::size_t>(i)]) * (1.0 / kTrajectoryDt);
        if (jerk.norm() > bounds.max_abs_jerk) {
            return 0;
        }
    }
    std::array<double, kTrajectoryPoints> yaw_rate;
    for (int i = 0; i < kTrajectoryPoints; ++i) {
        yaw_rate[static_cast<std::size_t>(i)] =
            normalize_angle(poses[static_cast<std::size_t>(i + 1)].heading - poses[static_cast<std::size_t>(i)].heading) /
            kTrajectoryDt;
        if (std::fabs(yaw_rate[static_cast<std::size_t>(i)]) > bounds.max_abs_yaw_rate) {
            return 0;
        }
    }
    for (int i = 0; i + 1 < kTrajectoryPoints; ++i) {
        const double yaw_acc =
            (yaw_rate[static_cast<std::size_t>(i + 1)] - yaw_rate[static_cast<std::size_t>(i)]) / kTrajectoryDt;
        if (std::fabs(yaw_acc) > bounds.max_abs_yaw_accel) {
            return 0;
        }
    }
    return 1;
}

double score_ep(const Trajectory& traj, const Scenario& scenario) {
    double reference = 0.0;
    if (scenario.gt_trajectory.has_value()) {
        const Pose2D& end = scenario.gt_trajectory->points.back();
        reference = project_arc_length(scenario.centerline, Vec2{end.x, end.y});
    } else {
        reference = scenario.ego_speed * kTrajectoryHorizon;
    }
    if (reference < 0.5) {
        return 1.0;
    }
    const Pose2D& end = traj.points.back();
    const double achieved = project_arc_length(scenario.centerline, Vec2{end.x, end.y});
    return std::clamp(achieved / reference, 0.0, 1.0);
}

double compose_pdms(const MetricReport& report, const PdmsWeights& weights) {
    const double sum = weights.ep + weights.ttc + weights.comfort;
    if (sum <= 0.0) {
        throw ConfigError("PDMS weights must sum to a positive value");
    }
    const double penalties = static_cast<double>(report.nc) * static_cast<double>(report.dac);
    const double weighted = (weights.ep * report.ep + weights.ttc * report.ttc +
                             weights.comfort * report.comfort) /
                            sum;
    return penalties * weighted;
}

double agent_pdm_score_from_report(const MetricReport& report, const PdmConfig& cfg) {
    const double penalties = static_cast<double>(report.nc) * static_cast<double>(report.dac);
    if (!cfg.reward_includes_comfort) {
        return penalties * static_cast<double>(report.ttc);
    }
    const double sum = cfg.weights.ttc + cfg.weights.comfort;
    if (sum <= 0.0) {
        throw ConfigError("PDMS weights must sum to a positive value");
    }
    return penalties * (cfg.weights.ttc * report.ttc + cfg.weights.comfort * report.comfort) / sum;
}

double agent_pdm_score(const Trajectory& traj, const Scenario& scenario, PerceptionMode mode,
                       const PdmConfig& cfg) {
    return agent_pdm_score_from_report(evaluate_trajectory(traj, scenario, mode, cfg, false), cfg);
}

MetricReport evaluate_trajectory(const Trajectory& traj, const Scenario& scenario,
                                 PerceptionMode mode, const PdmConfig& cfg, bool with_ep) {
    MetricReport report;
    auto nc = score_nc(traj, scenario, mode, cfg);
    report.nc = nc.first;
    report.nc_evidence = std::move(nc.second);
    auto dac = score_dac(traj, scenario, cfg);
    report.dac = dac.first;
    report.dac_evidence = std::move(dac.second);
    auto ttc = score_ttc(traj, scenario, mode, cfg);
    report.ttc = ttc.first;
    report.ttc_evidence = std::move(ttc.second);
    report.comfort = score_comfort(traj, scenario.ego_history, cfg.comfort);
    report.ep = with_ep ? score_ep(traj, scenario) : 1.0;
    return report;
}

namespace {

std::vector<FeedbackRecord> group_by_point(const std::vector<BoxViolation>& evidence,
                                           const Trajectory& traj) {
    std::map<int, FeedbackRecord> grouped;
    for (const BoxViolation& v : evidence) {
        auto [it, inserted] = grouped.try_emplace(v.point_index);
        if (inserted) {
            it->second.point_index = v.point_index;
            it->second.point = traj.points[static_cast<std::size_t>(v.point_index)];
        }
        it->second.boxes.push_back(v.box);
    }
    std::vector<FeedbackRecord> records;
    records.reserve(grouped.size());
    for (auto& [_, rec] : grouped) {
        records.push_back(std::move(rec));
    }
    return records;
}

std::string format_point(const Pose2D& p) {
    std::ostringstream out;
    out << '(' << format_feedback_value(p.x, true) << ", " << format_feedback_value(p.y, true)
        << ", " << format_feedback_value(p.heading, true) << ')';
    return out.str();
}

std::string format_box(const OrientedBox& b) {
    std::ostringstream out;
    out << '(' << format_feedback_value(b.center_x, false) << ", "
        << format_feedback_value(b.center_y, false) << ", "
        << format_feedback_value(b.center_z, false) << ", "
        << format_feedback_value(b.length, false) << ", " << format_feedback_value(b.width, false)
        << ", " << format_feedback_value(b.height, false) << ", "
        << format_feedback_value(b.heading, false) << ", " << b.class_name << ')';
    return out.str();
}

constexpr const char* kObjectFormatNote =
    "The format for describing these objects is: (x, y, z, l, w, h, heading, name). "
    "Where x, y, z are the center coordinates of the object in ego-coordinate system, "
    "l, w, h are length, width, height of the bounding box, heading is the object heading, "
    "and name is the object class name. "
    "The specific trajectory points and their corresponding objects are as follows:";

void render_box_section(std::ostringstream& out, int item_no, const char* intro,
                        const std::vector<FeedbackRecord>& records) {
    out << item_no << ". " << intro << ' ' << kObjectFormatNote;
    int counter = 0;
    for (const FeedbackRecord& rec : records) {
        out << "\nTrajectory Point " << ++counter << ": " << format_point(rec.point)
            << " with Objects: ";
        for (std::size_t i = 0; i < rec.boxes.size(); ++i) {
            if (i != 0) {
                out << ", ";
            }
            out << format_box(rec.boxes[i]);
        }
        out << '.';
    }
}

}  // namespace

std::string format_feedback_value(double v, bool explicit_plus) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s = buf;
    if (s == "-0.00") {
        s = "0.00";
    }
    if (s.size() > 2 && s.back() == '0' && s.find('.') != std::string::npos) {
        s.pop_back();
    }
    if (explicit_plus && s[0] != '-' && s != "0.0" && s != "0.00") {
        s.insert(s.begin(), '+');
    }
    return s;
}

Feedback extract_feedback(const MetricReport& report, const Trajectory& traj) {
    Feedback fb;
    fb.nc = group_by_point(report.nc_evidence, traj);
    fb.ttc = group_by_point(report.ttc_evidence, traj);
    for (int idx : report.dac_evidence) {
        FeedbackRecord rec;
        rec.point_index = idx;
        rec.point = traj.points[static_cast<std::size_t>(idx)];
        fb.dac.push_back(std::move(rec));
    }
    return fb;
}

std::string feedback_text(const Feedback& feedback) {
    if (feedback.empty()) {
        return {};
    }
    std::ostringstream out;
    int item_no = 0;
    bool first = true;
    auto separator = [&] {
        if (!first) {
            out << '\n';
        }
        first = false;
    };
    if (!feedback.nc.empty()) {
        separator();
        render_box_section(out, ++item_no,
                           "The NC metric reveals that certain trajectory points result in "
                           "collisions with surrounding objects.",
                           feedback.nc);
    }
    if (!feedback.dac.empty()) {
        separator();
        out << ++item_no
            << ". The DAC metric reveals that certain trajectory points lie outside the drivable "
               "area. The specific trajectory points are as follows:";
        int counter = 0;
        for (const FeedbackRecord& rec : feedback.dac) {
            out << "\nTrajectory Point " << ++counter << ": " << format_point(rec.point) << '.';
        }
    }
    if (!feedback.ttc.empty()) {
        separator();
        render_box_section(out, ++item_no,
                           "The TTC metric reveals that certain trajectory points fail to "
                           "maintain a safe distance from surrounding objects.",
                           feedback.ttc);
    }
    return out.str();
}

}  // namespace mtdrive
