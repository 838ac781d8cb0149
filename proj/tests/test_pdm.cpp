#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "mtdrive/errors.hpp"
#include "mtdrive/pdm.hpp"
#include "mtdrive/rng.hpp"

using namespace mtdrive;

namespace {

Scenario wide_corridor_scenario(double ego_speed = 6.2) {
    Scenario s;
    s.id = "test";
    for (int i = 0; i < 3; ++i) {
        const double t = -1.5 + 0.5 * i;
        s.ego_history[static_cast<std::size_t>(i)] = Pose2D{ego_speed * t, 0.0, 0.0};
    }
    s.ego_history[3] = Pose2D{0, 0, 0};
    s.ego_speed = ego_speed;
    s.drivable_area.vertices = {{-15, -8}, {80, -8}, {80, 8}, {-15, 8}};
    for (double x = 0.0; x <= 72.0; x += 4.0) {
        s.centerline.push_back(Vec2{x, 0.0});
    }
    return s;
}

Trajectory straight_trajectory(double step) {
    Trajectory t;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        t.points[static_cast<std::size_t>(k)] = Pose2D{step * (k + 1), 0.0, 0.0};
    }
    return t;
}

AgentTrack stationary_vehicle(double x, double y, double length = 4.8, double width = 2.0,
                              double heading = 0.0, double z = 0.8, double height = 1.6) {
    OrientedBox box;
    box.center_x = x;
    box.center_y = y;
    box.center_z = z;
    box.length = length;
    box.width = width;
    box.height = height;
    box.heading = heading;
    box.class_name = "vehicle";
    AgentTrack agent;
    agent.box = box;
    agent.velocity = Vec2{0, 0};
    agent.gt_track = std::vector<OrientedBox>(kGtTrackSamples, box);
    return agent;
}

// The sample scene: straight trajectory to x = 24.83 past a long stopped
// vehicle centered at (34.14, -0.85).
Scenario appendix_sample_scenario(Trajectory* traj_out) {
    Scenario s = wide_corridor_scenario();
    Trajectory traj;
    const double xs[kTrajectoryPoints] = {3.1, 6.21, 9.31, 12.42, 15.52, 18.62, 21.73, 24.83};
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        traj.points[static_cast<std::size_t>(k)] = Pose2D{xs[k], 0.0, 0.0};
    }
    s.agents.push_back(stationary_vehicle(34.14, -0.85, 10.26, 2.95, -0.02, 1.59, 4.39));
    if (traj_out != nullptr) {
        *traj_out = traj;
    }
    return s;
}

MetricReport report_of(int nc, int dac, int ttc, int comfort, double ep) {
    MetricReport r;
    r.nc = nc;
    r.dac = dac;
    r.ttc = ttc;
    r.comfort = comfort;
    r.ep = ep;
    if (nc == 0) {
        r.nc_evidence.push_back(BoxViolation{0, stationary_vehicle(0, 0).box});
    }
    if (ttc == 0) {
        r.ttc_evidence.push_back(BoxViolation{0, stationary_vehicle(0, 0).box});
    }
    if (dac == 0) {
        r.dac_evidence.push_back(0);
    }
    return r;
}

}  // namespace

TEST_CASE("score_nc: empty agent list passes, straddling agent fails at the waypoint") {
    Scenario s = wide_corridor_scenario();
    const Trajectory traj = straight_trajectory(3.0);
    auto [nc, evidence] = score_nc(traj, s, PerceptionMode::GT_ORACLE);
    CHECK(nc == 1);
    CHECK(evidence.empty());

    // place an agent exactly on waypoint 4 (0-based)
    s.agents.push_back(stationary_vehicle(traj.points[4].x, traj.points[4].y));
    auto [nc2, evidence2] = score_nc(traj, s, PerceptionMode::GT_ORACLE);
    CHECK(nc2 == 0);
    REQUIRE(evidence2.size() == 1);
    // the footprint is long enough to touch the box one waypoint early
    CHECK(evidence2[0].point_index <= 4);
    CHECK(boxes_overlap(footprint_at(traj.points[static_cast<std::size_t>(evidence2[0].point_index)],
                                     kDefaultEgoLength, kDefaultEgoWidth),
                        evidence2[0].box));
}

TEST_CASE("appendix sample: NC passes while TTC flags the approach") {
    Trajectory traj;
    const Scenario s = appendix_sample_scenario(&traj);
    for (PerceptionMode mode : {PerceptionMode::KINEMATIC, PerceptionMode::GT_ORACLE}) {
        auto [nc, nc_ev] = score_nc(traj, s, mode);
        CHECK(nc == 1);
        auto [ttc, ttc_ev] = score_ttc(traj, s, mode);
        CHECK(ttc == 0);
        REQUIRE(!ttc_ev.empty());
        CHECK(ttc_ev.front().point_index == 6);  // the (+21.73, 0.0) waypoint
    }
}

TEST_CASE("appendix sample: feedback text matches the template byte-for-byte") {
    Trajectory traj;
    const Scenario s = appendix_sample_scenario(&traj);
    const MetricReport report = evaluate_trajectory(traj, s, PerceptionMode::GT_ORACLE);
    const Feedback fb = extract_feedback(report, traj);
    const std::string text = feedback_text(fb);
    CHECK(text.find("Trajectory Point 1: (+21.73, 0.0, 0.0) with Objects: "
                    "(34.14, -0.85, 1.59, 10.26, 2.95, 4.39, -0.02, vehicle).") !=
          std::string::npos);
    CHECK(text.find("The TTC metric reveals that certain trajectory points fail to maintain a "
                    "safe distance from surrounding objects.") != std::string::npos);
    // deterministic rendering
    CHECK(text == feedback_text(extract_feedback(report, traj)));
}

TEST_CASE("score_dac: corridor center passes, excursions are indexed") {
    Scenario s = wide_corridor_scenario();
    Trajectory traj = straight_trajectory(3.0);
    auto [dac, evidence] = score_dac(traj, s);
    CHECK(dac == 1);
    CHECK(evidence.empty());

    traj.points[7].y = 13.0;  // 5 m beyond the corridor edge
    auto [dac2, evidence2] = score_dac(traj, s);
    CHECK(dac2 == 0);
    REQUIRE(evidence2.size() == 1);
    CHECK(evidence2[0] == 7);
}

TEST_CASE("score_dac agrees with a corner-enumeration oracle on random trajectories") {
    Scenario s = wide_corridor_scenario();
    s.drivable_area.vertices = {{-10, -3}, {60, -3}, {60, 3}, {-10, 3}};
    SplitMix64 rng(7);
    for (int i = 0; i < 300; ++i) {
        Trajectory traj;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            traj.points[static_cast<std::size_t>(k)] =
                Pose2D{rng.next_range(0.0, 50.0), rng.next_range(-4.0, 4.0),
                       rng.next_range(-0.3, 0.3)};
        }
        std::vector<int> oracle;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            bool inside = true;
            for (const Vec2& c : box_corners(footprint_at(traj.points[static_cast<std::size_t>(k)],
                                                          kDefaultEgoLength, kDefaultEgoWidth))) {
                if (!point_in_polygon(c, s.drivable_area)) {
                    inside = false;
                    break;
                }
            }
            if (!inside) {
                oracle.push_back(k);
            }
        }
        auto [dac, evidence] = score_dac(traj, s);
        CHECK(evidence == oracle);
        CHECK(dac == (oracle.empty() ? 1 : 0));
    }
}

TEST_CASE("score_ttc: closed-form projection case") {
    Scenario s = wide_corridor_scenario();
    const Trajectory traj = straight_trajectory(5.0);  // 10 m/s
    {
        auto [ttc, evidence] = score_ttc(traj, s, PerceptionMode::GT_ORACLE);
        CHECK(ttc == 1);  // no agents
        CHECK(evidence.empty());
    }
    // static agent 8 m ahead of waypoint 2: the 1 s projection covers 10 m
    s.agents.push_back(stationary_vehicle(traj.points[2].x + 8.0, 0.0));
    auto [ttc2, evidence2] = score_ttc(traj, s, PerceptionMode::GT_ORACLE);
    CHECK(ttc2 == 0);
    bool found = false;
    for (const BoxViolation& v : evidence2) {
        if (v.point_index == 2) {
            found = true;
        }
    }
    CHECK(found);

    PdmConfig bad;
    bad.ttc_horizon = 0.0;
    CHECK_THROWS_AS(score_ttc(traj, s, PerceptionMode::GT_ORACLE, bad), ConfigError);
}

TEST_CASE("score_comfort: smooth passes, violent fails, bound is closed") {
    Scenario s = wide_corridor_scenario();
    CHECK(score_comfort(straight_trajectory(3.0), s.ego_history) == 1);

    // 0 -> 20 m/s within one 0.5 s step
    Trajectory violent = straight_trajectory(0.0);
    for (int k = 1; k < kTrajectoryPoints; ++k) {
        violent.points[static_cast<std::size_t>(k)] = Pose2D{10.0 * k, 0.0, 0.0};
    }
    CHECK(score_comfort(violent, s.ego_history) == 0);

    // constant longitudinal acceleration exactly at the bound (closed interval)
    auto accel_traj = [&](double accel) {
        Trajectory t;
        double v = 2.0;
        double x = 0.0;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            x += v * kTrajectoryDt;
            t.points[static_cast<std::size_t>(k)] = Pose2D{x, 0.0, 0.0};
            v += accel * kTrajectoryDt;
        }
        return t;
    };
    // exactly-representable bound so the closed interval is hit bit-exactly
    ComfortBounds bounds;
    bounds.max_abs_lon_accel = 4.0;
    CHECK(score_comfort(accel_traj(4.0), s.ego_history, bounds) == 1);
    CHECK(score_comfort(accel_traj(4.5), s.ego_history, bounds) == 0);
}

TEST_CASE("score_ep: progress ratio against the expert endpoint") {
    Scenario s = wide_corridor_scenario();
    s.gt_trajectory = straight_trajectory(3.0);  // expert reaches x = 24
    CHECK(score_ep(straight_trajectory(3.0), s) == doctest::Approx(1.0));
    CHECK(score_ep(straight_trajectory(1.5), s) == doctest::Approx(0.5));  // half progress
    CHECK(score_ep(straight_trajectory(0.0), s) == doctest::Approx(0.0));
    CHECK(score_ep(straight_trajectory(5.0), s) == doctest::Approx(1.0));  // clamped

    // degenerate reference
    Scenario still = wide_corridor_scenario(0.0);
    still.gt_trajectory = straight_trajectory(0.0);
    CHECK(score_ep(straight_trajectory(1.0), still) == doctest::Approx(1.0));

    // fallback reference: ego_speed * 4 s
    Scenario nogt = wide_corridor_scenario(6.0);
    CHECK(score_ep(straight_trajectory(1.5), nogt) == doctest::Approx(0.5));
}

TEST_CASE("compose_pdms: structure of penalties times weighted average") {
    CHECK(compose_pdms(report_of(1, 1, 1, 1, 1.0)) == doctest::Approx(1.0));
    CHECK(compose_pdms(report_of(0, 1, 1, 1, 1.0)) == doctest::Approx(0.0));
    CHECK(compose_pdms(report_of(1, 0, 1, 1, 1.0)) == doctest::Approx(0.0));
    // weights {EP:5, TTC:5, C:2}, ttc failed
    CHECK(compose_pdms(report_of(1, 1, 0, 1, 1.0)) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));

    PdmsWeights bad;
    bad.ep = 0;
    bad.ttc = 0;
    bad.comfort = 0;
    CHECK_THROWS_AS(compose_pdms(report_of(1, 1, 1, 1, 1.0), bad), ConfigError);
}

TEST_CASE("compose_pdms is monotone in every component") {
    SplitMix64 rng(17);
    for (int i = 0; i < 500; ++i) {
        MetricReport r = report_of(static_cast<int>(rng.next_below(2)),
                                   static_cast<int>(rng.next_below(2)),
                                   static_cast<int>(rng.next_below(2)),
                                   static_cast<int>(rng.next_below(2)), rng.next_double());
        const double base = compose_pdms(r);
        MetricReport up = r;
        switch (rng.next_below(5)) {
            case 0: up.nc = 1; up.nc_evidence.clear(); break;
            case 1: up.dac = 1; up.dac_evidence.clear(); break;
            case 2: up.ttc = 1; up.ttc_evidence.clear(); break;
            case 3: up.comfort = 1; break;
            default: up.ep = std::min(1.0, r.ep + rng.next_double() * (1.0 - r.ep)); break;
        }
        CHECK(compose_pdms(up) >= base - 1e-12);
    }
}

TEST_CASE("agent_pdm_score: EP never enters, comfort switch works") {
    CHECK(agent_pdm_score_from_report(report_of(1, 1, 1, 1, 0.0)) == doctest::Approx(1.0));
    CHECK(agent_pdm_score_from_report(report_of(1, 0, 1, 1, 1.0)) == doctest::Approx(0.0));
    // ttc failed, comfort ok, weights {5, 2}
    CHECK(agent_pdm_score_from_report(report_of(1, 1, 0, 1, 1.0)) ==
          doctest::Approx(2.0 / 7.0).epsilon(1e-12));

    PdmConfig strict;
    strict.reward_includes_comfort = false;
    CHECK(agent_pdm_score_from_report(report_of(1, 1, 1, 0, 1.0), strict) == doctest::Approx(1.0));
    CHECK(agent_pdm_score_from_report(report_of(1, 1, 0, 1, 1.0), strict) == doctest::Approx(0.0));

    // the reward-time score ignores gt_trajectory entirely
    Scenario a = wide_corridor_scenario();
    Scenario b = a;
    b.gt_trajectory = straight_trajectory(2.0);
    const Trajectory traj = straight_trajectory(3.0);
    CHECK(agent_pdm_score(traj, a, PerceptionMode::GT_ORACLE) ==
          agent_pdm_score(traj, b, PerceptionMode::GT_ORACLE));
}

TEST_CASE("extract_feedback: empty iff all of NC, DAC, TTC pass") {
    Trajectory traj = straight_trajectory(3.0);
    const Feedback clean = extract_feedback(report_of(1, 1, 1, 0, 0.2), traj);
    CHECK(clean.empty());
    CHECK(feedback_text(clean).empty());

    SplitMix64 rng(29);
    for (int i = 0; i < 200; ++i) {
        const MetricReport r = report_of(static_cast<int>(rng.next_below(2)),
                                         static_cast<int>(rng.next_below(2)),
                                         static_cast<int>(rng.next_below(2)),
                                         static_cast<int>(rng.next_below(2)), rng.next_double());
        const Feedback fb = extract_feedback(r, traj);
        CHECK(fb.empty() == (r.nc == 1 && r.dac == 1 && r.ttc == 1));
        CHECK(feedback_text(fb).empty() == fb.empty());
    }
}

TEST_CASE("feedback formatter: explicit sign, two decimals, one stripped zero") {
    CHECK(format_feedback_value(21.73, true) == "+21.73");
    CHECK(format_feedback_value(0.0, true) == "0.0");
    CHECK(format_feedback_value(-0.0004, true) == "0.0");
    CHECK(format_feedback_value(3.1, true) == "+3.1");
    CHECK(format_feedback_value(3.104, true) == "+3.1");
    CHECK(format_feedback_value(-0.85, false) == "-0.85");
    CHECK(format_feedback_value(10.26, false) == "10.26");
    CHECK(format_feedback_value(34.14, false) == "34.14");
    CHECK(format_feedback_value(-0.02, false) == "-0.02");
    CHECK(format_feedback_value(21.7, false) == "21.7");
    CHECK(format_feedback_value(6.0, false) == "6.0");
}

TEST_CASE("DAC feedback lists the offending points") {
    Scenario s = wide_corridor_scenario();
    Trajectory traj = straight_trajectory(3.0);
    traj.points[3].y = 12.0;
    traj.points[7].y = -12.0;
    const MetricReport report = evaluate_trajectory(traj, s, PerceptionMode::GT_ORACLE);
    CHECK(report.dac == 0);
    const Feedback fb = extract_feedback(report, traj);
    REQUIRE(fb.dac.size() == 2);
    const std::string text = feedback_text(fb);
    CHECK(text.find("The DAC metric reveals that certain trajectory points lie outside the "
                    "drivable area.") != std::string::npos);
    CHECK(text.find("Trajectory Point 1: (+12.0, +12.0, 0.0).") != std::string::npos);
    CHECK(text.find("Trajectory Point 2: (+24.0, -12.0, 0.0).") != std::string::npos);
}

TEST_CASE("kinematic and gt-oracle verdicts coincide on constant-velocity tracks") {
    SplitMix64 rng(71);
    for (int i = 0; i < 100; ++i) {
        Scenario s = wide_corridor_scenario();
        AgentTrack agent = stationary_vehicle(rng.next_range(5, 40), rng.next_range(-4, 4));
        agent.velocity = Vec2{rng.next_range(-6, 6), rng.next_range(-1.5, 1.5)};
        std::vector<OrientedBox> track;
        for (int k = 0; k < kGtTrackSamples; ++k) {
            OrientedBox b = agent.box;
            b.center_x += agent.velocity.x * (kTrajectoryDt * k);
            b.center_y += agent.velocity.y * (kTrajectoryDt * k);
            track.push_back(b);
        }
        agent.gt_track = track;
        s.agents.push_back(agent);

        Trajectory traj;
        double x = 0.0;
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            x += rng.next_range(1.0, 5.0);
            traj.points[static_cast<std::size_t>(k)] = Pose2D{x, rng.next_range(-2, 2), 0.0};
        }
        const MetricReport kin = evaluate_trajectory(traj, s, PerceptionMode::KINEMATIC);
        const MetricReport gt = evaluate_trajectory(traj, s, PerceptionMode::GT_ORACLE);
        CHECK(kin.nc == gt.nc);
        CHECK(kin.dac == gt.dac);
        CHECK(kin.ttc == gt.ttc);
    }
}
