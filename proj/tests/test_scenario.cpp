#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mtdrive/errors.hpp"
#include "mtdrive/pdm.hpp"
#include "mtdrive/rng.hpp"
#include "mtdrive/scenario.hpp"

using namespace mtdrive;

namespace {

AgentTrack stationary_agent(double x, double y) {
    OrientedBox box;
    box.center_x = x;
    box.center_y = y;
    box.center_z = 0.8;
    box.length = 4.8;
    box.width = 2.0;
    box.height = 1.6;
    box.class_name = "vehicle";
    AgentTrack agent;
    agent.box = box;
    agent.velocity = Vec2{0, 0};
    agent.gt_track = std::vector<OrientedBox>(kGtTrackSamples, box);
    return agent;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool poses_equal(const Pose2D& a, const Pose2D& b, double tol = 1e-9) {
    return std::fabs(a.x - b.x) <= tol && std::fabs(a.y - b.y) <= tol &&
           std::fabs(a.heading - b.heading) <= tol;
}

bool scenarios_equal(const Scenario& a, const Scenario& b) {
    if (a.id != b.id || a.nav != b.nav) {
        return false;
    }
    if (std::fabs(a.ego_speed - b.ego_speed) > 1e-9) {
        return false;
    }
    for (int i = 0; i < kEgoHistorySamples; ++i) {
        if (!poses_equal(a.ego_history[static_cast<std::size_t>(i)],
                         b.ego_history[static_cast<std::size_t>(i)])) {
            return false;
        }
    }
    if (a.agents.size() != b.agents.size() ||
        a.drivable_area.vertices.size() != b.drivable_area.vertices.size() ||
        a.centerline.size() != b.centerline.size() ||
        a.gt_trajectory.has_value() != b.gt_trajectory.has_value()) {
        return false;
    }
    for (std::size_t i = 0; i < a.agents.size(); ++i) {
        const AgentTrack& x = a.agents[i];
        const AgentTrack& y = b.agents[i];
        if (x.box.class_name != y.box.class_name ||
            std::fabs(x.box.center_x - y.box.center_x) > 1e-9 ||
            std::fabs(x.box.heading - y.box.heading) > 1e-9 ||
            std::fabs(x.velocity.x - y.velocity.x) > 1e-9 ||
            x.gt_track.has_value() != y.gt_track.has_value()) {
            return false;
        }
        if (x.gt_track.has_value()) {
            for (std::size_t k = 0; k < x.gt_track->size(); ++k) {
                if (std::fabs((*x.gt_track)[k].center_x - (*y.gt_track)[k].center_x) > 1e-9 ||
                    std::fabs((*x.gt_track)[k].center_y - (*y.gt_track)[k].center_y) > 1e-9) {
                    return false;
                }
            }
        }
    }
    for (std::size_t i = 0; i < a.centerline.size(); ++i) {
        if (std::fabs(a.centerline[i].x - b.centerline[i].x) > 1e-9 ||
            std::fabs(a.centerline[i].y - b.centerline[i].y) > 1e-9) {
            return false;
        }
    }
    if (a.gt_trajectory.has_value()) {
        for (int k = 0; k < kTrajectoryPoints; ++k) {
            if (!poses_equal(a.gt_trajectory->points[static_cast<std::size_t>(k)],
                             b.gt_trajectory->points[static_cast<std::size_t>(k)])) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace

TEST_CASE("agent_box_at kinematic arithmetic and t=0 identity") {
    AgentTrack agent = stationary_agent(5.0, 1.0);
    agent.velocity = Vec2{2.0, 0.0};
    // rebuild the track so kinematic and oracle agree
    std::vector<OrientedBox> track;
    for (int i = 0; i < kGtTrackSamples; ++i) {
        OrientedBox b = agent.box;
        b.center_x += agent.velocity.x * (kTrajectoryDt * i);
        track.push_back(b);
    }
    agent.gt_track = track;

    const OrientedBox at = agent_box_at(agent, 1.5, PerceptionMode::KINEMATIC);
    CHECK(at.center_x == doctest::Approx(8.0));  // +3.0 m in x
    CHECK(at.center_y == doctest::Approx(1.0));
    CHECK(at.heading == doctest::Approx(agent.box.heading));

    for (PerceptionMode mode : {PerceptionMode::KINEMATIC, PerceptionMode::GT_ORACLE}) {
        const OrientedBox b0 = agent_box_at(agent, 0.0, mode);
        CHECK(b0.center_x == doctest::Approx(agent.box.center_x));
        CHECK(b0.center_y == doctest::Approx(agent.box.center_y));
    }
}

TEST_CASE("kinematic positions are affine in t") {
    SplitMix64 rng(5);
    for (int i = 0; i < 200; ++i) {
        AgentTrack agent = stationary_agent(rng.next_range(-20, 20), rng.next_range(-5, 5));
        agent.velocity = Vec2{rng.next_range(-8, 8), rng.next_range(-2, 2)};
        const double t = rng.next_range(0.1, 2.0);
        const OrientedBox b1 = agent_box_at(agent, t, PerceptionMode::KINEMATIC);
        const OrientedBox b2 = agent_box_at(agent, 2 * t, PerceptionMode::KINEMATIC);
        CHECK(b2.center_x - agent.box.center_x ==
              doctest::Approx(2 * (b1.center_x - agent.box.center_x)).epsilon(1e-12));
        CHECK(b2.center_y - agent.box.center_y ==
              doctest::Approx(2 * (b1.center_y - agent.box.center_y)).epsilon(1e-12));
    }
}

TEST_CASE("gt interpolation: midpoint center and shortest-arc heading") {
    AgentTrack agent = stationary_agent(0.0, 0.0);
    std::vector<OrientedBox> track(kGtTrackSamples, agent.box);
    track[0].center_x = 0.0;
    track[0].heading = 3.0;
    track[1].center_x = 2.0;
    track[1].heading = -3.0;  // shortest arc crosses pi, not zero
    for (int i = 2; i < kGtTrackSamples; ++i) {
        track[static_cast<std::size_t>(i)] = track[1];
    }
    agent.gt_track = track;

    const OrientedBox mid = agent_box_at(agent, 0.25, PerceptionMode::GT_ORACLE);
    CHECK(mid.center_x == doctest::Approx(1.0));
    // halfway along the short arc from 3.0 towards -3.0 (through pi)
    const double expected = normalize_angle(3.0 + 0.5 * normalize_angle(-3.0 - 3.0));
    CHECK(mid.heading == doctest::Approx(expected));
}

TEST_CASE("gt oracle without a track is a configuration error") {
    AgentTrack agent = stationary_agent(0.0, 0.0);
    agent.gt_track.reset();
    CHECK_THROWS_AS(agent_box_at(agent, 1.0, PerceptionMode::GT_ORACLE), ConfigError);
}

TEST_CASE("generation is deterministic and validates family names") {
    const auto a = generate_scenarios(7, 10);
    const auto b = generate_scenarios(7, 10);
    REQUIRE(a.size() == 10);
    const std::string path_a = "/tmp/mtdrive_test_corpus_a.jsonl";
    const std::string path_b = "/tmp/mtdrive_test_corpus_b.jsonl";
    save_corpus(a, path_a);
    save_corpus(b, path_b);
    CHECK(read_file(path_a) == read_file(path_b));  // byte-identical corpora
    CHECK(read_file(path_a).size() > 100);

    CHECK_THROWS_AS(generate_scenarios(7, 10, {"no_such_family"}), ConfigError);
    CHECK_THROWS_AS(generate_scenarios(7, 0), ConfigError);
    std::remove(path_a.c_str());
    std::remove(path_b.c_str());
}

TEST_CASE("every generated scenario satisfies the invariants") {
    const auto corpus = generate_scenarios(99, 60);
    for (const Scenario& s : corpus) {
        std::string why;
        CHECK_MESSAGE(scenario_valid(s, &why), s.id, ": ", why);
        for (const AgentTrack& agent : s.agents) {
            CHECK(agent.gt_track.has_value());  // both perception modes must run
        }
        CHECK(s.gt_trajectory.has_value());
    }
}

TEST_CASE("crosswalk family places a pedestrian crossing the route") {
    const auto corpus = generate_scenarios(31, 8, {"crosswalk_pedestrian"});
    for (const Scenario& s : corpus) {
        bool found = false;
        for (const AgentTrack& agent : s.agents) {
            if (agent.box.class_name != "pedestrian" || !agent.gt_track.has_value()) {
                continue;
            }
            double min_y = 1e18;
            double max_y = -1e18;
            for (const OrientedBox& b : *agent.gt_track) {
                min_y = std::min(min_y, b.center_y);
                max_y = std::max(max_y, b.center_y);
            }
            // the route is the y=0 line for this family
            if (min_y < -0.5 && max_y > 0.5) {
                found = true;
            }
        }
        CHECK_MESSAGE(found, s.id, ": no pedestrian crossing the centerline");
    }
}

TEST_CASE("expert trajectories score PDMS >= 0.9 under the GT oracle") {
    const auto corpus = generate_scenarios(424242, 120);
    int clean = 0;
    for (const Scenario& s : corpus) {
        REQUIRE(s.gt_trajectory.has_value());
        const MetricReport report =
            evaluate_trajectory(*s.gt_trajectory, s, PerceptionMode::GT_ORACLE, {}, true);
        const double pdms = compose_pdms(report, {});
        CHECK_MESSAGE(pdms >= 0.9, s.id, ": expert PDMS ", pdms, " (nc=", report.nc,
                      " dac=", report.dac, " ttc=", report.ttc, " cf=", report.comfort, ")");
        if (report.nc == 1 && report.dac == 1) {
            ++clean;
        }
    }
    CHECK(clean == static_cast<int>(corpus.size()));  // experts pass NC and DAC
}

TEST_CASE("corpus round-trips through JSONL exactly") {
    const auto corpus = generate_scenarios(1234, 100);
    const std::string path = "/tmp/mtdrive_test_roundtrip.jsonl";
    save_corpus(corpus, path);
    const auto loaded = load_corpus(path);
    REQUIRE(loaded.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK_MESSAGE(scenarios_equal(corpus[i], loaded[i]), corpus[i].id);
    }
    // saving the loaded corpus reproduces the file byte-for-byte
    const std::string path2 = "/tmp/mtdrive_test_roundtrip2.jsonl";
    save_corpus(loaded, path2);
    CHECK(read_file(path) == read_file(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("empty corpus round-trips") {
    const std::string path = "/tmp/mtdrive_test_empty.jsonl";
    save_corpus({}, path);
    CHECK(load_corpus(path).empty());
    std::remove(path.c_str());
}

TEST_CASE("malformed corpus lines name the line number and field") {
    const std::string path = "/tmp/mtdrive_test_malformed.jsonl";
    {
        const auto corpus = generate_scenarios(5, 1);
        save_corpus(corpus, path);
        std::ofstream out(path, std::ios::app | std::ios::binary);
        out << "{\"id\": \"truncated\n";
    }
    try {
        load_corpus(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("line 2") != std::string::npos);
    }

    {
        std::ofstream out(path, std::ios::binary);
        out << "{\"id\": \"x\", \"ego_speed\": 1.0}\n";
    }
    try {
        load_corpus(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("ego_history") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("polyline helpers: length, projection, sampling") {
    const std::vector<Vec2> line{{0, 0}, {10, 0}, {10, 10}};
    CHECK(polyline_length(line) == doctest::Approx(20.0));
    CHECK(project_arc_length(line, Vec2{5, 3}) == doctest::Approx(5.0));
    CHECK(project_arc_length(line, Vec2{12, 4}) == doctest::Approx(14.0));
    Vec2 p;
    Vec2 t;
    polyline_sample(line, 15.0, &p, &t);
    CHECK(p.x == doctest::Approx(10.0));
    CHECK(p.y == doctest::Approx(5.0));
    CHECK(t.x == doctest::Approx(0.0));
    CHECK(t.y == doctest::Approx(1.0));
    // clamped past the end
    polyline_sample(line, 50.0, &p, &t);
    CHECK(p.y == doctest::Approx(10.0));
}
