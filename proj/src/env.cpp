#include "mtdrive/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"

namespace mtdrive {

namespace {

// Distance from `origin` along `dir` to the first polygon boundary crossing,
// capped at `max_range`.
double ray_to_boundary(const Vec2& origin, const Vec2& dir, const Polygon& poly, double max_range) {
    double best = max_range;
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = v[j];
        const Vec2 b = v[i];
        const Vec2 e = b - a;
        const double denom = dir.cross(e);
        if (std::fabs(denom) < 1e-12) {
            continue;
        }
        const Vec2 ao = a - origin;
        const double t = ao.cross(e) / denom;       // along the ray
        const double s = ao.cross(dir) / denom;     // along the edge
        if (t > 1e-9 && t < best && s >= -1e-9 && s <= 1.0 + 1e-9) {
            best = t;
        }
    }
    return best;
}

void push_pose_deltas(std::vector<double>& out, const std::array<Pose2D, kEgoHistorySamples>& hist) {
    for (int i = 1; i < kEgoHistorySamples; ++i) {
        const Pose2D& a = hist[static_cast<std::size_t>(i - 1)];
        const Pose2D& b = hist[static_cast<std::size_t>(i)];
        out.push_back((b.x - a.x) / 8.0);
        out.push_back((b.y - a.y) / 2.0);
        out.push_back(normalize_angle(b.heading - a.heading) / 0.5);
    }
}

}  // namespace

std::vector<double> encode_context(const Scenario& scenario, const std::vector<TurnOutcome>& history) {
    std::vector<double> f;
    f.reserve(kContextFeatureDim);

    f.push_back(scenario.ego_speed / 15.0);
    f.push_back(scenario.nav == NavCommand::GO_STRAIGHT ? 1.0 : 0.0);
    f.push_back(scenario.nav == NavCommand::TURN_LEFT ? 1.0 : 0.0);
    f.push_back(scenario.nav == NavCommand::TURN_RIGHT ? 1.0 : 0.0);
    push_pose_deltas(f, scenario.ego_history);

    // nearest agents by t=0 distance; stable index order breaks ties
    std::vector<std::size_t> order(scenario.agents.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto da = Vec2{scenario.agents[a].box.center_x, scenario.agents[a].box.center_y}.norm();
        const auto db = Vec2{scenario.agents[b].box.center_x, scenario.agents[b].box.center_y}.norm();
        return da < db;
    });
    for (int slot = 0; slot < kContextAgentSlots; ++slot) {
        if (slot < static_cast<int>(order.size())) {
            const AgentTrack& a = scenario.agents[order[static_cast<std::size_t>(slot)]];
            f.push_back(a.box.center_x / 50.0);
            f.push_back(a.box.center_y / 10.0);
            f.push_back(a.velocity.x / 15.0);
            f.push_back(a.velocity.y / 5.0);
            f.push_back(a.box.length / 12.0);
            f.push_back(a.box.width / 3.0);
            f.push_back(std::cos(a.box.heading));
            f.push_back(std::sin(a.box.heading));
        } else {
            for (int k = 0; k < 8; ++k) {
                f.push_back(0.0);
            }
        }
    }

    // corridor clearance at four lookahead stations along the route
    for (double station : {5.0, 10.0, 15.0, 20.0}) {
        Vec2 point;
        Vec2 tangent;
        polyline_sample(scenario.centerline, station, &point, &tangent);
        const Vec2 left{-tangent.y, tangent.x};
        f.push_back(ray_to_boundary(point, left, scenario.drivable_area, 12.0) / 8.0);
        f.push_back(ray_to_boundary(point, Vec2{-left.x, -left.y}, scenario.drivable_area, 12.0) / 8.0);
    }

    f.push_back(static_cast<double>(history.size()) / 6.0);

    const TurnOutcome* last = history.empty() ? nullptr : &history.back();
    const Trajectory* prev_traj =
        (last != nullptr && last->trajectory.has_value()) ? &*last->trajectory : nullptr;
    f.push_back(prev_traj != nullptr ? 1.0 : 0.0);
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        if (prev_traj != nullptr) {
            f.push_back(prev_traj->points[static_cast<std::size_t>(k)].x / 50.0);
            f.push_back(prev_traj->points[static_cast<std::size_t>(k)].y / 10.0);
        } else {
            f.push_back(0.0);
            f.push_back(0.0);
        }
    }

    const Feedback* fb = last != nullptr ? &last->feedback : nullptr;
    const FeedbackRecord* nc = (fb != nullptr && !fb->nc.empty()) ? &fb->nc.front() : nullptr;
    const FeedbackRecord* dac = (fb != nullptr && !fb->dac.empty()) ? &fb->dac.front() : nullptr;
    const FeedbackRecord* ttc = (fb != nullptr && !fb->ttc.empty()) ? &fb->ttc.front() : nullptr;
    f.push_back(nc != nullptr ? 1.0 : 0.0);
    f.push_back(dac != nullptr ? 1.0 : 0.0);
    f.push_back(ttc != nullptr ? 1.0 : 0.0);
    f.push_back(nc != nullptr ? static_cast<double>(nc->point_index) / 8.0 : 0.0);
    f.push_back(dac != nullptr ? static_cast<double>(dac->point_index) / 8.0 : 0.0);
    f.push_back(ttc != nullptr ? static_cast<double>(ttc->point_index) / 8.0 : 0.0);
    f.push_back(nc != nullptr ? nc->point.x / 50.0 : 0.0);
    f.push_back(nc != nullptr ? nc->point.y / 10.0 : 0.0);
    f.push_back(dac != nullptr ? dac->point.x / 50.0 : 0.0);
    f.push_back(dac != nullptr ? dac->point.y / 10.0 : 0.0);
    f.push_back(ttc != nullptr ? ttc->point.x / 50.0 : 0.0);
    f.push_back(ttc != nullptr ? ttc->point.y / 10.0 : 0.0);
    if (nc != nullptr && !nc->boxes.empty()) {
        f.push_back((nc->boxes.front().center_x - nc->point.x) / 20.0);
        f.push_back((nc->boxes.front().center_y - nc->point.y) / 5.0);
    } else {
        f.push_back(0.0);
        f.push_back(0.0);
    }
    if (ttc != nullptr && !ttc->boxes.empty()) {
        f.push_back((ttc->boxes.front().center_x - ttc->point.x) / 20.0);
        f.push_back((ttc->boxes.front().center_y - ttc->point.y) / 5.0);
    } else {
        f.push_back(0.0);
        f.push_back(0.0);
    }
    return f;
}

int format_score(const std::vector<int>& tokens, const TokenCodec& codec) {
    return decode_tokens(tokens, codec).has_value() ? 1 : 0;
}

Rollout run_episode(const PolicyParams& params, const Scenario& scenario, const EnvConfig& cfg,
                    std::uint64_t seed) {
    if (cfg.max_turns < 1) {
        throw ConfigError("max_turns must be at least 1");
    }
    SplitMix64 rng(seed);
    Rollout rollout;
    rollout.scenario_id = scenario.id;
    std::vector<TurnOutcome> history;
    std::vector<int> prompt;
    for (int j = 1; j <= cfg.max_turns; ++j) {
        TurnRecord rec;
        rec.turn_index = j;
        rec.prompt_tokens = prompt;
        rec.context = encode_context(scenario, history);
        SampledTurn sampled = sample_turn(params, rec.context, cfg.temperature, rng);
        rec.response_tokens = std::move(sampled.tokens);
        rec.response_logps = std::move(sampled.logps);
        rec.f = format_score(rec.response_tokens, params.config.codec);
        std::optional<Trajectory> traj = decode_tokens(rec.response_tokens, params.config.codec);
        bool clean = false;
        if (traj.has_value()) {
            rec.trajectory = traj;
            rec.report = evaluate_trajectory(*traj, scenario, cfg.perception, cfg.pdm, false);
            rec.feedback = extract_feedback(rec.report, *traj);
            rec.p = agent_pdm_score_from_report(rec.report, cfg.pdm);
            clean = rec.feedback.empty();
        }
        prompt.insert(prompt.end(), rec.response_tokens.begin(), rec.response_tokens.end());
        history.push_back(TurnOutcome{rec.trajectory, rec.feedback});
        rollout.turns.push_back(std::move(rec));
        if (cfg.stop_on_clean && clean) {
            rollout.terminated_clean = true;
            break;
        }
    }
    return rollout;
}

void dump_rollouts(const std::vector<Rollout>& rollouts, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    for (const Rollout& r : rollouts) {
        nlohmann::ordered_json j;
        j["scenario_id"] = r.scenario_id;
        j["terminated_clean"] = r.terminated_clean;
        nlohmann::ordered_json turns = nlohmann::ordered_json::array();
        for (const TurnRecord& turn : r.turns) {
            nlohmann::ordered_json tj;
            tj["j"] = turn.turn_index;
            if (turn.trajectory.has_value()) {
                nlohmann::ordered_json pts = nlohmann::ordered_json::array();
                for (const Pose2D& p : turn.trajectory->points) {
                    pts.push_back(nlohmann::ordered_json::array({p.x, p.y, p.heading}));
                }
                tj["traj"] = pts;
            } else {
                tj["traj"] = nullptr;
            }
            tj["p"] = turn.p;
            tj["f"] = turn.f;
            tj["nc"] = turn.trajectory.has_value() ? turn.report.nc : 0;
            tj["dac"] = turn.trajectory.has_value() ? turn.report.dac : 0;
            tj["ttc"] = turn.trajectory.has_value() ? turn.report.ttc : 0;
            tj["comfort"] = turn.trajectory.has_value() ? turn.report.comfort : 0;
            tj["feedback_text"] = feedback_text(turn.feedback);
            turns.push_back(tj);
        }
        j["turns"] = turns;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

}  // namespace mtdrive
