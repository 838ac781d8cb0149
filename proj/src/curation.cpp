#include "mtdrive/curation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"

namespace mtdrive {

namespace {

std::vector<std::size_t> by_id_order(const std::vector<Scenario>& corpus) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return corpus[a].id < corpus[b].id; });
    return order;
}

std::vector<TurnOutcome> outcomes_of(const std::vector<SampleTurn>& turns) {
    std::vector<TurnOutcome> history;
    history.reserve(turns.size());
    for (const SampleTurn& t : turns) {
        history.push_back(TurnOutcome{t.predicted, t.feedback});
    }
    return history;
}

}  // namespace

std::string provenance_name(SampleProvenance p) {
    switch (p) {
        case SampleProvenance::BOOTSTRAP: return "BOOTSTRAP";
        case SampleProvenance::CONST_VEL: return "CONST_VEL";
        case SampleProvenance::MOCK: return "MOCK";
    }
    return "BOOTSTRAP";
}

std::string rl_category_name(RlCategory c) {
    switch (c) {
        case RlCategory::TWO_TURN: return "TWO_TURN";
        case RlCategory::LOW_SCORE: return "LOW_SCORE";
        case RlCategory::OTHER: return "OTHER";
    }
    return "OTHER";
}

Trajectory constant_velocity_trajectory(const Scenario& scenario) {
    const Pose2D& prev = scenario.ego_history[kEgoHistorySamples - 2];
    const Pose2D& cur = scenario.ego_history[kEgoHistorySamples - 1];
    const Vec2 step{cur.x - prev.x, cur.y - prev.y};
    const double heading = step.norm() > 1e-9 ? std::atan2(step.y, step.x) : 0.0;
    Trajectory traj;
    for (int k = 0; k < kTrajectoryPoints; ++k) {
        traj.points[static_cast<std::size_t>(k)] =
            Pose2D{step.x * (k + 1), step.y * (k + 1), normalize_angle(heading)};
    }
    return traj;
}

std::vector<MultiTurnSample> bootstrap_round(const PolicyParams& policy,
                                             const std::vector<Scenario>& corpus, int current_depth,
                                             const EnvConfig& env_cfg, std::uint64_t seed) {
    if (current_depth < 1) {
        throw ConfigError("bootstrap depth must be at least 1");
    }
    EnvConfig cfg = env_cfg;
    cfg.max_turns = current_depth;
    cfg.stop_on_clean = true;
    std::vector<MultiTurnSample> samples;
    for (std::size_t idx : by_id_order(corpus)) {
        const Scenario& scenario = corpus[idx];
        if (!scenario.gt_trajectory.has_value()) {
            continue;
        }
        const std::uint64_t episode_seed =
            hash_mix(hash_mix(seed, 0x626f6f74ull), hash_str(scenario.id));
        const Rollout rollout = run_episode(policy, scenario, cfg, episode_seed);
        const TurnRecord& last = rollout.turns.back();
        if (!last.trajectory.has_value() || last.feedback.empty()) {
            continue;  // nothing to refine, or nothing to describe
        }
        MultiTurnSample sample;
        sample.scenario_id = scenario.id;
        sample.provenance = SampleProvenance::BOOTSTRAP;
        sample.target = *scenario.gt_trajectory;
        for (const TurnRecord& rec : rollout.turns) {
            sample.turns.push_back(SampleTurn{rec.context, rec.trajectory, rec.feedback});
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::vector<MultiTurnSample> const_velocity_round(const std::vector<Scenario>& corpus,
                                                  const EnvConfig& env_cfg) {
    std::vector<MultiTurnSample> samples;
    for (std::size_t idx : by_id_order(corpus)) {
        const Scenario& scenario = corpus[idx];
        if (!scenario.gt_trajectory.has_value()) {
            continue;
        }
        const Trajectory traj = constant_velocity_trajectory(scenario);
        const MetricReport report =
            evaluate_trajectory(traj, scenario, env_cfg.perception, env_cfg.pdm, false);
        const Feedback feedback = extract_feedback(report, traj);
        if (feedback.empty()) {
            continue;
        }
        MultiTurnSample sample;
        sample.scenario_id = scenario.id;
        sample.provenance = SampleProvenance::CONST_VEL;
        sample.target = *scenario.gt_trajectory;
        SampleTurn turn;
        turn.context = encode_context(scenario, {});
        turn.predicted = traj;
        turn.feedback = feedback;
        sample.turns.push_back(std::move(turn));
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::vector<MultiTurnSample> mock_multiturn(const PolicyParams& policy,
                                            const std::vector<Scenario>& corpus, int depth, int runs,
                                            double keep_fraction, const EnvConfig& env_cfg,
                                            std::uint64_t seed) {
    if (depth <= 3) {
        throw ConfigError("mock multi-turn depth must exceed 3");
    }
    if (runs < 1) {
        throw ConfigError("mock multi-turn needs at least one run");
    }
    EnvConfig cfg = env_cfg;
    cfg.max_turns = 3;
    cfg.stop_on_clean = true;

    std::vector<MultiTurnSample> samples;
    for (std::size_t idx : by_id_order(corpus)) {
        const Scenario& scenario = corpus[idx];
        if (!scenario.gt_trajectory.has_value()) {
            continue;
        }
        // pool feedback-bearing turns from independently sampled shallow runs
        std::vector<SampleTurn> pool;
        for (int run = 0; run < runs; ++run) {
            const std::uint64_t episode_seed = hash_mix(
                hash_mix(hash_mix(seed, 0x6d6f636bull), hash_str(scenario.id)),
                static_cast<std::uint64_t>(run));
            const Rollout rollout = run_episode(policy, scenario, cfg, episode_seed);
            for (const TurnRecord& rec : rollout.turns) {
                if (rec.trajectory.has_value() && !rec.feedback.empty()) {
                    pool.push_back(SampleTurn{{}, rec.trajectory, rec.feedback});
                }
            }
        }
        if (pool.empty()) {
            continue;
        }
        const std::size_t take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(depth - 1));
        MultiTurnSample sample;
        sample.scenario_id = scenario.id;
        sample.provenance = SampleProvenance::MOCK;
        sample.target = *scenario.gt_trajectory;
        std::vector<TurnOutcome> history;
        for (std::size_t i = 0; i < take; ++i) {
            SampleTurn turn = pool[i];
            turn.context = encode_context(scenario, history);
            history.push_back(TurnOutcome{turn.predicted, turn.feedback});
            sample.turns.push_back(std::move(turn));
        }
        samples.push_back(std::move(sample));
    }

    // "only a subset of it": seeded down-sample
    keep_fraction = std::clamp(keep_fraction, 0.0, 1.0);
    const std::size_t keep =
        static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(samples.size())));
    if (keep >= samples.size()) {
        return samples;
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    SplitMix64 rng(hash_mix(seed, 0x6b656570ull));
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);
    }
    order.resize(keep);
    std::sort(order.begin(), order.end());
    std::vector<MultiTurnSample> kept;
    kept.reserve(keep);
    for (std::size_t i : order) {
        kept.push_back(std::move(samples[i]));
    }
    return kept;
}

bool nc_conflict(const Pose2D& point, const OrientedBox& box, const PdmConfig& cfg) {
    return boxes_overlap(footprint_at(point, cfg.ego_length, cfg.ego_width), box);
}

bool ttc_conflict(const Pose2D& point, double speed, const OrientedBox& box, const PdmConfig& cfg) {
    const int steps = static_cast<int>(std::round(cfg.ttc_horizon / cfg.ttc_dt));
    const double dir_x = std::cos(point.heading);
    const double dir_y = std::sin(point.heading);
    for (int step = 1; step <= steps; ++step) {
        const double tau = cfg.ttc_dt * step;
        const Pose2D projected{point.x + dir_x * speed * tau, point.y + dir_y * speed * tau,
                               point.heading};
        if (boxes_overlap(footprint_at(projected, cfg.ego_length, cfg.ego_width), box)) {
            return true;
        }
    }
    return false;
}

namespace {

OrientedBox qa_box(SplitMix64& rng, double x, double y) {
    OrientedBox b;
    b.center_x = x;
    b.center_y = y;
    b.center_z = 0.8;
    b.length = rng.next_range(4.2, 5.2);
    b.width = rng.next_range(1.8, 2.2);
    b.height = 1.6;
    b.heading = rng.next_range(-0.15, 0.15);
    b.class_name = "vehicle";
    return b;
}

}  // namespace

std::vector<PdmQaSample> gen_pdm_qa(const std::vector<Scenario>& corpus, int per_scenario,
                                    std::uint64_t seed, const PdmConfig& pdm) {
    if (per_scenario < 2) {
        throw ConfigError("gen_pdm_qa needs at least 2 queries per scenario");
    }
    std::vector<PdmQaSample> out;
    for (std::size_t idx : by_id_order(corpus)) {
        const Scenario& scenario = corpus[idx];
        SplitMix64 rng(hash_mix(hash_mix(seed, 0x716100ull), hash_str(scenario.id)));
        const double route_len = polyline_length(scenario.centerline);

        auto route_point = [&](double arc, double lateral) {
            Vec2 p;
            Vec2 t;
            polyline_sample(scenario.centerline, arc, &p, &t);
            const Vec2 n{-t.y, t.x};
            return Pose2D{p.x + n.x * lateral, p.y + n.y * lateral, std::atan2(t.y, t.x)};
        };

        for (int q = 0; q < per_scenario; ++q) {
            const bool want_positive = q % 2 == 0;

            // DAC: is the point inside the drivable area?
            {
                PdmQaSample s;
                s.scenario_id = scenario.id;
                s.metric = "DAC";
                if (want_positive) {
                    s.query_point = route_point(rng.next_range(1.0, std::max(2.0, route_len - 4.0)),
                                                rng.next_range(-0.6, 0.6));
                } else {
                    // beyond the corridor end or laterally outside
                    if (rng.next_double() < 0.5) {
                        const Pose2D end = route_point(route_len, 0.0);
                        const double extra = rng.next_range(4.0, 20.0);
                        s.query_point = Pose2D{end.x + std::cos(end.heading) * extra,
                                               end.y + std::sin(end.heading) * extra, end.heading};
                    } else {
                        const double side = rng.next_double() < 0.5 ? 1.0 : -1.0;
                        s.query_point = route_point(rng.next_range(2.0, std::max(3.0, route_len * 0.5)),
                                                    side * rng.next_range(6.0, 12.0));
                    }
                }
                s.label = point_in_polygon(Vec2{s.query_point.x, s.query_point.y},
                                           scenario.drivable_area);
                out.push_back(std::move(s));
            }

            // NC: does the ego footprint at the point collide with the box?
            {
                PdmQaSample s;
                s.scenario_id = scenario.id;
                s.metric = "NC";
                const Pose2D base = route_point(rng.next_range(4.0, std::max(5.0, route_len * 0.6)),
                                                rng.next_range(-0.4, 0.4));
                if (want_positive) {
                    s.query_box = qa_box(rng, base.x + rng.next_range(-1.5, 1.5),
                                         base.y + rng.next_range(-1.0, 1.0));
                } else {
                    const double side = rng.next_double() < 0.5 ? 1.0 : -1.0;
                    s.query_box = qa_box(rng, base.x + rng.next_range(-2.0, 10.0),
                                         base.y + side * rng.next_range(5.0, 9.0));
                }
                s.query_point = base;
                s.label = nc_conflict(s.query_point, *s.query_box, pdm);
                out.push_back(std::move(s));
            }

            // TTC: does a 1 s forward projection reach the box?
            {
                PdmQaSample s;
                s.scenario_id = scenario.id;
                s.metric = "TTC";
                const Pose2D base = route_point(rng.next_range(4.0, std::max(5.0, route_len * 0.5)),
                                                rng.next_range(-0.3, 0.3));
                s.query_point = base;
                s.query_speed = std::max(scenario.ego_speed, 1.0);
                const double reach = s.query_speed * pdm.ttc_horizon;
                if (want_positive) {
                    s.query_box = qa_box(
                        rng, base.x + std::cos(base.heading) * rng.next_range(reach * 0.4, reach * 0.9 + 4.0),
                        base.y + std::sin(base.heading) * rng.next_range(-0.5, 0.5) +
                            rng.next_range(-0.8, 0.8));
                } else {
                    s.query_box = qa_box(rng, base.x + std::cos(base.heading) * (reach + 12.0),
                                         base.y + rng.next_range(-0.5, 0.5));
                }
                s.label = ttc_conflict(s.query_point, s.query_speed, *s.query_box, pdm);
                out.push_back(std::move(s));
            }
        }
    }
    return out;
}

RlDataSplit filter_rl_data(const PolicyParams& policy, const std::vector<Scenario>& corpus,
                           double threshold, double other_fraction, const EnvConfig& env_cfg,
                           std::uint64_t seed) {
    other_fraction = std::clamp(other_fraction, 0.0, 1.0);
    RlDataSplit split;
    split.threshold = threshold;
    split.other_fraction = other_fraction;
    split.category.assign(corpus.size(), RlCategory::OTHER);

    EnvConfig cfg = env_cfg;
    cfg.max_turns = 1;
    std::vector<std::size_t> other_indices;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const std::uint64_t episode_seed =
            hash_mix(hash_mix(seed, 0x66696c74ull), hash_str(corpus[i].id));
        const Rollout rollout = run_episode(policy, corpus[i], cfg, episode_seed);
        const TurnRecord& first = rollout.turns.front();
        if (!first.feedback.empty()) {
            split.category[i] = RlCategory::TWO_TURN;
            split.selected.push_back(i);
        } else if (first.p < threshold) {
            split.category[i] = RlCategory::LOW_SCORE;
            split.selected.push_back(i);
        } else {
            other_indices.push_back(i);
        }
    }

    SplitMix64 rng(hash_mix(seed, 0x6f746872ull));
    std::vector<std::size_t> order(other_indices.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);
    }
    const std::size_t keep = static_cast<std::size_t>(
        std::llround(other_fraction * static_cast<double>(other_indices.size())));
    for (std::size_t i = 0; i < keep && i < order.size(); ++i) {
        split.selected.push_back(other_indices[order[i]]);
    }
    std::sort(split.selected.begin(), split.selected.end());
    return split;
}

namespace {

nlohmann::ordered_json traj_json(const Trajectory& t) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const Pose2D& p : t.points) {
        arr.push_back(nlohmann::ordered_json::array({p.x, p.y, p.heading}));
    }
    return arr;
}

}  // namespace

void save_samples(const std::vector<MultiTurnSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    for (const MultiTurnSample& s : samples) {
        nlohmann::ordered_json j;
        j["scenario_id"] = s.scenario_id;
        j["provenance"] = provenance_name(s.provenance);
        nlohmann::ordered_json turns = nlohmann::ordered_json::array();
        for (const SampleTurn& t : s.turns) {
            nlohmann::ordered_json tj;
            tj["context"] = t.context;
            if (t.predicted.has_value()) {
                tj["traj"] = traj_json(*t.predicted);
            } else {
                tj["traj"] = nullptr;
            }
            tj["feedback_text"] = feedback_text(t.feedback);
            turns.push_back(tj);
        }
        j["turns"] = turns;
        j["target"] = traj_json(s.target);
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

void save_qa(const std::vector<PdmQaSample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    for (const PdmQaSample& s : samples) {
        nlohmann::ordered_json j;
        j["scenario_id"] = s.scenario_id;
        j["metric"] = s.metric;
        j["point"] = nlohmann::ordered_json::array({s.query_point.x, s.query_point.y, s.query_point.heading});
        if (s.query_box.has_value()) {
            const OrientedBox& b = *s.query_box;
            j["box"] = nlohmann::ordered_json::array(
                {b.center_x, b.center_y, b.center_z, b.length, b.width, b.height, b.heading});
            j["box_class"] = b.class_name;
        } else {
            j["box"] = nullptr;
        }
        j["speed"] = s.query_speed;
        j["label"] = s.label ? "Yes" : "No";
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

void save_split(const RlDataSplit& split, const std::vector<Scenario>& corpus,
                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    std::vector<bool> selected(corpus.size(), false);
    for (std::size_t i : split.selected) {
        selected[i] = true;
    }
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        nlohmann::ordered_json j;
        j["scenario_id"] = corpus[i].id;
        j["category"] = rl_category_name(split.category[i]);
        j["selected"] = static_cast<bool>(selected[i]);
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

namespace {

void bc_train(PolicyParams& params, const std::vector<BcBatchItem>& items, int epochs,
              double learning_rate, int mini_batch, SplitMix64& rng) {
    if (items.empty() || epochs <= 0) {
        return;
    }
    std::vector<std::size_t> order(items.size());
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_below(i))]);
        }
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(mini_batch)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(mini_batch));
            std::vector<const BcBatchItem*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(&items[order[i]]);
            }
            bc_update(params, batch, learning_rate);
        }
    }
}

BcBatchItem bc_item_for_sample(const Scenario& scenario, const MultiTurnSample& sample,
                               const TokenCodec& codec) {
    BcBatchItem item;
    item.features = encode_context(scenario, outcomes_of(sample.turns));
    item.target_tokens = encode_trajectory(sample.target, codec);
    return item;
}

}  // namespace

void warm_start_policy(PolicyParams& params, const std::vector<Scenario>& corpus,
                       const EnvConfig& env_cfg, const WarmStartConfig& cfg, std::uint64_t seed) {
    SplitMix64 rng(hash_mix(seed, 0x7761726dull));
    std::map<std::string, const Scenario*> by_id;
    for (const Scenario& s : corpus) {
        by_id[s.id] = &s;
    }

    // phase 1: expert cloning on first-turn contexts
    std::vector<BcBatchItem> items;
    for (const Scenario& s : corpus) {
        if (!s.gt_trajectory.has_value()) {
            continue;
        }
        BcBatchItem item;
        item.features = encode_context(s, {});
        item.target_tokens = encode_trajectory(*s.gt_trajectory, params.config.codec);
        items.push_back(std::move(item));
    }
    bc_train(params, items, cfg.epochs, cfg.learning_rate, cfg.mini_batch, rng);

    // phase 2: feedback contexts from the curation rounds
    if (cfg.include_const_velocity) {
        for (const MultiTurnSample& sample : const_velocity_round(corpus, env_cfg)) {
            items.push_back(bc_item_for_sample(*by_id.at(sample.scenario_id), sample,
                                               params.config.codec));
        }
    }
    for (int round = 1; round <= cfg.bootstrap_rounds; ++round) {
        for (const MultiTurnSample& sample :
             bootstrap_round(params, corpus, round, env_cfg, hash_mix(seed, round))) {
            items.push_back(bc_item_for_sample(*by_id.at(sample.scenario_id), sample,
                                               params.config.codec));
        }
    }
    if (cfg.mock_fraction > 0.0) {
        for (const MultiTurnSample& sample :
             mock_multiturn(params, corpus, cfg.mock_depth, cfg.mock_runs, cfg.mock_fraction,
                            env_cfg, hash_mix(seed, 0x6d6bull))) {
            items.push_back(bc_item_for_sample(*by_id.at(sample.scenario_id), sample,
                                               params.config.codec));
        }
    }
    bc_train(params, items, cfg.epochs, cfg.learning_rate, cfg.mini_batch, rng);
}

}  // namespace mtdrive
