#include "mtdrive/runs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mtdrive/bev_plot.hpp"
#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"
#include "parallel.hpp"

namespace mtdrive {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

PdmConfig pdm_config_from(const KvConfig& kv) {
    PdmConfig cfg;
    cfg.ego_length = kv.get_double("ego_length", cfg.ego_length);
    cfg.ego_width = kv.get_double("ego_width", cfg.ego_width);
    cfg.ttc_horizon = kv.get_double("ttc_horizon", cfg.ttc_horizon);
    cfg.ttc_dt = kv.get_double("ttc_dt", cfg.ttc_dt);
    cfg.comfort.max_abs_lon_accel = kv.get_double("max_abs_lon_accel", cfg.comfort.max_abs_lon_accel);
    cfg.comfort.max_abs_lat_accel = kv.get_double("max_abs_lat_accel", cfg.comfort.max_abs_lat_accel);
    cfg.comfort.max_abs_jerk = kv.get_double("max_abs_jerk", cfg.comfort.max_abs_jerk);
    cfg.comfort.max_abs_yaw_rate = kv.get_double("max_abs_yaw_rate", cfg.comfort.max_abs_yaw_rate);
    cfg.comfort.max_abs_yaw_accel = kv.get_double("max_abs_yaw_accel", cfg.comfort.max_abs_yaw_accel);
    cfg.weights.ep = kv.get_double("weight_ep", cfg.weights.ep);
    cfg.weights.ttc = kv.get_double("weight_ttc", cfg.weights.ttc);
    cfg.weights.comfort = kv.get_double("weight_comfort", cfg.weights.comfort);
    cfg.reward_includes_comfort = kv.get_bool("reward_includes_comfort", cfg.reward_includes_comfort);
    return cfg;
}

namespace {

PerceptionMode perception_from(const KvConfig& kv, const char* key, PerceptionMode fallback) {
    const std::string name = kv.get_str(key, fallback == PerceptionMode::KINEMATIC ? "kinematic"
                                                                                   : "gt_oracle");
    if (name == "kinematic") {
        return PerceptionMode::KINEMATIC;
    }
    if (name == "gt_oracle") {
        return PerceptionMode::GT_ORACLE;
    }
    throw ConfigError(std::string("config key \"") + key + "\": expected kinematic or gt_oracle");
}

}  // namespace

EnvConfig env_config_from(const KvConfig& kv) {
    EnvConfig cfg;
    cfg.max_turns = kv.get_int("max_turns", cfg.max_turns);
    cfg.stop_on_clean = kv.get_bool("stop_on_clean", cfg.stop_on_clean);
    cfg.perception = perception_from(kv, "perception", cfg.perception);
    cfg.temperature = kv.get_double("temperature", cfg.temperature);
    cfg.pdm = pdm_config_from(kv);
    if (cfg.max_turns < 1) {
        throw ConfigError("max_turns must be at least 1");
    }
    return cfg;
}

TrainConfig train_config_from(const KvConfig& kv) {
    TrainConfig cfg;
    cfg.group_size = kv.get_int("group_size", cfg.group_size);
    cfg.global_batch = kv.get_int("global_batch", cfg.global_batch);
    cfg.mini_batch = kv.get_int("mini_batch", cfg.mini_batch);
    cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
    cfg.kl_beta = kv.get_double("kl_beta", cfg.kl_beta);
    cfg.kl_estimator = kv.get_str("kl_estimator", cfg.kl_estimator);
    cfg.clip_eps = kv.get_double("clip_eps", cfg.clip_eps);
    cfg.inner_epochs = kv.get_int("inner_epochs", cfg.inner_epochs);
    cfg.outer_iterations = kv.get_int("outer_iterations", cfg.outer_iterations);
    cfg.steps_per_iteration = kv.get_int("steps_per_iteration", cfg.steps_per_iteration);
    cfg.advantage_mode =
        advantage_mode_from_string(kv.get_str("advantage_mode", advantage_mode_name(cfg.advantage_mode)));
    cfg.reward.w_p = kv.get_double("w_p", cfg.reward.w_p);
    cfg.reward.w_f = kv.get_double("w_f", cfg.reward.w_f);
    cfg.reward.progressive_turn_weights = kv.get_double_list("progressive_turn_weights");
    cfg.divergence_guard = kv.get_double("divergence_guard", cfg.divergence_guard);
    cfg.checkpoint_every = kv.get_int("checkpoint_every", cfg.checkpoint_every);
    return cfg;
}

WarmStartConfig warm_start_config_from(const KvConfig& kv) {
    WarmStartConfig cfg;
    cfg.epochs = kv.get_int("bc_epochs", cfg.epochs);
    cfg.learning_rate = kv.get_double("bc_learning_rate", cfg.learning_rate);
    cfg.mini_batch = kv.get_int("bc_mini_batch", cfg.mini_batch);
    cfg.bootstrap_rounds = kv.get_int("bc_bootstrap_rounds", cfg.bootstrap_rounds);
    cfg.mock_fraction = kv.get_double("bc_mock_fraction", cfg.mock_fraction);
    cfg.mock_depth = kv.get_int("bc_mock_depth", cfg.mock_depth);
    cfg.mock_runs = kv.get_int("bc_mock_runs", cfg.mock_runs);
    cfg.include_const_velocity = kv.get_bool("bc_include_const_velocity", cfg.include_const_velocity);
    return cfg;
}

PolicyConfig policy_config_from(const KvConfig& kv) {
    PolicyConfig cfg;
    cfg.feature_dim = kContextFeatureDim;
    cfg.embed_dim = kv.get_int("embed_dim", cfg.embed_dim);
    cfg.hidden_dim = kv.get_int("hidden_dim", cfg.hidden_dim);
    cfg.codec.lateral_bins = kv.get_int("lateral_bins", cfg.codec.lateral_bins);
    cfg.codec.lateral_min = kv.get_double("lateral_min", cfg.codec.lateral_min);
    cfg.codec.lateral_max = kv.get_double("lateral_max", cfg.codec.lateral_max);
    cfg.codec.longitudinal_bins = kv.get_int("longitudinal_bins", cfg.codec.longitudinal_bins);
    cfg.codec.longitudinal_min = kv.get_double("longitudinal_min", cfg.codec.longitudinal_min);
    cfg.codec.longitudinal_max = kv.get_double("longitudinal_max", cfg.codec.longitudinal_max);
    if (cfg.param_count() > 50000) {
        throw ConfigError("policy parameter budget exceeded (50k)");
    }
    return cfg;
}

pipeline::BenchConfig bench_config_from(const KvConfig& kv) {
    pipeline::BenchConfig cfg;
    const std::vector<double> workers = kv.get_double_list("bench_workers");
    if (!workers.empty()) {
        cfg.workers_grid.clear();
        for (double w : workers) {
            cfg.workers_grid.push_back(static_cast<int>(w));
        }
    }
    const std::vector<double> blobs = kv.get_double_list("bench_blob_mib");
    if (!blobs.empty()) {
        cfg.blob_grid = blobs;
    }
    cfg.repeats = kv.get_int("bench_repeats", cfg.repeats);
    cfg.base.rollouts = kv.get_int("bench_rollouts", cfg.base.rollouts);
    cfg.base.serializer_threads = kv.get_int("serializer_threads", cfg.base.serializer_threads);
    cfg.base.durations.gen_ms_min = kv.get_double("gen_ms_min", cfg.base.durations.gen_ms_min);
    cfg.base.durations.gen_ms_max = kv.get_double("gen_ms_max", cfg.base.durations.gen_ms_max);
    cfg.base.durations.serialize_ms_per_mib =
        kv.get_double("serialize_ms_per_mib", cfg.base.durations.serialize_ms_per_mib);
    cfg.base.durations.deserialize_ms_per_mib =
        kv.get_double("deserialize_ms_per_mib", cfg.base.durations.deserialize_ms_per_mib);
    cfg.base.durations.stage_compute_ms =
        kv.get_double("stage_compute_ms", cfg.base.durations.stage_compute_ms);
    cfg.base.seed = kv.get_u64("bench_seed", cfg.base.seed);
    const std::string transport = kv.get_str("transport", "queue");
    if (transport == "queue") {
        cfg.base.transport = pipeline::Transport::QUEUE;
    } else if (transport == "pipe") {
        cfg.base.transport = pipeline::Transport::PIPE;
    } else {
        throw ConfigError("config key \"transport\": expected queue or pipe");
    }
    return cfg;
}

std::uint64_t hash_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open for hashing: " + path);
    }
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = hash_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
        if (in.eof()) {
            break;
        }
    }
    return h;
}

// --- trajectory files --------------------------------------------------------

std::vector<std::pair<std::string, Trajectory>> load_trajectory_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open trajectory file: " + path);
    }
    std::vector<std::pair<std::string, Trajectory>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            const ordered_json j = ordered_json::parse(line);
            if (!j.contains("id") || !j["id"].is_string()) {
                throw DataError("missing field \"id\"");
            }
            if (!j.contains("trajectory") || !j["trajectory"].is_array() ||
                j["trajectory"].size() != kTrajectoryPoints) {
                throw DataError("field \"trajectory\" must hold exactly 8 points");
            }
            Trajectory t;
            for (int k = 0; k < kTrajectoryPoints; ++k) {
                const auto& pj = j["trajectory"][static_cast<std::size_t>(k)];
                if (!pj.is_array() || pj.size() != 3) {
                    throw DataError("field \"trajectory\" must hold [x, y, heading] points");
                }
                t.points[static_cast<std::size_t>(k)] =
                    Pose2D{pj[0].get<double>(), pj[1].get<double>(), pj[2].get<double>()};
            }
            std::string why;
            if (!trajectory_valid(t, &why)) {
                throw DataError("invariant violation: " + why);
            }
            out.emplace_back(j["id"].get<std::string>(), t);
        } catch (const ordered_json::parse_error& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        } catch (const DataError& e) {
            throw DataError(path + ": line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_trajectory_file(const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                          const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    for (const auto& [id, traj] : trajectories) {
        ordered_json j;
        j["id"] = id;
        ordered_json pts = ordered_json::array();
        for (const Pose2D& p : traj.points) {
            pts.push_back(ordered_json::array({p.x, p.y, p.heading}));
        }
        j["trajectory"] = pts;
        out << j.dump() << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

// --- score ---------------------------------------------------------------------

namespace {

ScoreRow row_of(const std::string& id, const MetricReport& report, const PdmsWeights& weights) {
    ScoreRow row;
    row.id = id;
    row.nc = report.nc;
    row.dac = report.dac;
    row.ttc = report.ttc;
    row.comfort = report.comfort;
    row.ep = report.ep;
    row.pdms = compose_pdms(report, weights);
    return row;
}

void accumulate(ScoreRow& acc, const ScoreRow& row) {
    acc.nc += row.nc;
    acc.dac += row.dac;
    acc.ttc += row.ttc;
    acc.comfort += row.comfort;
    acc.ep += row.ep;
    acc.pdms += row.pdms;
}

void finish_mean(ScoreRow& acc, std::size_t n) {
    acc.id = "MEAN";
    if (n == 0) {
        return;
    }
    const double inv = 1.0 / static_cast<double>(n);
    acc.nc *= inv;
    acc.dac *= inv;
    acc.ttc *= inv;
    acc.comfort *= inv;
    acc.ep *= inv;
    acc.pdms *= inv;
}

}  // namespace

ScoreResult score_trajectories(const std::vector<Scenario>& corpus,
                               const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                               PerceptionMode mode, const PdmConfig& cfg) {
    std::map<std::string, const Scenario*> by_id;
    for (const Scenario& s : corpus) {
        by_id[s.id] = &s;
    }
    ScoreResult result;
    for (const auto& [id, traj] : trajectories) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw DataError("trajectory id has no scenario in the corpus: " + id);
        }
        const MetricReport report = evaluate_trajectory(traj, *it->second, mode, cfg, true);
        const ScoreRow row = row_of(id, report, cfg.weights);
        accumulate(result.mean, row);
        result.rows.push_back(row);
    }
    finish_mean(result.mean, result.rows.size());
    return result;
}

void write_score_csv(const ScoreResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    out << "id,nc,dac,ttc,cf,ep,pdms\n";
    char line[256];
    auto emit = [&](const ScoreRow& r) {
        std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.id.c_str(), r.nc,
                      r.dac, r.ttc, r.comfort, r.ep, r.pdms);
        out << line;
    };
    for (const ScoreRow& r : result.rows) {
        emit(r);
    }
    emit(result.mean);
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

// --- eval ------------------------------------------------------------------------

EvalResult run_eval(const PolicyParams& params, const std::vector<Scenario>& corpus,
                    const EvalConfig& cfg, std::uint64_t seed, int jobs,
                    const std::string& out_dir) {
    if (corpus.empty()) {
        throw DataError("evaluation corpus is empty");
    }
    if (cfg.episodes_per_scenario < 1) {
        throw ConfigError("episodes_per_scenario must be at least 1");
    }
    const int budgets = cfg.env.max_turns;
    const std::size_t episodes =
        corpus.size() * static_cast<std::size_t>(cfg.episodes_per_scenario);

    std::vector<Rollout> rollouts(episodes);
    parallel_for(jobs, episodes, [&](std::size_t slot) {
        const std::size_t si = slot / static_cast<std::size_t>(cfg.episodes_per_scenario);
        const std::size_t e = slot % static_cast<std::size_t>(cfg.episodes_per_scenario);
        const std::uint64_t episode_seed =
            hash_mix(hash_mix(hash_mix(seed, 0x6576616cull), hash_str(corpus[si].id)), e);
        rollouts[slot] = run_episode(params, corpus[si], cfg.env, episode_seed);
    });

    EvalResult result;
    result.pdms_by_budget.assign(static_cast<std::size_t>(budgets), 0.0);

    // budget-b trajectory: last parseable one within the first b turns
    auto traj_at_budget = [](const Rollout& r, int budget) -> const Trajectory* {
        const Trajectory* best = nullptr;
        for (const TurnRecord& t : r.turns) {
            if (t.turn_index > budget) {
                break;
            }
            if (t.trajectory.has_value()) {
                best = &*t.trajectory;
            }
        }
        return best;
    };

    std::vector<ScoreRow> per_scenario(corpus.size());
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        per_scenario[si].id = corpus[si].id;
    }

    for (std::size_t slot = 0; slot < episodes; ++slot) {
        const std::size_t si = slot / static_cast<std::size_t>(cfg.episodes_per_scenario);
        const Scenario& scenario = corpus[si];
        for (int b = 1; b <= budgets; ++b) {
            const Trajectory* traj = traj_at_budget(rollouts[slot], b);
            double pdms = 0.0;
            if (traj != nullptr) {
                const MetricReport report =
                    evaluate_trajectory(*traj, scenario, cfg.env.perception, cfg.env.pdm, true);
                pdms = compose_pdms(report, cfg.env.pdm.weights);
                if (b == budgets) {
                    accumulate(per_scenario[si], row_of(scenario.id, report, cfg.env.pdm.weights));
                }
            } else if (b == budgets) {
                accumulate(per_scenario[si], ScoreRow{});
            }
            result.pdms_by_budget[static_cast<std::size_t>(b - 1)] += pdms;
        }
    }
    for (double& v : result.pdms_by_budget) {
        v /= static_cast<double>(episodes);
    }
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        const double inv = 1.0 / static_cast<double>(cfg.episodes_per_scenario);
        per_scenario[si].nc *= inv;
        per_scenario[si].dac *= inv;
        per_scenario[si].ttc *= inv;
        per_scenario[si].comfort *= inv;
        per_scenario[si].ep *= inv;
        per_scenario[si].pdms *= inv;
        accumulate(result.final_table.mean, per_scenario[si]);
    }
    result.final_table.rows = std::move(per_scenario);
    finish_mean(result.final_table.mean, result.final_table.rows.size());

    // first episode's final trajectory per scenario
    for (std::size_t si = 0; si < corpus.size(); ++si) {
        const Rollout& r = rollouts[si * static_cast<std::size_t>(cfg.episodes_per_scenario)];
        const Trajectory* traj = traj_at_budget(r, budgets);
        if (traj != nullptr) {
            result.final_trajectories.emplace_back(corpus[si].id, *traj);
        }
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        {
            std::ofstream out(fs::path(out_dir) / "per_turn.csv", std::ios::binary);
            if (!out) {
                throw DataError("cannot open for writing: " + out_dir + "/per_turn.csv");
            }
            out << "turn_budget,mean_pdms\n";
            char line[64];
            for (int b = 1; b <= budgets; ++b) {
                std::snprintf(line, sizeof line, "%d,%.6f\n", b,
                              result.pdms_by_budget[static_cast<std::size_t>(b - 1)]);
                out << line;
            }
        }
        write_score_csv(result.final_table, (fs::path(out_dir) / "final_table.csv").string());
        save_trajectory_file(result.final_trajectories,
                             (fs::path(out_dir) / "trajectories.jsonl").string());
        if (cfg.write_plots) {
            const fs::path plot_dir = fs::path(out_dir) / "plots";
            fs::create_directories(plot_dir);
            const std::size_t limit =
                cfg.plot_limit > 0 ? static_cast<std::size_t>(cfg.plot_limit) : corpus.size();
            for (std::size_t si = 0; si < corpus.size() && si < limit; ++si) {
                const Rollout& r =
                    rollouts[si * static_cast<std::size_t>(cfg.episodes_per_scenario)];
                std::vector<BevTurnLayer> layers;
                for (const TurnRecord& t : r.turns) {
                    BevTurnLayer layer;
                    layer.trajectory = t.trajectory.has_value() ? &*t.trajectory : nullptr;
                    layer.report = t.trajectory.has_value() ? &t.report : nullptr;
                    layers.push_back(layer);
                }
                write_bev_svg((plot_dir / (corpus[si].id + ".svg")).string(), corpus[si], layers);
            }
        }
    }
    return result;
}

// --- train ------------------------------------------------------------------------

TrainRunResult run_train(PolicyParams& params, const std::vector<Scenario>& corpus,
                         const KvConfig& kv, std::uint64_t seed, int jobs,
                         const std::string& out_dir, bool warm_start) {
    const EnvConfig env_cfg = env_config_from(kv);
    TrainConfig train_cfg = train_config_from(kv);
    train_cfg.jobs = jobs;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
    }
    if (warm_start) {
        warm_start_policy(params, corpus, env_cfg, warm_start_config_from(kv),
                          hash_mix(seed, 0x7773ull));
        if (!out_dir.empty()) {
            save_policy(params, (fs::path(out_dir) / "policy_warmstart.ckpt").string());
        }
    }
    TrainRunResult result;
    result.log = train_policy(params, corpus, env_cfg, train_cfg, seed, out_dir);
    if (!out_dir.empty()) {
        write_train_log(result.log, env_cfg.max_turns, (fs::path(out_dir) / "train_log.csv").string());
    }
    return result;
}

// --- ablate -----------------------------------------------------------------------

AblateResult run_ablate(const std::vector<Scenario>& corpus, const KvConfig& kv,
                        std::uint64_t seed, int jobs, const std::string& out_dir) {
    const EnvConfig env_cfg = env_config_from(kv);
    fs::create_directories(out_dir);

    // one shared warm start for every mode
    PolicyParams warm = init_policy(policy_config_from(kv), seed);
    warm_start_policy(warm, corpus, env_cfg, warm_start_config_from(kv), hash_mix(seed, 0x7773ull));
    const std::string warm_path = (fs::path(out_dir) / "policy_warmstart.ckpt").string();
    save_policy(warm, warm_path);
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(hash_file(warm_path)));

    EvalConfig eval_cfg;
    eval_cfg.env = env_cfg;
    eval_cfg.episodes_per_scenario = kv.get_int("eval_episodes", 1);
    eval_cfg.write_plots = false;

    AblateResult result;
    for (AdvantageMode mode :
         {AdvantageMode::SEQ_GRPO, AdvantageMode::PER_TURN, AdvantageMode::POOLED_GROUP}) {
        TrainConfig train_cfg = train_config_from(kv);
        train_cfg.advantage_mode = mode;
        train_cfg.jobs = jobs;
        const std::string mode_dir = (fs::path(out_dir) / advantage_mode_name(mode)).string();
        fs::create_directories(mode_dir);
        PolicyParams params = warm;
        const std::vector<TrainStepMetrics> log =
            train_policy(params, corpus, env_cfg, train_cfg, seed, mode_dir);
        write_train_log(log, env_cfg.max_turns, (fs::path(mode_dir) / "train_log.csv").string());
        const EvalResult eval =
            run_eval(params, corpus, eval_cfg, hash_mix(seed, 0x6162ull), jobs, "");
        AblateRow row;
        row.mode = advantage_mode_name(mode);
        row.metrics = eval.final_table.mean;
        row.metrics.id = row.mode;
        row.warm_start_hash = hash_hex;
        result.rows.push_back(std::move(row));
    }
    write_ablate_csv(result, (fs::path(out_dir) / "ablate.csv").string());
    return result;
}

void write_ablate_csv(const AblateResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    out << "mode,nc,dac,ttc,cf,ep,pdms,warm_start_hash\n";
    char line[320];
    for (const AblateRow& r : result.rows) {
        std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%s\n", r.mode.c_str(),
                      r.metrics.nc, r.metrics.dac, r.metrics.ttc, r.metrics.comfort, r.metrics.ep,
                      r.metrics.pdms, r.warm_start_hash.c_str());
        out << line;
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

// --- curate -----------------------------------------------------------------------

void run_curate(const PolicyParams* policy, const std::vector<Scenario>& corpus,
                const std::string& task, const KvConfig& kv, std::uint64_t seed,
                const std::string& out_path) {
    const EnvConfig env_cfg = env_config_from(kv);
    auto need_policy = [&]() -> const PolicyParams& {
        if (policy == nullptr) {
            throw ConfigError("curate task \"" + task + "\" needs a policy checkpoint");
        }
        return *policy;
    };
    if (task == "bootstrap") {
        const int depth = kv.get_int("depth", 1);
        save_samples(bootstrap_round(need_policy(), corpus, depth, env_cfg, seed), out_path);
    } else if (task == "constvel") {
        save_samples(const_velocity_round(corpus, env_cfg), out_path);
    } else if (task == "mock") {
        const int depth = kv.get_int("depth", 4);
        const int runs = kv.get_int("runs", 2);
        const double fraction = kv.get_double("fraction", 0.1);
        save_samples(mock_multiturn(need_policy(), corpus, depth, runs, fraction, env_cfg, seed),
                     out_path);
    } else if (task == "qa") {
        const int per_scenario = kv.get_int("per_scenario", 4);
        save_qa(gen_pdm_qa(corpus, per_scenario, seed, env_cfg.pdm), out_path);
    } else if (task == "filter") {
        const double threshold = kv.get_double("threshold", 0.8);
        const double other_fraction = kv.get_double("other_fraction", 0.33);
        save_split(filter_rl_data(need_policy(), corpus, threshold, other_fraction, env_cfg, seed),
                   corpus, out_path);
    } else {
        throw ConfigError("unknown curate task: " + task);
    }
}

// --- bench ------------------------------------------------------------------------

void run_bench(const KvConfig& kv, const std::string& out_csv, const std::string& out_report) {
    const pipeline::BenchConfig cfg = bench_config_from(kv);
    const std::vector<pipeline::BenchCell> cells = pipeline::bench(cfg);
    if (!out_csv.empty()) {
        pipeline::write_bench_csv(cells, out_csv);
    }
    if (!out_report.empty()) {
        std::ofstream out(out_report, std::ios::binary);
        if (!out) {
            throw DataError("cannot open for writing: " + out_report);
        }
        out << pipeline::bench_report(cells);
    }
}

}  // namespace mtdrive
