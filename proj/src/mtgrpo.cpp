#include "mtdrive/mtgrpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mtdrive/errors.hpp"
#include "mtdrive/rng.hpp"
#include "parallel.hpp"

namespace mtdrive {

namespace {

constexpr double kStdFloor = 1e-6;

struct Moments {
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t count = 0;
};

Moments population_moments(const std::vector<double>& values) {
    Moments m;
    m.count = values.size();
    if (values.empty()) {
        return m;
    }
    m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - m.mean) * (v - m.mean);
    }
    m.std_dev = std::sqrt(var / static_cast<double>(values.size()));
    return m;
}

}  // namespace

double turn_reward(double p, int f, const RewardConfig& cfg, int turn_index) {
    double r = cfg.w_p * p + cfg.w_f * static_cast<double>(f);
    if (!cfg.progressive_turn_weights.empty()) {
        const std::size_t idx = static_cast<std::size_t>(std::max(turn_index - 1, 0));
        if (idx < cfg.progressive_turn_weights.size()) {
            r *= cfg.progressive_turn_weights[idx];
        }
    }
    return r;
}

std::string advantage_mode_name(AdvantageMode mode) {
    switch (mode) {
        case AdvantageMode::SEQ_GRPO: return "seq_grpo";
        case AdvantageMode::PER_TURN: return "per_turn";
        case AdvantageMode::POOLED_GROUP: return "pooled_group";
    }
    return "per_turn";
}

AdvantageMode advantage_mode_from_string(const std::string& name) {
    if (name == "seq_grpo") {
        return AdvantageMode::SEQ_GRPO;
    }
    if (name == "per_turn") {
        return AdvantageMode::PER_TURN;
    }
    if (name == "pooled_group") {
        return AdvantageMode::POOLED_GROUP;
    }
    throw ConfigError("unknown advantage mode: " + name);
}

std::vector<std::vector<double>> group_turn_rewards(const std::vector<Rollout>& group,
                                                    const RewardConfig& cfg) {
    std::vector<std::vector<double>> rewards;
    rewards.reserve(group.size());
    for (const Rollout& r : group) {
        std::vector<double> rs;
        rs.reserve(r.turns.size());
        for (const TurnRecord& t : r.turns) {
            rs.push_back(turn_reward(t.p, t.f, cfg, t.turn_index));
        }
        rewards.push_back(std::move(rs));
    }
    return rewards;
}

AdvantageSet normalize_advantages(const std::vector<std::vector<double>>& rewards,
                                  AdvantageMode mode) {
    const std::size_t group_size = rewards.size();
    if (group_size < 2) {
        throw ConfigError("advantage normalization needs a group of at least 2 rollouts");
    }
    AdvantageSet out;
    out.turn_advantage.resize(group_size);
    for (std::size_t i = 0; i < group_size; ++i) {
        out.turn_advantage[i].assign(rewards[i].size(), 0.0);
        if (rewards[i].empty()) {
            throw ConfigError("every rollout must have at least one turn");
        }
    }

    switch (mode) {
        case AdvantageMode::SEQ_GRPO: {
            std::vector<double> scalar(group_size, 0.0);
            for (std::size_t i = 0; i < group_size; ++i) {
                scalar[i] = std::accumulate(rewards[i].begin(), rewards[i].end(), 0.0) /
                            static_cast<double>(rewards[i].size());
            }
            const Moments m = population_moments(scalar);
            for (std::size_t i = 0; i < group_size; ++i) {
                const double adv = (scalar[i] - m.mean) / std::max(m.std_dev, kStdFloor);
                std::fill(out.turn_advantage[i].begin(), out.turn_advantage[i].end(), adv);
            }
            break;
        }
        case AdvantageMode::PER_TURN: {
            std::size_t max_turns = 0;
            for (const auto& rs : rewards) {
                max_turns = std::max(max_turns, rs.size());
            }
            for (std::size_t j = 0; j < max_turns; ++j) {
                std::vector<double> column;
                for (const auto& rs : rewards) {
                    if (j < rs.size()) {
                        column.push_back(rs[j]);
                    }
                }
                if (column.size() < 2) {
                    continue;  // a turn owned by a single rollout gets advantage 0
                }
                const Moments m = population_moments(column);
                for (std::size_t i = 0; i < group_size; ++i) {
                    if (j < rewards[i].size()) {
                        out.turn_advantage[i][j] =
                            (rewards[i][j] - m.mean) / std::max(m.std_dev, kStdFloor);
                    }
                }
            }
            break;
        }
        case AdvantageMode::POOLED_GROUP: {
            std::vector<double> pooled;
            for (const auto& rs : rewards) {
                pooled.insert(pooled.end(), rs.begin(), rs.end());
            }
            const Moments m = population_moments(pooled);
            for (std::size_t i = 0; i < group_size; ++i) {
                for (std::size_t j = 0; j < rewards[i].size(); ++j) {
                    out.turn_advantage[i][j] =
                        (rewards[i][j] - m.mean) / std::max(m.std_dev, kStdFloor);
                }
            }
            break;
        }
    }
    return out;
}

AdvantageSet compute_advantages(const std::vector<Rollout>& group, AdvantageMode mode,
                                const RewardConfig& cfg) {
    return normalize_advantages(group_turn_rewards(group, cfg), mode);
}

std::vector<double> k3_kl(const std::vector<double>& logp_policy,
                          const std::vector<double>& logp_ref) {
    if (logp_policy.size() != logp_ref.size()) {
        throw ConfigError("k3 estimator needs aligned token sequences");
    }
    std::vector<double> out(logp_policy.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = logp_ref[i] - logp_policy[i];
        out[i] = std::exp(d) - d - 1.0;
    }
    return out;
}

RolloutTokens rollout_tokens_of(const Rollout& rollout, const std::vector<double>& turn_advantages,
                                const PolicySnapshot& ref, double temperature) {
    if (turn_advantages.size() != rollout.turns.size()) {
        throw ConfigError("advantage count does not match the rollout's turn count");
    }
    RolloutTokens out;
    out.turns.reserve(rollout.turns.size());
    for (std::size_t j = 0; j < rollout.turns.size(); ++j) {
        const TurnRecord& rec = rollout.turns[j];
        TurnTokens turn;
        turn.features = rec.context;
        turn.tokens = rec.response_tokens;
        out.turns.push_back(std::move(turn));
        for (std::size_t t = 0; t < rec.response_tokens.size(); ++t) {
            out.old_logp.push_back(rec.response_logps[t]);
            out.advantage.push_back(turn_advantages[j]);
        }
    }
    policy_weighted_logprob(
        ref, out.turns, [](std::size_t, double) { return 0.0; }, temperature, nullptr,
        &out.ref_logp);
    return out;
}

namespace {

struct RolloutLossResult {
    double objective = 0.0;
    double kl_sum = 0.0;
    std::size_t clipped = 0;
    std::size_t tokens = 0;
};

// Objective and gradient contribution of one rollout, already scaled by
// 1 / (batch_size * |o_i|).
RolloutLossResult rollout_loss(const PolicyParams& params, const RolloutTokens& item,
                               const LossConfig& cfg, double batch_scale,
                               std::vector<double>* grad) {
    RolloutLossResult res;
    res.tokens = item.token_count();
    if (res.tokens == 0) {
        return res;
    }
    if (item.old_logp.size() != res.tokens || item.ref_logp.size() != res.tokens ||
        item.advantage.size() != res.tokens) {
        throw ConfigError("rollout token arrays are misaligned");
    }
    const double scale = batch_scale / static_cast<double>(res.tokens);

    policy_weighted_logprob(
        params, item.turns,
        [&](std::size_t t, double logp) {
            if (!std::isfinite(logp)) {
                throw DivergenceError("non-finite log-prob in the policy forward pass");
            }
            const double adv = item.advantage[t];
            const double ratio = std::exp(logp - item.old_logp[t]);
            const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            const double unclipped = ratio * adv;
            const double clipped = clipped_ratio * adv;
            const double d = item.ref_logp[t] - logp;
            const double k3 = std::exp(d) - d - 1.0;
            res.objective += scale * (std::min(unclipped, clipped) - cfg.kl_beta * k3);
            res.kl_sum += k3;
            double w = 0.0;
            if (unclipped <= clipped) {
                w += ratio * adv;  // unclipped branch active: d(ratio*adv)/dlogp = ratio*adv
            } else {
                ++res.clipped;  // clipped branch detaches the ratio
            }
            w += cfg.kl_beta * (std::exp(d) - 1.0);  // d(-beta*k3)/dlogp
            return scale * w;
        },
        cfg.temperature, grad, nullptr);
    return res;
}

}  // namespace

LossStats mtgrpo_loss(const PolicyParams& params, const std::vector<const RolloutTokens*>& batch,
                      const LossConfig& cfg, std::vector<double>* grad, int jobs) {
    LossStats stats;
    if (batch.empty()) {
        return stats;
    }
    const double batch_scale = 1.0 / static_cast<double>(batch.size());
    std::vector<RolloutLossResult> results(batch.size());

    if (grad == nullptr) {
        parallel_for(jobs, batch.size(), [&](std::size_t i) {
            results[i] = rollout_loss(params, *batch[i], cfg, batch_scale, nullptr);
        });
    } else {
        if (grad->size() != params.values.size()) {
            grad->assign(params.values.size(), 0.0);
        }
        // Per-rollout gradient buffers reduced in index order keep the result
        // bit-identical for every job count.
        std::vector<std::vector<double>> buffers(batch.size());
        parallel_for(jobs, batch.size(), [&](std::size_t i) {
            buffers[i].assign(params.values.size(), 0.0);
            results[i] = rollout_loss(params, *batch[i], cfg, batch_scale, &buffers[i]);
        });
        for (const std::vector<double>& buf : buffers) {
            for (std::size_t k = 0; k < grad->size(); ++k) {
                (*grad)[k] += buf[k];
            }
        }
    }

    std::size_t clipped = 0;
    for (const RolloutLossResult& r : results) {
        stats.objective += r.objective;
        stats.mean_kl += r.kl_sum;
        clipped += r.clipped;
        stats.token_count += r.tokens;
    }
    if (stats.token_count > 0) {
        stats.mean_kl /= static_cast<double>(stats.token_count);
        stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(stats.token_count);
    }
    return stats;
}

namespace {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.group_size < 2) {
        throw ConfigError("group_size must be at least 2");
    }
    if (cfg.global_batch <= 0 || cfg.global_batch % cfg.group_size != 0) {
        throw ConfigError("global_batch must be a positive multiple of group_size");
    }
    if (cfg.mini_batch <= 0 || cfg.global_batch % cfg.mini_batch != 0) {
        throw ConfigError("mini_batch must divide global_batch");
    }
    if (cfg.kl_estimator != "k3") {
        throw ConfigError("only the k3 KL estimator is implemented");
    }
    if (cfg.inner_epochs < 1 || cfg.outer_iterations < 1 || cfg.steps_per_iteration < 1) {
        throw ConfigError("inner_epochs, outer_iterations, and steps_per_iteration must be >= 1");
    }
    if (cfg.reward.w_p < 0.0 || cfg.reward.w_f < 0.0) {
        throw ConfigError("reward weights must be nonnegative");
    }
}

double final_pdms(const Rollout& rollout, const Scenario& scenario, const EnvConfig& env_cfg) {
    for (auto it = rollout.turns.rbegin(); it != rollout.turns.rend(); ++it) {
        if (it->trajectory.has_value()) {
            const MetricReport report =
                evaluate_trajectory(*it->trajectory, scenario, env_cfg.perception, env_cfg.pdm, true);
            return compose_pdms(report, env_cfg.pdm.weights);
        }
    }
    return 0.0;
}

}  // namespace

std::vector<TrainStepMetrics> train_policy(PolicyParams& params, const std::vector<Scenario>& corpus,
                                           const EnvConfig& env_cfg, const TrainConfig& cfg,
                                           std::uint64_t seed, const std::string& checkpoint_dir,
                                           const StepCallback& on_step) {
    validate_train_config(cfg);
    if (corpus.empty()) {
        throw DataError("training corpus is empty");
    }
    const int scenarios_per_step = cfg.global_batch / cfg.group_size;
    const int total_rollouts = cfg.global_batch;
    const LossConfig loss_cfg{cfg.clip_eps, cfg.kl_beta, env_cfg.temperature};

    std::vector<TrainStepMetrics> log;
    int global_step = 0;
    for (int iteration = 1; iteration <= cfg.outer_iterations; ++iteration) {
        const PolicySnapshot ref = params;
        for (int m = 1; m <= cfg.steps_per_iteration; ++m) {
            ++global_step;
            const auto t0 = std::chrono::steady_clock::now();
            const PolicySnapshot old = params;

            // scenario batch, without replacement when the corpus allows
            std::vector<std::size_t> chosen(static_cast<std::size_t>(scenarios_per_step));
            SplitMix64 batch_rng(hash_mix(hash_mix(seed, 0x62617463ull), static_cast<std::uint64_t>(global_step)));
            if (corpus.size() >= chosen.size()) {
                std::vector<std::size_t> pool(corpus.size());
                std::iota(pool.begin(), pool.end(), 0);
                for (std::size_t i = 0; i < chosen.size(); ++i) {
                    const std::size_t j = i + static_cast<std::size_t>(batch_rng.next_below(pool.size() - i));
                    std::swap(pool[i], pool[j]);
                    chosen[i] = pool[i];
                }
            } else {
                for (std::size_t i = 0; i < chosen.size(); ++i) {
                    chosen[i] = static_cast<std::size_t>(batch_rng.next_below(corpus.size()));
                }
            }

            // rollout generation against the frozen old policy
            std::vector<Rollout> rollouts(static_cast<std::size_t>(total_rollouts));
            parallel_for(cfg.jobs, rollouts.size(), [&](std::size_t slot) {
                const std::size_t si = slot / static_cast<std::size_t>(cfg.group_size);
                const std::size_t g = slot % static_cast<std::size_t>(cfg.group_size);
                const Scenario& scenario = corpus[chosen[si]];
                const std::uint64_t episode_seed =
                    hash_mix(hash_mix(hash_mix(seed, static_cast<std::uint64_t>(global_step)),
                                      hash_str(scenario.id)),
                             g);
                rollouts[slot] = run_episode(old, scenario, env_cfg, episode_seed);
            });

            // turn rewards and group-relative advantages
            std::vector<std::vector<double>> advantages(rollouts.size());
            for (int si = 0; si < scenarios_per_step; ++si) {
                std::vector<Rollout> group(rollouts.begin() + si * cfg.group_size,
                                           rollouts.begin() + (si + 1) * cfg.group_size);
                const AdvantageSet adv = compute_advantages(group, cfg.advantage_mode, cfg.reward);
                for (int g = 0; g < cfg.group_size; ++g) {
                    advantages[static_cast<std::size_t>(si * cfg.group_size + g)] =
                        adv.turn_advantage[static_cast<std::size_t>(g)];
                }
            }

            // reference log-probs (once per step) and token assembly
            std::vector<RolloutTokens> items(rollouts.size());
            parallel_for(cfg.jobs, rollouts.size(), [&](std::size_t i) {
                items[i] = rollout_tokens_of(rollouts[i], advantages[i], ref, env_cfg.temperature);
            });

            // mu epochs of mini-batch ascent
            double clip_acc = 0.0;
            double kl_acc = 0.0;
            double grad_norm_acc = 0.0;
            int updates = 0;
            std::vector<double> grad(params.values.size(), 0.0);
            for (int epoch = 1; epoch <= cfg.inner_epochs; ++epoch) {
                std::vector<std::size_t> order(items.size());
                std::iota(order.begin(), order.end(), 0);
                SplitMix64 shuffle_rng(hash_mix(hash_mix(hash_mix(seed, 0x65706f63ull),
                                                         static_cast<std::uint64_t>(global_step)),
                                                static_cast<std::uint64_t>(epoch)));
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.next_below(i))]);
                }
                for (std::size_t start = 0; start < order.size();
                     start += static_cast<std::size_t>(cfg.mini_batch)) {
                    const std::size_t end =
                        std::min(order.size(), start + static_cast<std::size_t>(cfg.mini_batch));
                    std::vector<const RolloutTokens*> batch;
                    batch.reserve(end - start);
                    for (std::size_t i = start; i < end; ++i) {
                        batch.push_back(&items[order[i]]);
                    }
                    std::fill(grad.begin(), grad.end(), 0.0);
                    const LossStats stats = mtgrpo_loss(params, batch, loss_cfg, &grad, cfg.jobs);

                    double abs_sum = 0.0;
                    double sq_sum = 0.0;
                    bool finite = true;
                    for (double g : grad) {
                        abs_sum += std::fabs(g);
                        sq_sum += g * g;
                        finite = finite && std::isfinite(g);
                    }
                    const double mean_abs = abs_sum / static_cast<double>(grad.size());
                    if (!finite || mean_abs > cfg.divergence_guard) {
                        throw DivergenceError("training diverged: mean |grad| = " +
                                              std::to_string(mean_abs));
                    }
                    for (std::size_t k = 0; k < params.values.size(); ++k) {
                        params.values[k] += cfg.learning_rate * grad[k];
                        if (!std::isfinite(params.values[k])) {
                            throw DivergenceError("training diverged: non-finite parameter");
                        }
                    }
                    clip_acc += stats.clip_fraction;
                    kl_acc += stats.mean_kl;
                    grad_norm_acc += std::sqrt(sq_sum);
                    ++updates;
                }
            }

            // step metrics
            TrainStepMetrics metrics;
            metrics.step = global_step;
            metrics.mean_reward_per_turn.assign(static_cast<std::size_t>(env_cfg.max_turns), 0.0);
            std::vector<int> turn_counts(static_cast<std::size_t>(env_cfg.max_turns), 0);
            double pdms_sum = 0.0;
            for (std::size_t slot = 0; slot < rollouts.size(); ++slot) {
                const Rollout& r = rollouts[slot];
                for (const TurnRecord& t : r.turns) {
                    const std::size_t j = static_cast<std::size_t>(t.turn_index - 1);
                    metrics.mean_reward_per_turn[j] += turn_reward(t.p, t.f, cfg.reward, t.turn_index);
                    ++turn_counts[j];
                }
                pdms_sum += final_pdms(r, corpus[chosen[slot / static_cast<std::size_t>(cfg.group_size)]],
                                       env_cfg);
            }
            for (std::size_t j = 0; j < metrics.mean_reward_per_turn.size(); ++j) {
                if (turn_counts[j] > 0) {
                    metrics.mean_reward_per_turn[j] /= static_cast<double>(turn_counts[j]);
                }
            }
            metrics.mean_pdms = pdms_sum / static_cast<double>(rollouts.size());
            metrics.clip_frac = updates > 0 ? clip_acc / updates : 0.0;
            metrics.kl = updates > 0 ? kl_acc / updates : 0.0;
            metrics.grad_norm = updates > 0 ? grad_norm_acc / updates : 0.0;
            metrics.wall_ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
            log.push_back(metrics);
            if (on_step) {
                on_step(metrics);
            }

            if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 &&
                global_step % cfg.checkpoint_every == 0) {
                std::ostringstream name;
                name << "policy_step";
                name.fill('0');
                name.width(5);
                name << global_step;
                name << ".ckpt";
                save_policy(params, (std::filesystem::path(checkpoint_dir) / name.str()).string());
            }
        }
    }
    if (!checkpoint_dir.empty()) {
        save_policy(params, (std::filesystem::path(checkpoint_dir) / "policy_final.ckpt").string());
    }
    return log;
}

void write_train_log(const std::vector<TrainStepMetrics>& log, int max_turns,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open for writing: " + path);
    }
    out << "step";
    for (int j = 1; j <= max_turns; ++j) {
        out << ",mean_reward_turn_" << j;
    }
    out << ",mean_pdms,clip_frac,kl,grad_norm,wall_ms\n";
    out.precision(17);
    for (const TrainStepMetrics& m : log) {
        out << m.step;
        for (std::size_t j = 0; j < static_cast<std::size_t>(max_turns); ++j) {
            out << ',' << (j < m.mean_reward_per_turn.size() ? m.mean_reward_per_turn[j] : 0.0);
        }
        out << ',' << m.mean_pdms << ',' << m.clip_frac << ',' << m.kl << ',' << m.grad_norm << ','
            << m.wall_ms << '\n';
    }
    if (!out) {
        throw DataError("write failed: " + path);
    }
}

}  // namespace mtdrive
