#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mtdrive/env.hpp"
#include "mtdrive/policy.hpp"

namespace mtdrive {

struct RewardConfig {
    double w_p = 0.8;  // PDM score weight
    double w_f = 0.2;  // format score weight
    // Optional per-turn multiplicative weights (1-based turn index maps to
    // entry index-1). Empty = disabled.
    std::vector<double> progressive_turn_weights;
};

// r = w_p * p + w_f * f, scaled by the progressive turn weight when set.
double turn_reward(double p, int f, const RewardConfig& cfg, int turn_index);

// SEQ_GRPO:     rollout-mean reward, normalized across the group, broadcast
//               to every response token.
// PER_TURN:     rewards normalized per turn index across the rollouts that
//               reached that turn (intra-group normalization).
// POOLED_GROUP: one normalization over all (rollout, turn) rewards in the
//               group (cross-turn normalization).
enum class AdvantageMode { SEQ_GRPO, PER_TURN, POOLED_GROUP };

std::string advantage_mode_name(AdvantageMode mode);
AdvantageMode advantage_mode_from_string(const std::string& name);

// One advantage value per (rollout, turn); every response token of a turn
// carries its turn's value.
struct AdvantageSet {
    std::vector<std::vector<double>> turn_advantage;
};

std::vector<std::vector<double>> group_turn_rewards(const std::vector<Rollout>& group,
                                                    const RewardConfig& cfg);

// The normalization kernel. Population std, denominator floored at 1e-6;
// a turn index present in a single rollout gets advantage 0.
AdvantageSet normalize_advantages(const std::vector<std::vector<double>>& rewards,
                                  AdvantageMode mode);

AdvantageSet compute_advantages(const std::vector<Rollout>& group, AdvantageMode mode,
                                const RewardConfig& cfg);

// Per-token k3 = exp(d) - d - 1 with d = logp_ref - logp_policy; always >= 0.
std::vector<double> k3_kl(const std::vector<double>& logp_policy,
                          const std::vector<double>& logp_ref);

struct LossConfig {
    double clip_eps = 0.2;
    double kl_beta = 0.01;
    double temperature = 1.0;
};

// Token data of one rollout, flattened across its turns in order.
struct RolloutTokens {
    std::vector<TurnTokens> turns;
    std::vector<double> old_logp;
    std::vector<double> ref_logp;
    std::vector<double> advantage;

    std::size_t token_count() const {
        std::size_t n = 0;
        for (const TurnTokens& t : turns) {
            n += t.tokens.size();
        }
        return n;
    }
};

// Assembles loss inputs from an episode: contexts and response tokens from
// the turn records, sample-time log-probs as old_logp, reference log-probs
// recomputed under `ref`, and the turn advantage broadcast per token.
RolloutTokens rollout_tokens_of(const Rollout& rollout, const std::vector<double>& turn_advantages,
                                const PolicySnapshot& ref, double temperature);

struct LossStats {
    double objective = 0.0;
    double clip_fraction = 0.0;  // tokens where the clipped branch is strictly active
    double mean_kl = 0.0;
    std::size_t token_count = 0;
};

// Clipped surrogate with per-token K3 KL, token-mean per rollout, mean over
// the batch. The clipped branch detaches the ratio, so its tokens carry no
// surrogate gradient. Throws DivergenceError on non-finite log-probs.
LossStats mtgrpo_loss(const PolicyParams& params, const std::vector<const RolloutTokens*>& batch,
                      const LossConfig& cfg, std::vector<double>* grad, int jobs = 1);

struct TrainConfig {
    int group_size = 8;            // G
    int global_batch = 256;        // rollouts per step
    int mini_batch = 128;          // rollouts per gradient update
    double learning_rate = 1e-2;   // toy-policy scale; see README for the paper-scale value
    double kl_beta = 0.01;
    std::string kl_estimator = "k3";
    double clip_eps = 0.2;
    int inner_epochs = 2;          // mu
    int outer_iterations = 10;     // I, refreshes the reference snapshot
    int steps_per_iteration = 30;  // M
    AdvantageMode advantage_mode = AdvantageMode::PER_TURN;
    RewardConfig reward;
    double divergence_guard = 1e3;  // abort when mean |grad| exceeds this
    int checkpoint_every = 0;       // steps; 0 = final checkpoint only
    int jobs = 1;
};

struct TrainStepMetrics {
    int step = 0;
    std::vector<double> mean_reward_per_turn;
    double mean_pdms = 0.0;
    double clip_frac = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

using StepCallback = std::function<void(const TrainStepMetrics&)>;

// The full training loop: per outer iteration the reference snapshot is
// refreshed; per step the old policy is frozen, G rollouts per scenario are
// generated, turn rewards and advantages computed, and mu epochs of
// mini-batch gradient ascent run. Bit-deterministic in (params, corpus,
// configs, seed) for any jobs value.
std::vector<TrainStepMetrics> train_policy(PolicyParams& params, const std::vector<Scenario>& corpus,
                                           const EnvConfig& env_cfg, const TrainConfig& cfg,
                                           std::uint64_t seed, const std::string& checkpoint_dir,
                                           const StepCallback& on_step = {});

// CSV: step, mean_reward_turn_1..N, mean_pdms, clip_frac, kl, grad_norm,
// wall_ms. wall_ms is the only column exempt from byte-determinism.
void write_train_log(const std::vector<TrainStepMetrics>& log, int max_turns,
                     const std::string& path);

}  // namespace mtdrive
