#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mtdrive/rng.hpp"
#include "mtdrive/scenario.hpp"

namespace mtdrive {

// Waypoint tokens are (lateral offset, longitudinal step) bin pairs composed
// cumulatively in the heading frame; one extra id terminates the turn.
struct TokenCodec {
    int lateral_bins = 9;
    double lateral_min = -3.0;
    double lateral_max = 3.0;
    int longitudinal_bins = 9;
    double longitudinal_min = 0.0;
    double longitudinal_max = 6.0;

    int vocab_size() const { return lateral_bins * longitudinal_bins + 1; }
    int terminator_id() const { return lateral_bins * longitudinal_bins; }
    int token_id(int lat_bin, int lon_bin) const { return lat_bin * longitudinal_bins + lon_bin; }
    double lateral_value(int bin) const {
        return lateral_bins > 1
                   ? lateral_min + (lateral_max - lateral_min) * bin / (lateral_bins - 1)
                   : lateral_min;
    }
    double longitudinal_value(int bin) const {
        return longitudinal_bins > 1
                   ? longitudinal_min + (longitudinal_max - longitudinal_min) * bin / (longitudinal_bins - 1)
                   : longitudinal_min;
    }
};

// Cumulative composition of the 8 steps into poses; headings are the atan2 of
// consecutive deltas with the last copied from the previous point. Returns
// nullopt unless the sequence is exactly 8 waypoint tokens plus an optional
// terminator, every id in vocabulary.
std::optional<Trajectory> decode_tokens(const std::vector<int>& tokens, const TokenCodec& codec);

// Greedy stepwise quantization against the decoded-so-far state; returns
// 8 waypoint tokens followed by the terminator.
std::vector<int> encode_trajectory(const Trajectory& traj, const TokenCodec& codec);

struct PolicyConfig {
    TokenCodec codec;
    int feature_dim = 0;
    int embed_dim = 16;
    int hidden_dim = 64;
    int max_response_tokens = 9;  // 8 waypoints + terminator

    int input_dim() const { return feature_dim + embed_dim; }
    std::size_t w1_size() const { return static_cast<std::size_t>(hidden_dim) * input_dim(); }
    std::size_t b1_size() const { return static_cast<std::size_t>(hidden_dim); }
    std::size_t w2_size() const { return static_cast<std::size_t>(codec.vocab_size()) * hidden_dim; }
    std::size_t b2_size() const { return static_cast<std::size_t>(codec.vocab_size()); }
    std::size_t emb_size() const { return static_cast<std::size_t>(codec.vocab_size()) * embed_dim; }
    std::size_t pos_size() const { return static_cast<std::size_t>(max_response_tokens) * embed_dim; }
    std::size_t param_count() const {
        return w1_size() + b1_size() + w2_size() + b2_size() + emb_size() + pos_size();
    }
};

// Two-layer tanh network over context features plus the position-summed
// embeddings of the tokens emitted so far this turn. The flat parameter
// vector is the optimizer's and the finite-difference checks' view.
struct PolicyParams {
    PolicyConfig config;
    std::uint64_t init_seed = 0;
    std::vector<double> values;
};

// A frozen copy standing in for pi_old / pi_ref.
using PolicySnapshot = PolicyParams;

PolicyParams init_policy(const PolicyConfig& config, std::uint64_t seed);

// Deterministic forward pass to vocabulary logits.
std::vector<double> policy_logits(const PolicyParams& params, const std::vector<double>& features,
                                  const std::vector<int>& emitted_tokens);

struct SampledTurn {
    std::vector<int> tokens;
    std::vector<double> logps;  // log-prob of each sampled token
};

// Autoregressive categorical sampling, at most max_response_tokens tokens,
// stopping after the terminator. Temperatures near zero reduce to greedy
// argmax decoding.
SampledTurn sample_turn(const PolicyParams& params, const std::vector<double>& features,
                        double temperature, SplitMix64& rng);

// One turn's response under one context.
struct TurnTokens {
    std::vector<double> features;
    std::vector<int> tokens;
};

// Core scoring pass: computes log pi(token | context, prefix) for every token
// of every turn, calls weight_of(flat_index, logp) for the gradient weight of
// that token, and accumulates weight * d(logp)/d(theta) into grad (when grad
// is non-null). Returns the sum of weight * logp. logp_out, when non-null,
// receives the per-token log-probs.
double policy_weighted_logprob(const PolicyParams& params, const std::vector<TurnTokens>& turns,
                               const std::function<double(std::size_t, double)>& weight_of,
                               double temperature, std::vector<double>* grad,
                               std::vector<double>* logp_out);

struct LogProbGrad {
    double weighted_logprob = 0.0;
    std::vector<double> per_token_logp;
};

// Sum of weights[t] * logp_t and its exact analytic gradient. Throws
// ConfigError if weights does not match the token count.
LogProbGrad logprob_and_grad(const PolicyParams& params, const std::vector<TurnTokens>& turns,
                             const std::vector<double>& weights, double temperature,
                             std::vector<double>* grad);

// Flat little-endian float64 array after a one-line JSON header.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

// Behavior-cloning step: plain gradient ascent on mean token log-likelihood.
struct BcBatchItem {
    std::vector<double> features;
    std::vector<int> target_tokens;  // 8 waypoints + terminator
};

struct BcStats {
    double mean_logprob = 0.0;
    int token_count = 0;
};

BcStats bc_update(PolicyParams& params, const std::vector<const BcBatchItem*>& batch,
                  double learning_rate);

}  // namespace mtdrive
