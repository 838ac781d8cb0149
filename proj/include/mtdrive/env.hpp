#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtdrive/pdm.hpp"
#include "mtdrive/policy.hpp"
#include "mtdrive/scenario.hpp"

namespace mtdrive {

struct EnvConfig {
    int max_turns = 6;
    bool stop_on_clean = true;  // false = always-N ablation mode
    PerceptionMode perception = PerceptionMode::KINEMATIC;
    double temperature = 1.0;
    PdmConfig pdm;
};

// One propose-score-feedback cycle.
struct TurnRecord {
    int turn_index = 1;                   // 1-based
    std::vector<int> prompt_tokens;       // response tokens of all prior turns
    std::vector<int> response_tokens;
    std::vector<double> response_logps;   // sample-time log-probs from the acting policy
    std::vector<double> context;          // encoded context at turn start
    std::optional<Trajectory> trajectory; // nullopt on parse failure
    MetricReport report;                  // meaningful only when trajectory is set
    Feedback feedback;
    double p = 0.0;                       // agent PDM score
    int f = 0;                            // format score
};

struct Rollout {
    std::string scenario_id;
    std::vector<TurnRecord> turns;
    bool terminated_clean = false;
};

// What one finished turn contributes to later contexts.
struct TurnOutcome {
    std::optional<Trajectory> trajectory;
    Feedback feedback;
};

constexpr int kContextFeatureDim = 87;
constexpr int kContextAgentSlots = 4;

// Fixed-width numeric stand-in for the prompt: ego history deltas, navigation
// one-hot, nearest agents, corridor clearance at four lookahead stations,
// the previous trajectory, and the last turn's violation summary.
std::vector<double> encode_context(const Scenario& scenario, const std::vector<TurnOutcome>& history);

// 1 iff the tokens decode to a valid trajectory under the codec.
int format_score(const std::vector<int>& tokens, const TokenCodec& codec);

// Runs up to cfg.max_turns propose-score-feedback cycles. Deterministic in
// (params, scenario, cfg, seed).
Rollout run_episode(const PolicyParams& params, const Scenario& scenario, const EnvConfig& cfg,
                    std::uint64_t seed);

// Debug/curation dump, one JSON object per rollout:
// {"scenario_id", "terminated_clean", "turns": [{"j", "traj", "p", "f",
//  "nc", "dac", "ttc", "comfort", "feedback_text"}]}
void dump_rollouts(const std::vector<Rollout>& rollouts, const std::string& path);

}  // namespace mtdrive
