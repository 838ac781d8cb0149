#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtdrive/env.hpp"
#include "mtdrive/pdm.hpp"
#include "mtdrive/policy.hpp"

namespace mtdrive {

enum class SampleProvenance { BOOTSTRAP, CONST_VEL, MOCK };

std::string provenance_name(SampleProvenance p);

// One completed turn inside a refinement sample.
struct SampleTurn {
    std::vector<double> context;
    std::optional<Trajectory> predicted;
    Feedback feedback;
};

// k completed (prediction, feedback) turns; the expert trajectory is the
// target of turn k+1.
struct MultiTurnSample {
    std::string scenario_id;
    std::vector<SampleTurn> turns;
    Trajectory target;
    SampleProvenance provenance = SampleProvenance::BOOTSTRAP;
};

struct PdmQaSample {
    std::string scenario_id;
    std::string metric;  // "NC" | "DAC" | "TTC"
    Pose2D query_point;
    std::optional<OrientedBox> query_box;  // NC and TTC queries
    double query_speed = 0.0;              // TTC projection speed
    bool label = false;                    // yes/no
};

enum class RlCategory { TWO_TURN, LOW_SCORE, OTHER };

std::string rl_category_name(RlCategory c);

struct RlDataSplit {
    std::vector<RlCategory> category;   // aligned with the corpus
    std::vector<std::size_t> selected;  // ascending corpus indices
    double threshold = 0.8;
    double other_fraction = 0.0;
};

// Straight constant-velocity extrapolation of the ego history.
Trajectory constant_velocity_trajectory(const Scenario& scenario);

// Runs the policy for `current_depth` turns per scenario; where the last
// turn's feedback is non-empty, emits a (current_depth+1)-turn sample whose
// target is the scenario's expert trajectory.
std::vector<MultiTurnSample> bootstrap_round(const PolicyParams& policy,
                                             const std::vector<Scenario>& corpus, int current_depth,
                                             const EnvConfig& env_cfg, std::uint64_t seed);

// First turn replaced by the constant-velocity extrapolation; scenarios whose
// extrapolation draws feedback become 2-turn samples.
std::vector<MultiTurnSample> const_velocity_round(const std::vector<Scenario>& corpus,
                                                  const EnvConfig& env_cfg);

// Stacks feedback-bearing turns from `runs` independent 3-turn episodes into
// deeper contexts. Depth is capped by the turns actually available; the
// keep_fraction subsample is seeded and deterministic.
std::vector<MultiTurnSample> mock_multiturn(const PolicyParams& policy,
                                            const std::vector<Scenario>& corpus, int depth, int runs,
                                            double keep_fraction, const EnvConfig& env_cfg,
                                            std::uint64_t seed);

// Balanced positive/negative queries per metric (DAC point queries, NC and
// TTC (point, box) queries), labels computed by the scorer itself.
std::vector<PdmQaSample> gen_pdm_qa(const std::vector<Scenario>& corpus, int per_scenario,
                                    std::uint64_t seed, const PdmConfig& pdm = {});

// Single-metric verdicts backing the QA labels.
bool nc_conflict(const Pose2D& point, const OrientedBox& box, const PdmConfig& cfg = {});
bool ttc_conflict(const Pose2D& point, double speed, const OrientedBox& box,
                  const PdmConfig& cfg = {});

// One inference pass per scenario. TWO_TURN: first-turn feedback non-empty;
// else LOW_SCORE when the first-turn PDM score is below the threshold; else
// OTHER. Selection: all of the first two categories plus a seeded fraction
// of OTHER.
RlDataSplit filter_rl_data(const PolicyParams& policy, const std::vector<Scenario>& corpus,
                           double threshold, double other_fraction, const EnvConfig& env_cfg,
                           std::uint64_t seed);

void save_samples(const std::vector<MultiTurnSample>& samples, const std::string& path);
void save_qa(const std::vector<PdmQaSample>& samples, const std::string& path);
void save_split(const RlDataSplit& split, const std::vector<Scenario>& corpus,
                const std::string& path);

struct WarmStartConfig {
    int epochs = 10;
    double learning_rate = 0.3;
    int mini_batch = 16;
    int bootstrap_rounds = 1;
    double mock_fraction = 0.1;
    int mock_depth = 4;
    int mock_runs = 2;
    bool include_const_velocity = true;
};

// Behavior-cloning cold start: expert cloning on first-turn contexts, then on
// the feedback contexts produced by the curation rounds.
void warm_start_policy(PolicyParams& params, const std::vector<Scenario>& corpus,
                       const EnvConfig& env_cfg, const WarmStartConfig& cfg, std::uint64_t seed);

}  // namespace mtdrive
