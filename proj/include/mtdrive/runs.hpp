#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mtdrive/config.hpp"
#include "mtdrive/curation.hpp"
#include "mtdrive/env.hpp"
#include "mtdrive/mtgrpo.hpp"
#include "mtdrive/pipeline.hpp"

namespace mtdrive {

// Config-key -> struct adapters. Unknown keys are ignored so one file can
// configure several commands.
PdmConfig pdm_config_from(const KvConfig& kv);
EnvConfig env_config_from(const KvConfig& kv);
TrainConfig train_config_from(const KvConfig& kv);
WarmStartConfig warm_start_config_from(const KvConfig& kv);
PolicyConfig policy_config_from(const KvConfig& kv);
pipeline::BenchConfig bench_config_from(const KvConfig& kv);

std::uint64_t hash_file(const std::string& path);  // FNV-1a over the bytes

// --- score -----------------------------------------------------------------

struct ScoreRow {
    std::string id;
    double nc = 0.0;
    double dac = 0.0;
    double ttc = 0.0;
    double comfort = 0.0;
    double ep = 0.0;
    double pdms = 0.0;
};

struct ScoreResult {
    std::vector<ScoreRow> rows;
    ScoreRow mean;  // id = "MEAN"
};

// Trajectory files: JSONL of {"id": ..., "trajectory": [[x,y,h] x 8]}.
std::vector<std::pair<std::string, Trajectory>> load_trajectory_file(const std::string& path);
void save_trajectory_file(const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                          const std::string& path);

// Throws DataError when a trajectory id has no scenario.
ScoreResult score_trajectories(const std::vector<Scenario>& corpus,
                               const std::vector<std::pair<std::string, Trajectory>>& trajectories,
                               PerceptionMode mode, const PdmConfig& cfg);

void write_score_csv(const ScoreResult& result, const std::string& path);

// --- eval --------------------------------------------------------------------

struct EvalConfig {
    EnvConfig env;
    int episodes_per_scenario = 1;
    bool write_plots = true;
    int plot_limit = 0;  // 0 = every scenario
};

struct EvalResult {
    std::vector<double> pdms_by_budget;  // mean PDMS with the turn budget capped at 1..N
    ScoreResult final_table;             // per-scenario metrics at the full budget
    std::vector<std::pair<std::string, Trajectory>> final_trajectories;
};

// Evaluates with sampled episodes; the trajectory "after b turns" is the last
// parseable one within the first b turns. Writes per_turn.csv,
// final_table.csv, trajectories.jsonl, and plots/ when out_dir is non-empty.
EvalResult run_eval(const PolicyParams& params, const std::vector<Scenario>& corpus,
                    const EvalConfig& cfg, std::uint64_t seed, int jobs,
                    const std::string& out_dir);

// --- train / ablate ----------------------------------------------------------

struct TrainRunResult {
    std::vector<TrainStepMetrics> log;
};

// Warm start (unless the policy came from a checkpoint), then the RL loop.
// Writes train_log.csv and checkpoints into out_dir.
TrainRunResult run_train(PolicyParams& params, const std::vector<Scenario>& corpus,
                         const KvConfig& kv, std::uint64_t seed, int jobs,
                         const std::string& out_dir, bool warm_start);

struct AblateRow {
    std::string mode;
    ScoreRow metrics;
    std::string warm_start_hash;
};

struct AblateResult {
    std::vector<AblateRow> rows;
};

// Trains each advantage mode from one shared warm start and evaluates on the
// same seeds; writes ablate.csv plus per-mode logs and checkpoints.
AblateResult run_ablate(const std::vector<Scenario>& corpus, const KvConfig& kv,
                        std::uint64_t seed, int jobs, const std::string& out_dir);

void write_ablate_csv(const AblateResult& result, const std::string& path);

// --- curate / bench ----------------------------------------------------------

// task: bootstrap | constvel | mock | qa | filter. The policy may be null for
// constvel and qa.
void run_curate(const PolicyParams* policy, const std::vector<Scenario>& corpus,
                const std::string& task, const KvConfig& kv, std::uint64_t seed,
                const std::string& out_path);

void run_bench(const KvConfig& kv, const std::string& out_csv, const std::string& out_report);

}  // namespace mtdrive
