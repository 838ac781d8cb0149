#include "mtdrive.h"

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "mtdrive/config.hpp"
#include "mtdrive/errors.hpp"
#include "mtdrive/runs.hpp"

struct mtd_corpus {
    std::vector<mtdrive::Scenario> scenarios;
};

struct mtd_policy {
    mtdrive::PolicyParams params;
};

namespace {

thread_local std::string g_last_error;

mtd_status fail(mtd_status status, const char* what) {
    g_last_error = what != nullptr ? what : "unknown error";
    return status;
}

// Exceptions map onto the process exit-code taxonomy.
template <typename Fn>
mtd_status guarded(Fn&& fn) {
    try {
        fn();
        return MTD_OK;
    } catch (const mtdrive::ConfigError& e) {
        return fail(MTD_ERR_CONFIG, e.what());
    } catch (const mtdrive::DataError& e) {
        return fail(MTD_ERR_DATA, e.what());
    } catch (const mtdrive::DivergenceError& e) {
        return fail(MTD_ERR_DIVERGENCE, e.what());
    } catch (const std::exception& e) {
        return fail(MTD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(MTD_ERR_INTERNAL, "unknown exception");
    }
}

mtdrive::KvConfig config_of(const char* config_text) {
    if (config_text == nullptr || config_text[0] == '\0') {
        return {};
    }
    return mtdrive::KvConfig::parse_text(config_text);
}

mtd_status require(bool ok, const char* what) {
    return ok ? MTD_OK : fail(MTD_ERR_CONFIG, what);
}

}  // namespace

extern "C" {

const char* mtd_version(void) { return "0.1.0"; }

const char* mtd_last_error(void) { return g_last_error.c_str(); }

mtd_status mtd_hash_file(const char* path, char out_hex[17]) {
    if (path == nullptr || out_hex == nullptr) {
        return fail(MTD_ERR_CONFIG, "mtd_hash_file: null argument");
    }
    return guarded([&] {
        std::snprintf(out_hex, 17, "%016llx",
                      static_cast<unsigned long long>(mtdrive::hash_file(path)));
    });
}

mtd_status mtd_corpus_generate(uint64_t seed, int32_t count, const char* families_csv,
                               mtd_corpus** out) {
    if (mtd_status s = require(out != nullptr, "mtd_corpus_generate: null output"); s != MTD_OK) {
        return s;
    }
    *out = nullptr;
    return guarded([&] {
        std::vector<std::string> families;
        if (families_csv != nullptr && families_csv[0] != '\0') {
            mtdrive::KvConfig kv;
            kv.set("families", families_csv);
            families = kv.get_str_list("families");
        }
        auto corpus = new mtd_corpus;
        corpus->scenarios = mtdrive::generate_scenarios(seed, count, families);
        *out = corpus;
    });
}

mtd_status mtd_corpus_load(const char* path, mtd_corpus** out) {
    if (mtd_status s = require(path != nullptr && out != nullptr, "mtd_corpus_load: null argument");
        s != MTD_OK) {
        return s;
    }
    *out = nullptr;
    return guarded([&] {
        auto corpus = new mtd_corpus;
        corpus->scenarios = mtdrive::load_corpus(path);
        *out = corpus;
    });
}

mtd_status mtd_corpus_save(const mtd_corpus* corpus, const char* path) {
    if (mtd_status s =
            require(corpus != nullptr && path != nullptr, "mtd_corpus_save: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] { mtdrive::save_corpus(corpus->scenarios, path); });
}

int32_t mtd_corpus_size(const mtd_corpus* corpus) {
    return corpus == nullptr ? 0 : static_cast<int32_t>(corpus->scenarios.size());
}

const char* mtd_corpus_scenario_id(const mtd_corpus* corpus, int32_t index) {
    if (corpus == nullptr || index < 0 ||
        index >= static_cast<int32_t>(corpus->scenarios.size())) {
        return nullptr;
    }
    return corpus->scenarios[static_cast<std::size_t>(index)].id.c_str();
}

void mtd_corpus_free(mtd_corpus* corpus) { delete corpus; }

mtd_policy* mtd_policy_clone(const mtd_policy* policy) {
    if (policy == nullptr) {
        return nullptr;
    }
    return new mtd_policy{policy->params};
}

mtd_status mtd_policy_init(const char* config_text, uint64_t seed, mtd_policy** out) {
    if (mtd_status s = require(out != nullptr, "mtd_policy_init: null output"); s != MTD_OK) {
        return s;
    }
    *out = nullptr;
    return guarded([&] {
        const mtdrive::KvConfig kv = config_of(config_text);
        *out = new mtd_policy{mtdrive::init_policy(mtdrive::policy_config_from(kv), seed)};
    });
}

mtd_status mtd_policy_load(const char* path, mtd_policy** out) {
    if (mtd_status s = require(path != nullptr && out != nullptr, "mtd_policy_load: null argument");
        s != MTD_OK) {
        return s;
    }
    *out = nullptr;
    return guarded([&] { *out = new mtd_policy{mtdrive::load_policy(path)}; });
}

mtd_status mtd_policy_save(const mtd_policy* policy, const char* path) {
    if (mtd_status s =
            require(policy != nullptr && path != nullptr, "mtd_policy_save: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] { mtdrive::save_policy(policy->params, path); });
}

void mtd_policy_free(mtd_policy* policy) { delete policy; }

mtd_status mtd_warm_start(mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                          uint64_t seed) {
    if (mtd_status s =
            require(policy != nullptr && corpus != nullptr, "mtd_warm_start: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        const mtdrive::KvConfig kv = config_of(config_text);
        mtdrive::warm_start_policy(policy->params, corpus->scenarios, mtdrive::env_config_from(kv),
                                   mtdrive::warm_start_config_from(kv), seed);
    });
}

mtd_status mtd_score_trajectory(const mtd_corpus* corpus, int32_t scenario_index,
                                const double* xyh, int32_t perception_gt, double scores_out[6]) {
    if (mtd_status s = require(corpus != nullptr && xyh != nullptr && scores_out != nullptr,
                               "mtd_score_trajectory: null argument");
        s != MTD_OK) {
        return s;
    }
    if (scenario_index < 0 || scenario_index >= static_cast<int32_t>(corpus->scenarios.size())) {
        return fail(MTD_ERR_DATA, "mtd_score_trajectory: scenario index out of range");
    }
    return guarded([&] {
        mtdrive::Trajectory traj;
        for (int k = 0; k < mtdrive::kTrajectoryPoints; ++k) {
            traj.points[static_cast<std::size_t>(k)] =
                mtdrive::Pose2D{xyh[k * 3], xyh[k * 3 + 1], xyh[k * 3 + 2]};
        }
        std::string why;
        if (!mtdrive::trajectory_valid(traj, &why)) {
            throw mtdrive::DataError("invalid trajectory: " + why);
        }
        const mtdrive::Scenario& scenario = corpus->scenarios[static_cast<std::size_t>(scenario_index)];
        const mtdrive::PerceptionMode mode = perception_gt != 0 ? mtdrive::PerceptionMode::GT_ORACLE
                                                                : mtdrive::PerceptionMode::KINEMATIC;
        const mtdrive::MetricReport report =
            mtdrive::evaluate_trajectory(traj, scenario, mode, {}, true);
        scores_out[0] = report.nc;
        scores_out[1] = report.dac;
        scores_out[2] = report.ttc;
        scores_out[3] = report.comfort;
        scores_out[4] = report.ep;
        scores_out[5] = mtdrive::compose_pdms(report, {});
    });
}

mtd_status mtd_score_file(const mtd_corpus* corpus, const char* traj_jsonl,
                          const char* config_text, const char* out_csv, double* mean_pdms_out) {
    if (mtd_status s = require(corpus != nullptr && traj_jsonl != nullptr,
                               "mtd_score_file: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        const mtdrive::KvConfig kv = config_of(config_text);
        const mtdrive::EnvConfig env = mtdrive::env_config_from(kv);
        const mtdrive::ScoreResult result = mtdrive::score_trajectories(
            corpus->scenarios, mtdrive::load_trajectory_file(traj_jsonl), env.perception, env.pdm);
        if (out_csv != nullptr && out_csv[0] != '\0') {
            mtdrive::write_score_csv(result, out_csv);
        }
        if (mean_pdms_out != nullptr) {
            *mean_pdms_out = result.mean.pdms;
        }
    });
}

mtd_status mtd_train(mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                     uint64_t seed, int32_t jobs, int32_t warm_start, const char* out_dir) {
    if (mtd_status s = require(policy != nullptr && corpus != nullptr, "mtd_train: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        const mtdrive::KvConfig kv = config_of(config_text);
        mtdrive::run_train(policy->params, corpus->scenarios, kv, seed, jobs,
                           out_dir != nullptr ? out_dir : "", warm_start != 0);
    });
}

mtd_status mtd_eval(const mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                    uint64_t seed, int32_t jobs, const char* out_dir, double* curve_out,
                    int32_t curve_capacity, double* mean_pdms_out) {
    if (mtd_status s = require(policy != nullptr && corpus != nullptr, "mtd_eval: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        const mtdrive::KvConfig kv = config_of(config_text);
        mtdrive::EvalConfig cfg;
        cfg.env = mtdrive::env_config_from(kv);
        cfg.episodes_per_scenario = kv.get_int("eval_episodes", cfg.episodes_per_scenario);
        cfg.write_plots = kv.get_bool("eval_plots", cfg.write_plots);
        cfg.plot_limit = kv.get_int("plot_limit", cfg.plot_limit);
        const mtdrive::EvalResult result =
            mtdrive::run_eval(policy->params, corpus->scenarios, cfg, seed, jobs,
                              out_dir != nullptr ? out_dir : "");
        if (curve_out != nullptr) {
            for (int b = 0; b < curve_capacity &&
                            b < static_cast<int32_t>(result.pdms_by_budget.size());
                 ++b) {
                curve_out[b] = result.pdms_by_budget[static_cast<std::size_t>(b)];
            }
        }
        if (mean_pdms_out != nullptr) {
            *mean_pdms_out = result.final_table.mean.pdms;
        }
    });
}

mtd_status mtd_ablate(const mtd_corpus* corpus, const char* config_text, uint64_t seed,
                      int32_t jobs, const char* out_dir) {
    if (mtd_status s = require(corpus != nullptr && out_dir != nullptr && out_dir[0] != '\0',
                               "mtd_ablate: corpus and out_dir are required");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        mtdrive::run_ablate(corpus->scenarios, config_of(config_text), seed, jobs, out_dir);
    });
}

mtd_status mtd_curate(const mtd_policy* policy, const mtd_corpus* corpus, const char* task,
                      const char* config_text, uint64_t seed, const char* out_path) {
    if (mtd_status s = require(corpus != nullptr && task != nullptr && out_path != nullptr,
                               "mtd_curate: null argument");
        s != MTD_OK) {
        return s;
    }
    return guarded([&] {
        mtdrive::run_curate(policy != nullptr ? &policy->params : nullptr, corpus->scenarios, task,
                            config_of(config_text), seed, out_path);
    });
}

mtd_status mtd_bench(const char* config_text, const char* out_csv, const char* out_report) {
    return guarded([&] {
        mtdrive::run_bench(config_of(config_text), out_csv != nullptr ? out_csv : "",
                           out_report != nullptr ? out_report : "");
    });
}

}  // extern "C"
