/* mtdrive — C API for the multi-turn trajectory-refinement laboratory.
 *
 * All functions return mtd_status; on failure mtd_last_error() holds a
 * thread-local message. Handles are opaque and freed with their _free
 * function. Config strings use the flat "key = value" format (NULL means
 * defaults); see the README for the key reference.
 */
#ifndef MTDRIVE_H
#define MTDRIVE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mtd_status {
    MTD_OK = 0,
    MTD_ERR_INTERNAL = 1,
    MTD_ERR_CONFIG = 2,
    MTD_ERR_DATA = 3,
    MTD_ERR_DIVERGENCE = 4
} mtd_status;

typedef struct mtd_corpus mtd_corpus;
typedef struct mtd_policy mtd_policy;

const char* mtd_version(void);
const char* mtd_last_error(void);

/* FNV-1a 64 of the file bytes, as 16 hex chars + NUL. */
mtd_status mtd_hash_file(const char* path, char out_hex[17]);

/* --- scenario corpora ---------------------------------------------------- */

/* families_csv: comma-separated family names; NULL or "" = all families. */
mtd_status mtd_corpus_generate(uint64_t seed, int32_t count, const char* families_csv,
                               mtd_corpus** out);
mtd_status mtd_corpus_load(const char* path, mtd_corpus** out);
mtd_status mtd_corpus_save(const mtd_corpus* corpus, const char* path);
int32_t mtd_corpus_size(const mtd_corpus* corpus);
/* Borrowed pointer, valid while the corpus lives; NULL when out of range. */
const char* mtd_corpus_scenario_id(const mtd_corpus* corpus, int32_t index);
void mtd_corpus_free(mtd_corpus* corpus);

/* --- policies -------------------------------------------------------------- */

mtd_policy* mtd_policy_clone(const mtd_policy* policy);
mtd_status mtd_policy_init(const char* config_text, uint64_t seed, mtd_policy** out);
mtd_status mtd_policy_load(const char* path, mtd_policy** out);
mtd_status mtd_policy_save(const mtd_policy* policy, const char* path);
void mtd_policy_free(mtd_policy* policy);

/* Behavior-cloning cold start on the corpus experts. */
mtd_status mtd_warm_start(mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                          uint64_t seed);

/* --- scoring ---------------------------------------------------------------- */

/* xyh: 24 doubles, 8 waypoints of (x, y, heading). perception_gt: 0 =
 * kinematic, 1 = ground-truth oracle. scores_out: nc, dac, ttc, cf, ep,
 * pdms. */
mtd_status mtd_score_trajectory(const mtd_corpus* corpus, int32_t scenario_index,
                                const double* xyh, int32_t perception_gt, double scores_out[6]);

/* Scores a JSONL trajectory file against the corpus; writes the per-scenario
 * CSV when out_csv is non-NULL. */
mtd_status mtd_score_file(const mtd_corpus* corpus, const char* traj_jsonl,
                          const char* config_text, const char* out_csv, double* mean_pdms_out);

/* --- experiments ------------------------------------------------------------- */

/* warm_start: 1 = run the behavior-cloning cold start before RL. Writes
 * checkpoints and train_log.csv into out_dir (may be NULL). */
mtd_status mtd_train(mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                     uint64_t seed, int32_t jobs, int32_t warm_start, const char* out_dir);

/* Writes per_turn.csv, final_table.csv, trajectories.jsonl, and plots/ into
 * out_dir (may be NULL); per-budget mean PDMS lands in curve_out[0..budgets).
 */
mtd_status mtd_eval(const mtd_policy* policy, const mtd_corpus* corpus, const char* config_text,
                    uint64_t seed, int32_t jobs, const char* out_dir, double* curve_out,
                    int32_t curve_capacity, double* mean_pdms_out);

/* Trains the three advantage modes from one shared warm start; writes
 * ablate.csv and per-mode artifacts into out_dir. */
mtd_status mtd_ablate(const mtd_corpus* corpus, const char* config_text, uint64_t seed,
                      int32_t jobs, const char* out_dir);

/* task: bootstrap | constvel | mock | qa | filter. policy may be NULL for
 * constvel and qa. */
mtd_status mtd_curate(const mtd_policy* policy, const mtd_corpus* corpus, const char* task,
                      const char* config_text, uint64_t seed, const char* out_path);

/* Rollout data-plane benchmark; writes the CSV and the human-readable
 * report (either may be NULL). */
mtd_status mtd_bench(const char* config_text, const char* out_csv, const char* out_report);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MTDRIVE_H */
