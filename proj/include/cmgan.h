#ifndef CMGAN_H
#define CMGAN_H

/* C interface to the cross-modal zero-shot pipeline.
 *
 * Every fallible call returns a cmgan_status. On failure the message and the
 * error kind of the calling thread are available from cmgan_last_error() and
 * cmgan_last_error_kind() until that thread's next call. Strings returned
 * through char** outputs are owned by the caller and released with
 * cmgan_string_free(). Handles are released with their *_free function;
 * passing NULL to any *_free is a no-op. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CMGAN_API __declspec(dllexport)
#else
#define CMGAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cmgan_status {
  CMGAN_OK = 0,
  CMGAN_ERR_USAGE = 1,   /* bad argument or configuration */
  CMGAN_ERR_DATA = 2,    /* malformed, missing or inconsistent data */
  CMGAN_ERR_NUMERIC = 3, /* degenerate numerics, non-finite gradients */
  CMGAN_ERR_INTERNAL = 4 /* anything else (allocation failure, ...) */
} cmgan_status;

typedef struct cmgan_config cmgan_config;
typedef struct cmgan_dataset cmgan_dataset;
typedef struct cmgan_model cmgan_model;
typedef struct cmgan_lock cmgan_lock;

/* Receives one log line (no trailing newline). */
typedef void (*cmgan_log_fn)(const char* line, void* user);

CMGAN_API const char* cmgan_version(void);
CMGAN_API const char* cmgan_last_error(void);
CMGAN_API const char* cmgan_last_error_kind(void);
CMGAN_API void cmgan_string_free(char* s);

/* Exclusive lock on <dir>/.lock, held until cmgan_lock_free. Fails with
 * CMGAN_ERR_DATA when another process holds it. */
CMGAN_API cmgan_status cmgan_lock_run_dir(const char* dir, cmgan_lock** out);
CMGAN_API void cmgan_lock_free(cmgan_lock* lock);

/* ---- configuration */

CMGAN_API cmgan_status cmgan_config_new(cmgan_config** out);
CMGAN_API cmgan_status cmgan_config_parse(const char* json_text, cmgan_config** out);
CMGAN_API cmgan_status cmgan_config_load(const char* path, cmgan_config** out);
/* Dotted-path override, e.g. "trainer.max_steps=4". */
CMGAN_API cmgan_status cmgan_config_set(cmgan_config* cfg, const char* assignment);
CMGAN_API cmgan_status cmgan_config_to_json(const cmgan_config* cfg, char** out);
CMGAN_API void cmgan_config_free(cmgan_config* cfg);

/* ---- datasets */

/* Generates the synthetic benchmark of cfg (synth section, run seed) into
 * dir. `out` may be NULL. */
CMGAN_API cmgan_status cmgan_gen_synthetic(const cmgan_config* cfg, const char* dir, cmgan_dataset** out);
CMGAN_API cmgan_status cmgan_dataset_load(const char* manifest_path, cmgan_dataset** out);
/* Counts per split as JSON. */
CMGAN_API cmgan_status cmgan_dataset_summary(const cmgan_dataset* ds, char** out);
CMGAN_API void cmgan_dataset_free(cmgan_dataset* ds);

/* Writes the CONSE representation of every image as an embedding table. */
CMGAN_API cmgan_status cmgan_build_conse(const cmgan_dataset* ds, const cmgan_config* cfg, const char* path);

/* ---- training */

/* Alternating training. When checkpoint_dir is not NULL a checkpoint
 * step_<k>.json is written there after every step. `log` may be NULL. */
CMGAN_API cmgan_status cmgan_train(const cmgan_dataset* ds, const cmgan_config* cfg, const char* checkpoint_dir,
                                   cmgan_log_fn log, void* user, cmgan_model** out);
/* Single transductive step between images and sentences. */
CMGAN_API cmgan_status cmgan_train_unsupervised(const cmgan_dataset* ds, const cmgan_config* cfg,
                                                const char* checkpoint_dir, cmgan_log_fn log, void* user,
                                                cmgan_model** out);
CMGAN_API cmgan_status cmgan_model_save(const cmgan_model* model, const char* path);
CMGAN_API cmgan_status cmgan_model_load(const char* path, cmgan_model** out);
/* Copy of the configuration the model was trained with. */
CMGAN_API cmgan_status cmgan_model_config(const cmgan_model* model, cmgan_config** out);
/* Step history as JSON. */
CMGAN_API cmgan_status cmgan_model_history(const cmgan_model* model, char** out);
CMGAN_API void cmgan_model_free(cmgan_model* model);

/* ---- evaluation and diagnostics */

/* mode "zsl" or "gzsl"; split "all" or a class tag. Writes a JSON document
 * with one report per retrieval direction. */
CMGAN_API cmgan_status cmgan_evaluate(const cmgan_model* model, const cmgan_dataset* ds, const char* mode,
                                      const char* split, int mfr_exact50, char** out);
/* Ablation ladder. `only` is a comma-separated scenario list or NULL. */
CMGAN_API cmgan_status cmgan_ablate(const cmgan_dataset* ds, const cmgan_config* cfg, const char* mode,
                                    const char* split, const char* only, cmgan_log_fn log, void* user, char** out);
/* Grounded word vectors for `recipe` ("x", "vsup", "x+vsup", "vtrans",
 * "x+vtrans", "vsup+vtrans" or "all"), scored on each benchmark file.
 * output_dim 0 keeps the word dimension. When vectors_path is not NULL and
 * one recipe is given, the vectors are written there. */
CMGAN_API cmgan_status cmgan_ground(const cmgan_model* model, const cmgan_dataset* ds, const char* recipe,
                                    size_t output_dim, const char* const* benchmark_paths, size_t n_benchmarks,
                                    const char* vectors_path, char** out);
/* Agreement between label vectors and per-class mean visual features.
 * n_pairs 0 picks the default pair count. */
CMGAN_API cmgan_status cmgan_rho_vis(const cmgan_dataset* ds, uint64_t seed, size_t n_pairs, char** out);
/* Finite-difference check of every loss; cycle_norm "l2" or "l2_squared"
 * (NULL for l2). `max_error` and `out` may be NULL. */
CMGAN_API cmgan_status cmgan_grad_check(uint64_t seed, const char* cycle_norm, double* max_error, char** out);
/* TSV of 2-D label and visual-centroid coordinates per accepted step. */
CMGAN_API cmgan_status cmgan_export_trajectory(const cmgan_model* model, const cmgan_dataset* ds, size_t n_classes,
                                               char** out);

#ifdef __cplusplus
}
#endif

#endif
