/* C API for the cold-start multimodal graph transformer pipeline.
 *
 * All operations are driven by a flat string key/value configuration held
 * behind an opaque handle. Keys mirror the CLI flags (see README.md).
 * Functions return NTSF_OK on success, NTSF_ERR_INPUT for invalid input,
 * configuration or files, and NTSF_ERR_NUMERIC for numeric failures
 * (training divergence, failed gradient check). ntsf_last_error() returns
 * a thread-local message for the most recent failure.
 */
#ifndef NTSF_H
#define NTSF_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ntsf_status {
  NTSF_OK = 0,
  NTSF_ERR_INPUT = 1,
  NTSF_ERR_NUMERIC = 2
} ntsf_status;

typedef struct ntsf_config ntsf_config;

ntsf_config* ntsf_config_create(void);
void ntsf_config_destroy(ntsf_config* cfg);

/* Sets (or overwrites) one key. Values are parsed when the operation that
 * consumes them runs. */
ntsf_status ntsf_config_set(ntsf_config* cfg, const char* key, const char* value);

/* Returns the stored value for key, or NULL when unset. The pointer stays
 * valid until the key is overwritten or the config is destroyed. */
const char* ntsf_config_get(const ntsf_config* cfg, const char* key);

/* Writes a synthetic multimodal graph dataset. Keys: out (required), n,
 * classes, text_dim, visual_dim, p_in, p_out, mean_sep, noise, seed. */
ntsf_status ntsf_run_synth(ntsf_config* cfg);

/* Partitions the dataset (or reuses splits.json), removes every edge that
 * touches a held-out node and writes the propagated hop features plus a
 * manifest. Keys: data (required), out, k, seed, stratify, splits. */
ntsf_status ntsf_run_precompute(ntsf_config* cfg);

/* Trains on the precomputed hop features and writes checkpoint.bin and
 * history.csv. Keys: data, out (required), hops, epochs, batch_size, lr,
 * weight_decay, lambda, gamma_moe, p_miss, patience, dim, k, layers, heads,
 * experts, k_hat, ffn_mult, dropout_in, dropout_hidden, scale, moe,
 * st_labeled_only, st_detach_student, seed, deterministic, threads,
 * log_every. */
ntsf_status ntsf_run_train(ntsf_config* cfg);

/* Cold-start evaluation of a checkpoint; writes report.json with the
 * per-condition accuracies. Keys: data, checkpoint, splits, out (required),
 * split_set. */
ntsf_status ntsf_run_eval(ntsf_config* cfg);

/* 64-bit central-difference verification of the analytic gradient on a
 * small synthetic batch. Writes the max relative error to out_max_rel_err
 * (may be NULL). Returns NTSF_ERR_NUMERIC when it exceeds the tolerance.
 * Keys: nodes, dim, k, experts, k_hat, layers, heads, classes, coords, h,
 * tolerance, lambda, gamma_moe, seed. */
ntsf_status ntsf_run_gradcheck(ntsf_config* cfg, double* out_max_rel_err);

/* Thread-local message for the most recent failing call; empty if none. */
const char* ntsf_last_error(void);

const char* ntsf_version(void);

#ifdef __cplusplus
}
#endif

#endif /* NTSF_H */
