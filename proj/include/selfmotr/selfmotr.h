/* SelfMOTR public C API.
 *
 * All entry points return smr_status; SMR_OK means success. On failure,
 * smr_last_error() returns a thread-local description of the most recent
 * error. Strings returned through char** out-parameters are owned by the
 * caller and must be released with smr_string_free().
 */
#ifndef SELFMOTR_H
#define SELFMOTR_H

#ifndef SMR_API
#if defined(_WIN32)
#define SMR_API __declspec(dllimport)
#else
#define SMR_API __attribute__((visibility("default")))
#endif
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum smr_status {
  SMR_OK = 0,
  SMR_ERR_INVALID_ARGUMENT = 1, /* bad config / unknown key / bad value */
  SMR_ERR_IO = 2,               /* missing or unreadable file            */
  SMR_ERR_RUNTIME = 3,          /* contract violation during execution   */
} smr_status;

/* Library version, e.g. "1.0.0". Static storage; do not free. */
SMR_API const char* smr_version(void);

/* Thread-local message for the last failing call, or "" if none. Static
 * storage; do not free. */
SMR_API const char* smr_last_error(void);

/* Releases a string returned via a char** out-parameter. NULL is a no-op. */
SMR_API void smr_string_free(char* s);

/* ------------------------------------------------------------------ */
/* Run configuration (model + training + tracker + scene + dataset).  */
/* ------------------------------------------------------------------ */

typedef struct smr_config smr_config; /* opaque */

/* Creates a config populated with library defaults. */
SMR_API smr_status smr_config_create(smr_config** out);

/* Creates a config from a JSON document. Absent keys inherit defaults;
 * unknown keys are an error. */
SMR_API smr_status smr_config_from_json(const char* json, smr_config** out);

/* Serializes the full config (defaults included) as a JSON string. */
SMR_API smr_status smr_config_to_json(const smr_config* cfg, char** out_json);

SMR_API void smr_config_destroy(smr_config* cfg);

/* ------------------------------------------------------------------ */
/* Commands. Each writes its artifacts under the config's out_dir and */
/* returns its headline report as a JSON string.                      */
/* ------------------------------------------------------------------ */

/* Trains per the config's recipe; writes config.json, log.jsonl,
 * checkpoint.{json,bin}, metrics.json, manifest.json (and a teacher
 * checkpoint when the recipe needs one). out_json reports the checkpoint
 * base path and final validation metrics. When dry_run is nonzero the
 * config is validated and nothing is written. */
SMR_API smr_status smr_cmd_train(const smr_config* cfg, int dry_run, char** out_json);

/* Evaluates a checkpoint on the config's validation videos; writes
 * metrics.json and tracking/GT CSVs. out_json is the metrics report. */
SMR_API smr_status smr_cmd_eval(const smr_config* cfg, const char* checkpoint_base,
                        char** out_json);

/* Detection AP with and without track queries at inference; writes
 * conflict.json. out_json carries ap_with, ap_without, gap. */
SMR_API smr_status smr_cmd_conflict(const smr_config* cfg,
                            const char* checkpoint_base, char** out_json);

/* Sweeps one parameter over comma-separated values. param is one of
 * "c_prop", "detect_decoder_depth", "proposal_source". Writes sweep.csv
 * and sweep.json; out_json is the sweep table. */
SMR_API smr_status smr_cmd_sweep(const smr_config* cfg, const char* param,
                         const char* comma_separated_values, char** out_json);

/* Verifies the one-encoder/two-decoder invocation contract and measures
 * throughput; writes profile.json. checkpoint_base may be NULL or "" to
 * profile a freshly initialized model. */
SMR_API smr_status smr_cmd_profile(const smr_config* cfg, const char* checkpoint_base,
                           char** out_json);

/* Writes ground-truth CSVs for every train/val seed plus dataset.json.
 * out_json lists the files written. */
SMR_API smr_status smr_cmd_gen_data(const smr_config* cfg, char** out_json);

/* Scores a tracking CSV against a ground-truth CSV (MOT-challenge layout:
 * frame,id,x,y,w,h[,score]); out_json is the metrics report. */
SMR_API smr_status smr_evaluate_csv(const char* tracking_csv_path,
                            const char* gt_csv_path, char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SELFMOTR_H */
