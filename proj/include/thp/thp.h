/* C interface to the transformer point-process engine.
 *
 * Every entry point returns a thp_status; on failure, thp_last_error()
 * returns a message describing what went wrong (valid on the calling thread
 * until its next API call). Objects returned through out-parameters are
 * owned by the caller and released with the matching *_free function.
 */
#ifndef THP_H
#define THP_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum thp_status {
    THP_OK = 0,          /* success */
    THP_ERR_USAGE = 1,   /* bad arguments or configuration */
    THP_ERR_DATA = 2,    /* input data failed validation */
    THP_ERR_NUMERIC = 3  /* numerical failure (divergence, bad integral) */
} thp_status;

typedef struct thp_dataset thp_dataset;
typedef struct thp_model thp_model;

/* Message for the most recent failure on this thread ("" if none). */
const char* thp_last_error(void);

/* ---- datasets ---- */

/* Loads a JSON-lines dataset: one {"events":[{"t":..,"k":..,"v":..?}]}
 * object per line. */
thp_status thp_dataset_load(const char* path, thp_dataset** out);

/* Simulates a classical exponential-kernel self-exciting dataset.
 * config_json (plain):      {"K":1, "mu":[..], "alpha":[[..]], "beta":[[..]],
 *                            "T":200.0, "n_sequences":100, "seed":7}
 * config_json (per-vertex): {"K":1, "T":100.0, "n_sequences":60, "seed":7,
 *                            "graph":{"num_vertices":6, "edges":[[0,1],..],
 *                                     "mu":0.1, "alpha_self":0.15,
 *                                     "alpha_edge":0.1, "beta":1.0}}
 * The THP_SEED environment variable, when set, overrides "seed". */
thp_status thp_dataset_simulate(const char* config_json, thp_dataset** out);

thp_status thp_dataset_save(const thp_dataset* data, const char* path);

/* Number of sequences, or -1 if data is NULL. */
long long thp_dataset_size(const thp_dataset* data);

void thp_dataset_free(thp_dataset* data);

/* ---- training ---- */

/* Trains a model on the dataset and writes the model directory
 * (params.bin + manifest.json). config_json holds the model/training
 * configuration (see the README for keys; THP_SEED overrides "seed").
 * graph_json is NULL for a plain model, or {"num_vertices":N,
 * "edges":[[a,b],..]} to train the vertex-structured variant.
 * loss_log_path, when non-NULL, receives one JSON object per epoch:
 * {"epoch","event_ll","nonevent","type_loss","time_loss","graph_reg",
 *  "total","per_event_ll"}. */
thp_status thp_train(const thp_dataset* data, const char* config_json,
                     const char* graph_json, const char* model_dir,
                     const char* loss_log_path);

/* ---- inference ---- */

thp_status thp_model_load(const char* model_dir, thp_model** out);
void thp_model_free(thp_model* model);

/* Scores the dataset. Writes a JSON report to *report_json_out:
 * {"per_event_ll","accuracy","time_rmse","scored_events","sequences"}
 * plus {"resamples","per_event_ll_std","accuracy_std","time_rmse_std"}
 * when resamples > 0 (bootstrap over sequences). density_prediction != 0
 * predicts times/types from the intensity's density instead of the heads.
 * Free the string with thp_string_free. */
thp_status thp_evaluate(const thp_model* model, const thp_dataset* data,
                        int density_prediction, int resamples,
                        char** report_json_out);

/* Post-softmax attention weights for one sequence, as JSON:
 * {"num_layers","num_heads","length","weights"} with
 * weights[layer][head] an LxL row-major matrix (rows = attending event).
 * Free the string with thp_string_free. */
thp_status thp_attention_dump(const thp_model* model, const thp_dataset* data,
                              long long seq_index, char** dump_json_out);

/* Frees strings returned through out-parameters of this API. */
void thp_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* THP_H */
