/* Point detection and counting with weighted-Hausdorff-trained networks.
 *
 * Every call returns a whdspot_status. On failure the message is available
 * from whdspot_last_error() on the same thread until the next failing call.
 * Handles are opaque; destroy functions accept NULL. */
#ifndef WHDSPOT_H
#define WHDSPOT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define WHDSPOT_API __declspec(dllexport)
#else
#define WHDSPOT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum whdspot_status {
  WHDSPOT_OK = 0,
  WHDSPOT_ERR_INVALID_ARGUMENT = 1,
  WHDSPOT_ERR_IO = 2,
  WHDSPOT_ERR_FORMAT = 3,
  WHDSPOT_ERR_NUMERIC = 4,
  WHDSPOT_ERR_RUNTIME = 5
} whdspot_status;

WHDSPOT_API const char* whdspot_version(void);
WHDSPOT_API const char* whdspot_last_error(void);
WHDSPOT_API const char* whdspot_status_name(whdspot_status status);

/* ---- Run configuration: key = value settings with defaults ---- */

typedef struct whdspot_config whdspot_config;

WHDSPOT_API whdspot_status whdspot_config_create(whdspot_config** out);
WHDSPOT_API void whdspot_config_destroy(whdspot_config* config);
/* Unknown keys and malformed values are rejected. */
WHDSPOT_API whdspot_status whdspot_config_set(whdspot_config* config, const char* key, const char* value);
/* Copies the value with its terminator when it fits; *length receives the
 * value length without the terminator either way. */
WHDSPOT_API whdspot_status whdspot_config_get(const whdspot_config* config, const char* key, char* buffer,
                                              size_t capacity, size_t* length);
WHDSPOT_API whdspot_status whdspot_config_load(whdspot_config* config, const char* path);
WHDSPOT_API whdspot_status whdspot_config_save(const whdspot_config* config, const char* path);
WHDSPOT_API size_t whdspot_config_key_count(void);
/* NULL past the end. */
WHDSPOT_API const char* whdspot_config_key_name(size_t index);
WHDSPOT_API const char* whdspot_config_key_help(size_t index);

/* ---- Pipeline steps; each writes its resolved configuration next to its
 * outputs as run_config.txt ---- */

typedef struct whdspot_gen_summary {
  int64_t train;
  int64_t val;
  int64_t test;
  int64_t objects;
} whdspot_gen_summary;

WHDSPOT_API whdspot_status whdspot_generate(const whdspot_config* config, const char* out_dir,
                                            whdspot_gen_summary* summary);

typedef struct whdspot_epoch_report {
  int epoch;
  double train_loss;
  int validated; /* nonzero when val_loss and val_f1 are set */
  double val_loss;
  double val_f1;
} whdspot_epoch_report;

typedef void (*whdspot_epoch_callback)(const whdspot_epoch_report* report, void* user);

typedef struct whdspot_train_summary {
  int epochs_run;
  int best_epoch; /* 0 when no validation ran */
  double best_val_f1;
  int stopped_early;
} whdspot_train_summary;

/* Trains the configured model on the train and val splits of data_dir and
 * writes history.csv, best.ckpt and latest.ckpt to out_dir. */
WHDSPOT_API whdspot_status whdspot_train(const whdspot_config* config, const char* data_dir, const char* out_dir,
                                         whdspot_epoch_callback callback, void* user, whdspot_train_summary* summary);

typedef struct whdspot_infer_summary {
  char model[32];
  size_t images;
  size_t detections;
} whdspot_infer_summary;

/* Writes pred_points.csv (UNet) or detections.csv (classifiers) and, when
 * overlays is nonzero, one overlay PNG per image under out_dir/overlays. */
WHDSPOT_API whdspot_status whdspot_infer(const whdspot_config* config, const char* checkpoint, const char* data_dir,
                                         const char* split, const char* out_dir, int overlays, int threads,
                                         whdspot_infer_summary* summary);

typedef struct whdspot_metrics {
  char model[64];
  char split[8];
  double precision;
  double recall;
  double f1;
  int precision_undefined; /* no predictions */
  int recall_undefined;    /* no ground truth */
  double count_me;
  double count_mse;
  double count_rmse;
  double count_mae;
  double count_mape;
  double loc_rmse;
  int loc_empty;
  int has_tpi;
  double tpi_seconds;
  int tp;
  int fp;
  int fn;
} whdspot_metrics;

/* Scores predictions against one split of a dataset and updates
 * out_dir/metrics.csv. name may be NULL to use the model recorded next to
 * the predictions. */
WHDSPOT_API whdspot_status whdspot_evaluate(const whdspot_config* config, const char* predictions,
                                            const char* gt_dir, const char* split, const char* name,
                                            const char* out_dir, whdspot_metrics* metrics);

typedef struct whdspot_bench_summary {
  char model[32];
  double tpi_seconds;
  size_t images;
  int reps;
  char hardware[256];
} whdspot_bench_summary;

/* Median time per image of the full prediction path. metrics_csv may be
 * NULL; otherwise the TPI is stored in that file. */
WHDSPOT_API whdspot_status whdspot_bench(const whdspot_config* config, const char* checkpoint, const char* data_dir,
                                         const char* split, const char* metrics_csv, int threads,
                                         whdspot_bench_summary* summary);

/* ---- Direct model use ---- */

typedef struct whdspot_model whdspot_model;

WHDSPOT_API whdspot_status whdspot_model_load(const char* checkpoint, whdspot_model** out);
WHDSPOT_API void whdspot_model_destroy(whdspot_model* model);
/* "unet", "network1" or "network2"; NULL for a NULL model. */
WHDSPOT_API const char* whdspot_model_architecture(const whdspot_model* model);
WHDSPOT_API whdspot_status whdspot_model_parameter_count(const whdspot_model* model, size_t* count);

/* Detects objects in an interleaved 8-bit RGB image of size x size pixels.
 * Up to `capacity` detections are written to xys as (x, y, score) triples in
 * pixel-centre coordinates; *count receives the total number found. config
 * may be NULL for defaults. */
WHDSPOT_API whdspot_status whdspot_model_detect(whdspot_model* model, const whdspot_config* config,
                                                const uint8_t* rgb, int size, double* xys, size_t capacity,
                                                size_t* count);

/* ---- Metrics ---- */

WHDSPOT_API whdspot_status whdspot_precision_recall_f1(int tp, int fp, int fn, double* precision, double* recall,
                                                       double* f1);
/* Harmonic mean of precision and recall; 0 when either is 0. */
WHDSPOT_API double whdspot_f1(double precision, double recall);

#ifdef __cplusplus
}
#endif

#endif
