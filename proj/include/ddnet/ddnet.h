/* C interface to the ddnet drowsiness CNN engine.
 *
 * Objects are opaque handles created by the create and load functions and
 * released with the matching free function. Every fallible call returns a
 * ddnet_status; on failure ddnet_last_error() describes the problem for the
 * calling thread until its next ddnet call. Strings returned through char**
 * out-parameters are owned by the caller and released with ddnet_string_free.
 */
#ifndef DDNET_H
#define DDNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(DDNET_BUILDING)
#    define DDNET_API __declspec(dllexport)
#  else
#    define DDNET_API __declspec(dllimport)
#  endif
#else
#  define DDNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values match the command-line exit codes. */
typedef enum ddnet_status {
  DDNET_OK = 0,
  DDNET_ERR_USAGE = 1,   /* invalid argument, unknown name */
  DDNET_ERR_DATA = 2,    /* unreadable or malformed input */
  DDNET_ERR_NUMERIC = 3, /* non-finite values, failed gradient check */
  DDNET_ERR_INTERNAL = 4
} ddnet_status;

typedef enum ddnet_split {
  DDNET_SPLIT_ALL = 0,
  DDNET_SPLIT_TRAIN = 1,
  DDNET_SPLIT_VALIDATION = 2,
  DDNET_SPLIT_TEST = 3
} ddnet_split;

/* Dataset label codes. */
enum { DDNET_LABEL_ALERT = 1, DDNET_LABEL_DROWSY = 2 };

typedef enum ddnet_format { DDNET_FORMAT_TEXT = 0, DDNET_FORMAT_JSON = 1, DDNET_FORMAT_CSV = 2 } ddnet_format;

typedef struct ddnet_model ddnet_model;
typedef struct ddnet_manifest ddnet_manifest;
typedef struct ddnet_config ddnet_config;
typedef struct ddnet_ensemble ddnet_ensemble;
typedef struct ddnet_report ddnet_report;

DDNET_API const char* ddnet_last_error(void);
DDNET_API const char* ddnet_version(void);
DDNET_API void ddnet_string_free(char* s);

/* Parses "all", "train", "validation"/"val", "test". */
DDNET_API ddnet_status ddnet_split_from_name(const char* name, ddnet_split* out);
/* Parses "text", "json", "csv". */
DDNET_API ddnet_status ddnet_format_from_name(const char* name, ddnet_format* out);

/* ---- models ------------------------------------------------------------ */

/* arch: "cnn1", "cnn2" or "cnn3". */
DDNET_API ddnet_status ddnet_model_build(const char* arch, uint64_t seed, ddnet_model** out);
DDNET_API ddnet_status ddnet_model_load(const char* path, ddnet_model** out);
DDNET_API ddnet_status ddnet_model_save(const ddnet_model* model, const char* path);
DDNET_API void ddnet_model_free(ddnet_model* model);
DDNET_API const char* ddnet_model_arch(const ddnet_model* model);

/* Softmax probabilities for `count` images of `channels` x 90 x 90 pixels
 * (row-major). `probs` receives count x 2 values, Alert first. */
DDNET_API ddnet_status ddnet_model_predict(const ddnet_model* model, const double* pixels,
                                           size_t count, size_t channels, double* probs);

/* Loads a PGM, resizes it to 90 x 90 and classifies it by argmax.
 * `label` receives DDNET_LABEL_ALERT or DDNET_LABEL_DROWSY. */
DDNET_API ddnet_status ddnet_model_predict_pgm(const ddnet_model* model, const char* path,
                                               int* label, double* p_drowsy);

/* ---- datasets ---------------------------------------------------------- */

/* CSV `path,label[,split]`. check_files: fail on rows whose image is missing. */
DDNET_API ddnet_status ddnet_manifest_load(const char* path, int check_files, ddnet_manifest** out);
DDNET_API void ddnet_manifest_free(ddnet_manifest* manifest);
DDNET_API size_t ddnet_manifest_size(const ddnet_manifest* manifest);
DDNET_API int ddnet_manifest_has_splits(const ddnet_manifest* manifest);
/* 70/15/15 seeded split, optionally stratified by label. */
DDNET_API ddnet_status ddnet_manifest_split(ddnet_manifest* manifest, uint64_t seed, int stratified);
DDNET_API ddnet_status ddnet_manifest_save(const ddnet_manifest* manifest, const char* path);
/* Samples with the given split and label code (0 counts every label). */
DDNET_API size_t ddnet_manifest_count(const ddnet_manifest* manifest, ddnet_split split, int label);

/* ---- training ---------------------------------------------------------- */

/* Starts from a named preset ("section3-cnn1", ..., "methodology-cnn2") or,
 * when given an architecture name, from that architecture's default preset. */
DDNET_API ddnet_status ddnet_config_create(const char* preset_or_arch, ddnet_config** out);
/* Overlays the keys of a JSON object (text) onto the config. */
DDNET_API ddnet_status ddnet_config_merge_json(ddnet_config* config, const char* json_text);
DDNET_API ddnet_status ddnet_config_merge_file(ddnet_config* config, const char* path);
DDNET_API void ddnet_config_set_seed(ddnet_config* config, uint64_t seed);
DDNET_API const char* ddnet_config_arch(const ddnet_config* config);
DDNET_API uint64_t ddnet_config_seed(const ddnet_config* config);
DDNET_API void ddnet_config_free(ddnet_config* config);

/* Trains `model` in place on the manifest's train split, validating on its
 * validation split. Writes the history CSV when history_path is non-null.
 * final_val_accuracy may be null. */
DDNET_API ddnet_status ddnet_train(ddnet_model* model, const ddnet_manifest* manifest,
                                   const ddnet_config* config, const char* history_path,
                                   double* final_val_accuracy);

/* ---- evaluation -------------------------------------------------------- */

DDNET_API ddnet_status ddnet_report_create(ddnet_report** out);
DDNET_API void ddnet_report_free(ddnet_report* report);
DDNET_API size_t ddnet_report_rows(const ddnet_report* report);
/* Accuracy of row `index`. */
DDNET_API ddnet_status ddnet_report_accuracy(const ddnet_report* report, size_t index, double* out);
DDNET_API ddnet_status ddnet_report_render(const ddnet_report* report, ddnet_format format, char** out);

/* Scores the model on one split and appends a row named `name`. */
DDNET_API ddnet_status ddnet_evaluate(const ddnet_model* model, const ddnet_manifest* manifest,
                                      ddnet_split split, const char* name, ddnet_report* report);

/* Loads the members listed under `ensemble` in a JSON config file. */
DDNET_API ddnet_status ddnet_ensemble_load(const char* config_path, ddnet_ensemble** out);
DDNET_API void ddnet_ensemble_free(ddnet_ensemble* ensemble);
DDNET_API size_t ddnet_ensemble_size(const ddnet_ensemble* ensemble);
DDNET_API double ddnet_ensemble_threshold(const ddnet_ensemble* ensemble);

/* Appends one row per member (argmax rule) and an "Ensemble" row (averaged
 * probabilities, drowsy iff above `threshold`). A negative threshold uses the
 * configured one. */
DDNET_API ddnet_status ddnet_ensemble_evaluate(const ddnet_ensemble* ensemble,
                                               const ddnet_manifest* manifest, ddnet_split split,
                                               double threshold, ddnet_report* report);

/* ---- verification ------------------------------------------------------ */

typedef struct ddnet_gradcheck_result {
  double max_relative_error;
  double analytic;
  double numeric;
  size_t index;
  size_t coordinates;
  char tensor[64];
} ddnet_gradcheck_result;

/* Finite-difference check of a freshly initialized architecture on a seeded
 * random batch of `batch` 90 x 90 images. max_coords bounds the coordinates
 * sampled per tensor (0 checks all). */
DDNET_API ddnet_status ddnet_gradcheck(const char* arch, double epsilon, uint64_t seed,
                                       size_t batch, size_t max_coords,
                                       ddnet_gradcheck_result* out);

#ifdef __cplusplus
}
#endif

#endif /* DDNET_H */
