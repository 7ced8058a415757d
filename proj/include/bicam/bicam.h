#ifndef BICAM_BICAM_H
#define BICAM_BICAM_H

/*
 * C interface to the BiCAM engine. Objects are opaque handles released with
 * the matching *_free function. Every call returns a bicam_status; on
 * failure bicam_last_error() holds a message for the calling thread until
 * its next failing call.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(BICAM_BUILDING_LIBRARY)
#define BICAM_API __attribute__((visibility("default")))
#else
#define BICAM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bicam_status {
  BICAM_OK = 0,
  BICAM_ERR_DIMENSION = 1,
  BICAM_ERR_PARAMETER = 2,
  BICAM_ERR_CONTRACT = 3,
  BICAM_ERR_STATE = 4,
  BICAM_ERR_NUMERIC = 5,
  BICAM_ERR_FORMAT = 6,
  BICAM_ERR_IO = 7,
  BICAM_ERR_NULL_ARGUMENT = 8,
  BICAM_ERR_BUFFER_TOO_SMALL = 9,
  BICAM_ERR_INTERNAL = 10
} bicam_status;

BICAM_API const char* bicam_version(void);
BICAM_API const char* bicam_status_string(bicam_status status);
BICAM_API const char* bicam_last_error(void);

/* Strings returned through char** out-parameters. */
BICAM_API void bicam_string_free(char* str);

/* ---- model ------------------------------------------------------------- */

typedef struct bicam_config {
  uint32_t image_height;
  uint32_t image_width;
  uint32_t patch_size;
  uint32_t num_layers;
  uint32_t num_heads;
  uint32_t embed_dim;
  uint32_t ffn_dim;
  uint32_t num_classes;
  int32_t distillation_token; /* 0 or 1 */
  uint32_t layer_window;      /* attribution default; 0 -> round(2L/3) */
  double temperature;         /* attribution default */
} bicam_config;

typedef struct bicam_model bicam_model;

BICAM_API void bicam_config_default(bicam_config* config);

BICAM_API bicam_status bicam_model_init(const bicam_config* config, uint64_t seed,
                                        bicam_model** out);
BICAM_API bicam_status bicam_model_load(const char* path, bicam_model** out);
BICAM_API bicam_status bicam_model_save(const bicam_model* model, const char* path);
BICAM_API bicam_status bicam_model_config(const bicam_model* model, bicam_config* out);
BICAM_API bicam_status bicam_model_checksum(const bicam_model* model, uint64_t* out);
BICAM_API bicam_status bicam_model_parameter_count(const bicam_model* model, size_t* out);
BICAM_API void bicam_model_free(bicam_model* model);

typedef struct bicam_train_options {
  uint32_t steps;
  uint32_t batch_size;
  double learning_rate;
  uint64_t seed;
} bicam_train_options;

typedef struct bicam_train_stats {
  uint32_t steps;
  double initial_loss;
  double final_loss;
  double heldout_accuracy;
} bicam_train_stats;

BICAM_API void bicam_train_options_default(bicam_train_options* options);

/* Adam on the built-in synthetic stripe task (class k: stripes at angle
 * pi*k/C filling the top or bottom half). */
BICAM_API bicam_status bicam_model_train_toy(bicam_model* model,
                                             const bicam_train_options* options,
                                             bicam_train_stats* stats);

/* Writes one synthetic sample of class `label` sized for `model`:
 * <dir>/<id>.ppm, <dir>/<id>_target.pgm (the textured half) and
 * <dir>/<id>_nontarget.pgm (the flat half). */
BICAM_API bicam_status bicam_write_synthetic_sample(const bicam_model* model, uint32_t label,
                                                    uint64_t seed, const char* dir,
                                                    const char* id);

/* ---- images ------------------------------------------------------------ */

/* An RGB image held as values in [0, 1]. */
typedef struct bicam_image bicam_image;

BICAM_API bicam_status bicam_image_load(const char* path, bicam_image** out);
BICAM_API bicam_status bicam_image_from_rgb(uint32_t width, uint32_t height,
                                            const uint8_t* rgb, bicam_image** out);
BICAM_API bicam_status bicam_image_save(const bicam_image* image, const char* path);
BICAM_API bicam_status bicam_image_size(const bicam_image* image, uint32_t* width,
                                        uint32_t* height);
/* Planar copy, channel-major: 3 * width * height doubles. */
BICAM_API bicam_status bicam_image_values(const bicam_image* image, double* out, size_t count);
BICAM_API void bicam_image_free(bicam_image* image);

/* probs may be NULL; otherwise it receives num_classes values. */
BICAM_API bicam_status bicam_predict(const bicam_model* model, const bicam_image* image,
                                     double* probs, size_t count, uint32_t* predicted);

/* ---- attribution ------------------------------------------------------- */

typedef enum bicam_upsample { BICAM_UPSAMPLE_BILINEAR = 0, BICAM_UPSAMPLE_NEAREST = 1 } bicam_upsample;

typedef struct bicam_attribution_options {
  uint32_t layer_window; /* 0 -> model default */
  double temperature;    /* <= 0 -> model default */
  bicam_upsample upsample;
} bicam_attribution_options;

typedef struct bicam_map_info {
  uint32_t grid_height;
  uint32_t grid_width;
  uint32_t height;
  uint32_t width;
  uint32_t class_index;
  uint32_t layer_window;
  double temperature;
  int32_t is_signed;
} bicam_map_info;

typedef struct bicam_map bicam_map;

BICAM_API void bicam_attribution_options_default(bicam_attribution_options* options);

/* class_index < 0 selects the predicted class. */
BICAM_API bicam_status bicam_attribute(const bicam_model* model, const bicam_image* image,
                                       int64_t class_index,
                                       const bicam_attribution_options* options,
                                       bicam_map** out);
BICAM_API bicam_status bicam_rollout(const bicam_model* model, const bicam_image* image,
                                     bicam_upsample upsample, bicam_map** out);

BICAM_API bicam_status bicam_map_info_get(const bicam_map* map, bicam_map_info* out);
BICAM_API bicam_status bicam_map_patch_scores(const bicam_map* map, double* out, size_t count);
BICAM_API bicam_status bicam_map_heatmap(const bicam_map* map, double* out, size_t count);
BICAM_API bicam_status bicam_map_pnr(const bicam_map* map, double epsilon, double* out);

/* Writes <prefix>_patches.csv, <prefix>_heatmap.csv and <prefix>.ppm; with
 * channels != 0 also <prefix>_pos.ppm and <prefix>_neg.ppm. */
BICAM_API bicam_status bicam_map_write(const bicam_map* map, const char* prefix,
                                       int32_t channels);
BICAM_API void bicam_map_free(bicam_map* map);

/* ---- adversarial ------------------------------------------------------- */

typedef enum bicam_attack_method { BICAM_ATTACK_PGD = 0, BICAM_ATTACK_MIFGSM = 1 } bicam_attack_method;

typedef struct bicam_attack_config {
  bicam_attack_method method;
  double epsilon;
  double step_size;
  uint32_t num_steps;
  double momentum_decay;
  int32_t random_start;
  uint64_t seed;
} bicam_attack_config;

BICAM_API void bicam_attack_config_default(bicam_attack_config* config);
BICAM_API bicam_status bicam_attack(const bicam_model* model, const bicam_image* image,
                                    uint32_t true_class, const bicam_attack_config* config,
                                    bicam_image** out);

/* ---- detection --------------------------------------------------------- */

typedef struct bicam_detection_report {
  size_t num_clean;
  size_t num_adversarial;
  size_t num_pairs;
  double delta_pnr_mean;
  double delta_pnr_std;
  double auroc;
  double aupr;
  double threshold;
  double sensitivity;
  double specificity;
  int32_t higher_is_adversarial;
} bicam_detection_report;

BICAM_API bicam_status bicam_pnr(const double* scores, size_t count, double epsilon,
                                 double* out);

/* ids may be NULL (no pairing, num_pairs = 0). is_adversarial[i] != 0 marks
 * adversarial samples. */
BICAM_API bicam_status bicam_roc_analysis(const double* pnr_values, const int32_t* is_adversarial,
                                          const char* const* ids, size_t count,
                                          int32_t higher_is_adversarial,
                                          bicam_detection_report* out);

/* ---- directory drivers ------------------------------------------------- */
/*
 * Each driver processes every *.ppm in a directory, writes its CSV outputs
 * and returns a formatted table in *table (may be NULL). When items fail
 * and skip_errors is 0 the call fails with the first failure's status after
 * writing the outputs of the items that succeeded. num_failures (may be
 * NULL) receives the count either way.
 */

typedef struct bicam_attack_dir_args {
  const char* input_dir;
  const char* output_dir;
  bicam_attack_config attack; /* attack.seed is ignored; see seed */
  uint64_t seed;
  int32_t skip_errors;
} bicam_attack_dir_args;

BICAM_API bicam_status bicam_run_attack_dir(const bicam_model* model,
                                            const bicam_attack_dir_args* args, char** table,
                                            size_t* num_failures);

typedef struct bicam_pnr_detect_args {
  const char* clean_dir;
  const char* adv_dir;
  bicam_attribution_options attribution;
  double pnr_epsilon;
  int32_t higher_is_adversarial;
  const char* records_out; /* may be NULL */
  const char* report_out;  /* may be NULL */
  int32_t skip_errors;
} bicam_pnr_detect_args;

BICAM_API bicam_status bicam_run_pnr_detect(const bicam_model* model,
                                            const bicam_pnr_detect_args* args,
                                            bicam_detection_report* report, char** table,
                                            size_t* num_failures);

/* Scores a record file (id,label,pnr) without a model. */
BICAM_API bicam_status bicam_score_pnr_records(const char* records_path,
                                               int32_t higher_is_adversarial,
                                               const char* report_out,
                                               bicam_detection_report* report, char** table);

typedef struct bicam_eval_loc_args {
  const char* dir;
  bicam_attribution_options attribution;
  const char* report_out; /* may be NULL */
  int32_t skip_errors;
} bicam_eval_loc_args;

BICAM_API bicam_status bicam_run_eval_loc(const bicam_model* model,
                                          const bicam_eval_loc_args* args, char** table,
                                          size_t* num_failures);

typedef struct bicam_eval_faith_args {
  const char* dir;
  bicam_attribution_options attribution;
  uint32_t random_seeds;
  uint64_t seed;
  const char* report_out; /* may be NULL */
  const char* curves_out; /* may be NULL */
  int32_t skip_errors;
} bicam_eval_faith_args;

BICAM_API bicam_status bicam_run_eval_faith(const bicam_model* model,
                                            const bicam_eval_faith_args* args, char** table,
                                            size_t* num_failures);

#ifdef __cplusplus
}
#endif

#endif
