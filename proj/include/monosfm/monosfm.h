#ifndef MONOSFM_MONOSFM_H
#define MONOSFM_MONOSFM_H

/*
 * C interface of the monosfm library: unsupervised depth, pose and camera
 * intrinsics learning from monocular image triplets.
 *
 * Every function returns an msfm_status. On failure the message of the
 * calling thread's last error is available from msfm_last_error() until the
 * next call on that thread. Strings returned through char** out parameters
 * are owned by the caller and released with msfm_free_string().
 *
 * Options are passed as JSON objects so that new fields do not change the ABI.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(MONOSFM_BUILDING)
#    define MSFM_API __declspec(dllexport)
#  else
#    define MSFM_API __declspec(dllimport)
#  endif
#else
#  define MSFM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum msfm_status {
  MSFM_OK = 0,
  MSFM_ERR_CONFIG = 1,    /* invalid or inconsistent configuration / arguments */
  MSFM_ERR_DATA = 2,      /* missing or unreadable files */
  MSFM_ERR_SHAPE = 3,     /* tensor shapes do not fit */
  MSFM_ERR_DOMAIN = 4,    /* invalid numeric values */
  MSFM_ERR_TRAINING = 5,  /* optimisation diverged */
  MSFM_ERR_RUNTIME = 6    /* anything else */
} msfm_status;

/* Depth and pose networks together with their resolved configuration. */
typedef struct msfm_model msfm_model;

/* Called after every training step with a JSON record; return 0 to stop. */
typedef int (*msfm_progress_fn)(const char* record_json, void* user);

MSFM_API const char* msfm_version(void);
MSFM_API const char* msfm_last_error(void);
MSFM_API const char* msfm_status_name(msfm_status status);
MSFM_API void msfm_free_string(char* s);

/* Resolves a config file (NULL or "" for defaults) plus "a.b=value"
 * overrides, validates it and returns the full JSON document. */
MSFM_API msfm_status msfm_config_resolve(const char* config_path, const char* const* overrides,
                                         size_t n_overrides, char** out_json);

/* Trains from a resolved config JSON. Writes checkpoints, metrics.jsonl and
 * manifest.json under run_dir (the config's output_dir when NULL). With
 * resume != 0 training continues from the latest checkpoint in run_dir.
 * out_summary (optional) receives a JSON summary. */
MSFM_API msfm_status msfm_train(const char* config_json, const char* run_dir, int resume,
                                msfm_progress_fn progress, void* user, char** out_summary);

MSFM_API msfm_status msfm_model_load(const char* checkpoint_path, msfm_model** out);
/* Fresh, seeded networks for a resolved config JSON. */
MSFM_API msfm_status msfm_model_create(const char* config_json, msfm_model** out);
MSFM_API void msfm_model_free(msfm_model* model);
/* Resolved config of the model as JSON. */
MSFM_API msfm_status msfm_model_config(const msfm_model* model, char** out_json);

/* Disparity in (0,1) at full resolution. rgb: 3*height*width floats, planar
 * CHW, values in [0,1]; height/width must equal the model's input size.
 * out_disparity: height*width floats. */
MSFM_API msfm_status msfm_predict_disparity(msfm_model* model, const float* rgb, int64_t height, int64_t width,
                                            float* out_disparity);

/* Evaluates on the config's evaluation data. options JSON:
 *   {"corruption": "kind:severity", "attack": "pgd:4", "seed": 0, "max_frames": 0,
 *    "overrides": ["eval.split=..."], "out_dir": "..."}
 * With out_dir, report.json, table.txt and manifest.json are written there.
 * Returns a JSON report with depth metrics (abs_rel sq_rel rmse rmse_log a1 a2 a3),
 * odometry and intrinsics errors when available, and a text table under "table". */
MSFM_API msfm_status msfm_evaluate(msfm_model* model, const char* options_json, char** out_report);

/* For each input image: <stem>_disp.tiff (float32, network resolution,
 * lossless) and <stem>_disp.png (colourised preview at input resolution). */
MSFM_API msfm_status msfm_export_disparity(msfm_model* model, const char* const* image_paths, size_t n_images,
                                           const char* out_dir);

/* Applies "kind:severity" to an image file and writes a PNG. */
MSFM_API msfm_status msfm_corrupt_file(const char* input_path, const char* output_path, const char* spec,
                                       uint64_t seed);

/* Corruption on a planar CHW float image in place. */
MSFM_API msfm_status msfm_corrupt_buffer(float* rgb, int64_t height, int64_t width, const char* spec,
                                         uint64_t seed);

/* Writes adversarial versions of the evaluation frames as float32 TIFF plus
 * manifest.json. options JSON: {"attack": "pgd:4", "seed": 0, "max_frames": 0}. */
MSFM_API msfm_status msfm_attack_export(msfm_model* model, const char* options_json, const char* out_dir,
                                        char** out_summary);

/* Inference speed of the depth (and pose) network. options JSON:
 *   {"passes": 20, "warmup": 3, "batch": 1, "network": "depth" | "pose"}
 * Returns {"fps": ..., "seconds": ..., "joules_per_frame": ... | null}. */
MSFM_API msfm_status msfm_benchmark(msfm_model* model, const char* options_json, char** out_result);

/* Renders synthetic corridor sequences in the ddad layout under out_root.
 * options JSON: SyntheticOptions fields plus "sequences" and "height"/"width". */
MSFM_API msfm_status msfm_synthesize_dataset(const char* out_root, const char* options_json);

/* PGD iteration count for an epsilon on the 0-255 scale. */
MSFM_API int64_t msfm_attack_iterations(double epsilon);

#ifdef __cplusplus
}
#endif

#endif /* MONOSFM_MONOSFM_H */
