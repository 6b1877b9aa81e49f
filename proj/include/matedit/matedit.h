/*
 * Copyright 2026 The matedit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the matedit library. All functions return a matedit_status;
 * on failure matedit_last_error() holds a message for the calling thread.
 * Strings returned through char** out-parameters are owned by the caller
 * and released with matedit_string_free(). */

#ifndef MATEDIT_MATEDIT_H
#define MATEDIT_MATEDIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MATEDIT_API __declspec(dllexport)
#else
#define MATEDIT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum matedit_status {
    MATEDIT_OK = 0,
    MATEDIT_ERR_INVALID_ARGUMENT = 1,
    MATEDIT_ERR_IO = 2,
    MATEDIT_ERR_EMPTY_INPUT = 3,
    MATEDIT_ERR_EMPTY_REGION = 4,
    MATEDIT_ERR_UNKNOWN_LABEL = 5,
    MATEDIT_ERR_BACK_FACE = 6,
    MATEDIT_ERR_DEGENERATE_LOBE = 7,
    MATEDIT_ERR_DIVERGENCE = 8,
    MATEDIT_ERR_ZERO_COVERAGE = 9,
    MATEDIT_ERR_EMPTY_SCENE = 10,
    MATEDIT_ERR_SEGMENTER_UNAVAILABLE = 11,
    MATEDIT_ERR_CONTRACT_VIOLATION = 12,
    MATEDIT_ERR_RESOLUTION_MISMATCH = 13,
    MATEDIT_ERR_BUSY = 14,
    MATEDIT_ERR_RUNTIME = 15
} matedit_status;

typedef struct matedit_scene matedit_scene;
typedef struct matedit_server matedit_server;

MATEDIT_API const char* matedit_version(void);
MATEDIT_API const char* matedit_status_name(matedit_status status);
/* Nonzero for statuses caused by bad input rather than a failed run. */
MATEDIT_API int matedit_status_is_validation(matedit_status status);
MATEDIT_API const char* matedit_last_error(void);
MATEDIT_API void matedit_string_free(char* s);

/* Scenes are loaded from a scene description file (scene.json). */
MATEDIT_API matedit_status matedit_scene_load(const char* scene_json, matedit_scene** out);
MATEDIT_API void matedit_scene_free(matedit_scene* scene);
MATEDIT_API matedit_status matedit_scene_info(const matedit_scene* scene, char** out_json);

/* camera_json: {"preset": i}, {"yaw", "pitch"[, "width", "height", "fov_deg"]}
 * framing the scene, or an explicit camera object. The output format
 * follows the extension of out_path (.pfm, .ppm, .pgm). */
MATEDIT_API matedit_status matedit_render(const matedit_scene* scene, const char* camera_json, const char* mode,
                                          const char* out_path);

typedef void (*matedit_progress_fn)(int iteration, double data_loss, double albedo_reg, double total, void* user);

/* Fits material and environment to the observations in obs_dir.
 * config_json may be NULL (defaults), a JSON object or a path to one.
 * Writes scene.json, loss_trace.csv and summary.json under out_dir. */
MATEDIT_API matedit_status matedit_fit(matedit_scene* scene, const char* obs_dir, const char* config_json,
                                       const char* out_dir, matedit_progress_fn progress, void* user,
                                       char** out_summary_json);

/* Clusters a segment manifest; writes <out_stem>.pgm and <out_stem>.json. */
MATEDIT_API matedit_status matedit_cluster(const char* manifest, double threshold, const char* out_stem,
                                           char** out_summary_json);

/* Runs a scripted edit session (see README) and writes the session
 * directory plus one render per stroke under out_dir. */
MATEDIT_API matedit_status matedit_edit_script(matedit_scene* scene, const char* script_path, const char* out_dir,
                                               char** out_summary_json);

/* align: "none" or "icp" (similarity transform from b onto a). */
MATEDIT_API matedit_status matedit_eval_cd(const char* gt_path, const char* pred_path, size_t samples,
                                           uint64_t seed, const char* align, char** out_json);

/* Writes the synthetic self-reconstruction fixture under out_dir. */
MATEDIT_API matedit_status matedit_synth_fixture(const char* out_dir, int view_pixels, int iterations);

/* options_json may be NULL or {"width", "height", "fov_deg", "edit": {...},
 * "session_dir"}. */
MATEDIT_API matedit_status matedit_server_create(matedit_scene* scene, const char* options_json,
                                                 matedit_server** out);
/* port 0 picks a free port; the bound port is stored in *out_port. */
MATEDIT_API matedit_status matedit_server_bind(matedit_server* server, const char* host, int port, int* out_port);
/* Blocks until matedit_server_stop() is called from another thread. */
MATEDIT_API matedit_status matedit_server_run(matedit_server* server);
MATEDIT_API void matedit_server_stop(matedit_server* server);
MATEDIT_API void matedit_server_free(matedit_server* server);

#ifdef __cplusplus
}
#endif

#endif /* MATEDIT_MATEDIT_H */
