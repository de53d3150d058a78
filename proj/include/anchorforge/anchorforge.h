#ifndef ANCHORFORGE_ANCHORFORGE_H
#define ANCHORFORGE_ANCHORFORGE_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define AF_API __declspec(dllexport)
#else
#define AF_API __attribute__((visibility("default")))
#endif

/* Status codes; also the CLI exit codes. */
typedef enum af_status {
  AF_OK = 0,
  AF_ERR_INTERNAL = 1,
  AF_ERR_CONFIG = 2,
  AF_ERR_DATA = 3,
  AF_ERR_PARTIAL = 4
} af_status;

typedef struct af_context af_context;
typedef struct af_model af_model;

AF_API const char* af_version(void);

AF_API af_status af_context_create(af_context** out);
AF_API void af_context_destroy(af_context* ctx);

/* Message for the last failed call on ctx, or "" when there is none.
   Owned by ctx and valid until the next call on it. */
AF_API const char* af_last_error(const af_context* ctx);

/* Runs a command ("gen_data", "train", "sample", "edit", "extend", "label",
   "eval") with a JSON object config. On return *result_json (if result_json
   is not NULL) holds a JSON summary to release with af_free_string. */
AF_API af_status af_run(af_context* ctx, const char* command, const char* config_json, char** result_json);

/* Checkpoint handle for repeated sampling without reloading. */
AF_API af_status af_model_load(af_context* ctx, const char* checkpoint_path, af_model** out);
AF_API void af_model_destroy(af_model* model);

/* Model config and completed stage as JSON. */
AF_API af_status af_model_info(af_context* ctx, const af_model* model, char** info_json);

/* request_json: {"text": [token ids], "frames": f, "scalars": {...},
   "condition_frames": [k...], "condition_clip": path, "steps", "guidance", "seed"}.
   Writes the sampled latent clip to out_clip_path. */
AF_API af_status af_model_sample(af_context* ctx, const af_model* model, const char* request_json,
                                 const char* out_clip_path);

AF_API void af_free_string(char* s);

#ifdef __cplusplus
}
#endif

#endif
