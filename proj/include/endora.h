#ifndef ENDORA_H
#define ENDORA_H

/* C interface to the endora latent video-diffusion toolkit. All functions
 * are synchronous; on failure they return a status code and record a
 * human-readable message retrievable per thread via endora_last_error(). */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum endora_status {
    ENDORA_OK = 0,
    ENDORA_USAGE_ERROR = 1,   /* bad arguments or configuration */
    ENDORA_DATA_ERROR = 2,    /* missing or unreadable inputs */
    ENDORA_NUMERIC_ERROR = 3  /* NaN/Inf or numerical breakdown */
} endora_status;

const char* endora_version(void);

/* Message from the most recent failing call on this thread; empty string
 * when the last call succeeded. The pointer stays valid until the next
 * call on the same thread. */
const char* endora_last_error(void);

/* Write a synthetic frame-folder dataset of `videos` clips, each `frames`
 * frames of size x size pixels, under root. */
endora_status endora_make_synthetic(const char* root, long videos, long frames, long size,
                                    uint64_t seed);

/* Train a model. config_json may be NULL (all defaults), a path to a JSON
 * config file, or inline JSON (first non-space character '{'). Outputs
 * checkpoint.etc and manifest.json under out_dir. */
endora_status endora_train(const char* config_json, const char* data_root, const char* out_dir);

/* Decode `count` sampled clips from a checkpoint into frame-folder videos
 * under out_dir. use_ema != 0 samples from the EMA weights. */
endora_status endora_sample(const char* checkpoint, long count, uint64_t seed,
                            const char* out_dir, int use_ema);

/* Compare two dataset roots with the standard protocol (count clips of
 * clip_len frames each) and write a metric report to report_path. */
endora_status endora_eval(const char* real_root, const char* generated_root, long count,
                          long clip_len, uint64_t seed, const char* report_path);

/* Opaque read-only view of a saved checkpoint. */
typedef struct endora_checkpoint endora_checkpoint;

endora_status endora_checkpoint_open(const char* path, endora_checkpoint** out);
void endora_checkpoint_close(endora_checkpoint* ck);

long endora_checkpoint_step(const endora_checkpoint* ck);
/* Total trainable scalars across all model tensors. */
long endora_checkpoint_param_count(const endora_checkpoint* ck);
/* Resolved training config as JSON; valid until the checkpoint is closed. */
const char* endora_checkpoint_config_json(const endora_checkpoint* ck);

#ifdef __cplusplus
}
#endif

#endif /* ENDORA_H */
