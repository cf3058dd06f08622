/* dac.h - C interface to the DAC open-set 3D object retrieval core.
 *
 * Conventions:
 *   - every fallible call returns dac_status; DAC_OK is 0
 *   - on failure, dac_last_error() holds a message for the calling thread
 *   - strings returned through char** are heap-owned; release them with
 *     dac_string_free()
 *   - handles are opaque; close them with their matching *_close call
 */
#ifndef DAC_H
#define DAC_H

#include <stddef.h>
#include <stdint.h>

#ifndef DAC_API
#if defined(_WIN32)
#define DAC_API __declspec(dllexport)
#else
#define DAC_API __attribute__((visibility("default")))
#endif
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dac_status {
    DAC_OK = 0,
    DAC_ERR_SHAPE = 1,      /* dimension mismatch */
    DAC_ERR_CONFIG = 2,     /* invalid hyperparameter or option */
    DAC_ERR_DATA = 3,       /* bad dataset content or split violation */
    DAC_ERR_USAGE = 4,      /* API misuse */
    DAC_ERR_FORMAT = 5,     /* malformed file */
    DAC_ERR_DEGENERATE = 6, /* zero-norm vector */
    DAC_ERR_IO = 7,         /* filesystem failure */
    DAC_ERR_INTERNAL = 8
} dac_status;

DAC_API const char* dac_status_name(dac_status s);

/* Message describing the last failure on this thread; empty string if none. */
DAC_API const char* dac_last_error(void);

DAC_API void dac_string_free(char* s);

/* ---- synthetic dataset generation ---------------------------------------- */

typedef struct dac_synth_config {
    int32_t seen_classes;
    int32_t unseen_classes;
    int32_t items_per_class;
    int32_t views;
    int32_t input_dim;
    double intra_class_noise;
    double domain_shift;
    double text_noise;
    uint64_t seed;
    int32_t hidden_dim;
    int32_t embed_dim;
} dac_synth_config;

DAC_API void dac_synth_config_init(dac_synth_config* cfg);

/* Writes manifest.json, features.dacf, backbone.dacf under out_dir.
 * files_json_out (optional) receives a JSON array of {path, sha256}. */
DAC_API dac_status dac_gen_synth(const dac_synth_config* cfg, const char* out_dir,
                                 char** files_json_out);

/* ---- adaptation ------------------------------------------------------------ */

enum {
    DAC_LORA_ABLORA = 0,
    DAC_LORA_PLAIN = 1,
    DAC_LORA_FROZEN = 2
};

typedef struct dac_train_config {
    int32_t epochs;
    int32_t batch_size;
    double lr;
    double tau;
    int32_t rank;
    double gamma;
    double lora_alpha; /* > 0 selects gamma = lora_alpha / rank */
    double dropout_p;
    uint64_t seed;
    int32_t lora_mode;          /* DAC_LORA_* */
    int32_t renormalize_pooled; /* bool */
} dac_train_config;

DAC_API void dac_train_config_init(dac_train_config* cfg);

/* Trains adapters on the manifest's train split; writes adapter state to
 * adapters_out (skipped in frozen mode). report_json_out (optional)
 * receives the training report. */
DAC_API dac_status dac_adapt(const char* manifest_path, const char* backbone_path,
                             const dac_train_config* cfg, const char* adapters_out,
                             char** report_json_out);

/* ---- embedding and fusion --------------------------------------------------- */

enum {
    DAC_FUSION_ADD = 0,
    DAC_FUSION_CONCAT = 1
};

enum {
    DAC_ACT_IDENTITY = 0,
    DAC_ACT_RELU = 1,
    DAC_ACT_TANH = 2,
    DAC_ACT_SIGMOID = 3
};

typedef struct dac_fusion_config {
    double alpha;           /* in [0,1] */
    int32_t scheme;         /* DAC_FUSION_* */
    int32_t act;            /* DAC_ACT_* */
    int32_t post_normalize; /* bool */
} dac_fusion_config;

DAC_API void dac_fusion_config_init(dac_fusion_config* cfg);

/* Encodes query+target objects into fused descriptors. adapters_path may be
 * NULL only when zero_shot is nonzero. normalize_views toggles the per-view
 * L2 normalization before pooling (on by default). count_out (optional)
 * receives the number of descriptors written. */
DAC_API dac_status dac_embed(const char* manifest_path, const char* backbone_path,
                             const char* adapters_path, const dac_fusion_config* fusion,
                             int32_t zero_shot, int32_t normalize_views,
                             const char* descriptors_out, size_t* count_out);

/* Known-good fusion weight for a (dataset, backbone) profile; 0.4 fallback. */
DAC_API double dac_default_alpha(const char* dataset_tag, const char* backbone_tag);

/* ---- evaluation -------------------------------------------------------------- */

/* Ranks every query against the target gallery and reports mAP / NDCG /
 * ANMRR percentages. metrics_json_out receives the full report. */
DAC_API dac_status dac_evaluate(const char* manifest_path, const char* descriptors_path,
                                int32_t ndcg_cutoff, const char* per_query_csv,
                                char** metrics_json_out);

/* ---- merging ------------------------------------------------------------------ */

/* Folds adapters into the backbone, writes the merged file and probes the
 * merged-vs-adapted deviation on random inputs. */
DAC_API dac_status dac_merge_adapters(const char* backbone_path, const char* adapters_path,
                                      const char* merged_out, int32_t probes, uint64_t seed,
                                      double* max_rel_deviation_out);

/* ---- dataset inspection --------------------------------------------------------- */

typedef struct dac_dataset dac_dataset;

DAC_API dac_status dac_dataset_open(const char* manifest_path, dac_dataset** out);
DAC_API void dac_dataset_close(dac_dataset* ds);
/* split is one of "train", "query", "target". */
DAC_API dac_status dac_dataset_count(const dac_dataset* ds, const char* split, size_t* out);
DAC_API dac_status dac_dataset_input_dim(const dac_dataset* ds, size_t* out);
DAC_API dac_status dac_dataset_views_per_object(const dac_dataset* ds, size_t* out);

/* ---- utilities -------------------------------------------------------------------- */

DAC_API dac_status dac_file_sha256(const char* path, char** hex_out);

#ifdef __cplusplus
}
#endif

#endif /* DAC_H */
