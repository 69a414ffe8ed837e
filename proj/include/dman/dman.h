/*
 * dman - joint image-text graph embedding with per-word visual attention.
 *
 * C interface to the shared library. All functions return a dman_status;
 * on failure dman_last_error() holds a thread-local human-readable message
 * describing the most recent failure on the calling thread. Opaque handles
 * are created and destroyed by the matching _open/_create and _free calls;
 * a handle is never valid after _free. Unless stated otherwise, handles are
 * safe to share across threads for read-only use.
 */

#ifndef DMAN_H_
#define DMAN_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DMAN_API __declspec(dllexport)
#else
#define DMAN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dman_status {
  DMAN_OK = 0,
  DMAN_ERR_INVALID_ARGUMENT = 1, /* null pointer or malformed argument */
  DMAN_ERR_DIMENSION = 2,        /* tensor/matrix shape mismatch */
  DMAN_ERR_DOMAIN = 3,           /* value outside a mathematical domain */
  DMAN_ERR_STATE = 4,            /* operation illegal in the current state */
  DMAN_ERR_CONFIG = 5,           /* invalid configuration value or key */
  DMAN_ERR_INPUT = 6,            /* invalid user data */
  DMAN_ERR_IO = 7,               /* missing file or failed read/write */
  DMAN_ERR_CORRUPT = 8,          /* file exists but fails validation */
  DMAN_ERR_INTERNAL = 9,
} dman_status;

typedef struct dman_bundle dman_bundle; /* a loaded dataset */
typedef struct dman_config dman_config; /* a full run configuration */
typedef struct dman_model dman_model;   /* a trained model (from a checkpoint) */

DMAN_API const char* dman_version(void);
DMAN_API const char* dman_status_name(dman_status status);
DMAN_API const char* dman_last_error(void);

/* ---- configuration ----------------------------------------------------- */

DMAN_API dman_status dman_config_create(dman_config** out);
DMAN_API dman_status dman_config_load(const char* path, dman_config** out);
DMAN_API void dman_config_free(dman_config* cfg);

/* Dotted-path override, e.g. ("train.epochs", "300") or ("loss.beta", "0").
 * The value is parsed as JSON; bare words are taken as strings. Unknown keys
 * are rejected. */
DMAN_API dman_status dman_config_set(dman_config* cfg, const char* key, const char* value);
DMAN_API dman_status dman_config_set_seed(dman_config* cfg, uint64_t seed);

/* Serialized JSON of the full configuration. The pointer stays valid until
 * the next call on the same handle or dman_config_free. */
DMAN_API const char* dman_config_json(dman_config* cfg);

/* ---- synthetic data ----------------------------------------------------- */

typedef struct dman_synthetic_spec {
  uint32_t topics;
  uint32_t nodes_per_topic;
  uint32_t regions;     /* patches per image */
  uint32_t feature_dim; /* region feature width */
  uint32_t vocab;
  uint32_t words_per_topic;
  uint32_t signature_regions;
  double signature_scale;
  double noise_sigma;
  double word_prob;
  double co_label_prob;
  double test_fraction;
  uint64_t seed;
  int with_images;
  uint32_t image_channels;
  uint32_t image_height;
  uint32_t image_width;
} dman_synthetic_spec;

DMAN_API dman_status dman_synthetic_spec_init(dman_synthetic_spec* spec); /* fills defaults */
DMAN_API dman_status dman_generate(const dman_synthetic_spec* spec, const char* out_dir);

/* ---- datasets ----------------------------------------------------------- */

DMAN_API dman_status dman_bundle_open(const char* dir, dman_bundle** out);
DMAN_API void dman_bundle_free(dman_bundle* bundle);

/* Any out pointer may be null. */
DMAN_API dman_status dman_bundle_counts(const dman_bundle* bundle, uint32_t* nodes, uint32_t* vocab,
                                        uint32_t* regions, uint32_t* feature_dim, uint32_t* classes);

/* Writes the shared-label link graph to out_path. split is "train" or
 * "all". edges_out may be null. */
DMAN_API dman_status dman_build_graph(const dman_bundle* bundle, uint32_t max_links, uint64_t seed,
                                      const char* split, const char* out_path, uint64_t* edges_out);

/* ---- training and embedding --------------------------------------------- */

/* Trains from scratch on the bundle's training split and writes a
 * checkpoint (and optionally a per-epoch report table). graph_path may be
 * null to build the graph from the config; report_out and final_joint_out
 * may be null. */
DMAN_API dman_status dman_train(const dman_bundle* bundle, const dman_config* cfg, const char* graph_path,
                                const char* checkpoint_out, const char* report_out, double* final_joint_out);

DMAN_API dman_status dman_model_open(const char* checkpoint_path, dman_model** out);
DMAN_API void dman_model_free(dman_model* model);
DMAN_API dman_status dman_model_info(const dman_model* model, uint32_t* vocab, uint32_t* regions,
                                     uint32_t* feature_dim, int32_t* epoch);

/* Evaluation-mode embeddings for "train", "test" or "all" nodes. */
DMAN_API dman_status dman_embed(const dman_model* model, const dman_bundle* bundle, const char* split,
                                const char* out_path);

/* Per-word attention maps for the chosen nodes/words, one file per node in
 * out_dir. */
DMAN_API dman_status dman_export_attention(const dman_model* model, const dman_bundle* bundle,
                                           const uint32_t* node_ids, size_t node_count, const uint32_t* word_ids,
                                           size_t word_count, const char* out_dir);

/* ---- evaluation ---------------------------------------------------------- */

/* Trains the downstream classifier on the train-split embeddings, scores the
 * test-split embeddings, writes a metric table and key=value file. Either
 * output path and either metric out pointer may be null. */
DMAN_API dman_status dman_eval_classify(const dman_bundle* bundle, const char* train_embeddings,
                                        const char* test_embeddings, const dman_config* cfg, const char* table_out,
                                        const char* kv_out, double* micro_f1_out, double* map_out);

/* Label-word queries against an embedding file; p_at_k_out (when non-null)
 * must hold k_count doubles. */
DMAN_API dman_status dman_eval_search(const dman_bundle* bundle, const char* embeddings_path, const uint32_t* ks,
                                      size_t k_count, const char* table_out, const char* kv_out,
                                      double* p_at_k_out);

/* ---- verification -------------------------------------------------------- */

/* Finite-difference check of every differentiable op and of the full joint
 * objective on a toy graph. table_out may be null. */
DMAN_API dman_status dman_gradcheck(const char* table_out, double* max_rel_err_out);

/* Times training epochs across problem sizes; writes the table and returns
 * the log-log slope of seconds-per-epoch against size. */
DMAN_API dman_status dman_bench_complexity(const dman_config* cfg, const uint32_t* sizes, size_t size_count,
                                           const char* table_out, double* slope_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* DMAN_H_ */
