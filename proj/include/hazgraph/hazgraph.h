/*
 * hazgraph: hazard scene-graph generation and evaluation pipeline.
 *
 * C interface to the pipeline library. All functions return hg_status;
 * hg_last_error() describes the most recent failure on the calling thread.
 * Strings returned through char** out-parameters are heap-allocated and must
 * be released with hg_string_free().
 */

#ifndef HAZGRAPH_H
#define HAZGRAPH_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HG_API __declspec(dllexport)
#else
#define HG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hg_status {
  HG_OK = 0,
  HG_ERR_INVALID_ARGUMENT = 1,
  HG_ERR_PARSE = 2,      /* malformed input: CSV rows, JSON, model replies */
  HG_ERR_IO = 3,
  HG_ERR_BACKEND = 4,    /* model backend failed after retries */
  HG_ERR_AUTH = 5,
  HG_ERR_TIMEOUT = 6,
  HG_ERR_OUT_OF_RANGE = 7,
  HG_ERR_TOO_FEW_POINTS = 8,
  HG_ERR_NOT_PSD = 9,
  HG_ERR_NOT_FOUND = 10, /* unknown cluster, missing assertion score */
  HG_ERR_CONFIG = 11,
  HG_ERR_ITEM_FAILURES = 12, /* stage finished but some items failed */
  HG_ERR_INTERNAL = 13
} hg_status;

HG_API const char* hg_version(void);

/* Message for the last failure on this thread; empty string if none. */
HG_API const char* hg_last_error(void);

HG_API void hg_string_free(char* text);

/* ---- metric kernels ---- */

/* <u,v> / (||u|| ||v||) */
HG_API hg_status hg_cosine_similarity(const double* u, const double* v, size_t dim, double* out);

/* Frechet distance between Gaussian summaries (mean, covariance); cov_* are
 * row-major dim x dim. */
HG_API hg_status hg_frechet_distance(const double* mean_a, const double* cov_a,
                                     const double* mean_b, const double* cov_b, size_t dim,
                                     double* out);

/* Shannon entropy (bits) of the equal-width histogram of values over
 * [lo, hi]; the last bin includes its right edge. */
HG_API hg_status hg_shannon_entropy(const double* values, size_t count, double lo, double hi,
                                    size_t bins, double* out_bits);

/* HDBSCAN over row-major points (count x dim). out_labels gets -1 for noise
 * or a cluster id per point; out_probabilities (optional, may be NULL) gets
 * cluster membership strengths. use_cosine selects cosine distance instead
 * of euclidean. */
HG_API hg_status hg_hdbscan(const double* points, size_t count, size_t dim,
                            int32_t min_cluster_size, int32_t min_samples, int32_t use_cosine,
                            int32_t* out_labels, double* out_probabilities);

/* ---- scene graph kernels ----
 *
 * graph_json follows the pipeline schema:
 *   {graph_id, source_rationale:{record_id,text}, cluster_id,
 *    nodes:[{id,label,attributes,is_hazard}], edges:[{source,target,relation}]}
 */

/* Derives the verifiable assertion list of a graph. */
HG_API hg_status hg_graph_assertions(const char* graph_json, char** out_assertions_json);

/* Aggregates per-assertion scores ({assertion_id: value}) into the weighted
 * graph compliance score; returns the full breakdown as JSON. */
HG_API hg_status hg_graph_score(const char* graph_json, const char* scores_json,
                                double lambda_node, double gamma_edge, char** out_breakdown_json);

/* ---- pipeline ---- */

typedef struct hg_pipeline hg_pipeline;

/* config_json: pipeline configuration document; NULL or "{}" for defaults
 * (offline mock backends). Secrets come from HG_<BACKEND>_URL and
 * HG_<BACKEND>_KEY environment variables, never from the config. */
HG_API hg_status hg_pipeline_open(const char* config_json, hg_pipeline** out);
HG_API void hg_pipeline_close(hg_pipeline* pipeline);

/* Stage commands; each returns a JSON summary. HG_ERR_ITEM_FAILURES means the
 * stage completed with some per-item failures recorded in the summary. */
HG_API hg_status hg_pipeline_classify(hg_pipeline* pipeline, const char* csv_path,
                                      char** out_summary_json);
HG_API hg_status hg_pipeline_cluster(hg_pipeline* pipeline, char** out_summary_json);
HG_API hg_status hg_pipeline_generate(hg_pipeline* pipeline, int32_t cluster_id,
                                      char** out_summary_json); /* -1 = config / largest */
HG_API hg_status hg_pipeline_score(hg_pipeline* pipeline, char** out_summary_json);
HG_API hg_status hg_pipeline_analyze(hg_pipeline* pipeline, int32_t in_domain_shuffle,
                                     const char* image_pool_dir /* may be NULL */,
                                     char** out_summary_json);
HG_API hg_status hg_pipeline_run_all(hg_pipeline* pipeline, const char* csv_path,
                                     int32_t in_domain_shuffle,
                                     const char* image_pool_dir /* may be NULL */,
                                     char** out_summary_json);

#ifdef __cplusplus
}
#endif

#endif /* HAZGRAPH_H */
