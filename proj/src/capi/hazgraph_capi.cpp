#include "hazgraph/hazgraph.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "core/analysis.hpp"
#include "core/errors.hpp"
#include "core/hdbscan.hpp"
#include "core/pipeline.hpp"
#include "core/scenegraph.hpp"
#include "core/scoring.hpp"

using namespace hazgraph;

namespace {

constexpr const char* kVersion = "0.1.0";

thread_local std::string tl_last_error;

hg_status status_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument:
    case ErrorCode::invalid_range:
    case ErrorCode::zero_vector:
    case ErrorCode::dimension_mismatch:
    case ErrorCode::empty_input:
    case ErrorCode::too_few_pairs:
    case ErrorCode::too_few_samples:
      return HG_ERR_INVALID_ARGUMENT;
    case ErrorCode::missing_column:
    case ErrorCode::malformed_row:
    case ErrorCode::encoding_error:
    case ErrorCode::unparseable_response:
    case ErrorCode::unknown_category:
    case ErrorCode::missing_rationale:
    case ErrorCode::unparseable_graph:
    case ErrorCode::no_hazard_node:
    case ErrorCode::multiple_hazard_nodes:
    case ErrorCode::empty_graph:
    case ErrorCode::hazard_node_isolated:
      return HG_ERR_PARSE;
    case ErrorCode::io_error:
    case ErrorCode::pool_empty:
      return HG_ERR_IO;
    case ErrorCode::rate_limited:
    case ErrorCode::malformed_response:
    case ErrorCode::backend_error:
    case ErrorCode::content_rejected:
    case ErrorCode::partial_scores:
      return HG_ERR_BACKEND;
    case ErrorCode::auth_failure:
      return HG_ERR_AUTH;
    case ErrorCode::timeout:
      return HG_ERR_TIMEOUT;
    case ErrorCode::score_out_of_range:
    case ErrorCode::value_out_of_range:
      return HG_ERR_OUT_OF_RANGE;
    case ErrorCode::too_few_points:
      return HG_ERR_TOO_FEW_POINTS;
    case ErrorCode::not_psd:
      return HG_ERR_NOT_PSD;
    case ErrorCode::unknown_cluster:
    case ErrorCode::missing_assertion_score:
      return HG_ERR_NOT_FOUND;
    case ErrorCode::config_error:
      return HG_ERR_CONFIG;
    case ErrorCode::internal_error:
      return HG_ERR_INTERNAL;
  }
  return HG_ERR_INTERNAL;
}

char* dup_string(const std::string& text) {
  char* out = static_cast<char*>(std::malloc(text.size() + 1));
  if (out) std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

template <typename Fn>
hg_status guarded(Fn&& fn) {
  try {
    tl_last_error.clear();
    return fn();
  } catch (const Error& e) {
    tl_last_error = std::string(error_code_name(e.code())) + ": " + e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    tl_last_error = e.what();
    return HG_ERR_INTERNAL;
  } catch (...) {
    tl_last_error = "unknown error";
    return HG_ERR_INTERNAL;
  }
}

hg_status require(bool condition, const char* message) {
  if (condition) return HG_OK;
  tl_last_error = message;
  return HG_ERR_INVALID_ARGUMENT;
}

// Stage summaries surface per-item failures through the status code.
hg_status summary_status(const nlohmann::json& summary) {
  return summary.value("item_failures", std::size_t{0}) > 0 ? HG_ERR_ITEM_FAILURES : HG_OK;
}

}  // namespace

struct hg_pipeline {
  pipeline::Pipeline impl;
  explicit hg_pipeline(pipeline::PipelineConfig config) : impl(std::move(config)) {}
};

extern "C" {

const char* hg_version(void) { return kVersion; }

const char* hg_last_error(void) { return tl_last_error.c_str(); }

void hg_string_free(char* text) { std::free(text); }

hg_status hg_cosine_similarity(const double* u, const double* v, size_t dim, double* out) {
  if (auto bad = require(u && v && out && dim > 0, "null pointer or zero dim")) return bad;
  return guarded([&] {
    std::vector<double> uu(u, u + dim), vv(v, v + dim);
    *out = scoring::cosine_similarity(uu, vv);
    return HG_OK;
  });
}

hg_status hg_frechet_distance(const double* mean_a, const double* cov_a, const double* mean_b,
                              const double* cov_b, size_t dim, double* out) {
  if (auto bad = require(mean_a && cov_a && mean_b && cov_b && out && dim > 0,
                         "null pointer or zero dim")) {
    return bad;
  }
  return guarded([&] {
    auto unpack = [dim](const double* mean, const double* cov) {
      scoring::FidStats stats;
      stats.sample_count = 2;
      stats.mean.assign(mean, mean + dim);
      stats.covariance.assign(dim, std::vector<double>(dim));
      for (size_t i = 0; i < dim; ++i) {
        for (size_t j = 0; j < dim; ++j) stats.covariance[i][j] = cov[i * dim + j];
      }
      return stats;
    };
    *out = scoring::fid(unpack(mean_a, cov_a), unpack(mean_b, cov_b));
    return HG_OK;
  });
}

hg_status hg_shannon_entropy(const double* values, size_t count, double lo, double hi, size_t bins,
                             double* out_bits) {
  if (auto bad = require(values && out_bits, "null pointer")) return bad;
  return guarded([&] {
    std::vector<double> v(values, values + count);
    *out_bits = analysis::shannon_entropy(v, lo, hi, bins);
    return HG_OK;
  });
}

hg_status hg_hdbscan(const double* points, size_t count, size_t dim, int32_t min_cluster_size,
                     int32_t min_samples, int32_t use_cosine, int32_t* out_labels,
                     double* out_probabilities) {
  if (auto bad = require(points && out_labels && count > 0 && dim > 0, "null pointer or empty input")) {
    return bad;
  }
  return guarded([&] {
    std::vector<std::vector<double>> rows(count, std::vector<double>(dim));
    for (size_t i = 0; i < count; ++i) {
      for (size_t j = 0; j < dim; ++j) rows[i][j] = points[i * dim + j];
    }
    cluster::HdbscanParams params;
    params.min_cluster_size = min_cluster_size;
    params.min_samples = min_samples;
    params.metric = use_cosine ? cluster::Metric::cosine_distance : cluster::Metric::euclidean;
    auto assignment = cluster::hdbscan_fit(rows, params);
    for (size_t i = 0; i < count; ++i) {
      out_labels[i] = assignment.labels[i];
      if (out_probabilities) out_probabilities[i] = assignment.probabilities[i];
    }
    return HG_OK;
  });
}

hg_status hg_graph_assertions(const char* graph_json, char** out_assertions_json) {
  if (auto bad = require(graph_json && out_assertions_json, "null pointer")) return bad;
  return guarded([&] {
    auto graph = scenegraph::graph_from_json(graph_json);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& assertion : scenegraph::graph_to_assertions(graph)) {
      rows.push_back(
          {{"assertion_id", assertion.assertion_id},
           {"text", assertion.text},
           {"kind", assertion.kind == scenegraph::Assertion::Kind::attribute ? "attribute"
                                                                             : "relation"}});
    }
    *out_assertions_json = dup_string(rows.dump());
    return HG_OK;
  });
}

hg_status hg_graph_score(const char* graph_json, const char* scores_json, double lambda_node,
                         double gamma_edge, char** out_breakdown_json) {
  if (auto bad = require(graph_json && scores_json && out_breakdown_json, "null pointer")) {
    return bad;
  }
  return guarded([&] {
    auto graph = scenegraph::graph_from_json(graph_json);
    nlohmann::json scores_parsed = nlohmann::json::parse(scores_json, nullptr, false);
    if (scores_parsed.is_discarded() || !scores_parsed.is_object()) {
      fail(ErrorCode::invalid_argument, "scores_json must be a JSON object");
    }
    std::map<std::string, double> scores;
    for (const auto& [key, value] : scores_parsed.items()) scores[key] = value.get<double>();
    scoring::Weights weights{lambda_node, gamma_edge};
    auto breakdown = scoring::aggregate_graph_score(graph, scores, weights);
    *out_breakdown_json = dup_string(scoring::breakdown_to_json(breakdown, weights, graph.graph_id));
    return HG_OK;
  });
}

hg_status hg_pipeline_open(const char* config_json, hg_pipeline** out) {
  if (auto bad = require(out != nullptr, "null out pointer")) return bad;
  *out = nullptr;
  return guarded([&] {
    auto config = pipeline::PipelineConfig::from_json(
        config_json && *config_json ? config_json : "{}");
    *out = new hg_pipeline(std::move(config));
    return HG_OK;
  });
}

void hg_pipeline_close(hg_pipeline* pipeline) { delete pipeline; }

hg_status hg_pipeline_classify(hg_pipeline* pipeline, const char* csv_path,
                               char** out_summary_json) {
  if (auto bad = require(pipeline && csv_path && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.classify(csv_path);
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

hg_status hg_pipeline_cluster(hg_pipeline* pipeline, char** out_summary_json) {
  if (auto bad = require(pipeline && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.cluster();
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

hg_status hg_pipeline_generate(hg_pipeline* pipeline, int32_t cluster_id,
                               char** out_summary_json) {
  if (auto bad = require(pipeline && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.generate(cluster_id);
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

hg_status hg_pipeline_score(hg_pipeline* pipeline, char** out_summary_json) {
  if (auto bad = require(pipeline && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.score();
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

hg_status hg_pipeline_analyze(hg_pipeline* pipeline, int32_t in_domain_shuffle,
                              const char* image_pool_dir, char** out_summary_json) {
  if (auto bad = require(pipeline && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.analyze(in_domain_shuffle != 0,
                                          image_pool_dir ? image_pool_dir : "");
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

hg_status hg_pipeline_run_all(hg_pipeline* pipeline, const char* csv_path,
                              int32_t in_domain_shuffle, const char* image_pool_dir,
                              char** out_summary_json) {
  if (auto bad = require(pipeline && csv_path && out_summary_json, "null pointer")) return bad;
  return guarded([&] {
    auto summary = pipeline->impl.run_all(csv_path, in_domain_shuffle != 0,
                                          image_pool_dir ? image_pool_dir : "");
    *out_summary_json = dup_string(summary.dump());
    return summary_status(summary);
  });
}

}  // extern "C"
