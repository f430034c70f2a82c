#pragma once

#include <stdexcept>
#include <string>

namespace hazgraph {

// One code per failure mode surfaced across the library. Codes are stable:
// the C API maps them onto hg_status values.
enum class ErrorCode {
  invalid_argument,

  // ingest
  missing_column,
  malformed_row,
  encoding_error,
  invalid_range,

  // gateway
  timeout,
  rate_limited,
  malformed_response,
  auth_failure,
  content_rejected,
  backend_error,
  dimension_mismatch,
  score_out_of_range,

  // classify
  unparseable_response,
  unknown_category,
  missing_rationale,

  // cluster
  too_few_points,
  unknown_cluster,

  // scenegraph
  unparseable_graph,
  no_hazard_node,
  multiple_hazard_nodes,
  empty_graph,
  hazard_node_isolated,

  // scoring
  missing_assertion_score,
  partial_scores,
  zero_vector,
  not_psd,
  too_few_samples,

  // analysis
  value_out_of_range,
  empty_input,
  pool_empty,
  too_few_pairs,

  io_error,
  config_error,
  internal_error,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace hazgraph
