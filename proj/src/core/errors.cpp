#include "core/errors.hpp"

namespace hazgraph {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "InvalidArgument";
    case ErrorCode::missing_column: return "MissingColumn";
    case ErrorCode::malformed_row: return "MalformedRow";
    case ErrorCode::encoding_error: return "EncodingError";
    case ErrorCode::invalid_range: return "InvalidRange";
    case ErrorCode::timeout: return "Timeout";
    case ErrorCode::rate_limited: return "RateLimited";
    case ErrorCode::malformed_response: return "MalformedResponse";
    case ErrorCode::auth_failure: return "AuthFailure";
    case ErrorCode::content_rejected: return "ContentRejected";
    case ErrorCode::backend_error: return "BackendError";
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::score_out_of_range: return "ScoreOutOfRange";
    case ErrorCode::unparseable_response: return "UnparseableResponse";
    case ErrorCode::unknown_category: return "UnknownCategory";
    case ErrorCode::missing_rationale: return "MissingRationale";
    case ErrorCode::too_few_points: return "TooFewPoints";
    case ErrorCode::unknown_cluster: return "UnknownCluster";
    case ErrorCode::unparseable_graph: return "UnparseableGraph";
    case ErrorCode::no_hazard_node: return "NoHazardNode";
    case ErrorCode::multiple_hazard_nodes: return "MultipleHazardNodes";
    case ErrorCode::empty_graph: return "EmptyGraph";
    case ErrorCode::hazard_node_isolated: return "HazardNodeIsolated";
    case ErrorCode::missing_assertion_score: return "MissingAssertionScore";
    case ErrorCode::partial_scores: return "PartialScores";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::not_psd: return "NotPSD";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::value_out_of_range: return "ValueOutOfRange";
    case ErrorCode::empty_input: return "EmptyInput";
    case ErrorCode::pool_empty: return "PoolEmpty";
    case ErrorCode::too_few_pairs: return "TooFewPairs";
    case ErrorCode::io_error: return "IoError";
    case ErrorCode::config_error: return "ConfigError";
    case ErrorCode::internal_error: return "InternalError";
  }
  return "UnknownError";
}

}  // namespace hazgraph
