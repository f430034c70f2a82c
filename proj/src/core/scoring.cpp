#include "core/scoring.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <cmath>
#include <mutex>
#include <optional>

#include "core/util.hpp"

namespace hazgraph::scoring {

using json = nlohmann::json;

void Weights::validate() const {
  if (!(lambda_node > 0) || !(gamma_edge > 0)) {
    fail(ErrorCode::invalid_argument, "weights must be positive");
  }
}

double GraphScoreBreakdown::recompute() const {
  double numerator = 0.0;
  double denominator = 0.0;
  for (const auto& [node_id, score] : node_scores) {
    const double w = node_weights.at(node_id);
    numerator += w * score;
    denominator += w;
  }
  for (const auto& [edge_index, score] : edge_scores) {
    const double w = edge_weights.at(edge_index);
    numerator += w * score;
    denominator += w;
  }
  return denominator > 0 ? numerator / denominator : 0.0;
}

std::map<std::string, double> score_assertions(const gateway::ImageArtifact& image,
                                               const std::vector<scenegraph::Assertion>& assertions,
                                               gateway::Gateway& gw,
                                               const gateway::BackendConfig& cfg,
                                               std::size_t concurrency) {
  if (assertions.empty()) fail(ErrorCode::empty_input, "no assertions to score");

  std::vector<std::optional<double>> values(assertions.size());
  std::vector<std::string> failures;
  std::mutex failures_mu;
  gateway::parallel_for(assertions.size(), concurrency, [&](std::size_t i) {
    try {
      values[i] = gw.answer_assertion({image, assertions[i].text}, cfg);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::auth_failure) throw;
      std::lock_guard<std::mutex> lock(failures_mu);
      failures.push_back(assertions[i].assertion_id + ": " + e.what());
    }
  });

  std::map<std::string, double> scores;
  for (std::size_t i = 0; i < assertions.size(); ++i) {
    if (values[i]) scores[assertions[i].assertion_id] = *values[i];
  }
  if (!failures.empty()) {
    std::string message = std::to_string(failures.size()) + "/" +
                          std::to_string(assertions.size()) +
                          " assertions failed; first: " + failures.front();
    throw PartialScoresError(std::move(message), std::move(scores));
  }
  return scores;
}

GraphScoreBreakdown aggregate_graph_score(const scenegraph::SceneGraph& graph,
                                          const std::map<std::string, double>& scores,
                                          const Weights& weights) {
  weights.validate();
  scenegraph::validate_scene_graph(graph);
  const auto assertions = scenegraph::graph_to_assertions(graph);

  GraphScoreBreakdown breakdown;
  for (const auto& assertion : assertions) {
    auto it = scores.find(assertion.assertion_id);
    if (it == scores.end()) {
      fail(ErrorCode::missing_assertion_score, "no score for assertion " + assertion.assertion_id);
    }
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      fail(ErrorCode::score_out_of_range,
           "assertion " + assertion.assertion_id + " score outside [0,1]");
    }
    breakdown.assertion_scores[assertion.assertion_id] = it->second;
  }

  const std::string hazard_id = graph.hazard_node().node_id;

  for (const auto& node : graph.nodes) {
    if (node.attributes.empty()) continue;  // no attribute assertions, no term
    double total = 0.0;
    for (std::size_t a = 0; a < node.attributes.size(); ++a) {
      total += breakdown.assertion_scores.at("n:" + node.node_id + ":" + std::to_string(a));
    }
    breakdown.node_scores[node.node_id] = total / static_cast<double>(node.attributes.size());
    breakdown.node_weights[node.node_id] = node.node_id == hazard_id ? weights.lambda_node : 1.0;
  }

  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto& edge = graph.edges[e];
    breakdown.edge_scores[static_cast<int>(e)] =
        breakdown.assertion_scores.at("e:" + std::to_string(e));
    breakdown.edge_weights[static_cast<int>(e)] =
        (edge.source == hazard_id || edge.target == hazard_id) ? weights.gamma_edge : 1.0;
  }

  breakdown.s_graph = breakdown.recompute();
  return breakdown;
}

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::dimension_mismatch, "cosine_similarity dimension mismatch: " +
                                            std::to_string(u.size()) + " vs " +
                                            std::to_string(v.size()));
  }
  if (u.empty()) fail(ErrorCode::invalid_argument, "cosine_similarity of empty vectors");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) fail(ErrorCode::zero_vector, "cosine similarity of a zero vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

double embedding_alignment_score(const std::string& prompt, const gateway::ImageArtifact& image,
                                 gateway::Gateway& gw, const gateway::BackendConfig& text_cfg,
                                 const gateway::BackendConfig& image_cfg) {
  auto text_vectors = gw.embed_text({prompt}, text_cfg);
  auto image_vector = gw.embed_image(image, image_cfg);
  if (text_vectors.front().dim() != image_vector.dim()) {
    fail(ErrorCode::dimension_mismatch,
         "text and image embeddings do not share a space: " +
             std::to_string(text_vectors.front().dim()) + " vs " +
             std::to_string(image_vector.dim()));
  }
  return cosine_similarity(text_vectors.front().values, image_vector.values);
}

double match_head_score(const std::string& prompt, const gateway::ImageArtifact& image,
                        gateway::Gateway& gw, const gateway::BackendConfig& cfg) {
  return gw.match_score(image, prompt, cfg);
}

FidStats fid_stats(const std::vector<std::vector<double>>& features) {
  const std::size_t n = features.size();
  if (n < 2) fail(ErrorCode::too_few_samples, "need at least 2 feature rows");
  const std::size_t m = features.front().size();
  for (const auto& row : features) {
    if (row.size() != m) fail(ErrorCode::dimension_mismatch, "inconsistent feature dimensions");
  }

  FidStats stats;
  stats.sample_count = n;
  stats.mean.assign(m, 0.0);
  for (const auto& row : features) {
    for (std::size_t j = 0; j < m; ++j) stats.mean[j] += row[j];
  }
  for (double& x : stats.mean) x /= static_cast<double>(n);

  stats.covariance.assign(m, std::vector<double>(m, 0.0));
  for (const auto& row : features) {
    for (std::size_t i = 0; i < m; ++i) {
      const double di = row[i] - stats.mean[i];
      for (std::size_t j = i; j < m; ++j) {
        stats.covariance[i][j] += di * (row[j] - stats.mean[j]);
      }
    }
  }
  const double divisor = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      stats.covariance[i][j] /= divisor;
      stats.covariance[j][i] = stats.covariance[i][j];
    }
  }
  return stats;
}

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& matrix, std::size_t m) {
  Eigen::MatrixXd out(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (matrix[i].size() != m) fail(ErrorCode::dimension_mismatch, "covariance is not square");
    for (std::size_t j = 0; j < m; ++j) out(i, j) = matrix[i][j];
  }
  return out;
}

void check_symmetric(const Eigen::MatrixXd& s, const char* which) {
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (((s - s.transpose()).cwiseAbs().maxCoeff()) > 1e-10 * scale) {
    fail(ErrorCode::invalid_argument, std::string(which) + " covariance is not symmetric");
  }
}

// Eigenvalues of a covariance must be >= -1e-6 (relative); smaller negatives
// are numerical noise and clamp to zero.
Eigen::VectorXd checked_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& solver,
                                    const char* which) {
  Eigen::VectorXd values = solver.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (int i = 0; i < values.size(); ++i) {
    if (values[i] < -1e-6 * scale) {
      fail(ErrorCode::not_psd, std::string(which) + " covariance is not positive semidefinite");
    }
    if (values[i] < 0) values[i] = 0;
  }
  return values;
}

}  // namespace

double fid(const FidStats& real, const FidStats& gen) {
  if (real.mean.size() != gen.mean.size()) {
    fail(ErrorCode::dimension_mismatch, "FID stats dimension mismatch");
  }
  const std::size_t m = real.mean.size();
  if (m == 0) fail(ErrorCode::invalid_argument, "empty FID stats");

  Eigen::MatrixXd sigma_r = to_eigen(real.covariance, m);
  Eigen::MatrixXd sigma_g = to_eigen(gen.covariance, m);
  check_symmetric(sigma_r, "real");
  check_symmetric(sigma_g, "generated");
  sigma_r = ((sigma_r + sigma_r.transpose()) / 2).eval();
  sigma_g = ((sigma_g + sigma_g.transpose()) / 2).eval();

  double mean_term = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double d = real.mean[i] - gen.mean[i];
    mean_term += d * d;
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver_r(sigma_r);
  Eigen::VectorXd eig_r = checked_eigenvalues(solver_r, "real");
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver_g(sigma_g);
    checked_eigenvalues(solver_g, "generated");
  }

  Eigen::MatrixXd sqrt_r =
      solver_r.eigenvectors() * eig_r.cwiseSqrt().asDiagonal() * solver_r.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_r * sigma_g * sqrt_r;
  inner = ((inner + inner.transpose()) / 2).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver_inner(inner);
  double trace_sqrt = 0.0;
  for (int i = 0; i < solver_inner.eigenvalues().size(); ++i) {
    trace_sqrt += std::sqrt(std::max(0.0, solver_inner.eigenvalues()[i]));
  }

  double result = mean_term + sigma_r.trace() + sigma_g.trace() - 2.0 * trace_sqrt;
  if (result < 0 && result > -1e-8) result = 0.0;
  return result;
}

std::string breakdown_to_json(const GraphScoreBreakdown& breakdown, const Weights& weights,
                              const std::string& graph_id) {
  json out;
  out["graph_id"] = graph_id;
  out["weights"] = {{"lambda_node", weights.lambda_node}, {"gamma_edge", weights.gamma_edge}};
  out["node_scores"] = breakdown.node_scores;
  out["node_weights"] = breakdown.node_weights;
  json edge_scores = json::object();
  json edge_weights = json::object();
  for (const auto& [index, score] : breakdown.edge_scores) {
    edge_scores[std::to_string(index)] = score;
    edge_weights[std::to_string(index)] = breakdown.edge_weights.at(index);
  }
  out["edge_scores"] = std::move(edge_scores);
  out["edge_weights"] = std::move(edge_weights);
  out["assertion_scores"] = breakdown.assertion_scores;
  out["s_graph"] = breakdown.s_graph;
  return out.dump(2) + "\n";
}

}  // namespace hazgraph::scoring
