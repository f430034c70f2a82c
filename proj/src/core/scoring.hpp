#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/errors.hpp"
#include "core/gateway.hpp"
#include "core/scenegraph.hpp"

namespace hazgraph::scoring {

// Multipliers emphasizing the hazard node and its incident edges. Values
// above 1 express the hazard emphasis; 1 reduces to an unweighted mean.
struct Weights {
  double lambda_node = 2.0;
  double gamma_edge = 1.5;

  void validate() const;
};

struct GraphScoreBreakdown {
  std::map<std::string, double> node_scores;       // node_id -> mean attribute score
  std::map<std::string, double> node_weights;      // node_id -> lambda or 1
  std::map<int, double> edge_scores;               // edge index -> relation score
  std::map<int, double> edge_weights;              // edge index -> gamma or 1
  std::map<std::string, double> assertion_scores;  // assertion_id -> s(a)
  double s_graph = 0.0;

  // Recomputes the weighted average from the stored components.
  double recompute() const;
};

// Carries the scores that did succeed when some assertions failed.
class PartialScoresError : public Error {
 public:
  PartialScoresError(std::string message, std::map<std::string, double> partial)
      : Error(ErrorCode::partial_scores, std::move(message)), partial_(std::move(partial)) {}

  const std::map<std::string, double>& partial() const { return partial_; }

 private:
  std::map<std::string, double> partial_;
};

// One VQA call per assertion; a failure after the gateway's retries leaves
// that assertion missing (never zero) and the whole call surfaces
// PartialScoresError carrying what did succeed.
std::map<std::string, double> score_assertions(const gateway::ImageArtifact& image,
                                               const std::vector<scenegraph::Assertion>& assertions,
                                               gateway::Gateway& gw,
                                               const gateway::BackendConfig& cfg,
                                               std::size_t concurrency = 4);

// Node score = mean of the node's attribute assertion scores; edge score =
// the edge's single assertion score; hazard node weighted lambda, hazard
// incident edges weighted gamma; s_graph is the weighted average. Nodes
// without attributes contribute no term.
GraphScoreBreakdown aggregate_graph_score(const scenegraph::SceneGraph& graph,
                                          const std::map<std::string, double>& scores,
                                          const Weights& weights);

double cosine_similarity(const std::vector<double>& u, const std::vector<double>& v);

// CLIP-style alignment: cosine between the prompt embedding and the image
// embedding in a joint space; reported raw (unrescaled).
double embedding_alignment_score(const std::string& prompt, const gateway::ImageArtifact& image,
                                 gateway::Gateway& gw, const gateway::BackendConfig& text_cfg,
                                 const gateway::BackendConfig& image_cfg);

// BLIP-style match probability, passed through unmodified.
double match_head_score(const std::string& prompt, const gateway::ImageArtifact& image,
                        gateway::Gateway& gw, const gateway::BackendConfig& cfg);

struct FidStats {
  std::vector<double> mean;                     // length m
  std::vector<std::vector<double>> covariance;  // m x m, symmetric
  std::size_t sample_count = 0;
};

// Sample mean and unbiased (N-1) covariance of row features.
FidStats fid_stats(const std::vector<std::vector<double>>& features);

// Frechet distance between two Gaussian summaries:
// ||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), with the trace of
// the matrix square root taken from the symmetric form
// (S_r^{1/2} S_g S_r^{1/2})^{1/2}; tiny negative eigenvalues are clamped.
double fid(const FidStats& real, const FidStats& gen);

std::string breakdown_to_json(const GraphScoreBreakdown& breakdown, const Weights& weights,
                              const std::string& graph_id);

}  // namespace hazgraph::scoring
