#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "core/classify.hpp"
#include "core/gateway.hpp"
#include "core/hdbscan.hpp"

namespace hazgraph::cluster {

struct EmbeddingSet {
  std::vector<std::vector<double>> vectors;            // N x m
  std::vector<classify::HazardRationale> rationale_refs;  // N-aligned
  std::string model_tag;

  std::size_t size() const { return vectors.size(); }
};

struct EmbedOptions {
  std::size_t batch_size = 64;
  // Unit-normalize rows so euclidean distance is monotone in cosine distance.
  bool normalize = true;
};

EmbeddingSet embed_rationales(const std::vector<classify::HazardRationale>& rationales,
                              gateway::Gateway& gw, const gateway::BackendConfig& cfg,
                              const EmbedOptions& options = {});

ClusterAssignment fit(const EmbeddingSet& embeddings, const HdbscanParams& params);

struct ClusterSummary {
  int cluster_id = 0;
  std::size_t size = 0;
  std::vector<std::string> exemplar_rationales;  // nearest the medoid, medoid first
  std::optional<std::string> archetype_label;    // human-assigned downstream
};

// Size, medoid, and top-5 exemplars per cluster, largest first.
std::vector<ClusterSummary> summarize_clusters(const ClusterAssignment& assignment,
                                               const EmbeddingSet& embeddings,
                                               Metric metric = Metric::euclidean);

// The rationales of one cluster; noise (-1) is not selectable.
std::vector<classify::HazardRationale> select_cluster(const ClusterAssignment& assignment,
                                                      const EmbeddingSet& embeddings,
                                                      int cluster_id);

// Persistence: {rationale_ref:{record_id,text}, label, probability} per line.
std::string assignment_to_jsonl(const ClusterAssignment& assignment,
                                const EmbeddingSet& embeddings);
std::string summaries_to_json(const std::vector<ClusterSummary>& summaries);

// 2-D PCA projection for scatter exports.
std::vector<std::array<double, 2>> pca_project_2d(const EmbeddingSet& embeddings);

}  // namespace hazgraph::cluster
