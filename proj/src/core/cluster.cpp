#include "core/cluster.hpp"

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/util.hpp"

namespace hazgraph::cluster {

using json = nlohmann::json;

EmbeddingSet embed_rationales(const std::vector<classify::HazardRationale>& rationales,
                              gateway::Gateway& gw, const gateway::BackendConfig& cfg,
                              const EmbedOptions& options) {
  if (rationales.empty()) fail(ErrorCode::empty_input, "no rationales to embed");
  EmbeddingSet set;
  set.rationale_refs = rationales;
  set.model_tag = cfg.name;
  set.vectors.reserve(rationales.size());

  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t start = 0; start < rationales.size(); start += batch) {
    const std::size_t end = std::min(start + batch, rationales.size());
    std::vector<std::string> texts;
    texts.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) texts.push_back(rationales[i].text);
    auto vectors = gw.embed_text(texts, cfg);
    for (auto& v : vectors) {
      if (!set.vectors.empty() && v.values.size() != set.vectors.front().size()) {
        fail(ErrorCode::dimension_mismatch, "embedding dimension changed across batches");
      }
      set.vectors.push_back(std::move(v.values));
    }
  }

  if (options.normalize) {
    for (auto& row : set.vectors) {
      double norm2 = 0;
      for (double x : row) norm2 += x * x;
      const double norm = std::sqrt(norm2);
      if (norm > 1e-12) {
        for (double& x : row) x /= norm;
      }
    }
  }
  return set;
}

ClusterAssignment fit(const EmbeddingSet& embeddings, const HdbscanParams& params) {
  return hdbscan_fit(embeddings.vectors, params);
}

std::vector<ClusterSummary> summarize_clusters(const ClusterAssignment& assignment,
                                               const EmbeddingSet& embeddings, Metric metric) {
  if (assignment.labels.size() != embeddings.size()) {
    fail(ErrorCode::invalid_argument, "assignment does not match embedding set");
  }
  std::vector<std::vector<std::size_t>> members(assignment.num_clusters());
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    if (assignment.labels[i] >= 0) members[assignment.labels[i]].push_back(i);
  }

  std::vector<ClusterSummary> summaries;
  for (int c = 0; c < assignment.num_clusters(); ++c) {
    const auto& idx = members[c];
    if (idx.empty()) continue;
    ClusterSummary summary;
    summary.cluster_id = c;
    summary.size = idx.size();

    // Medoid: minimal summed in-cluster distance, lowest index on ties.
    std::size_t medoid = idx[0];
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) {
      double total = 0;
      for (std::size_t j : idx) {
        if (i != j) total += point_distance(embeddings.vectors[i], embeddings.vectors[j], metric);
      }
      if (total < best) {
        best = total;
        medoid = i;
      }
    }

    std::vector<std::pair<double, std::size_t>> by_distance;
    by_distance.reserve(idx.size());
    for (std::size_t i : idx) {
      by_distance.push_back(
          {point_distance(embeddings.vectors[medoid], embeddings.vectors[i], metric), i});
    }
    std::sort(by_distance.begin(), by_distance.end());
    const std::size_t top = std::min<std::size_t>(5, by_distance.size());
    for (std::size_t r = 0; r < top; ++r) {
      summary.exemplar_rationales.push_back(embeddings.rationale_refs[by_distance[r].second].text);
    }
    summaries.push_back(std::move(summary));
  }

  std::sort(summaries.begin(), summaries.end(), [](const ClusterSummary& a, const ClusterSummary& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.cluster_id < b.cluster_id;
  });
  return summaries;
}

std::vector<classify::HazardRationale> select_cluster(const ClusterAssignment& assignment,
                                                      const EmbeddingSet& embeddings,
                                                      int cluster_id) {
  if (assignment.labels.size() != embeddings.size()) {
    fail(ErrorCode::invalid_argument, "assignment does not match embedding set");
  }
  if (cluster_id < 0 || cluster_id >= assignment.num_clusters()) {
    fail(ErrorCode::unknown_cluster, "unknown cluster id: " + std::to_string(cluster_id));
  }
  std::vector<classify::HazardRationale> out;
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    if (assignment.labels[i] == cluster_id) out.push_back(embeddings.rationale_refs[i]);
  }
  return out;
}

std::string assignment_to_jsonl(const ClusterAssignment& assignment,
                                const EmbeddingSet& embeddings) {
  std::string out;
  for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
    json row;
    row["rationale_ref"] = {{"record_id", embeddings.rationale_refs[i].record_id},
                            {"text", embeddings.rationale_refs[i].text}};
    row["label"] = assignment.labels[i];
    row["probability"] = assignment.probabilities[i];
    out += row.dump();
    out.push_back('\n');
  }
  return out;
}

std::string summaries_to_json(const std::vector<ClusterSummary>& summaries) {
  json rows = json::array();
  for (const auto& s : summaries) {
    json row;
    row["id"] = s.cluster_id;
    row["samples"] = s.size;
    row["archetype"] = s.archetype_label ? json(*s.archetype_label) : json(nullptr);
    row["example_rationale"] = s.exemplar_rationales.empty() ? "" : s.exemplar_rationales.front();
    row["exemplars"] = s.exemplar_rationales;
    rows.push_back(std::move(row));
  }
  return rows.dump(2) + "\n";
}

std::vector<std::array<double, 2>> pca_project_2d(const EmbeddingSet& embeddings) {
  const std::size_t n = embeddings.size();
  if (n == 0) return {};
  const std::size_t m = embeddings.vectors.front().size();
  Eigen::MatrixXd data(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) data(i, j) = embeddings.vectors[i][j];
  }
  Eigen::RowVectorXd mean = data.colwise().mean();
  data.rowwise() -= mean;
  Eigen::MatrixXd cov = (data.transpose() * data) / std::max<double>(1.0, double(n) - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);

  std::vector<std::array<double, 2>> out(n, {0.0, 0.0});
  for (int comp = 0; comp < 2 && comp < static_cast<int>(m); ++comp) {
    Eigen::VectorXd axis = solver.eigenvectors().col(static_cast<int>(m) - 1 - comp);
    // Deterministic sign: largest-magnitude entry is positive.
    int arg_max = 0;
    for (int j = 1; j < axis.size(); ++j) {
      if (std::abs(axis[j]) > std::abs(axis[arg_max])) arg_max = j;
    }
    if (axis[arg_max] < 0) axis = -axis;
    Eigen::VectorXd proj = data * axis;
    for (std::size_t i = 0; i < n; ++i) out[i][comp] = proj(static_cast<int>(i));
  }
  return out;
}

}  // namespace hazgraph::cluster
