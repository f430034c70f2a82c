#pragma once

#include <cstddef>
#include <vector>

namespace hazgraph::cluster {

enum class Metric { euclidean, cosine_distance };

struct HdbscanParams {
  int min_cluster_size = 30;
  int min_samples = 10;
  Metric metric = Metric::euclidean;

  void validate() const;
};

struct ClusterAssignment {
  std::vector<int> labels;            // -1 noise, else 0..K-1, aligned with input rows
  std::vector<double> stabilities;    // per cluster
  std::vector<double> probabilities;  // per point; noise points are 0

  int num_clusters() const { return static_cast<int>(stabilities.size()); }
};

// Hierarchical density-based clustering:
//   1. core distance of each point at min_samples,
//   2. mutual reachability distance max(core_a, core_b, d(a,b)),
//   3. minimum spanning tree of the mutual reachability graph (Prim, dense),
//   4. single-linkage hierarchy by ascending edge weight,
//   5. condensation at min_cluster_size,
//   6. excess-of-mass stability selection (the root is never selectable, so a
//      hierarchy that never truly splits labels everything noise).
//
// Deterministic for a given row order; relabelings of the same point set
// produce the same partition. A dataset where every pairwise distance is zero
// degenerates to a single cluster when N >= min_cluster_size, otherwise all
// noise. Throws TooFewPoints for N < 2.
ClusterAssignment hdbscan_fit(const std::vector<std::vector<double>>& points,
                              const HdbscanParams& params);

// Exposed for property tests: the symmetric mutual reachability distance.
std::vector<std::vector<double>> mutual_reachability_matrix(
    const std::vector<std::vector<double>>& points, const HdbscanParams& params);

double point_distance(const std::vector<double>& a, const std::vector<double>& b, Metric metric);

}  // namespace hazgraph::cluster
