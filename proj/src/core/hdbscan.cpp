#include "core/hdbscan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "core/errors.hpp"

namespace hazgraph::cluster {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<double>> distance_matrix(const std::vector<std::vector<double>>& points,
                                                 Metric metric) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  for (const auto& row : points) {
    if (row.size() != dim) fail(ErrorCode::dimension_mismatch, "inconsistent point dimensions");
    for (double x : row) {
      if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, "non-finite point coordinate");
    }
  }
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dist = point_distance(points[i], points[j], metric);
      d[i][j] = dist;
      d[j][i] = dist;
    }
  }
  return d;
}

struct MstEdge {
  std::size_t u, v;
  double weight;
};

// Prim's algorithm on the dense mutual reachability matrix. O(N^2) time and
// memory: the matrix costs 8 * N^2 bytes (3k points ~72 MB, 35k ~10 GB), so
// the practical ceiling on ordinary hardware sits in the tens of thousands
// of points.
std::vector<MstEdge> prim_mst(const std::vector<std::vector<double>>& mreach) {
  const std::size_t n = mreach.size();
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, kInf);
  std::vector<std::size_t> parent(n, 0);
  std::vector<MstEdge> edges;
  edges.reserve(n - 1);

  in_tree[0] = true;
  for (std::size_t j = 1; j < n; ++j) {
    best[j] = mreach[0][j];
    parent[j] = 0;
  }
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    double next_weight = kInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      if (best[j] < next_weight) {  // strict: ties resolve to the lowest index
        next_weight = best[j];
        next = j;
      }
    }
    in_tree[next] = true;
    edges.push_back({parent[next], next, next_weight});
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      if (mreach[next][j] < best[j]) {
        best[j] = mreach[next][j];
        parent[j] = next;
      }
    }
  }
  return edges;
}

struct DendrogramNode {
  std::size_t left, right;  // child node ids (point ids < n, merges >= n)
  double distance;
  std::size_t size;
};

// Plain union-find for the single-linkage pass.
struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
};

struct CondensedTree {
  // Per cluster bookkeeping; cluster 0 is the hierarchy root.
  std::vector<int> parent;            // parent cluster id, -1 for root
  std::vector<double> birth_lambda;
  std::vector<std::vector<int>> children;
  std::vector<std::vector<std::pair<std::size_t, double>>> point_rows;  // (point, fall-out lambda)
  std::vector<double> stability;
};

ClusterAssignment all_noise(std::size_t n) {
  ClusterAssignment out;
  out.labels.assign(n, -1);
  out.probabilities.assign(n, 0.0);
  return out;
}

ClusterAssignment single_cluster(std::size_t n) {
  ClusterAssignment out;
  out.labels.assign(n, 0);
  out.probabilities.assign(n, 1.0);
  out.stabilities.assign(1, 0.0);
  return out;
}

}  // namespace

void HdbscanParams::validate() const {
  if (min_cluster_size < 2) fail(ErrorCode::config_error, "min_cluster_size must be >= 2");
  if (min_samples < 1) fail(ErrorCode::config_error, "min_samples must be >= 1");
  if (min_samples > min_cluster_size) {
    fail(ErrorCode::config_error, "min_samples must be <= min_cluster_size");
  }
}

double point_distance(const std::vector<double>& a, const std::vector<double>& b, Metric metric) {
  if (a.size() != b.size()) fail(ErrorCode::dimension_mismatch, "point dimension mismatch");
  if (metric == Metric::euclidean) {
    double acc = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = a[k] - b[k];
      acc += diff * diff;
    }
    return std::sqrt(acc);
  }
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0 || nb == 0) {
    fail(ErrorCode::zero_vector, "cosine distance undefined for zero vectors");
  }
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::vector<double>> mutual_reachability_matrix(
    const std::vector<std::vector<double>>& points, const HdbscanParams& params) {
  params.validate();
  const std::size_t n = points.size();
  if (n < 2) fail(ErrorCode::too_few_points, "need at least 2 points");
  auto d = distance_matrix(points, params.metric);

  // Core distance: distance to the min_samples-th nearest other point.
  const std::size_t k = std::min<std::size_t>(params.min_samples, n - 1);
  std::vector<double> core(n);
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) row[idx++] = d[i][j];
    }
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    core[i] = row[k - 1];
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double m = std::max({core[i], core[j], d[i][j]});
      d[i][j] = m;
      d[j][i] = m;
    }
  }
  return d;
}

ClusterAssignment hdbscan_fit(const std::vector<std::vector<double>>& points,
                              const HdbscanParams& params) {
  params.validate();
  const std::size_t n = points.size();
  if (n < 2) fail(ErrorCode::too_few_points, "hdbscan needs at least 2 points");
  const std::size_t mcs = static_cast<std::size_t>(params.min_cluster_size);

  auto mreach = mutual_reachability_matrix(points, params);

  auto edges = prim_mst(mreach);
  std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
    if (a.weight != b.weight) return a.weight < b.weight;
    const auto amin = std::min(a.u, a.v), bmin = std::min(b.u, b.v);
    if (amin != bmin) return amin < bmin;
    return std::max(a.u, a.v) < std::max(b.u, b.v);
  });

  // A degenerate metric (all spanning distances zero) has no density
  // structure to sweep.
  double min_positive = kInf;
  for (const auto& e : edges) {
    if (e.weight > 0 && e.weight < min_positive) min_positive = e.weight;
  }
  if (!std::isfinite(min_positive)) {
    return n >= mcs ? single_cluster(n) : all_noise(n);
  }
  // Lambda for zero-distance merges: strictly above every finite 1/d, but a
  // deterministic function of the input multiset so shuffles agree.
  const double lambda_cap = 2.0 / min_positive;
  auto lambda_of = [&](double dist) { return dist > 0 ? std::min(1.0 / dist, lambda_cap) : lambda_cap; };

  // Single linkage: merge components in ascending weight order.
  const std::size_t total_nodes = 2 * n - 1;
  std::vector<DendrogramNode> dendrogram(n - 1);
  {
    UnionFind uf(n);
    std::vector<std::size_t> comp_node(n);
    std::iota(comp_node.begin(), comp_node.end(), 0);
    std::size_t next_node = n;
    for (const auto& e : edges) {
      const std::size_t ru = uf.find(e.u);
      const std::size_t rv = uf.find(e.v);
      const std::size_t left = comp_node[ru];
      const std::size_t right = comp_node[rv];
      const std::size_t left_size = left < n ? 1 : dendrogram[left - n].size;
      const std::size_t right_size = right < n ? 1 : dendrogram[right - n].size;
      dendrogram[next_node - n] = {left, right, e.weight, left_size + right_size};
      uf.parent[ru] = rv;
      comp_node[uf.find(rv)] = next_node;
      ++next_node;
    }
  }

  auto node_size = [&](std::size_t node) -> std::size_t {
    return node < n ? 1 : dendrogram[node - n].size;
  };

  // Condensation: walk the hierarchy top-down. Runs of equal-weight merges
  // collapse into one multi-way split (the components left after cutting all
  // edges of that weight), so tie order in the binary dendrogram cannot
  // change the condensed tree; a permuted input yields the same partition.
  // Children meeting min_cluster_size become clusters, undersized ones fall
  // out of the current cluster point by point.
  CondensedTree tree;
  auto new_cluster = [&](int parent, double birth) {
    tree.parent.push_back(parent);
    tree.birth_lambda.push_back(birth);
    tree.children.emplace_back();
    tree.point_rows.emplace_back();
    if (parent >= 0) tree.children[parent].push_back(static_cast<int>(tree.parent.size()) - 1);
    return static_cast<int>(tree.parent.size()) - 1;
  };

  const std::size_t root = total_nodes - 1;
  auto spill_points = [&](std::size_t subtree, int cluster, double lambda) {
    std::vector<std::size_t> stack{subtree};
    while (!stack.empty()) {
      const std::size_t node = stack.back();
      stack.pop_back();
      if (node < n) {
        tree.point_rows[cluster].push_back({node, lambda});
      } else {
        stack.push_back(dendrogram[node - n].left);
        stack.push_back(dendrogram[node - n].right);
      }
    }
  };

  struct WorkItem {
    std::size_t node;  // internal dendrogram node
    int cluster;
  };
  std::vector<WorkItem> work{{root, new_cluster(-1, 0.0)}};
  while (!work.empty()) {
    const auto [group_root, cur] = work.back();
    work.pop_back();
    const double weight = dendrogram[group_root - n].distance;
    const double lambda = lambda_of(weight);

    // Components hanging off the maximal equal-weight merge group.
    std::vector<std::size_t> frontier;
    std::vector<std::size_t> group{group_root};
    while (!group.empty()) {
      const std::size_t node = group.back();
      group.pop_back();
      for (std::size_t child : {dendrogram[node - n].left, dendrogram[node - n].right}) {
        if (child >= n && dendrogram[child - n].distance == weight) {
          group.push_back(child);
        } else {
          frontier.push_back(child);
        }
      }
    }

    std::vector<std::size_t> big;
    for (std::size_t sub : frontier) {
      if (node_size(sub) >= mcs) big.push_back(sub);
    }

    if (big.size() >= 2) {
      // True split: every surviving component becomes a cluster.
      for (std::size_t sub : frontier) {
        if (node_size(sub) >= mcs) {
          work.push_back({sub, new_cluster(cur, lambda)});
        } else {
          spill_points(sub, cur, lambda);
        }
      }
    } else if (big.size() == 1) {
      // The cluster shrinks but continues as itself.
      for (std::size_t sub : frontier) {
        if (sub != big.front()) spill_points(sub, cur, lambda);
      }
      work.push_back({big.front(), cur});
    } else {
      for (std::size_t sub : frontier) spill_points(sub, cur, lambda);
    }
  }

  // Stability: sum of (fall-out lambda - birth lambda) over everything that
  // ever belonged to the cluster, child clusters weighted by their size.
  // Terms are summed in sorted order so the result is independent of the
  // order points spilled in.
  const int num_condensed = static_cast<int>(tree.parent.size());
  std::vector<std::size_t> cluster_sizes(num_condensed, 0);
  tree.stability.assign(num_condensed, 0.0);
  std::vector<double> terms;
  for (int c = num_condensed - 1; c >= 0; --c) {
    std::size_t size = tree.point_rows[c].size();
    for (int child : tree.children[c]) size += cluster_sizes[child];
    cluster_sizes[c] = size;
    terms.clear();
    for (const auto& [point, lambda] : tree.point_rows[c]) {
      terms.push_back(lambda - tree.birth_lambda[c]);
    }
    for (int child : tree.children[c]) {
      terms.push_back((tree.birth_lambda[child] - tree.birth_lambda[c]) *
                      static_cast<double>(cluster_sizes[child]));
    }
    std::sort(terms.begin(), terms.end());
    double s = 0;
    for (double t : terms) s += t;
    tree.stability[c] = s;
  }

  // Excess-of-mass selection, bottom-up; the root is never selectable.
  std::vector<bool> selected(num_condensed, true);
  std::vector<double> best_mass = tree.stability;
  selected[0] = false;
  for (int c = num_condensed - 1; c >= 1; --c) {
    if (tree.children[c].empty()) continue;  // leaves stay selected
    terms.clear();
    for (int child : tree.children[c]) terms.push_back(best_mass[child]);
    std::sort(terms.begin(), terms.end());
    double child_sum = 0;
    for (double t : terms) child_sum += t;
    if (child_sum > tree.stability[c]) {
      selected[c] = false;
      best_mass[c] = child_sum;
    } else {
      best_mass[c] = tree.stability[c];
      // This cluster absorbs its subtree.
      std::vector<int> stack(tree.children[c]);
      while (!stack.empty()) {
        const int sub = stack.back();
        stack.pop_back();
        selected[sub] = false;
        stack.insert(stack.end(), tree.children[sub].begin(), tree.children[sub].end());
      }
    }
  }

  ClusterAssignment out;
  out.labels.assign(n, -1);
  out.probabilities.assign(n, 0.0);
  std::vector<int> flat_label(num_condensed, -1);
  for (int c = 0; c < num_condensed; ++c) {
    if (selected[c]) {
      flat_label[c] = static_cast<int>(out.stabilities.size());
      out.stabilities.push_back(tree.stability[c]);
    }
  }

  // A point belongs to the nearest selected ancestor of the cluster it fell
  // out of; if the chain reaches the root unselected, it is noise.
  std::vector<double> point_lambda(n, 0.0);
  for (int c = 0; c < num_condensed; ++c) {
    int ancestor = c;
    while (ancestor >= 0 && !selected[ancestor]) ancestor = tree.parent[ancestor];
    const int label = ancestor >= 0 ? flat_label[ancestor] : -1;
    for (const auto& [point, lambda] : tree.point_rows[c]) {
      out.labels[point] = label;
      point_lambda[point] = lambda;
    }
  }

  std::vector<double> max_lambda(out.stabilities.size(), 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    if (out.labels[p] >= 0) {
      max_lambda[out.labels[p]] = std::max(max_lambda[out.labels[p]], point_lambda[p]);
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    const int label = out.labels[p];
    if (label < 0) continue;
    out.probabilities[p] = max_lambda[label] > 0 ? point_lambda[p] / max_lambda[label] : 1.0;
  }
  return out;
}

}  // namespace hazgraph::cluster
