#pragma once

#include <span>
#include <string>
#include <vector>

#include "demlearn/client.hpp"
#include "demlearn/model.hpp"

namespace demlearn {

enum class SimilarityMetric { Weights, Gradients };

std::string to_string(SimilarityMetric metric);
SimilarityMetric parse_similarity_metric(const std::string& text);

/// Symmetric, zero-diagonal, non-negative pairwise dissimilarities.
struct DistanceMatrix {
  RowMatrix d;

  [[nodiscard]] int size() const { return static_cast<int>(d.rows()); }
  double operator()(int i, int j) const { return d(i, j); }
  void validate() const;
};

/// One agglomeration step. Leaves are 0..n-1; the k-th merge creates id n+k.
struct Merge {
  int left = 0;   // smaller child id
  int right = 0;  // larger child id
  double height = 0.0;
  int id = 0;
  int count = 0;  // leaves under the new node
};

struct Dendrogram {
  int n_leaves = 0;
  std::vector<Merge> merges;

  [[nodiscard]] int root_id() const { return n_leaves == 1 ? 0 : 2 * n_leaves - 2; }
  /// Sorted leaf ids under `node`.
  [[nodiscard]] std::vector<int> leaves_under(int node) const;
};

/// group_of[k - 1][client] is the client's group index at level k (1..K).
/// Group indices at each level are numbered by ascending smallest member id.
struct LevelAssignment {
  int K = 0;
  std::vector<std::vector<int>> group_of;

  [[nodiscard]] int n_clients() const {
    return group_of.empty() ? 0 : static_cast<int>(group_of.front().size());
  }
  [[nodiscard]] int group_count(int level) const;
  /// Sorted member lists of every group at `level`.
  [[nodiscard]] std::vector<std::vector<int>> groups(int level) const;
  /// Checks partition-per-level, nesting, and a single root group.
  void validate() const;
};

double weight_distance(const ParamVector& a, const ParamVector& b);

/// Cosine of the angle between two non-zero vectors, clamped to [-1, 1].
double gradient_similarity(const ParamVector& a, const ParamVector& b);

/// Weights: Euclidean distance. Gradients: 1 - cosine similarity.
DistanceMatrix pairwise_distances(std::span<const ParamVector> vectors, SimilarityMetric metric);

/// Uses each client's model (Weights) or last_delta (Gradients).
DistanceMatrix build_distance_matrix(std::span<const ClientState> clients, SimilarityMetric metric);

/// Average-linkage (UPGMA) agglomeration with Lance-Williams updates. Ties on
/// the minimum distance go to the lexicographically smallest (min_id, max_id).
Dendrogram agglomerate(const DistanceMatrix& dm);

/// Keeps the top K levels: the root is the level-K group and every further
/// generation of the dendrogram below it defines the next lower level. A leaf
/// reached early stays its own singleton group at every remaining level.
LevelAssignment truncate(const Dendrogram& dendrogram, int K);

/// Nested JSON node records {id, height, members, children}.
std::string export_dendrogram(const Dendrogram& dendrogram);

}  // namespace demlearn
