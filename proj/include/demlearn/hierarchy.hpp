#pragma once

#include <span>
#include <string>
#include <vector>

#include "demlearn/clustering.hpp"
#include "demlearn/model.hpp"

namespace demlearn {

struct GroupNode {
  int level = 0;  // 1..K
  int index = 0;  // position within its level
  int member_count = 0;
  ParamVector model;
  // Level 1: member client ids. Level k > 1: indices of level-(k-1) groups.
  // Both ascending.
  std::vector<int> children;
  std::vector<int> members;  // all leaf clients, ascending
};

/// K-level group structure with one generalized model per group. The root is
/// the single level-K group.
class HierarchyTree {
 public:
  [[nodiscard]] int levels() const { return assignment_.K; }
  [[nodiscard]] int n_clients() const { return assignment_.n_clients(); }
  [[nodiscard]] const LevelAssignment& assignment() const { return assignment_; }

  [[nodiscard]] std::span<const GroupNode> level(int k) const;
  [[nodiscard]] const GroupNode& root() const { return level(levels()).front(); }
  GroupNode& root() { return levels_.back().front(); }

  /// The client's level-k group.
  [[nodiscard]] const GroupNode& ancestor(int client, int k) const;

 private:
  friend HierarchyTree build_tree(const LevelAssignment&, std::span<const ParamVector>);
  friend void propagate_up(HierarchyTree&, std::span<const ParamVector>);

  LevelAssignment assignment_;
  std::vector<std::vector<GroupNode>> levels_;  // [k - 1][group index]
};

/// Mirrors `assign` and fills every group model through propagate_up.
/// client_models is indexed by client id.
HierarchyTree build_tree(const LevelAssignment& assign, std::span<const ParamVector> client_models);

/// sum_j (counts_j / sum counts) * models_j, accumulated in input order.
ParamVector group_average(std::span<const ParamVector* const> models, std::span<const int> counts);
ParamVector group_average(std::span<const ParamVector> models, std::span<const int> counts);

/// Recomputes every group model bottom-up: level-1 groups average their
/// member clients, level-k groups average their level-(k-1) children weighted
/// by member counts.
void propagate_up(HierarchyTree& tree, std::span<const ParamVector> client_models);

/// One anchor per level k = 1..K: (level-k ancestor model, 1 / its size).
std::vector<ProxAnchor> anchors_for(const HierarchyTree& tree, int client);

struct Blend {
  ParamVector model;
  double normalizer = 0.0;  // B = sum_k 1 / N_k
};

/// (1/B) sum_k (1/N_k) w^(k) over the client's ancestors.
Blend generalized_blend(const HierarchyTree& tree, int client);

/// JSON snapshot: levels, group sizes, member lists, model norms.
std::string export_tree_snapshot(const HierarchyTree& tree, int round);

}  // namespace demlearn
