#include "demlearn/hierarchy.hpp"

#include <algorithm>

#include <json.hpp>

#include "demlearn/errors.hpp"

namespace demlearn {

std::span<const GroupNode> HierarchyTree::level(int k) const {
  if (k < 1 || k > levels()) throw ArgumentError("level " + std::to_string(k) + " out of range");
  return levels_[static_cast<std::size_t>(k - 1)];
}

const GroupNode& HierarchyTree::ancestor(int client, int k) const {
  if (client < 0 || client >= n_clients()) {
    throw StructureError("unknown client id " + std::to_string(client));
  }
  const int g = assignment_.group_of.at(static_cast<std::size_t>(k - 1))[static_cast<std::size_t>(client)];
  return level(k)[static_cast<std::size_t>(g)];
}

HierarchyTree build_tree(const LevelAssignment& assign, std::span<const ParamVector> client_models) {
  assign.validate();
  if (static_cast<int>(client_models.size()) != assign.n_clients()) {
    throw StructureError("build_tree: " + std::to_string(client_models.size()) +
                         " client models for " + std::to_string(assign.n_clients()) + " clients");
  }

  HierarchyTree tree;
  tree.assignment_ = assign;
  tree.levels_.resize(static_cast<std::size_t>(assign.K));
  for (int k = 1; k <= assign.K; ++k) {
    auto& nodes = tree.levels_[static_cast<std::size_t>(k - 1)];
    const auto member_lists = assign.groups(k);
    nodes.resize(member_lists.size());
    for (std::size_t g = 0; g < member_lists.size(); ++g) {
      GroupNode& node = nodes[g];
      node.level = k;
      node.index = static_cast<int>(g);
      node.members = member_lists[g];
      node.member_count = static_cast<int>(node.members.size());
      if (k == 1) {
        node.children = node.members;
      } else {
        const auto& below = assign.group_of[static_cast<std::size_t>(k - 2)];
        for (int c : node.members) node.children.push_back(below[static_cast<std::size_t>(c)]);
        std::sort(node.children.begin(), node.children.end());
        node.children.erase(std::unique(node.children.begin(), node.children.end()),
                            node.children.end());
      }
    }
  }
  propagate_up(tree, client_models);
  return tree;
}

ParamVector group_average(std::span<const ParamVector* const> models, std::span<const int> counts) {
  if (models.empty()) throw ArgumentError("group_average: no children");
  if (models.size() != counts.size()) throw DimensionError("group_average: one count per model");
  long total = 0;
  for (int c : counts) {
    if (c < 1) throw ArgumentError("group_average: counts must be >= 1");
    total += c;
  }
  const Index m = models.front()->size();
  for (const auto* w : models) {
    if (w->size() != m) throw DimensionError("group_average: model length mismatch");
  }
  const double denom = static_cast<double>(total);
  ParamVector out = (static_cast<double>(counts[0]) / denom) * (*models[0]);
  for (std::size_t j = 1; j < models.size(); ++j) {
    out += (static_cast<double>(counts[j]) / denom) * (*models[j]);
  }
  return out;
}

ParamVector group_average(std::span<const ParamVector> models, std::span<const int> counts) {
  std::vector<const ParamVector*> ptrs;
  ptrs.reserve(models.size());
  for (const auto& w : models) ptrs.push_back(&w);
  return group_average(std::span<const ParamVector* const>(ptrs), counts);
}

void propagate_up(HierarchyTree& tree, std::span<const ParamVector> client_models) {
  if (static_cast<int>(client_models.size()) != tree.n_clients()) {
    throw StructureError("propagate_up: missing client models (" +
                         std::to_string(client_models.size()) + " of " +
                         std::to_string(tree.n_clients()) + ")");
  }
  std::vector<const ParamVector*> ptrs;
  std::vector<int> counts;
  for (int k = 1; k <= tree.levels(); ++k) {
    auto& nodes = tree.levels_[static_cast<std::size_t>(k - 1)];
    for (GroupNode& node : nodes) {
      ptrs.clear();
      counts.clear();
      for (int child : node.children) {
        if (k == 1) {
          ptrs.push_back(&client_models[static_cast<std::size_t>(child)]);
          counts.push_back(1);
        } else {
          const GroupNode& sub = tree.levels_[static_cast<std::size_t>(k - 2)][static_cast<std::size_t>(child)];
          ptrs.push_back(&sub.model);
          counts.push_back(sub.member_count);
        }
      }
      node.model = group_average(std::span<const ParamVector* const>(ptrs), counts);
    }
  }
}

std::vector<ProxAnchor> anchors_for(const HierarchyTree& tree, int client) {
  std::vector<ProxAnchor> out;
  out.reserve(static_cast<std::size_t>(tree.levels()));
  for (int k = 1; k <= tree.levels(); ++k) {
    const GroupNode& g = tree.ancestor(client, k);
    out.push_back(ProxAnchor{g.model, 1.0 / static_cast<double>(g.member_count)});
  }
  return out;
}

Blend generalized_blend(const HierarchyTree& tree, int client) {
  Blend out;
  for (int k = 1; k <= tree.levels(); ++k) {
    out.normalizer += 1.0 / static_cast<double>(tree.ancestor(client, k).member_count);
  }
  for (int k = 1; k <= tree.levels(); ++k) {
    const GroupNode& g = tree.ancestor(client, k);
    const double weight = (1.0 / static_cast<double>(g.member_count)) / out.normalizer;
    if (k == 1) out.model = weight * g.model;
    else out.model += weight * g.model;
  }
  return out;
}

std::string export_tree_snapshot(const HierarchyTree& tree, int round) {
  nlohmann::ordered_json doc;
  doc["round"] = round;
  doc["K"] = tree.levels();
  auto levels = nlohmann::ordered_json::array();
  for (int k = tree.levels(); k >= 1; --k) {
    nlohmann::ordered_json lvl;
    lvl["level"] = k;
    auto groups = nlohmann::ordered_json::array();
    for (const GroupNode& g : tree.level(k)) {
      groups.push_back({{"index", g.index},
                        {"size", g.member_count},
                        {"children", g.children},
                        {"members", g.members},
                        {"model_norm", g.model.norm()}});
    }
    lvl["groups"] = std::move(groups);
    levels.push_back(std::move(lvl));
  }
  doc["levels"] = std::move(levels);
  return doc.dump(2) + "\n";
}

}  // namespace demlearn
