#include "demlearn/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <json.hpp>

#include "demlearn/errors.hpp"

namespace demlearn {

std::string to_string(SimilarityMetric metric) {
  return metric == SimilarityMetric::Weights ? "weights" : "gradients";
}

SimilarityMetric parse_similarity_metric(const std::string& text) {
  if (text == "weights") return SimilarityMetric::Weights;
  if (text == "gradients") return SimilarityMetric::Gradients;
  throw ArgumentError("unknown clustering metric '" + text + "' (expected weights or gradients)");
}

void DistanceMatrix::validate() const {
  if (d.rows() != d.cols()) throw DimensionError("distance matrix must be square");
  for (Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) throw ArgumentError("distance matrix diagonal must be zero");
    for (Index j = 0; j < i; ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) {
        throw ArgumentError("distances must be finite and non-negative");
      }
      if (d(i, j) != d(j, i)) throw ArgumentError("distance matrix must be symmetric");
    }
  }
}

std::vector<int> Dendrogram::leaves_under(int node) const {
  std::vector<int> out;
  std::vector<int> stack{node};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (id < n_leaves) {
      out.push_back(id);
    } else {
      const Merge& m = merges.at(static_cast<std::size_t>(id - n_leaves));
      stack.push_back(m.left);
      stack.push_back(m.right);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

int LevelAssignment::group_count(int level) const {
  const auto& row = group_of.at(static_cast<std::size_t>(level - 1));
  return row.empty() ? 0 : *std::max_element(row.begin(), row.end()) + 1;
}

std::vector<std::vector<int>> LevelAssignment::groups(int level) const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(group_count(level)));
  const auto& row = group_of.at(static_cast<std::size_t>(level - 1));
  for (std::size_t c = 0; c < row.size(); ++c) {
    out.at(static_cast<std::size_t>(row[c])).push_back(static_cast<int>(c));
  }
  return out;
}

void LevelAssignment::validate() const {
  if (K < 1 || static_cast<int>(group_of.size()) != K) {
    throw StructureError("level assignment must hold one row per level 1..K");
  }
  const int n = n_clients();
  if (n < 1) throw StructureError("level assignment covers no clients");
  for (int k = 1; k <= K; ++k) {
    const auto& row = group_of[static_cast<std::size_t>(k - 1)];
    if (static_cast<int>(row.size()) != n) {
      throw StructureError("level " + std::to_string(k) + " does not cover every client");
    }
    const int g = group_count(k);
    std::vector<int> seen(static_cast<std::size_t>(g), 0);
    for (int v : row) {
      if (v < 0) throw StructureError("negative group index at level " + std::to_string(k));
      seen[static_cast<std::size_t>(v)] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw StructureError("empty group index at level " + std::to_string(k));
    }
  }
  if (group_count(K) != 1) throw StructureError("top level must be a single group");
  // Nesting: clients sharing a level-k group share their level-(k+1) group.
  for (int k = 1; k < K; ++k) {
    const auto& lo = group_of[static_cast<std::size_t>(k - 1)];
    const auto& hi = group_of[static_cast<std::size_t>(k)];
    std::vector<int> parent(static_cast<std::size_t>(group_count(k)), -1);
    for (int c = 0; c < n; ++c) {
      int& p = parent[static_cast<std::size_t>(lo[static_cast<std::size_t>(c)])];
      if (p < 0) p = hi[static_cast<std::size_t>(c)];
      if (p != hi[static_cast<std::size_t>(c)]) {
        throw StructureError("level-" + std::to_string(k) + " group " +
                             std::to_string(lo[static_cast<std::size_t>(c)]) +
                             " straddles two level-" + std::to_string(k + 1) + " groups");
      }
    }
  }
}

double weight_distance(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("weight_distance: length mismatch");
  return (a - b).norm();
}

double gradient_similarity(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) throw DimensionError("gradient_similarity: length mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("gradient_similarity: zero-norm vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

DistanceMatrix pairwise_distances(std::span<const ParamVector> vectors, SimilarityMetric metric) {
  const auto n = static_cast<Index>(vectors.size());
  DistanceMatrix dm{RowMatrix::Zero(n, n)};
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const auto& a = vectors[static_cast<std::size_t>(i)];
      const auto& b = vectors[static_cast<std::size_t>(j)];
      const double v = metric == SimilarityMetric::Weights ? weight_distance(a, b)
                                                           : 1.0 - gradient_similarity(a, b);
      dm.d(i, j) = v;
      dm.d(j, i) = v;
    }
  }
  return dm;
}

DistanceMatrix build_distance_matrix(std::span<const ClientState> clients, SimilarityMetric metric) {
  if (clients.size() < 2) throw ArgumentError("clustering needs at least two clients");
  std::vector<ParamVector> vectors;
  vectors.reserve(clients.size());
  for (const auto& c : clients) {
    if (metric == SimilarityMetric::Gradients) {
      if (!c.has_delta()) {
        throw StructureError("client " + std::to_string(c.id) + " has no recorded update for "
                             "gradient clustering");
      }
      vectors.push_back(c.last_delta);
    } else {
      vectors.push_back(c.model);
    }
  }
  return pairwise_distances(vectors, metric);
}

Dendrogram agglomerate(const DistanceMatrix& dm) {
  const int n = dm.size();
  if (n < 2) throw ArgumentError("agglomerate needs at least two points");
  if (dm.d.cols() != n) throw DimensionError("distance matrix must be square");

  // Slot i holds cluster ids[i]; linkage is kept in `link` by slot.
  RowMatrix link = dm.d;
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::vector<int> sizes(static_cast<std::size_t>(n), 1);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;

  Dendrogram out;
  out.n_leaves = n;
  out.merges.reserve(static_cast<std::size_t>(n - 1));
  for (int step = 0; step < n - 1; ++step) {
    int bi = -1, bj = -1;
    std::tuple<double, int, int> best{0.0, 0, 0};
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        const int a = ids[static_cast<std::size_t>(i)];
        const int b = ids[static_cast<std::size_t>(j)];
        const std::tuple<double, int, int> key{link(i, j), std::min(a, b), std::max(a, b)};
        if (bi < 0 || key < best) {
          best = key;
          bi = i;
          bj = j;
        }
      }
    }

    const auto si = static_cast<std::size_t>(bi);
    const auto sj = static_cast<std::size_t>(bj);
    const int new_id = n + step;
    const int count = sizes[si] + sizes[sj];
    out.merges.push_back(Merge{std::get<1>(best), std::get<2>(best), std::get<0>(best), new_id, count});

    // Lance-Williams for UPGMA: size-weighted mean of the two old linkages.
    const double wi = static_cast<double>(sizes[si]) / count;
    const double wj = static_cast<double>(sizes[sj]) / count;
    for (int k = 0; k < n; ++k) {
      if (!active[static_cast<std::size_t>(k)] || k == bi || k == bj) continue;
      const double v = wi * link(bi, k) + wj * link(bj, k);
      link(bi, k) = v;
      link(k, bi) = v;
    }
    ids[si] = new_id;
    sizes[si] = count;
    active[sj] = 0;
  }
  return out;
}

LevelAssignment truncate(const Dendrogram& dendrogram, int K) {
  if (K < 1) throw ArgumentError("truncate: K must be >= 1");
  const int n = dendrogram.n_leaves;
  if (n < 1 || static_cast<int>(dendrogram.merges.size()) != n - 1) {
    throw StructureError("dendrogram must hold n - 1 merges");
  }

  LevelAssignment out;
  out.K = K;
  out.group_of.assign(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(n), -1));

  std::vector<int> frontier{dendrogram.root_id()};
  for (int level = K; level >= 1; --level) {
    if (level < K) {
      std::vector<int> next;
      for (int node : frontier) {
        if (node < n) {
          next.push_back(node);
        } else {
          const Merge& m = dendrogram.merges[static_cast<std::size_t>(node - n)];
          next.push_back(m.left);
          next.push_back(m.right);
        }
      }
      frontier = std::move(next);
    }
    std::vector<std::vector<int>> members;
    members.reserve(frontier.size());
    for (int node : frontier) members.push_back(dendrogram.leaves_under(node));
    std::sort(members.begin(), members.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    auto& row = out.group_of[static_cast<std::size_t>(level - 1)];
    for (std::size_t g = 0; g < members.size(); ++g) {
      for (int c : members[g]) row[static_cast<std::size_t>(c)] = static_cast<int>(g);
    }
  }
  return out;
}

namespace {

nlohmann::ordered_json node_json(const Dendrogram& dend, int node) {
  nlohmann::ordered_json j;
  j["id"] = node;
  if (node < dend.n_leaves) {
    j["height"] = 0.0;
    j["members"] = std::vector<int>{node};
    j["children"] = nlohmann::ordered_json::array();
    return j;
  }
  const Merge& m = dend.merges[static_cast<std::size_t>(node - dend.n_leaves)];
  j["height"] = m.height;
  j["members"] = dend.leaves_under(node);
  j["children"] = {node_json(dend, m.left), node_json(dend, m.right)};
  return j;
}

}  // namespace

std::string export_dendrogram(const Dendrogram& dendrogram) {
  nlohmann::ordered_json doc;
  doc["n_leaves"] = dendrogram.n_leaves;
  doc["root"] = node_json(dendrogram, dendrogram.root_id());
  return doc.dump(2) + "\n";
}

}  // namespace demlearn
