#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <json.hpp>

#include "demlearn/errors.hpp"
#include "demlearn/hierarchy.hpp"
#include "oracles.hpp"

using namespace demlearn;

namespace {

ParamVector scalar(double v) {
  ParamVector p(1);
  p[0] = v;
  return p;
}

LevelAssignment random_assignment(int n, int K, std::mt19937_64& gen) {
  if (n < 2) {
    LevelAssignment a;
    a.K = K;
    a.group_of.assign(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(n), 0));
    return a;
  }
  return truncate(agglomerate(DistanceMatrix{oracle::random_distances(n, gen)}), K);
}

ParamVector leaf_mean(const std::vector<int>& members, const std::vector<ParamVector>& models) {
  ParamVector s = ParamVector::Zero(models.front().size());
  for (int c : members) s += models[static_cast<std::size_t>(c)];
  return s / static_cast<double>(members.size());
}

}  // namespace

TEST_SUITE("hierarchy") {

TEST_CASE("group average") {
  std::vector<ParamVector> same{scalar(2.5), scalar(2.5), scalar(2.5)};
  CHECK(group_average(same, std::vector<int>{1, 4, 2})[0] == 2.5);
  std::vector<ParamVector> two{scalar(0.0), scalar(4.0)};
  CHECK(group_average(two, std::vector<int>{1, 3})[0] == 3.0);

  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> cnt(1, 9);
  for (int t = 0; t < 20; ++t) {
    std::vector<ParamVector> models;
    std::vector<int> counts;
    for (int j = 0; j < 5; ++j) {
      models.push_back(oracle::random_vector(12, gen));
      counts.push_back(cnt(gen));
    }
    CHECK((group_average(models, counts) - oracle::weighted_mean_loops(models, counts)).cwiseAbs().maxCoeff() < 1e-12);
  }
  std::vector<ParamVector> none;
  CHECK_THROWS_AS(group_average(none, std::vector<int>{}), ArgumentError);
  CHECK_THROWS_AS(group_average(two, std::vector<int>{1, 0}), ArgumentError);
}

TEST_CASE("K = 1 tree is one root over every client") {
  LevelAssignment a;
  a.K = 1;
  a.group_of = {{0, 0, 0, 0, 0}};
  std::vector<ParamVector> models;
  for (int i = 0; i < 5; ++i) models.push_back(scalar(i));
  const HierarchyTree t = build_tree(a, models);
  CHECK(t.levels() == 1);
  CHECK(t.root().member_count == 5);
  CHECK(t.root().children == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(t.root().model[0] == doctest::Approx(2.0));
  const auto anchors = anchors_for(t, 3);
  REQUIRE(anchors.size() == 1);
  CHECK(anchors[0].coeff == doctest::Approx(0.2));
  const Blend b = generalized_blend(t, 3);
  CHECK(b.normalizer == doctest::Approx(0.2));
  CHECK(b.model == t.root().model);
}

TEST_CASE("two pairs under one root") {
  LevelAssignment a;
  a.K = 2;
  a.group_of = {{0, 0, 1, 1}, {0, 0, 0, 0}};
  std::vector<ParamVector> models{scalar(2), scalar(2), scalar(14), scalar(14)};
  const HierarchyTree t = build_tree(a, models);
  CHECK(t.level(1).size() == 2);
  CHECK(t.root().children == std::vector<int>{0, 1});
  CHECK(t.level(1)[0].member_count == 2);
  CHECK(t.level(1)[1].member_count == 2);
  CHECK(t.level(1)[1].members == std::vector<int>{2, 3});
  CHECK(t.root().model[0] == 8.0);

  // blend for client 0: ((1/2)*2 + (1/4)*8) / (3/4) = 4
  const Blend b = generalized_blend(t, 0);
  CHECK(b.normalizer == doctest::Approx(0.75));
  CHECK(b.model[0] == doctest::Approx(4.0).epsilon(1e-15));

  const HierarchyTree again = build_tree(a, models);
  for (int k = 1; k <= 2; ++k)
    for (std::size_t g = 0; g < t.level(k).size(); ++g) CHECK(again.level(k)[g].model == t.level(k)[g].model);

  CHECK_THROWS_AS(static_cast<void>(t.ancestor(7, 1)), StructureError);
  CHECK_THROWS_AS(anchors_for(t, -1), StructureError);
  CHECK_THROWS_AS(static_cast<void>(t.level(3)), ArgumentError);
}

TEST_CASE("malformed inputs") {
  LevelAssignment bad;
  bad.K = 2;
  bad.group_of = {{0, 0, 1}, {0, 1, 1}};
  std::vector<ParamVector> models{scalar(1), scalar(2), scalar(3)};
  CHECK_THROWS_AS(build_tree(bad, models), StructureError);
  LevelAssignment ok;
  ok.K = 1;
  ok.group_of = {{0, 0, 0}};
  HierarchyTree t = build_tree(ok, models);
  std::vector<ParamVector> short_list{scalar(1)};
  CHECK_THROWS_AS(propagate_up(t, short_list), StructureError);
}

TEST_CASE("singleton level-1 group anchors with coefficient 1") {
  LevelAssignment a;
  a.K = 3;
  a.group_of = {{0, 1, 1}, {0, 1, 1}, {0, 0, 0}};
  std::vector<ParamVector> models{scalar(1), scalar(2), scalar(3)};
  const HierarchyTree t = build_tree(a, models);
  const auto anchors = anchors_for(t, 0);
  REQUIRE(anchors.size() == 3);
  CHECK(anchors[0].coeff == 1.0);
  CHECK(anchors[1].coeff == 1.0);
  CHECK(anchors[2].coeff == doctest::Approx(1.0 / 3.0));
  CHECK(anchors[0].anchor[0] == 1.0);
}

TEST_CASE("every node is the leaf mean and the root is the client mean") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + trial % 20;
    const int K = 1 + trial % 4;
    const LevelAssignment a = random_assignment(n, K, gen);
    std::vector<ParamVector> models;
    for (int i = 0; i < n; ++i) models.push_back(oracle::random_vector(7, gen));
    const HierarchyTree t = build_tree(a, models);

    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    CHECK((t.root().model - leaf_mean(all, models)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(t.root().member_count == n);

    for (int k = 1; k <= K; ++k) {
      for (const GroupNode& g : t.level(k)) {
        CHECK((g.model - leaf_mean(g.members, models)).cwiseAbs().maxCoeff() <= 1e-9);
        int sum = 0;
        if (k == 1) sum = static_cast<int>(g.children.size());
        else
          for (int c : g.children) sum += t.level(k - 1)[static_cast<std::size_t>(c)].member_count;
        CHECK(g.member_count == sum);
      }
    }
    for (int c = 0; c < n; ++c) {
      const auto anchors = anchors_for(t, c);
      REQUIRE(static_cast<int>(anchors.size()) == K);
      for (int k = 1; k <= K; ++k) {
        const GroupNode& g = t.ancestor(c, k);
        CHECK(std::find(g.members.begin(), g.members.end(), c) != g.members.end());
        CHECK(anchors[static_cast<std::size_t>(k - 1)].coeff == doctest::Approx(1.0 / static_cast<double>(g.members.size())));
      }
      // the blend stays inside the envelope of the ancestor models
      const Blend b = generalized_blend(t, c);
      for (Index i = 0; i < 7; ++i) {
        double lo = 1e300, hi = -1e300;
        for (const auto& an : anchors) {
          lo = std::min(lo, an.anchor[i]);
          hi = std::max(hi, an.anchor[i]);
        }
        CHECK(b.model[i] >= lo - 1e-12);
        CHECK(b.model[i] <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("shared client model propagates unchanged") {
  std::mt19937_64 gen(3);
  const ParamVector w = oracle::random_vector(5, gen);
  const LevelAssignment a = random_assignment(9, 3, gen);
  const HierarchyTree t = build_tree(a, std::vector<ParamVector>(9, w));
  for (int k = 1; k <= 3; ++k)
    for (const auto& g : t.level(k)) CHECK((g.model - w).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((generalized_blend(t, 4).model - w).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("duplicating a subtree's clients leaves ancestor models unchanged") {
  // level-1 groups {0,1} and {2}; duplicate every client of the tree
  LevelAssignment a;
  a.K = 2;
  a.group_of = {{0, 0, 1}, {0, 0, 0}};
  std::vector<ParamVector> models{scalar(1.0), scalar(5.0), scalar(9.0)};
  const HierarchyTree t = build_tree(a, models);

  LevelAssignment d;
  d.K = 2;
  d.group_of = {{0, 0, 1, 0, 0, 1}, {0, 0, 0, 0, 0, 0}};
  std::vector<ParamVector> dup{scalar(1.0), scalar(5.0), scalar(9.0), scalar(1.0), scalar(5.0), scalar(9.0)};
  const HierarchyTree td = build_tree(d, dup);
  CHECK(td.root().model[0] == doctest::Approx(t.root().model[0]).epsilon(1e-15));
  CHECK(td.level(1)[0].model[0] == doctest::Approx(t.level(1)[0].model[0]).epsilon(1e-15));
}

TEST_CASE("propagate_up overwrites group models from fresh client models") {
  std::mt19937_64 gen(4);
  const LevelAssignment a = random_assignment(6, 3, gen);
  std::vector<ParamVector> first, second;
  for (int i = 0; i < 6; ++i) {
    first.push_back(oracle::random_vector(4, gen));
    second.push_back(oracle::random_vector(4, gen));
  }
  HierarchyTree t = build_tree(a, first);
  propagate_up(t, second);
  const HierarchyTree fresh = build_tree(a, second);
  for (int k = 1; k <= 3; ++k)
    for (std::size_t g = 0; g < t.level(k).size(); ++g) CHECK(t.level(k)[g].model == fresh.level(k)[g].model);
}

TEST_CASE("tree snapshot export") {
  LevelAssignment a;
  a.K = 2;
  a.group_of = {{0, 0, 1, 1}, {0, 0, 0, 0}};
  std::vector<ParamVector> models{scalar(3), scalar(3), scalar(4), scalar(4)};
  const auto doc = nlohmann::json::parse(export_tree_snapshot(build_tree(a, models), 7));
  CHECK(doc["round"] == 7);
  CHECK(doc["levels"].size() == 2);
}

}  // TEST_SUITE
