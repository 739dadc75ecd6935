#pragma once

#include <span>
#include <vector>

#include "demlearn/client.hpp"
#include "demlearn/data.hpp"
#include "demlearn/hierarchy.hpp"
#include "demlearn/model.hpp"

namespace demlearn {

/// Per-round evaluation series. g_spe/g_gen hold levels 1..K-1; the root is
/// reported as global_acc.
struct RoundMetrics {
  int round = 0;
  double c_spe = 0.0;
  double c_gen = 0.0;
  std::vector<double> g_spe;
  std::vector<double> g_gen;
  double global_acc = 0.0;

  double c_spe_loss = 0.0;
  double c_gen_loss = 0.0;
  double global_loss = 0.0;        // root model on the union test set
  double global_train_loss = 0.0;  // root model on the union train set
};

/// Fraction of argmax-correct predictions (ties go to the lowest class).
double accuracy(const ModelSpec& spec, const ParamVector& w, const Dataset& test);

/// Mean over clients of accuracy on their own test shard.
double c_spe(const ModelSpec& spec, std::span<const ClientState> clients, int threads = 1);

/// Mean over clients of accuracy on the union of all test shards.
double c_gen(const ModelSpec& spec, std::span<const ClientState> clients,
             const Dataset& global_test, int threads = 1);

struct GroupMetrics {
  std::vector<double> g_spe;
  std::vector<double> g_gen;
};

/// Levels 1..K-1: mean over level-k groups of accuracy on the members' union
/// test data (spe) and on global_test (gen).
GroupMetrics g_metrics(const ModelSpec& spec, const HierarchyTree& tree,
                       std::span<const ClientState> clients, const Dataset& global_test);

/// Accuracy of the root model on global_test.
double global_metric(const ModelSpec& spec, const HierarchyTree& tree, const Dataset& global_test);

/// Everything above plus losses, for one round.
RoundMetrics evaluate_round(const ModelSpec& spec, int round, const HierarchyTree& tree,
                            std::span<const ClientState> clients, const Dataset& global_test,
                            const Dataset& global_train, int threads = 1);

}  // namespace demlearn
