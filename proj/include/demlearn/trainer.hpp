#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "demlearn/client.hpp"
#include "demlearn/clustering.hpp"
#include "demlearn/data.hpp"
#include "demlearn/hierarchy.hpp"
#include "demlearn/metrics.hpp"
#include "demlearn/model.hpp"

namespace demlearn {

enum class Algorithm { DemLearn, DemLearnP, FedAvg, FedProx };
enum class Weighting { Samples, Agents };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& text);
std::string to_string(Weighting weighting);
Weighting parse_weighting(const std::string& text);

struct RunConfig {
  Algorithm algorithm = Algorithm::DemLearn;
  int levels = 4;  // K
  int tau = 2;
  bool fixed_structure = false;  // build once at t = 0, never rebuild
  double mu = 0.0;
  double beta0 = 1.0;
  double beta_decay = 0.7;
  double beta_min = 0.01;
  SolveOptions solve;
  int rounds = 60;
  SimilarityMetric metric = SimilarityMetric::Weights;
  Weighting fedavg_weighting = Weighting::Samples;
  ModelKind model = ModelKind::Logistic;
  int hidden_dim = 32;  // used by the mlp model only
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency

  /// Throws ConfigError naming the offending key.
  void validate() const;
  [[nodiscard]] bool is_demlearn() const {
    return algorithm == Algorithm::DemLearn || algorithm == Algorithm::DemLearnP;
  }
};

/// Shared, immutable inputs of a run: the model architecture, every client's
/// shard, and the union test/train sets used by the generalization metrics.
struct Federation {
  ModelSpec spec;
  std::vector<std::shared_ptr<const ClientShard>> shards;
  Dataset global_test;
  Dataset global_train;

  static Federation create(const ModelSpec& spec, std::vector<ClientShard> shards);
};

ModelSpec model_spec_for(const RunConfig& cfg, int input_dim, int num_classes);

struct RoundState {
  int round = 0;
  std::vector<ClientState> clients;
  std::optional<HierarchyTree> tree;
  std::optional<Dendrogram> dendrogram;  // from the most recent rebuild
  bool rebuilt = false;                  // structure rebuilt during the last round
  RoundMetrics metrics;
};

/// All clients start from the same Gaussian initialization drawn from cfg.seed.
/// Baselines also get a one-group tree whose root is the global model;
/// DemLearn builds its first structure at the end of round 0.
RoundState initial_state(const Federation& fed, const RunConfig& cfg);

/// max(min(beta_min, beta0), beta0 * beta_decay^t).
double beta_schedule(int t, const RunConfig& cfg);

/// (1 - beta) w^(0) + beta * generalized_blend.
ParamVector local_init(const ClientState& client, const HierarchyTree& tree, double beta);

/// One DemLearn / DemLearn-P round: local init + proximal solve on every
/// client, structure rebuild when t mod tau = 0, bottom-up aggregation, metrics.
void run_round(RoundState& state, const Federation& fed, const RunConfig& cfg);

/// Broadcast, plain local SGD, count-weighted average (samples or agents).
void fedavg_round(RoundState& state, const Federation& fed, const RunConfig& cfg);

/// FedAvg with a single proximal anchor at the global model (coeff 1).
void fedprox_round(RoundState& state, const Federation& fed, const RunConfig& cfg);

/// Dispatches on cfg.algorithm.
void step(RoundState& state, const Federation& fed, const RunConfig& cfg);

struct RunResult {
  std::vector<RoundMetrics> history;
  RoundState final_state;
};

using RoundObserver = std::function<void(const RoundState&)>;

/// Runs cfg.rounds rounds; `observer` sees the state after every round.
RunResult run(const Federation& fed, const RunConfig& cfg, const RoundObserver& observer = {});

}  // namespace demlearn
