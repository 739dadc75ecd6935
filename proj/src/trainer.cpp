#include "demlearn/trainer.hpp"

#include <cmath>

#include "demlearn/errors.hpp"
#include "demlearn/parallel.hpp"

namespace demlearn {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kClientStreamBase = 1000;

std::vector<ParamVector> client_models(const RoundState& state) {
  std::vector<ParamVector> out;
  out.reserve(state.clients.size());
  for (const auto& c : state.clients) out.push_back(c.model);
  return out;
}

LevelAssignment single_group(int n_clients, int K) {
  LevelAssignment a;
  a.K = K;
  a.group_of.assign(static_cast<std::size_t>(K), std::vector<int>(static_cast<std::size_t>(n_clients), 0));
  return a;
}

void record_update(ClientState& c, const ParamVector& start, ParamVector updated, double lr) {
  if (lr > 0.0) c.last_delta = (updated - start) / lr;
  else c.last_delta = ParamVector::Zero(start.size());
  c.model = std::move(updated);
}

void finish_round(RoundState& state, const Federation& fed, const RunConfig& cfg) {
  state.metrics = evaluate_round(fed.spec, state.round, *state.tree, state.clients,
                                 fed.global_test, fed.global_train, cfg.threads);
  ++state.round;
}

void baseline_round(RoundState& state, const Federation& fed, const RunConfig& cfg, bool proximal) {
  if (!state.tree) throw StructureError("baseline round without a global model");
  const ParamVector global = state.tree->root().model;
  std::vector<ProxAnchor> anchors;
  if (proximal) anchors.push_back(ProxAnchor{global, 1.0});
  const double mu = proximal ? cfg.mu : 0.0;

  parallel_for(state.clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = state.clients[i];
    ParamVector w = local_solve(fed.spec, global, c.shard->train.batch(), anchors, mu, cfg.solve, c.rng);
    record_update(c, global, std::move(w), cfg.solve.lr);
  });

  std::vector<int> weights;
  weights.reserve(state.clients.size());
  for (const auto& c : state.clients) {
    weights.push_back(cfg.fedavg_weighting == Weighting::Samples
                          ? static_cast<int>(c.shard->train.size())
                          : 1);
  }
  const auto models = client_models(state);
  state.tree->root().model = group_average(std::span<const ParamVector>(models), weights);
  state.rebuilt = false;
  finish_round(state, fed, cfg);
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::DemLearn: return "demlearn";
    case Algorithm::DemLearnP: return "demlearn-p";
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedProx: return "fedprox";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& text) {
  if (text == "demlearn") return Algorithm::DemLearn;
  if (text == "demlearn-p") return Algorithm::DemLearnP;
  if (text == "fedavg") return Algorithm::FedAvg;
  if (text == "fedprox") return Algorithm::FedProx;
  throw ConfigError("unknown algorithm '" + text + "' (expected demlearn, demlearn-p, fedavg, fedprox)");
}

std::string to_string(Weighting weighting) {
  return weighting == Weighting::Samples ? "samples" : "agents";
}

Weighting parse_weighting(const std::string& text) {
  if (text == "samples") return Weighting::Samples;
  if (text == "agents") return Weighting::Agents;
  throw ConfigError("unknown weighting '" + text + "' (expected samples or agents)");
}

void RunConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  switch (algorithm) {
    case Algorithm::DemLearn:
      if (mu != 0.0) fail("run.mu", "demlearn requires mu = 0 (use demlearn-p for mu > 0)");
      break;
    case Algorithm::DemLearnP:
      if (!(mu > 0.0)) fail("run.mu", "demlearn-p requires mu > 0");
      break;
    case Algorithm::FedAvg:
      if (mu != 0.0) fail("run.mu", "fedavg requires mu = 0 (use fedprox for mu > 0)");
      break;
    case Algorithm::FedProx:
      if (!(mu >= 0.0)) fail("run.mu", "fedprox requires mu >= 0");
      break;
  }
  if (levels < 1) fail("run.levels", "K must be >= 1");
  if (tau < 1) fail("run.tau", "tau must be >= 1");
  if (!(beta0 >= 0.0 && beta0 <= 1.0)) fail("run.beta0", "must lie in [0, 1]");
  if (!(beta_decay >= 0.0 && beta_decay <= 1.0)) fail("run.beta_decay", "must lie in [0, 1]");
  if (!(beta_min >= 0.0 && beta_min <= 1.0)) fail("run.beta_min", "must lie in [0, 1]");
  if (solve.epochs < 1) fail("run.epochs", "must be >= 1");
  if (solve.batch_size < 1) fail("run.batch_size", "must be >= 1");
  if (!(solve.lr >= 0.0) || !std::isfinite(solve.lr)) fail("run.lr", "must be finite and >= 0");
  if (rounds < 0) fail("run.rounds", "must be >= 0");
  if (model == ModelKind::Mlp && hidden_dim < 1) fail("model.hidden", "mlp needs hidden >= 1");
}

Federation Federation::create(const ModelSpec& spec, std::vector<ClientShard> shards) {
  spec.validate();
  if (shards.empty()) throw ConfigError("federation needs at least one client");
  Federation fed;
  fed.spec = spec;
  std::vector<const Dataset*> tests, trains;
  for (auto& s : shards) {
    if (s.train.size() == 0) {
      throw ConfigError("client " + std::to_string(s.client_id) + " holds no training samples");
    }
    auto p = std::make_shared<const ClientShard>(std::move(s));
    tests.push_back(&p->test);
    trains.push_back(&p->train);
    fed.shards.push_back(std::move(p));
  }
  fed.global_test = concat(tests);
  fed.global_train = concat(trains);
  if (fed.global_test.size() == 0) throw ConfigError("clients hold no test samples");
  return fed;
}

ModelSpec model_spec_for(const RunConfig& cfg, int input_dim, int num_classes) {
  return cfg.model == ModelKind::Logistic ? ModelSpec::logistic(input_dim, num_classes)
                                          : ModelSpec::mlp(input_dim, cfg.hidden_dim, num_classes);
}

RoundState initial_state(const Federation& fed, const RunConfig& cfg) {
  cfg.validate();
  const ParamVector w0 = init_params(fed.spec, mix_seed(cfg.seed, kInitStream));
  RoundState state;
  const int n = static_cast<int>(fed.shards.size());
  state.clients.reserve(fed.shards.size());
  for (int i = 0; i < n; ++i) {
    ClientState c;
    c.id = i;
    c.shard = fed.shards[static_cast<std::size_t>(i)];
    c.model = w0;
    c.rng = Rng(mix_seed(cfg.seed, kClientStreamBase + static_cast<std::uint64_t>(i)));
    state.clients.push_back(std::move(c));
  }
  if (!cfg.is_demlearn()) {
    const auto models = client_models(state);
    state.tree = build_tree(single_group(n, 1), models);
    state.tree->root().model = w0;  // the mean of n copies is not bitwise w0
  }
  return state;
}

double beta_schedule(int t, const RunConfig& cfg) {
  if (t < 0) throw ArgumentError("beta_schedule: t must be >= 0");
  if (!(cfg.beta0 >= 0.0 && cfg.beta0 <= 1.0)) throw ConfigError("run.beta0: must lie in [0, 1]");
  const double decayed = cfg.beta0 * std::pow(cfg.beta_decay, t);
  return std::max(std::min(cfg.beta_min, cfg.beta0), decayed);
}

ParamVector local_init(const ClientState& client, const HierarchyTree& tree, double beta) {
  if (beta == 0.0) return client.model;
  Blend blend = generalized_blend(tree, client.id);
  if (beta == 1.0) return std::move(blend.model);
  return (1.0 - beta) * client.model + beta * blend.model;
}

void run_round(RoundState& state, const Federation& fed, const RunConfig& cfg) {
  if (!cfg.is_demlearn()) throw ConfigError("run_round drives demlearn / demlearn-p only");
  const int t = state.round;
  const double beta = beta_schedule(t, cfg);
  const HierarchyTree* tree = state.tree ? &*state.tree : nullptr;

  parallel_for(state.clients.size(), cfg.threads, [&](std::size_t i) {
    ClientState& c = state.clients[i];
    ParamVector start = tree ? local_init(c, *tree, beta) : c.model;
    std::vector<ProxAnchor> anchors;
    if (tree && cfg.mu > 0.0) anchors = anchors_for(*tree, c.id);
    ParamVector w = local_solve(fed.spec, start, c.shard->train.batch(), anchors, cfg.mu, cfg.solve, c.rng);
    record_update(c, start, std::move(w), cfg.solve.lr);
  });

  const auto models = client_models(state);
  const bool rebuild = !state.tree || (!cfg.fixed_structure && t % cfg.tau == 0);
  if (rebuild) {
    const int n = static_cast<int>(state.clients.size());
    if (n >= 2) {
      Dendrogram dend = agglomerate(build_distance_matrix(state.clients, cfg.metric));
      state.tree = build_tree(truncate(dend, cfg.levels), models);
      state.dendrogram = std::move(dend);
    } else {
      state.tree = build_tree(single_group(n, cfg.levels), models);
      state.dendrogram = Dendrogram{1, {}};
    }
  } else {
    propagate_up(*state.tree, models);
  }
  state.rebuilt = rebuild;
  finish_round(state, fed, cfg);
}

void fedavg_round(RoundState& state, const Federation& fed, const RunConfig& cfg) {
  baseline_round(state, fed, cfg, false);
}

void fedprox_round(RoundState& state, const Federation& fed, const RunConfig& cfg) {
  baseline_round(state, fed, cfg, true);
}

void step(RoundState& state, const Federation& fed, const RunConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::DemLearn:
    case Algorithm::DemLearnP: run_round(state, fed, cfg); break;
    case Algorithm::FedAvg: fedavg_round(state, fed, cfg); break;
    case Algorithm::FedProx: fedprox_round(state, fed, cfg); break;
  }
}

RunResult run(const Federation& fed, const RunConfig& cfg, const RoundObserver& observer) {
  RunResult result{{}, initial_state(fed, cfg)};
  result.history.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int t = 0; t < cfg.rounds; ++t) {
    step(result.final_state, fed, cfg);
    result.history.push_back(result.final_state.metrics);
    if (observer) observer(result.final_state);
  }
  return result;
}

}  // namespace demlearn
