#include "demlearn/metrics.hpp"

#include <numeric>

#include "demlearn/errors.hpp"
#include "demlearn/parallel.hpp"

namespace demlearn {

namespace {

struct Score {
  double acc = 0.0;
  double loss = 0.0;
};

Score score(const ModelSpec& spec, const ParamVector& w, const Dataset& ds) {
  if (ds.size() == 0) throw ArgumentError("cannot evaluate on an empty dataset");
  const Batch b = ds.batch();
  const auto pred = predict(spec, w, b);
  long hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == ds.labels[i];
  return {static_cast<double>(hits) / static_cast<double>(pred.size()), loss(spec, w, b)};
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

Dataset members_test(const GroupNode& g, std::span<const ClientState> clients) {
  std::vector<const Dataset*> parts;
  for (int c : g.members) parts.push_back(&clients[static_cast<std::size_t>(c)].shard->test);
  return concat(parts);
}

}  // namespace

double accuracy(const ModelSpec& spec, const ParamVector& w, const Dataset& test) {
  return score(spec, w, test).acc;
}

double c_spe(const ModelSpec& spec, std::span<const ClientState> clients, int threads) {
  std::vector<double> acc(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    acc[i] = accuracy(spec, clients[i].model, clients[i].shard->test);
  });
  return mean(acc);
}

double c_gen(const ModelSpec& spec, std::span<const ClientState> clients,
             const Dataset& global_test, int threads) {
  std::vector<double> acc(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    acc[i] = accuracy(spec, clients[i].model, global_test);
  });
  return mean(acc);
}

GroupMetrics g_metrics(const ModelSpec& spec, const HierarchyTree& tree,
                       std::span<const ClientState> clients, const Dataset& global_test) {
  GroupMetrics out;
  for (int k = 1; k < tree.levels(); ++k) {
    std::vector<double> spe, gen;
    for (const GroupNode& g : tree.level(k)) {
      spe.push_back(accuracy(spec, g.model, members_test(g, clients)));
      gen.push_back(accuracy(spec, g.model, global_test));
    }
    out.g_spe.push_back(mean(spe));
    out.g_gen.push_back(mean(gen));
  }
  return out;
}

double global_metric(const ModelSpec& spec, const HierarchyTree& tree, const Dataset& global_test) {
  return accuracy(spec, tree.root().model, global_test);
}

RoundMetrics evaluate_round(const ModelSpec& spec, int round, const HierarchyTree& tree,
                            std::span<const ClientState> clients, const Dataset& global_test,
                            const Dataset& global_train, int threads) {
  RoundMetrics m;
  m.round = round;

  std::vector<Score> own(clients.size()), all(clients.size());
  parallel_for(clients.size(), threads, [&](std::size_t i) {
    own[i] = score(spec, clients[i].model, clients[i].shard->test);
    all[i] = score(spec, clients[i].model, global_test);
  });
  std::vector<double> v(clients.size());
  auto avg = [&](const std::vector<Score>& s, double Score::*field) {
    for (std::size_t i = 0; i < s.size(); ++i) v[i] = s[i].*field;
    return mean(v);
  };
  m.c_spe = avg(own, &Score::acc);
  m.c_spe_loss = avg(own, &Score::loss);
  m.c_gen = avg(all, &Score::acc);
  m.c_gen_loss = avg(all, &Score::loss);

  const GroupMetrics g = g_metrics(spec, tree, clients, global_test);
  m.g_spe = g.g_spe;
  m.g_gen = g.g_gen;

  const Score root = score(spec, tree.root().model, global_test);
  m.global_acc = root.acc;
  m.global_loss = root.loss;
  m.global_train_loss = loss(spec, tree.root().model, global_train.batch());
  return m;
}

}  // namespace demlearn
