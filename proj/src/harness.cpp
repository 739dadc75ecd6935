#include "demlearn/harness.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "demlearn/errors.hpp"

namespace demlearn {

namespace {

namespace fs = std::filesystem;

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string mu_label(double mu) {
  std::ostringstream os;
  os << mu;
  return os.str();
}

fs::path find_idx(const fs::path& dir, const std::string& stem) {
  for (const fs::path& base : {dir, dir / "mnist"}) {
    for (const char* ext : {"", ".gz"}) {
      fs::path p = base / (stem + ext);
      if (fs::exists(p)) return p;
    }
  }
  throw ConfigError("data.dir: no " + stem + "[.gz] under " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

nlohmann::ordered_json metrics_json(const RoundMetrics& m) {
  return {{"round", m.round},          {"c_spe", m.c_spe},
          {"c_gen", m.c_gen},          {"g_spe", m.g_spe},
          {"g_gen", m.g_gen},          {"global_acc", m.global_acc},
          {"global_loss", m.global_loss}, {"global_train_loss", m.global_train_loss},
          {"c_spe_loss", m.c_spe_loss}, {"c_gen_loss", m.c_gen_loss}};
}

void write_summary(const fs::path& path, const NamedRun& run, const std::vector<RoundMetrics>& history,
                   const std::string& status, const std::string& error) {
  nlohmann::ordered_json doc;
  doc["run"] = run.name;
  doc["algorithm"] = to_string(run.config.algorithm);
  doc["status"] = status;
  if (!error.empty()) doc["error"] = error;
  doc["rounds_requested"] = run.config.rounds;
  doc["rounds_completed"] = history.size();
  if (!history.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
      if (history[i].global_acc > history[best].global_acc) best = i;
    }
    doc["best_global_acc"] = history[best].global_acc;
    doc["best_global_round"] = history[best].round;
    doc["final"] = metrics_json(history.back());
  }
  write_text(path, doc.dump(2) + "\n");
}

}  // namespace

Dataset load_source(const DataConfig& data) {
  if (data.source == "synthetic") {
    return synthetic_dataset(data.synthetic_classes, data.synthetic_input_dim,
                             data.synthetic_samples_per_class, data.synthetic_separation,
                             mix_seed(data.partition.seed, 0xda7a));
  }
  if (data.source == "idx") return load_idx(data.images, data.labels);
  if (data.source == "mnist" || data.source == "fashion-mnist") {
    std::string dir = data.dir;
    if (dir.empty()) {
      const char* env = std::getenv(kDataDirEnv);
      if (env != nullptr) dir = env;
    }
    if (dir.empty()) {
      throw ConfigError(std::string("data.dir: not set and ") + kDataDirEnv + " is empty");
    }
    return load_idx(find_idx(dir, "train-images-idx3-ubyte"), find_idx(dir, "train-labels-idx1-ubyte"));
  }
  throw ConfigError("data.source: unknown source '" + data.source + "'");
}

std::vector<ClientShard> load_partition(const DataConfig& data) {
  return partition_shards(load_source(data), data.partition);
}

Federation make_federation(const RunConfig& cfg, std::vector<ClientShard> shards) {
  if (shards.empty()) throw ConfigError("data.clients: no shards");
  const int dim = shards.front().train.input_dim();
  const int classes = shards.front().train.num_classes;
  return Federation::create(model_spec_for(cfg, dim, classes), std::move(shards));
}

ExperimentPlan sweep_mu(const ExperimentPlan& base, std::span<const double> mus) {
  if (base.runs.empty()) throw ConfigError("sweep.mu: base plan has no run");
  if (mus.empty()) throw ConfigError("sweep.mu: no values");
  ExperimentPlan plan = base;
  plan.runs.clear();
  for (double mu : mus) {
    if (!(mu >= 0.0)) throw ConfigError("sweep.mu: values must be >= 0");
    NamedRun r = base.runs.front();
    r.config.mu = mu;
    r.config.algorithm = mu == 0.0 ? Algorithm::DemLearn : Algorithm::DemLearnP;
    r.name = to_string(r.config.algorithm) + "_mu" + mu_label(mu);
    plan.runs.push_back(std::move(r));
  }
  plan.validate();
  return plan;
}

RunConfig fixed_structure_mode(RunConfig cfg) {
  cfg.fixed_structure = true;
  cfg.tau = std::numeric_limits<int>::max();
  return cfg;
}

ExperimentPlan compare_plan(const ExperimentPlan& base, bool with_fixed) {
  if (base.runs.empty()) throw ConfigError("compare: base plan has no run");
  const RunConfig& ref = base.runs.front().config;
  const double prox_mu = ref.mu > 0.0 ? ref.mu : 0.005;

  ExperimentPlan plan = base;
  plan.runs.clear();
  plan.shared_partition = true;
  auto add = [&](const std::string& name, Algorithm algo, double mu, bool fixed) {
    RunConfig c = ref;
    c.algorithm = algo;
    c.mu = mu;
    if (fixed) c = fixed_structure_mode(c);
    plan.runs.push_back(NamedRun{name, c});
  };
  add("demlearn", Algorithm::DemLearn, 0.0, false);
  add("demlearn-p", Algorithm::DemLearnP, prox_mu, false);
  add("fedavg", Algorithm::FedAvg, 0.0, false);
  add("fedprox", Algorithm::FedProx, prox_mu, false);
  if (with_fixed) {
    add("demlearn-fixed", Algorithm::DemLearn, 0.0, true);
    add("demlearn-p-fixed", Algorithm::DemLearnP, prox_mu, true);
  }
  plan.validate();
  return plan;
}

std::string csv_header(const RunConfig& cfg) {
  std::string h = "run,t,c_spe,c_gen";
  const int groups = cfg.is_demlearn() ? cfg.levels - 1 : 0;
  for (int k = 1; k <= groups; ++k) h += ",g_spe_" + std::to_string(k);
  for (int k = 1; k <= groups; ++k) h += ",g_gen_" + std::to_string(k);
  return h + ",global_acc,global_loss";
}

std::string csv_row(const std::string& run, const RoundMetrics& m) {
  std::string r = run + "," + std::to_string(m.round) + "," + fixed6(m.c_spe) + "," + fixed6(m.c_gen);
  for (double v : m.g_spe) r += "," + fixed6(v);
  for (double v : m.g_gen) r += "," + fixed6(v);
  return r + "," + fixed6(m.global_acc) + "," + fixed6(m.global_loss);
}

int run_plan(const ExperimentPlan& plan, std::ostream& log) {
  std::vector<ClientShard> shared;
  try {
    plan.validate();
    fs::create_directories(plan.output_dir);
    shared = load_partition(plan.data);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 2;
  }

  for (const NamedRun& run : plan.runs) {
    const fs::path csv_path = plan.output_dir / (run.name + ".csv");
    const fs::path run_dir = plan.output_dir / run.name;
    std::vector<RoundMetrics> history;
    try {
      fs::create_directories(run_dir);
      write_text(plan.output_dir / (run.name + ".config"), describe_run(run, plan));
      std::ofstream csv(csv_path, std::ios::binary);
      if (!csv) throw Error("cannot write " + csv_path.string());
      csv << csv_header(run.config) << "\n";
      csv.flush();

      std::vector<ClientShard> shards = plan.shared_partition ? shared : load_partition(plan.data);
      const Federation fed = make_federation(run.config, std::move(shards));
      log << "[" << run.name << "] " << fed.shards.size() << " clients, " << fed.spec.param_count()
          << " parameters, " << run.config.rounds << " rounds\n";

      demlearn::run(fed, run.config, [&](const RoundState& state) {
        history.push_back(state.metrics);
        csv << csv_row(run.name, state.metrics) << "\n";
        csv.flush();
        const int t = state.metrics.round;
        if (state.rebuilt && state.dendrogram) {
          write_text(run_dir / ("dendrogram_t" + std::to_string(t) + ".json"),
                     export_dendrogram(*state.dendrogram));
        }
        if (plan.tree_snapshots && state.tree) {
          write_text(run_dir / ("tree_t" + std::to_string(t) + ".json"),
                     export_tree_snapshot(*state.tree, t));
        }
      });
      write_summary(plan.output_dir / (run.name + ".summary.json"), run, history, "ok", "");
      if (!history.empty()) {
        const RoundMetrics& last = history.back();
        log << "[" << run.name << "] final c_spe=" << fixed6(last.c_spe) << " c_gen=" << fixed6(last.c_gen)
            << " global=" << fixed6(last.global_acc) << "\n";
      }
    } catch (const std::exception& e) {
      log << "[" << run.name << "] failed: " << e.what() << "\n";
      try {
        write_summary(plan.output_dir / (run.name + ".summary.json"), run, history, "failed", e.what());
      } catch (...) {
      }
      return dynamic_cast<const ConfigError*>(&e) != nullptr ? 1 : 2;
    }
  }
  return 0;
}

}  // namespace demlearn
