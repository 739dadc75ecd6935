#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "demlearn/clustering.hpp"
#include "demlearn/config.hpp"
#include "demlearn/errors.hpp"
#include "demlearn/harness.hpp"

namespace dl = demlearn;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

// run.rounds -> --rounds, model.kind -> --model-kind, data.synthetic.classes -> --data-synthetic-classes
std::string flag_for(const std::string& key) {
  std::string name = key.rfind("run.", 0) == 0 ? key.substr(4) : key;
  for (char& c : name) {
    if (c == '.' || c == '_') c = '-';
  }
  return "--" + name;
}

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config, "flat key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", args.sets, "override any key: --set section.key=value (repeatable)");
  for (const auto& key : dl::Settings::known_keys()) {
    if (key.name == "sweep.mu") continue;
    args.options[key.name] = cmd->add_option(flag_for(key.name), args.flags[key.name], key.help);
  }
}

dl::ExperimentPlan resolve(const CommonArgs& args) {
  std::vector<std::pair<std::string, std::string>> overrides;
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw dl::ConfigError("--set expects key=value, got '" + s + "'");
    }
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [key, opt] : args.options) {
    if (opt->count() > 0) overrides.emplace_back(key, args.flags.at(key));
  }
  std::optional<std::filesystem::path> file;
  if (!args.config.empty()) file = args.config;
  return dl::parse_config(file, overrides);
}

int export_dendrogram(const dl::ExperimentPlan& plan, std::optional<int> at_round, const std::string& output) {
  dl::RunConfig cfg = plan.runs.front().config;
  if (!cfg.is_demlearn()) throw dl::ConfigError("run.algorithm: export-dendrogram needs demlearn or demlearn-p");
  if (at_round) {
    if (*at_round < 0) throw dl::ConfigError("--round: must be >= 0");
    cfg.rounds = *at_round + 1;
  }
  if (cfg.rounds < 1) throw dl::ConfigError("run.rounds: export-dendrogram needs at least one round");
  const dl::Federation fed = dl::make_federation(cfg, dl::load_partition(plan.data));
  const dl::RunResult result = dl::run(fed, cfg);
  const std::string text = dl::export_dendrogram(*result.final_state.dendrogram);
  if (output.empty() || output == "-") {
    std::cout << text << "\n";
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) throw dl::Error("cannot write " + output);
    out << text << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical self-organizing federated learning simulator"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, compare_args, dend_args;

  auto* run_cmd = app.add_subcommand("run", "execute the configured run");
  add_common(run_cmd, run_args);

  auto* sweep_cmd = app.add_subcommand("sweep-mu", "one run per proximal strength mu");
  add_common(sweep_cmd, sweep_args);
  std::string mu_values;
  sweep_cmd->add_option("--mu-values", mu_values, "comma-separated mu list (default: sweep.mu)");

  auto* compare_cmd = app.add_subcommand("compare", "demlearn, demlearn-p, fedavg and fedprox on one partition");
  add_common(compare_cmd, compare_args);
  bool with_fixed = false;
  compare_cmd->add_flag("--with-fixed", with_fixed, "also run fixed-structure demlearn and demlearn-p");

  auto* dend_cmd = app.add_subcommand("export-dendrogram", "train and print the latest dendrogram as JSON");
  add_common(dend_cmd, dend_args);
  std::optional<int> at_round;
  std::string dend_output;
  dend_cmd->add_option("--round", at_round, "stop after this round (default: run.rounds - 1)");
  dend_cmd->add_option("-o,--output", dend_output, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (run_cmd->parsed()) return dl::run_plan(resolve(run_args), std::cerr);
    if (sweep_cmd->parsed()) {
      CommonArgs args = sweep_args;
      if (!mu_values.empty()) args.sets.push_back("sweep.mu=" + mu_values);
      const dl::ExperimentPlan base = resolve(args);
      return dl::run_plan(dl::sweep_mu(base, base.sweep_mu), std::cerr);
    }
    if (compare_cmd->parsed()) {
      return dl::run_plan(dl::compare_plan(resolve(compare_args), with_fixed), std::cerr);
    }
    if (dend_cmd->parsed()) return export_dendrogram(resolve(dend_args), at_round, dend_output);
  } catch (const dl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
