#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demlearn/trainer.hpp"

namespace demlearn {

/// Where the federation's samples come from and how they are dealt.
struct DataConfig {
  std::string source = "synthetic";  // synthetic | mnist | fashion-mnist | idx
  std::string dir;                   // mnist / fashion-mnist; empty: $DEMLEARN_DATA_DIR
  std::string images;                // idx
  std::string labels;                // idx
  PartitionOptions partition;
  int synthetic_classes = 10;
  int synthetic_input_dim = 32;
  int synthetic_samples_per_class = 500;
  double synthetic_separation = 3.0;
};

struct NamedRun {
  std::string name;
  RunConfig config;
};

struct ExperimentPlan {
  std::vector<NamedRun> runs;
  DataConfig data;
  std::filesystem::path output_dir = "results";
  bool shared_partition = true;
  bool tree_snapshots = false;
  std::vector<double> sweep_mu;  // consumed by the sweep-mu command

  /// Unique run names, every RunConfig valid.
  void validate() const;
};

constexpr const char* kDataDirEnv = "DEMLEARN_DATA_DIR";

/// Flat "section.key = value" settings. Later layers override earlier ones:
/// built-in defaults < config file < command-line flags. Unknown keys are
/// rejected.
class Settings {
 public:
  struct Key {
    std::string name;
    std::string default_value;
    std::string help;
  };

  Settings();

  static const std::vector<Key>& known_keys();
  static bool is_known(const std::string& key);

  void set(const std::string& key, const std::string& value, const std::string& origin = "flag");
  /// Parses `key = value` lines; '#' starts a comment.
  void load_text(const std::string& text, const std::string& origin);
  void load_file(const std::filesystem::path& path);

  [[nodiscard]] const std::string& get(const std::string& key) const;
  /// All keys in registry order as `key = value` lines.
  [[nodiscard]] std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Typed plan with a single run built from `settings`.
ExperimentPlan plan_from_settings(const Settings& settings);

/// defaults < file (if given) < overrides, then plan_from_settings.
ExperimentPlan parse_config(const std::optional<std::filesystem::path>& file,
                            const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// `key = value` echo of a fully resolved run.
std::string describe_run(const NamedRun& run, const ExperimentPlan& plan);

}  // namespace demlearn
