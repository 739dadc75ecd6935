#include "demlearn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "demlearn/errors.hpp"

namespace demlearn {

namespace {

constexpr double kDefaultProxMu = 0.005;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>(key, item));
  }
  return out;
}

// Rethrows non-config errors raised while converting a value with key context.
template <class Fn>
auto with_key(const std::string& key, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::vector<Settings::Key>& Settings::known_keys() {
  static const std::vector<Key> keys = {
      {"run.name", "", "run name (default: algorithm name)"},
      {"run.algorithm", "demlearn", "demlearn | demlearn-p | fedavg | fedprox"},
      {"run.rounds", "60", "global rounds T"},
      {"run.levels", "4", "generalized levels K"},
      {"run.tau", "2", "structure rebuild period"},
      {"run.fixed_structure", "false", "build the structure once at t = 0"},
      {"run.mu", "auto", "proximal strength (auto: 0 or 0.005 by algorithm)"},
      {"run.beta0", "1.0", "initial generalized blend weight"},
      {"run.beta_decay", "0.7", "geometric decay of beta per round"},
      {"run.beta_min", "0.01", "floor of beta"},
      {"run.epochs", "2", "local epochs per round"},
      {"run.batch_size", "16", "local mini-batch size"},
      {"run.lr", "0.01", "local learning rate"},
      {"run.metric", "weights", "clustering metric: weights | gradients"},
      {"run.fedavg_weighting", "samples", "baseline aggregation weights: samples | agents"},
      {"run.seed", "1", "model/client RNG seed"},
      {"run.threads", "0", "client-phase threads (0: all cores)"},
      {"model.kind", "logistic", "logistic | mlp"},
      {"model.hidden", "32", "mlp hidden width"},
      {"data.source", "synthetic", "synthetic | mnist | fashion-mnist | idx"},
      {"data.dir", "", "directory with train-images-idx3-ubyte[.gz] etc."},
      {"data.images", "", "IDX image file (source = idx)"},
      {"data.labels", "", "IDX label file (source = idx)"},
      {"data.clients", "50", "number of clients"},
      {"data.labels_per_client", "2", "distinct labels per client"},
      {"data.samples_per_client", "80", "samples drawn per client"},
      {"data.test_frac", "0.2", "per-client test fraction"},
      {"data.seed", "1", "partition seed"},
      {"data.synthetic.classes", "10", "synthetic: classes"},
      {"data.synthetic.input_dim", "32", "synthetic: feature width"},
      {"data.synthetic.samples_per_class", "500", "synthetic: samples per class"},
      {"data.synthetic.separation", "3.0", "synthetic: distance of class means from origin"},
      {"output.dir", "results", "output directory"},
      {"output.tree_snapshots", "false", "write a tree snapshot every round"},
      {"output.shared_partition", "true", "all runs share one data partition"},
      {"sweep.mu", "0.002,0.01,0.05", "mu values for sweep-mu"},
  };
  return keys;
}

bool Settings::is_known(const std::string& key) {
  const auto& keys = known_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
}

Settings::Settings() {
  for (const auto& k : known_keys()) values_[k.name] = k.default_value;
}

void Settings::set(const std::string& key, const std::string& value, const std::string& origin) {
  if (!is_known(key)) throw ConfigError(origin + ": unknown key '" + key + "'");
  values_[key] = value;
}

void Settings::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    set(key, trim(line.substr(eq + 1)), where);
  }
}

void Settings::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path.string());
}

const std::string& Settings::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

std::string Settings::dump() const {
  std::string out;
  for (const auto& k : known_keys()) out += k.name + " = " + get(k.name) + "\n";
  return out;
}

void ExperimentPlan::validate() const {
  std::set<std::string> names;
  for (const auto& r : runs) {
    if (r.name.empty()) throw ConfigError("run.name: must not be empty");
    if (!names.insert(r.name).second) throw ConfigError("run.name: duplicate run '" + r.name + "'");
    r.config.validate();
  }
}

ExperimentPlan plan_from_settings(const Settings& s) {
  auto str = [&](const std::string& k) { return s.get(k); };
  auto i32 = [&](const std::string& k) { return parse_number<int>(k, str(k)); };
  auto u64 = [&](const std::string& k) { return parse_number<std::uint64_t>(k, str(k)); };
  auto f64 = [&](const std::string& k) { return parse_number<double>(k, str(k)); };
  auto flag = [&](const std::string& k) { return parse_bool(k, str(k)); };

  RunConfig cfg;
  cfg.algorithm = with_key("run.algorithm", [&] { return parse_algorithm(str("run.algorithm")); });
  cfg.rounds = i32("run.rounds");
  cfg.levels = i32("run.levels");
  cfg.tau = i32("run.tau");
  cfg.fixed_structure = flag("run.fixed_structure");
  if (str("run.mu") == "auto") {
    const bool proximal = cfg.algorithm == Algorithm::DemLearnP || cfg.algorithm == Algorithm::FedProx;
    cfg.mu = proximal ? kDefaultProxMu : 0.0;
  } else {
    cfg.mu = f64("run.mu");
  }
  cfg.beta0 = f64("run.beta0");
  cfg.beta_decay = f64("run.beta_decay");
  cfg.beta_min = f64("run.beta_min");
  cfg.solve.epochs = i32("run.epochs");
  cfg.solve.batch_size = i32("run.batch_size");
  cfg.solve.lr = f64("run.lr");
  cfg.metric = with_key("run.metric", [&] { return parse_similarity_metric(str("run.metric")); });
  cfg.fedavg_weighting = with_key("run.fedavg_weighting", [&] { return parse_weighting(str("run.fedavg_weighting")); });
  cfg.seed = u64("run.seed");
  cfg.threads = i32("run.threads");
  cfg.model = with_key("model.kind", [&] { return parse_model_kind(str("model.kind")); });
  cfg.hidden_dim = i32("model.hidden");
  if (cfg.fixed_structure) cfg.tau = std::numeric_limits<int>::max();

  ExperimentPlan plan;
  plan.data.source = str("data.source");
  static const std::set<std::string> sources{"synthetic", "mnist", "fashion-mnist", "idx"};
  if (!sources.count(plan.data.source)) {
    throw ConfigError("data.source: unknown source '" + plan.data.source + "'");
  }
  plan.data.dir = str("data.dir");
  plan.data.images = str("data.images");
  plan.data.labels = str("data.labels");
  if (plan.data.source == "idx" && (plan.data.images.empty() || plan.data.labels.empty())) {
    throw ConfigError("data.images: source = idx needs data.images and data.labels");
  }
  plan.data.partition.n_clients = i32("data.clients");
  plan.data.partition.labels_per_client = i32("data.labels_per_client");
  plan.data.partition.samples_per_client = i32("data.samples_per_client");
  plan.data.partition.test_frac = f64("data.test_frac");
  plan.data.partition.seed = u64("data.seed");
  if (plan.data.partition.n_clients < 1) throw ConfigError("data.clients: must be >= 1");
  if (!(plan.data.partition.test_frac > 0.0 && plan.data.partition.test_frac < 1.0)) {
    throw ConfigError("data.test_frac: must lie in (0, 1)");
  }
  plan.data.synthetic_classes = i32("data.synthetic.classes");
  plan.data.synthetic_input_dim = i32("data.synthetic.input_dim");
  plan.data.synthetic_samples_per_class = i32("data.synthetic.samples_per_class");
  plan.data.synthetic_separation = f64("data.synthetic.separation");

  plan.output_dir = str("output.dir");
  plan.tree_snapshots = flag("output.tree_snapshots");
  plan.shared_partition = flag("output.shared_partition");
  plan.sweep_mu = parse_list("sweep.mu", str("sweep.mu"));

  std::string name = str("run.name");
  if (name.empty()) name = to_string(cfg.algorithm);
  plan.runs.push_back(NamedRun{name, cfg});
  plan.validate();
  return plan;
}

ExperimentPlan parse_config(const std::optional<std::filesystem::path>& file,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
  Settings s;
  if (file) s.load_file(*file);
  for (const auto& [k, v] : overrides) s.set(k, v, "flag --" + k);
  return plan_from_settings(s);
}

std::string describe_run(const NamedRun& run, const ExperimentPlan& plan) {
  const RunConfig& c = run.config;
  const DataConfig& d = plan.data;
  std::ostringstream os;
  os << "run.name = " << run.name << "\n"
     << "run.algorithm = " << to_string(c.algorithm) << "\n"
     << "run.rounds = " << c.rounds << "\n"
     << "run.levels = " << c.levels << "\n"
     << "run.tau = " << c.tau << "\n"
     << "run.fixed_structure = " << (c.fixed_structure ? "true" : "false") << "\n"
     << "run.mu = " << format_double(c.mu) << "\n"
     << "run.beta0 = " << format_double(c.beta0) << "\n"
     << "run.beta_decay = " << format_double(c.beta_decay) << "\n"
     << "run.beta_min = " << format_double(c.beta_min) << "\n"
     << "run.epochs = " << c.solve.epochs << "\n"
     << "run.batch_size = " << c.solve.batch_size << "\n"
     << "run.lr = " << format_double(c.solve.lr) << "\n"
     << "run.metric = " << to_string(c.metric) << "\n"
     << "run.fedavg_weighting = " << to_string(c.fedavg_weighting) << "\n"
     << "run.seed = " << c.seed << "\n"
     << "model.kind = " << to_string(c.model) << "\n"
     << "model.hidden = " << c.hidden_dim << "\n"
     << "data.source = " << d.source << "\n"
     << "data.clients = " << d.partition.n_clients << "\n"
     << "data.labels_per_client = " << d.partition.labels_per_client << "\n"
     << "data.samples_per_client = " << d.partition.samples_per_client << "\n"
     << "data.test_frac = " << format_double(d.partition.test_frac) << "\n"
     << "data.seed = " << d.partition.seed << "\n";
  if (d.source == "synthetic") {
    os << "data.synthetic.classes = " << d.synthetic_classes << "\n"
       << "data.synthetic.input_dim = " << d.synthetic_input_dim << "\n"
       << "data.synthetic.samples_per_class = " << d.synthetic_samples_per_class << "\n"
       << "data.synthetic.separation = " << format_double(d.synthetic_separation) << "\n";
  }
  return os.str();
}

}  // namespace demlearn
