#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "demlearn/config.hpp"
#include "demlearn/data.hpp"
#include "demlearn/metrics.hpp"
#include "demlearn/trainer.hpp"

namespace demlearn {

/// Loads (or generates) the source dataset named by `data`.
Dataset load_source(const DataConfig& data);

/// Source dataset dealt into client shards.
std::vector<ClientShard> load_partition(const DataConfig& data);

Federation make_federation(const RunConfig& cfg, std::vector<ClientShard> shards);

/// One DemLearn-P run per mu (mu = 0 becomes a DemLearn run), sharing the base
/// plan's data and seeds.
ExperimentPlan sweep_mu(const ExperimentPlan& base, std::span<const double> mus);

/// Structure built at t = 0 and never rebuilt.
RunConfig fixed_structure_mode(RunConfig cfg);

/// DemLearn, DemLearn-P, FedAvg and FedProx on one shared partition. With
/// `with_fixed`, fixed-structure DemLearn and DemLearn-P runs are appended.
ExperimentPlan compare_plan(const ExperimentPlan& base, bool with_fixed = false);

std::string csv_header(const RunConfig& cfg);
std::string csv_row(const std::string& run, const RoundMetrics& m);

/// Executes every run, writing into plan.output_dir:
///   <run>.csv                    per-round metrics (flushed every round)
///   <run>.config                 resolved configuration echo
///   <run>.summary.json           final metrics and status
///   <run>/dendrogram_t<t>.json   at every structure rebuild
///   <run>/tree_t<t>.json         every round, when tree_snapshots is set
/// Returns 0 on success, 1 on configuration errors, 2 on runtime failures.
/// A failing run stops the plan after its partial results are flushed.
int run_plan(const ExperimentPlan& plan, std::ostream& log);

}  // namespace demlearn
