#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "isac/io.hpp"
#include "isac/scenario.hpp"

namespace isac {

enum class ExperimentKind {
  ConstellationTradeoff,
  BlpTradeoff,
  SlpVsBlp,
  SecureData,
  SecureSensing,
  FullDuplexBudget,
  ImBer,
  OfdmReceivers,
};

std::string to_string(ExperimentKind k);
// Throws DomainError listing the known kinds.
ExperimentKind experiment_kind_from_string(const std::string& s);
std::vector<ExperimentKind> all_experiment_kinds();
// Experiment parameters accepted by `--set`, with their defaults.
std::vector<std::pair<std::string, std::string>> experiment_parameters(ExperimentKind k);

// Two LoS users at -45 and 30 degrees, an eavesdropping target at 0 degrees
// (delay bin 40) and a second target in the same direction at bin 170,
// N_t = N_r = 16.
Scenario default_scenario();

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::OfdmReceivers;
  std::filesystem::path scenario_path;  // empty: default_scenario()
  std::filesystem::path output_dir;
  Overrides overrides;  // scenario keys go to the scenario, the rest are experiment parameters
};

struct ExperimentResult {
  Manifest manifest;
  std::vector<Probe> probes;
  std::filesystem::path manifest_path;
};

// Writes the artifacts, probes.csv and manifest.json into output_dir.
ExperimentResult run_experiment(const ExperimentSpec& spec);

struct ReportResult {
  int exit_code = 0;
  std::string text;
};

// Checks every artifact hash and re-evaluates probes.csv. Nonzero exit when a
// file is missing or altered or a probe is out of tolerance.
ReportResult report(const std::filesystem::path& manifest_path);

}  // namespace isac
