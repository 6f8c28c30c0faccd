// isac-lab: runs experiment pipelines and checks their artifacts.
//
//   isac-lab run <kind> [--scenario <path>] --out <dir> [--set k=v ...]
//   isac-lab report <manifest>
//   isac-lab list-kinds

#include <iostream>

#include <CLI11.hpp>

#include "isac/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ISAC experiment runner"};
  app.require_subcommand(1);

  std::string kind, scenario, out;
  std::vector<std::string> sets;
  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  run->add_option("kind", kind, "Experiment kind (see list-kinds)")->required();
  run->add_option("--scenario", scenario, "Scenario JSON; the built-in default when omitted");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--set", sets, "Override k=v (scenario key or experiment parameter)");

  std::string manifest;
  auto* rep = app.add_subcommand("report", "Verify a manifest and re-check its probes");
  rep->add_option("manifest", manifest, "manifest.json")->required();

  auto* list = app.add_subcommand("list-kinds", "List experiment kinds and their parameters");

  CLI11_PARSE(app, argc, argv);

  if (list->parsed()) {
    for (auto k : isac::all_experiment_kinds()) {
      std::cout << isac::to_string(k);
      for (const auto& [key, value] : isac::experiment_parameters(k)) std::cout << ' ' << key << '=' << value;
      std::cout << '\n';
    }
    return 0;
  }

  if (rep->parsed()) {
    try {
      const auto r = isac::report(manifest);
      std::cout << r.text;
      return r.exit_code;
    } catch (const std::exception& e) {
      std::cerr << "isac-lab: report " << manifest << ": " << e.what() << '\n';
      return 2;
    }
  }

  try {
    isac::ExperimentSpec spec;
    spec.kind = isac::experiment_kind_from_string(kind);
    spec.scenario_path = scenario;
    spec.output_dir = out;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw isac::ValidationError(kv, "expected k=v");
      spec.overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    const auto r = isac::run_experiment(spec);
    int failed = 0;
    for (const auto& p : r.probes) failed += !p.pass();
    std::cout << kind << ": " << r.manifest.entries.size() << " artifacts, " << r.probes.size() - failed << '/'
              << r.probes.size() << " probes pass -> " << r.manifest_path.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "isac-lab: run " << kind << ": " << e.what() << '\n';
    return 2;
  }
}
