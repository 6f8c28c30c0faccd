#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "isac/types.hpp"

namespace isac {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
// Data rows of a CSV file (lines after the header, blank lines excluded).
int csv_data_rows(const std::filesystem::path& path);

// Minimal SVG line/scatter plots.
struct SvgSeries {
  std::string label;
  RVec x;
  RVec y;
  bool scatter = false;
};

struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<SvgSeries> series;
};

void write_svg(const SvgPlot& plot, const std::filesystem::path& path);

// Tolerance check against a closed-form or reference value. Relations:
// "abs" |measured - expected| <= tolerance, "le" measured <= expected + tolerance,
// "ge" measured >= expected - tolerance.
struct Probe {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  std::string relation = "abs";

  bool pass() const;
};

// CSV `name,measured,expected,tolerance,relation,pass`.
void write_probes_csv(const std::vector<Probe>& probes, const std::filesystem::path& path);
std::vector<Probe> read_probes_csv(const std::filesystem::path& path);

struct ManifestEntry {
  std::string file;  // relative to the manifest directory
  std::string sha256;
  int rows = 0;      // CSV data rows, 0 for other files
};

struct Manifest {
  std::string kind;
  std::vector<ManifestEntry> entries;
};

// Hashes every listed file under `dir`.
Manifest make_manifest(const std::string& kind, const std::filesystem::path& dir, const std::vector<std::string>& files);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace isac
