#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "isac/types.hpp"

namespace isac {

// Finite symbol alphabet with (default uniform) probabilities. Valid
// constellations are zero-mean and unit-power under their probabilities.
struct Constellation {
  CVec points;
  RVec probabilities;
  std::string name;

  Constellation() = default;
  Constellation(CVec pts, std::string label = {});
  Constellation(CVec pts, RVec probs, std::string label = {});

  Eigen::Index size() const { return points.size(); }
  cplx mean() const;
  double power() const;
  // True when zero-mean, unit-power and probabilities form a distribution.
  bool is_normalized(double tol = 1e-9) const;
  bool is_unit_modulus(double tol = 1e-12) const;
};

// Rescales to zero mean and unit power. Throws ContractError on an all-equal set.
Constellation normalized(const Constellation& c);

Constellation make_psk(int order);
Constellation make_qam(int order);
// Ring-based APSK; `rings` are (points on ring, radius, phase offset rad).
Constellation make_apsk(const std::vector<std::tuple<int, double, double>>& rings, std::string label);

// Names: BPSK, QPSK, 8PSK, 16QAM, 64QAM, 256QAM, 16APSK, 32APSK. APSK ring
// ratios come from data/apsk_rings.json.
Constellation standard_constellation(const std::string& name);
std::vector<std::string> standard_constellation_names();

// mu_4 = sum_m p_m |s_m|^4.
double kurtosis(const Constellation& c);
// nu_{-2} = sum_m p_m |s_m|^-2. Throws SingularError if a point is at the origin.
double inverse_second_moment(const Constellation& c);

struct DistancePair {
  double distance = 0.0;
  Eigen::Index i = 0;
  Eigen::Index j = 0;
};
// Exhaustive scan; the first minimal pair in (i, j) lexicographic order wins.
DistancePair closest_pair(const Constellation& c);
double min_euclidean_distance(const Constellation& c);

// Index of the nearest point.
Eigen::Index detect_nearest(const Constellation& c, cplx z);
// i.i.d. indices drawn from the probabilities.
std::vector<Eigen::Index> draw_indices(const Constellation& c, std::size_t n, Rng& rng);

struct ShapingOptions {
  int restarts = 32;
  int iterations_per_stage = 400;
  std::uint64_t seed = 7;
};

struct ShapingResult {
  Constellation constellation;
  double objective = 0.0;  // (1-rho) mu4 - rho d_min at the returned point
  double mu4 = 0.0;
  double d_min = 0.0;
  int restarts_run = 0;
  int restarts_degenerate = 0;  // starts that collapsed under projection
};

// Geometric shaping trading kurtosis against minimum distance:
// minimize (1-rho) mu4 - rho d_min  s.t. |s_i - s_j| >= d_min, zero mean, unit power.
ShapingResult shape_constellation(int order, double rho, const ShapingOptions& opts = {});

// CSV rows `re,im,prob` with a header line.
void write_constellation_csv(const Constellation& c, const std::filesystem::path& path);
Constellation read_constellation_csv(const std::filesystem::path& path);

}  // namespace isac
