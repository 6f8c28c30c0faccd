#pragma once

#include <optional>
#include <vector>

#include "isac/constellation.hpp"
#include "isac/ofdm_sensing.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

// Comb-shaped ACF: artificial peaks of amplitude alpha every lambda bins.
struct AcfSpec {
  int num_subcarriers = 256;
  int lambda_period = 64;
  double peak_amplitude = 0.0;  // alpha

  int num_peaks() const { return num_subcarriers / lambda_period - 1; }  // L
};

// DomainError for a bad period, InfeasibleError when alpha > N_s.
void check_acf_spec(const AcfSpec& s);

// Lambda[k] = sum_n p_n |s_n|^2 exp(+j 2 pi k n / N_s), by FFT.
CVec acf(const OfdmFrame& frame);

// q_n = 1 + (alpha / N_s) [ (N_s / lambda) 1{n mod (N_s / lambda) = 0} - 1 ].
RVec comb_allocation(const AcfSpec& s);

struct SecurityReport {
  double legit_snr_loss_db = 0.0;  // 10 log10 mean(1 / q_n)
  double comm_rate = 0.0;          // sum_n log2(1 + q_n snr0) / N_s
  double eve_isl_margin = 0.0;     // dB over the flat allocation on the same snapshots
  double eve_psl_margin = 0.0;
  double eve_isl_db = 0.0;
  double eve_psl_db = 0.0;
  double ghost_ratio = 0.0;  // |Eve profile at d + lambda| / |at d|, first snapshot, first target
};

struct SecuritySettings {
  double comm_snr_db = 10.0;
  int snapshots = 0;  // 0: 16 for unit-modulus constellations, 500 otherwise
  std::uint64_t seed = 31;
};

struct EveLegitResult {
  SecurityReport report;
  RangeProfile eve;    // MF, first snapshot
  RangeProfile legit;  // RF, first snapshot
};

// Echoes from every scenario target at the scenario's sensing noise power.
// Sidelobe powers are floored at 1e-15 of the peak so noiseless margins stay finite.
EveLegitResult eve_vs_legit(const Scenario& s, const AcfSpec& spec, const Constellation& c,
                            const SecuritySettings& settings = {});

struct SecurityThresholds {
  double isl_db = -std::numeric_limits<double>::infinity();
  double psl_db = -std::numeric_limits<double>::infinity();
};

struct SecurityCell {
  AcfSpec spec;
  SecurityReport report;
  bool feasible = false;
};

struct SecurityTradeoffRow {
  double rho = 0.0;
  bool feasible = false;
  AcfSpec spec;  // chosen (alpha, lambda)
  SecurityReport report;
  double objective = 0.0;  // -(1 - rho) L_A + rho R_c
};

struct SecurityTradeoff {
  std::vector<SecurityTradeoffRow> rows;
  std::vector<SecurityCell> grid;
};

// Exhaustive search over alpha x lambda for every rho; every lambda must divide N_s.
SecurityTradeoff sweep_security_tradeoff(const Scenario& s, const Constellation& c, const std::vector<double>& rho_grid,
                                         const std::vector<double>& alpha_grid, const std::vector<int>& lambda_grid,
                                         const SecurityThresholds& thresholds = {},
                                         const SecuritySettings& settings = {});

}  // namespace isac
