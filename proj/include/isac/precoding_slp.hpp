#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "isac/precoding_blp.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

// Constructive-interference region of one user for the current symbol.
struct CiConstraint {
  CVec user_channel;
  double symbol_phase = 0.0;  // rad
  double snr_target = 1.0;    // linear Gamma
  double noise_power = 1.0;   // sigma_c^2
  int modulation_order = 4;

  double threshold() const { return std::sqrt(snr_target * noise_power); }
};

// Throws DomainError unless M is a power of two >= 2 and the target is positive.
void check_constraint(const CiConstraint& c);

// Received point rotated back by the symbol phase: h^H x e^{-j phi}.
cplx rotated_point(const CVec& x, const CiConstraint& c);
// [Re - sqrt(Gamma sigma^2)] tan(pi/M) - |Im| of the rotated point; BPSK uses
// the half-plane margin Re - sqrt(Gamma sigma^2).
double ci_margin(const CVec& x, const CiConstraint& c);
double ci_margin_point(cplx rotated, int modulation_order, double threshold);

// QPSK decision sector of the rotated point, relative to the intended symbol:
// 0 = not DI (correct sector), 1..3 = DI zone rotated by k * 90 degrees.
int di_region_test(const CVec& x, const CiConstraint& c);
int di_region_of_point(cplx rotated);

enum class SlpObjective { MinPower, RadarBeamError, Crlb };
enum class SlpExtra { None, ConstantModulus, DiOnEve };
std::string to_string(SlpObjective o);
std::string to_string(SlpExtra e);

struct SlpOptions {
  SlpObjective objective = SlpObjective::MinPower;
  SlpExtra extra = SlpExtra::None;
  int modulation_order = 4;
  double power_budget = 0.0;  // 0 means scenario budget
  double eve_margin = 0.5;    // DI apex distance, in units of sqrt(sigma_c^2)
  int max_iterations = 300;
  std::uint64_t seed = 5;     // DI zone choice
  double feasibility_tol = 1e-8;
};

struct SymbolSolve {
  CVec x;
  double objective = 0.0;
  RVec ci_residuals;  // -margin per user; <= tolerance when feasible
  bool feasible = false;
  int iterations = 0;
  std::optional<int> eve_zone;       // requested DI zone
  std::optional<double> eve_margin;  // margin of Eve's point in that zone
};

// Linear CI constraints A xi >= b on xi = [Re x; Im x] for every user.
void ci_polyhedron(const std::vector<CiConstraint>& cs, RMat& a, RVec& b);

// Per-symbol design. `symbols` holds one constellation index per user.
// Throws InfeasibleError carrying the largest violated margin.
SymbolSolve solve_symbol(const Scenario& s, const std::vector<int>& symbols, const SlpOptions& opts,
                         std::uint64_t symbol_index = 0);

struct SlpBlockResult {
  std::vector<SymbolSolve> solves;
  double symbol_error_rate = 0.0;  // AWGN Monte-Carlo at the users' noise power
  double average_beampattern_error = 0.0;
  double average_power = 0.0;
  double inside_ci_fraction = 0.0;  // noiseless
};

SlpBlockResult slp_block_run(const Scenario& s, const std::vector<std::vector<int>>& stream, const SlpOptions& opts,
                             int noise_trials = 20, std::uint64_t noise_seed = 99);

// AWGN symbol error rate of linear precoding x = W s over the same stream,
// with W rescaled to `average_power`.
double blp_symbol_error_rate(const Scenario& s, const PrecoderSet& p, const std::vector<std::vector<int>>& stream,
                             int modulation_order, double average_power, int noise_trials = 20,
                             std::uint64_t noise_seed = 99);

// Minimum-power linear precoder W (N_t x U) whose output W s meets every
// user's CI condition for every symbol vector s in M^U: the block-level
// precoder with the same per-symbol QoS guarantee as SLP.
PrecoderSet blp_ci_min_power(const Scenario& s, int modulation_order);

// All M^U symbol combinations in lexicographic order.
std::vector<std::vector<int>> all_symbol_vectors(int num_users, int modulation_order);
std::vector<std::vector<int>> random_symbol_stream(int num_users, int modulation_order, int length, Rng& rng);

// CSV `symbol_idx,user,re,im,inside_ci` of the noiseless received points.
void write_scatter_csv(const Scenario& s, const SlpBlockResult& r, const std::vector<std::vector<int>>& stream,
                       int modulation_order, const std::filesystem::path& path);

}  // namespace isac
