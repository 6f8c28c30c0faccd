#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "isac/precoding_blp.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

// X = W_c S_c + N with R_N = V V^H; AN doubles as the radar probing signal.
struct AnTransmit {
  CMat w_comm;         // N_t x U
  CMat an_covariance;  // N_t x N_t, PSD
  double power_budget = 1.0;
  ArrayGeometry tx{16, 0.5};  // steering vectors toward Eve

  double power() const { return w_comm.squaredNorm() + an_covariance.trace().real(); }
  CMat covariance() const { return w_comm * w_comm.adjoint() + an_covariance; }
};

struct EveModel {
  double angle_deg = 0.0;
  cplx path_loss{1.0, 0.0};  // beta_E
  double noise_power = 1.0;
  double uncertainty_deg = 0.0;  // Eve lies somewhere in angle +- uncertainty
};

// Eve at the scenario's eavesdropper target (throws DomainError if none).
EveModel eve_model(const Scenario& s, double uncertainty_deg = 0.0);
void check_eve(const EveModel& e);

// Rate at Eve for a given look angle; AN is interference, all data streams are signal.
double eve_rate(const AnTransmit& t, const EveModel& eve, double angle_deg);
double eve_rate(const AnTransmit& t, const EveModel& eve);
// Largest Eve rate over [angle - uncertainty, angle + uncertainty].
double worst_eve_rate(const AnTransmit& t, const EveModel& eve);
// Legitimate rates with AN leaking into every user's interference.
RVec user_rates(const AnTransmit& t, const std::vector<CommUser>& users);
RVec user_sinr(const AnTransmit& t, const std::vector<CommUser>& users);

enum class SecrecyMetric { WorstCase, Sum };
// WorstCase: min_u [R_B,u - R_E]^+; Sum: sum_u [R_B,u - R_E]^+, both with worst-case R_E.
double secrecy_rate(const AnTransmit& t, const std::vector<CommUser>& users, const EveModel& eve,
                    SecrecyMetric metric = SecrecyMetric::WorstCase);

struct SecureOptions {
  SensingMetric sensing = SensingMetric::Beampattern;
  // Absolute sensing tolerance; when unset it is (1 + sensing_slack) times
  // the best sensing metric reachable under the SINR floors.
  std::optional<double> sensing_tolerance;
  double sensing_slack = 0.5;
  bool sensing_constraint = true;
  double mainlobe_half_width_deg = 2.0;  // widened by the Eve uncertainty
  bool artificial_noise = true;
  SecrecyMetric metric = SecrecyMetric::WorstCase;
  int max_outer = 15;
  int inner_iterations = 150;
  bool random_start = false;
  std::uint64_t seed = 23;
};

struct SecureResult {
  AnTransmit transmit;
  double secrecy_rate = 0.0;
  double eve_rate = 0.0;         // worst case over the uncertainty interval
  RVec sinr;                     // linear, per user
  double sensing_metric = 0.0;
  double sensing_tolerance = 0.0;
  int iterations = 0;
  DesiredBeampattern desired;
  // With AN enabled: the AN-free design solved at the same sensing tolerance.
  std::optional<double> plain_secrecy_rate;
};

// Maximizes the secrecy rate subject to SINR >= Gamma_u, the sensing tolerance
// and the power budget. QoS infeasibility and sensing infeasibility raise
// InfeasibleError with messages starting "QoS" and "sensing" respectively.
SecureResult solve_secure(const Scenario& s, const EveModel& eve, const SecureOptions& opts = {});

// Angular width (deg) of the region around `center_deg` where the beampattern
// stays above half of its peak in that region.
double mainlobe_width_deg(const CMat& r, const ArrayGeometry& tx, double center_deg, double step_deg = 0.05);

// Minimum-distance beam w to w_rad with w^H a(theta_u) = symbols[u] for every
// user. Optional Eve angles get w^H a(theta_e) = w_rad^H a(theta_e), so Eve
// sees the same complex gain for every symbol tuple.
CVec dm_design(const CVec& w_rad, const ArrayGeometry& tx, const std::vector<double>& user_angles_deg,
               const std::vector<cplx>& symbols, const std::vector<double>& eve_angles_deg = {});
// One beam per symbol tuple, users' dictionaries enumerated lexicographically.
std::vector<CVec> dm_beam_set(const CVec& w_rad, const ArrayGeometry& tx, const std::vector<double>& user_angles_deg,
                              const std::vector<std::vector<cplx>>& dictionaries,
                              const std::vector<double>& eve_angles_deg = {});

// CSV `angle_deg,gain_db,beam_index` of a^H R_k a for each covariance.
void write_secure_beampattern_csv(const std::vector<CMat>& covariances, const ArrayGeometry& tx,
                                  const RVec& angles_deg, const std::filesystem::path& path);

}  // namespace isac
