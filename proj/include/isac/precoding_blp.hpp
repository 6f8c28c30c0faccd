#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "isac/optim.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

struct PrecoderSet {
  CMat w_comm;   // N_t x U
  CMat w_radar;  // N_t x N_t (may have fewer columns)
  double power_budget = 1.0;

  // [W_c | W_r]
  CMat stacked() const;
  static PrecoderSet from_stacked(const CMat& w, Eigen::Index num_users, double power_budget);
  double power() const { return w_comm.squaredNorm() + w_radar.squaredNorm(); }
  bool within_budget(double rel_tol = 1e-6) const { return power() <= power_budget * (1.0 + rel_tol); }
};

struct DesiredBeampattern {
  RVec angles_deg;  // strictly increasing
  RVec gains;       // >= 0
};

// Flat mainlobe of half-width `half_width_deg` around each center, -30 dB
// floor elsewhere, raised-cosine edges `edge_deg` wide, sampled on a grid.
DesiredBeampattern make_desired_beampattern(const std::vector<double>& centers_deg, double half_width_deg,
                                            double grid_step_deg = 1.0, double edge_deg = 2.0,
                                            double floor_db = -30.0);

// R_X = W_c W_c^H + W_r W_r^H.
CMat transmit_covariance(const PrecoderSet& p);

RVec user_sinr(const PrecoderSet& p, const std::vector<CommUser>& users);
double sum_rate(const PrecoderSet& p, const std::vector<CommUser>& users);
// ||H X - S_c||_F^2 with rows of H equal to h_u^H.
double mui_energy(const CMat& x, const CMat& s_comm, const std::vector<CommUser>& users);
double mui_energy(const PrecoderSet& p, const CMat& s_comm, const CMat& s_radar, const std::vector<CommUser>& users);

enum class AlphaMode { Fixed, Optimized };
// (1/M) sum_i |alpha P(theta_i) - a^H R a|^2. With Optimized, alpha is the
// least-squares scale; with Fixed, `alpha` is used as given.
double beampattern_mse(const CMat& r, const ArrayGeometry& tx, const DesiredBeampattern& d,
                       AlphaMode mode = AlphaMode::Optimized, double alpha = 1.0);
double beampattern_mse(const PrecoderSet& p, const ArrayGeometry& tx, const DesiredBeampattern& d,
                       AlphaMode mode = AlphaMode::Optimized, double alpha = 1.0);
// Beampattern MSE of R = W W^H with the least-squares alpha, and its gradient d/dconj(W).
double beampattern_mse_of_precoder(const CMat& w, const ArrayGeometry& tx, const DesiredBeampattern& d,
                                   CMat* grad = nullptr);
// a^H(theta) R a(theta) on a grid.
RVec beampattern(const CMat& r, const ArrayGeometry& tx, const RVec& angles_deg);

// Monostatic angle CRLB (rad^2) for Y = alpha b(theta) a^H(theta) X + Z with
// unknown (theta, Re alpha, Im alpha), L snapshots and covariance R.
// Returns +inf when the Fisher information is singular.
struct CrlbModel {
  ArrayGeometry tx;
  ArrayGeometry rx;
  double angle_deg = 0.0;
  cplx amplitude{1.0, 0.0};
  int snapshots = 64;
  double noise_power = 1.0;
};
double crlb_angle(const CMat& r, const CrlbModel& m);
double crlb_angle(const PrecoderSet& p, const CrlbModel& m);
// CRLB of R = W W^H for a precoder matrix W, with the gradient d/dconj(W).
double crlb_of_precoder(const CMat& w, const CrlbModel& m, CMat* grad = nullptr);
// The 3x3 real Fisher information in (theta, Re alpha, Im alpha).
RMat fisher_information(const CMat& r, const CrlbModel& m);
CrlbModel crlb_model(const Scenario& s, std::size_t target = 0);

// ZF beams from the pseudo-inverse with water-filled powers over the budget.
PrecoderSet zf_waterfilling(const std::vector<CommUser>& users, double power_budget, int num_tx);
// Minimum-power beams reaching SINR `gamma` for every user (W_r = 0), via
// uplink-downlink duality. Throws InfeasibleError if the fixed point diverges.
PrecoderSet min_power_beamforming(const std::vector<CommUser>& users, const RVec& gamma, int num_tx,
                                  int max_iterations = 500);

enum class SensingMetric { Beampattern, Crlb };
std::string to_string(SensingMetric m);

struct TradeoffOptions {
  SensingMetric metric = SensingMetric::Beampattern;
  double mainlobe_half_width_deg = 10.0;
  int max_iterations = 1500;
  int random_starts = 2;
  std::uint64_t seed = 17;
};

struct TradeoffPoint {
  double rho = 0.0;
  PrecoderSet precoders;
  double comm_metric = 0.0;     // sum rate
  double sensing_metric = 0.0;  // beampattern MSE or CRLB
  double objective = 0.0;       // normalized scalarized objective (minimized)
  int iterations = 0;
  bool converged = false;
};

// Everything the normalized objective needs, built once per scenario.
class TradeoffProblem {
 public:
  TradeoffProblem(const Scenario& s, const TradeoffOptions& opts);

  double comm(const CMat& w, CMat* grad) const;     // -sum rate
  double sensing(const CMat& w, CMat* grad) const;  // MSE or CRLB
  // rho * (-R / R*) + (1 - rho) * f_r / f_r*
  double objective(const CMat& w, double rho, CMat* grad) const;
  TradeoffPoint evaluate(const CMat& w, double rho, int iterations, bool converged) const;
  TradeoffPoint solve_from(const CMat& w0, double rho) const;
  CMat zf_start() const;

  const Scenario& scenario() const { return s_; }
  const DesiredBeampattern& desired() const { return desired_; }
  double comm_reference() const { return comm_ref_; }
  double sensing_reference() const { return sens_ref_; }
  const TradeoffOptions& options() const { return opts_; }
  Eigen::Index num_users() const { return u_; }
  Eigen::Index columns() const { return u_ + n_; }

 private:
  friend std::vector<TradeoffPoint> sweep_tradeoff(const Scenario&, const std::vector<double>&,
                                                   const TradeoffOptions&);
  Scenario s_;
  TradeoffOptions opts_;
  Eigen::Index n_ = 0, u_ = 0;
  DesiredBeampattern desired_;
  CMat steering_;  // N_t x M
  CrlbModel crlb_;
  double comm_ref_ = 1.0, sens_ref_ = 1.0;
};

// Solves the scalarized problem for every rho; each point is the best of a
// warm-started upward pass, a downward pass and cold starts.
std::vector<TradeoffPoint> sweep_tradeoff(const Scenario& s, const std::vector<double>& rhos,
                                          const TradeoffOptions& opts = {});
TradeoffPoint solve_tradeoff(const Scenario& s, double rho, const TradeoffOptions& opts = {});

// True when no point is dominated by another (comm higher-better, sensing lower-better).
bool is_pareto_monotone(const std::vector<TradeoffPoint>& pts, double rel_tol = 1e-6);

// CRLB-SINR design: minimize the CRLB subject to SINR >= gamma for every user.
struct CrlbSinrPoint {
  double sinr_db = 0.0;
  bool feasible = false;
  PrecoderSet precoders;
  double crlb = 0.0;
  double min_sinr_db = 0.0;
  int iterations = 0;
};
// ZF communication beams at the minimum power for gamma; the remaining
// power goes to one radar beam toward the target projected onto null(H).
CrlbSinrPoint zf_crlb_baseline(const Scenario& s, double sinr_db);
CrlbSinrPoint joint_crlb_design(const Scenario& s, double sinr_db, int max_outer = 30);

void write_tradeoff_csv(const std::vector<TradeoffPoint>& pts, const std::filesystem::path& path);

}  // namespace isac
