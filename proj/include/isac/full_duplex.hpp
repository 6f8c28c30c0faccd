#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "isac/optim.hpp"
#include "isac/precoding_blp.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

struct SiChannel {
  CMat matrix;           // N_r x N_t
  double gain_db = 0.0;  // nominal per-entry SI power
};

// i.i.d. CN entries of power gain_db. rank > 0 draws a rank-limited channel
// (product of N_r x rank and rank x N_t factors) with the same entry power.
SiChannel make_si_channel(int num_rx, int num_tx, double gain_db, Rng& rng, int rank = 0);
// Physical isolation as a scalar gain reduction.
SiChannel isolate(const SiChannel& si, double isolation_db);

enum class FdMode { DownlinkMonostatic, UplinkBistatic, Hybrid };
std::string to_string(FdMode m);
FdMode fd_mode_from_string(const std::string& s);

struct RadarChannels {
  CMat downlink;  // H_r (DL) or H_rd (hybrid), N_r x N_t
  CMat uplink;    // H_r (UL) or H_ru (hybrid), N_r x U_up
};

// DL: (H_r + H_si) X; UL: H_r X_cu + H_si X; hybrid: H_ru X_cu + (H_rd + H_si) X.
// An empty noise matrix means noiseless. Throws ContractError on size mismatch.
CMat fd_receive(FdMode mode, const RadarChannels& radar, const SiChannel& si, const CMat& x_bs, const CMat& x_users,
                const CMat& noise = {});

// y - H~ X~ with H~ = H_si + E, ||E||_F = 10^(error_db/20) ||H_si||_F and E
// drawn i.i.d. from `rng`. error_db = -inf cancels with the true channel.
CMat td_cancel(const CMat& y, const SiChannel& si, const CMat& x_estimate, double error_db, Rng& rng);
// X (1 + level n) with n i.i.d. CN(0, 1): a crude transmitter-impairment model.
CMat distort(const CMat& x, double level, Rng& rng);
// 10 log10 ||y_hat - y_clean||^2 / ||H_si X||^2.
double residual_si_db(const CMat& y_hat, const CMat& y_clean, const SiChannel& si, const CMat& x);

// Orthogonal projector onto null(H_si): I - H_si^H (H_si^+)^H. When H_si has
// full column rank there are no spatial degrees of freedom left; the zero
// projector is returned and `warning` (if given) is filled.
CMat null_projector(const SiChannel& si, std::string* warning = nullptr);
int numerical_rank(const CMat& m, double rel_tol = 1e-10);

// Beampattern MSE of W_tx R_X W_tx^H with the least-squares alpha.
double fd_beampattern_mse(const PrecoderSet& p, const SiChannel& si, const ArrayGeometry& tx,
                          const DesiredBeampattern& d);

// Beampattern matching over the transmitted precoder W_tx W, ||W_tx W||_F^2 = P.
// The returned set holds the effective (projected) precoder in w_radar.
struct FdDesignOptions {
  int max_iterations = 800;
  std::uint64_t seed = 41;
};
PrecoderSet fd_beampattern_design(const SiChannel& si, const ArrayGeometry& tx, const DesiredBeampattern& d,
                                  double power, const FdDesignOptions& opts = {});

struct SiBudgetStage {
  std::string stage;
  double suppression_db = 0.0;
  double cumulative_db = 0.0;
};

struct SiBudgetOptions {
  double isolation_db = 40.0;
  double td_error_db = -30.0;
  double distortion = 0.0;  // multiplicative transmitter noise level seen by td_cancel
  int samples = 256;
  int trials = 100;
  std::uint64_t seed = 53;
};

// Isolation, spatial null and time-domain cancellation, each measured on its
// own input (the null leaves nothing for the subtraction to act on). The null
// stage is capped at 300 dB and reports 0 dB when no degrees of freedom remain.
std::vector<SiBudgetStage> si_budget(const SiChannel& si, const SiBudgetOptions& opts = {});
void write_si_budget_csv(const std::vector<SiBudgetStage>& stages, const std::filesystem::path& path);

}  // namespace isac
