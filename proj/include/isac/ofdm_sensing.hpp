#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "isac/constellation.hpp"
#include "isac/scenario.hpp"
#include "isac/types.hpp"

namespace isac {

// One OFDM symbol in the frequency domain. The transmitted value on
// subcarrier n is sqrt(powers[n]) * symbols[n].
struct OfdmFrame {
  CVec symbols;
  RVec powers;
  std::string constellation_id;

  Eigen::Index size() const { return symbols.size(); }
  CVec transmitted() const;
};

// Draws N_s i.i.d. symbols; flat power allocation unless `powers` is given
// (it is rescaled to unit mean).
OfdmFrame make_frame(const Constellation& c, int num_subcarriers, Rng& rng, const RVec& powers = {});

struct SensingSnapshot {
  CVec received;
  std::vector<Target> truth;
  double noise_power = 0.0;
};

enum class ReceiverKind { MF, RF, LMMSE };
std::string to_string(ReceiverKind k);

struct RangeProfile {
  CVec bins;
  ReceiverKind receiver_kind = ReceiverKind::MF;
};

// Delay response of a target on bin d: h_n = exp(-j 2 pi n d / N).
CVec delay_response(int num_subcarriers, int delay_bin);

// y = sum_k alpha_k h(tau_k) .* x + z. Noise is drawn from `seed`.
SensingSnapshot synthesize_echo(const OfdmFrame& frame, const std::vector<Target>& targets, double noise_power,
                                std::uint64_t seed);

// profile[m] = sum_n w_n y_n exp(+j 2 pi n m / N) (no 1/N), with per-subcarrier
// weights w_n: conj(x_n) for MF, 1/x_n for RF.
RangeProfile matched_filter(const SensingSnapshot& snap, const OfdmFrame& frame);
RangeProfile reciprocal_filter(const SensingSnapshot& snap, const OfdmFrame& frame);
// w_n = conj(x_n) / (|x_n|^2 + noise_power / prior_signal_power).
RangeProfile lmmse_filter(const SensingSnapshot& snap, const OfdmFrame& frame, double prior_signal_power);

// Any receiver applied to a raw received vector (used for linear decompositions).
CVec apply_receiver(ReceiverKind kind, const CVec& received, const OfdmFrame& frame, double noise_power = 0.0,
                    double prior_signal_power = 0.0);

// N |alpha_k|^2 / ((mu4 - 1) sum_{j != k} |alpha_j|^2 + sigma^2), per target.
std::vector<double> predict_mf_sinr(const Constellation& c, const std::vector<Target>& targets, double noise_power,
                                    int num_subcarriers);
// N |alpha_k|^2 / (nu_{-2} sigma^2), per target.
std::vector<double> predict_rf_snr(const Constellation& c, const std::vector<Target>& targets, double noise_power,
                                   int num_subcarriers);

// Monte-Carlo output SINR per target. The profile is split by linearity into
// target k's own response (read at its bin) and the remainder; the remainder's
// power is averaged over every bin not occupied by another target.
struct ReceiverStats {
  std::vector<double> signal_power;
  std::vector<double> interference_noise_power;
  std::vector<double> sinr;
};
ReceiverStats measure_receiver_sinr(ReceiverKind kind, const Constellation& c, const std::vector<Target>& targets,
                                    double noise_power, int num_subcarriers, int frames, std::uint64_t seed,
                                    double prior_signal_power = 0.0);

// Time-averaged profile power over `frames` random snapshots, then
// min(target peak) / max(bin outside the targets), in dB.
double dynamic_range_db(ReceiverKind kind, const Constellation& c, const std::vector<Target>& targets,
                        double noise_power, int num_subcarriers, int frames, std::uint64_t seed,
                        double prior_signal_power = 0.0);

// Standard OFDM modulator oversampled by kappa: X = sqrt(Q) * IDFT_Q(zero-padded s).
CVec ofdm_modulate(const CVec& symbols, int kappa = 1);
// X_k = Q^{-1/2} sum_n s_n exp(j 2 pi n k alpha / Q), Q = kappa N.
CVec generate_sefdm(const CVec& symbols, double alpha, int kappa = 1);
CMat sefdm_matrix(int num_subcarriers, double alpha, int kappa);
// Plain OFDM FFT receiver, ignoring the compression.
CVec demodulate_ofdm(const CVec& samples, int num_subcarriers);
// Least-squares inversion of the SEFDM modulation matrix.
CVec demodulate_sefdm(const CVec& samples, int num_subcarriers, double alpha, int kappa);

// CSV `bin,re,im,abs_db`.
void write_profile_csv(const RangeProfile& p, const std::filesystem::path& path);

}  // namespace isac
