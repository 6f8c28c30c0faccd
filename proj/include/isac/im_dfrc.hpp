#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "isac/constellation.hpp"
#include "isac/types.hpp"

namespace isac {

// Antenna-selection dictionary: each mask has N_a ones over N_t antennas.
struct ImDictionary {
  std::vector<RVec> masks;
  int bits_per_index = 0;

  std::size_t size() const { return masks.size(); }
  Eigen::Index num_antennas() const { return masks.empty() ? 0 : masks.front().size(); }
};

// Lexicographically first C(N_t, N_a) masks, truncated to a power of two.
ImDictionary make_im_dictionary(int num_tx, int num_active);
// ContractError unless masks are binary, distinct, equally sized with equal weight and count >= 2.
void check_dictionary(const ImDictionary& d);

// phase_symbol * Phi_i a(theta).
CVec im_transmit(const ImDictionary& d, std::size_t index, cplx phase_symbol, const CVec& steering);

enum class ImDetectMode {
  Literal,        // argmin_i ||y / alpha - abar_i||, for pulses without phase modulation
  PhaseAgnostic,  // argmin_i min_{s in C} ||y / alpha - s abar_i||, i.e. argmax_i |abar_i^H y| / ||abar_i||
};

struct ImDetection {
  std::size_t index = 0;
  cplx phase_estimate{1.0, 0.0};  // least squares given the index
  Eigen::Index symbol_index = -1;  // nearest phase symbol, -1 without a constellation
};

// Two-stage detector: exhaustive index scan, then the phase symbol by least
// squares on the chosen entry (and nearest-symbol decision when `phase` is given).
ImDetection im_detect(const CVec& y, const ImDictionary& d, const CVec& steering, cplx alpha,
                      ImDetectMode mode = ImDetectMode::PhaseAgnostic, const Constellation* phase = nullptr);
// Joint ML over (index, symbol): argmin ||y / alpha - s abar_i||.
ImDetection im_detect_joint_ml(const CVec& y, const ImDictionary& d, const CVec& steering, cplx alpha,
                               const Constellation& phase);

struct ImBerPoint {
  double snr_db = 0.0;
  double index_error_rate = 0.0;
  double symbol_error_rate = 0.0;  // index or phase symbol wrong
  double ml_index_error_rate = 0.0;
  double ml_symbol_error_rate = 0.0;
};

// y = alpha s abar_i + n with n ~ CN(0, |alpha|^2 / snr I). Both detectors
// see the same draws.
std::vector<ImBerPoint> im_ber_curve(const ImDictionary& d, const CVec& steering, const Constellation& phase,
                                     const std::vector<double>& snr_db, int trials, std::uint64_t seed = 61);
// SNR (dB) where the index error rate crosses `target`, log-linear
// interpolation; nullopt if the curve never crosses it.
std::optional<double> snr_at_index_error_rate(const std::vector<ImBerPoint>& curve, double target, bool joint_ml);

// CSV `snr_db,index_error_rate,symbol_error_rate`.
void write_im_ber_csv(const std::vector<ImBerPoint>& curve, const std::filesystem::path& path, bool joint_ml = false);

}  // namespace isac
