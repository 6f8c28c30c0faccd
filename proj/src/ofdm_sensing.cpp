#include "isac/ofdm_sensing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <unsupported/Eigen/FFT>

namespace isac {

namespace {

// profile[m] = sum_n v_n exp(+j 2 pi n m / N)
CVec unscaled_idft(const CVec& v) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  std::vector<cplx> in(v.data(), v.data() + v.size());
  std::vector<cplx> out;
  fft.inv(out, in);
  return Eigen::Map<CVec>(out.data(), static_cast<Eigen::Index>(out.size()));
}

void check_lengths(const CVec& received, const OfdmFrame& frame) {
  if (received.size() != frame.size())
    throw ContractError("received length " + std::to_string(received.size()) + " != frame length " +
                        std::to_string(frame.size()));
}

}  // namespace

CVec OfdmFrame::transmitted() const {
  if (powers.size() == 0) return symbols;
  return symbols.cwiseProduct(powers.cwiseSqrt().cast<cplx>());
}

OfdmFrame make_frame(const Constellation& c, int num_subcarriers, Rng& rng, const RVec& powers) {
  if (num_subcarriers < 1) throw DomainError("make_frame: need at least one subcarrier");
  OfdmFrame f;
  f.constellation_id = c.name;
  f.symbols.resize(num_subcarriers);
  const auto idx = draw_indices(c, static_cast<std::size_t>(num_subcarriers), rng);
  for (int n = 0; n < num_subcarriers; ++n) f.symbols(n) = c.points(idx[static_cast<std::size_t>(n)]);
  if (powers.size() == 0) {
    f.powers = RVec::Ones(num_subcarriers);
  } else {
    if (powers.size() != num_subcarriers) throw ContractError("make_frame: power vector length mismatch");
    if ((powers.array() < 0.0).any()) throw DomainError("make_frame: negative subcarrier power");
    const double mean = powers.mean();
    if (!(mean > 0.0)) throw DomainError("make_frame: all-zero power allocation");
    f.powers = powers / mean;
  }
  return f;
}

std::string to_string(ReceiverKind k) {
  switch (k) {
    case ReceiverKind::MF: return "MF";
    case ReceiverKind::RF: return "RF";
    case ReceiverKind::LMMSE: return "LMMSE";
  }
  return "?";
}

CVec delay_response(int num_subcarriers, int delay_bin) {
  CVec h(num_subcarriers);
  for (int n = 0; n < num_subcarriers; ++n) {
    // reduce the index first so large n*d products stay exact
    const long long r = (static_cast<long long>(n) * delay_bin) % num_subcarriers;
    h(n) = std::polar(1.0, -2.0 * kPi * static_cast<double>(r) / num_subcarriers);
  }
  return h;
}

SensingSnapshot synthesize_echo(const OfdmFrame& frame, const std::vector<Target>& targets, double noise_power,
                                std::uint64_t seed) {
  const int n = static_cast<int>(frame.size());
  if (!(noise_power >= 0.0)) throw DomainError("synthesize_echo: negative noise power");
  for (std::size_t k = 0; k < targets.size(); ++k)
    if (targets[k].delay_bin < 0 || targets[k].delay_bin >= n)
      throw DomainError("synthesize_echo: target " + std::to_string(k) + " delay bin " +
                        std::to_string(targets[k].delay_bin) + " outside [0, " + std::to_string(n) + ")");
  const CVec x = frame.transmitted();
  SensingSnapshot s;
  s.truth = targets;
  s.noise_power = noise_power;
  s.received = CVec::Zero(n);
  for (const auto& t : targets) s.received += t.amplitude * delay_response(n, t.delay_bin).cwiseProduct(x);
  if (noise_power > 0.0) {
    Rng rng(seed);
    s.received += rng.cgaussian_vec(n, noise_power);
  }
  return s;
}

CVec apply_receiver(ReceiverKind kind, const CVec& received, const OfdmFrame& frame, double noise_power,
                    double prior_signal_power) {
  check_lengths(received, frame);
  const CVec x = frame.transmitted();
  CVec w(x.size());
  switch (kind) {
    case ReceiverKind::MF:
      w = x.conjugate();
      break;
    case ReceiverKind::RF:
      for (Eigen::Index n = 0; n < x.size(); ++n) {
        if (std::abs(x(n)) == 0.0)
          throw SingularError("reciprocal_filter: zero transmitted symbol on subcarrier " + std::to_string(n));
        w(n) = 1.0 / x(n);
      }
      break;
    case ReceiverKind::LMMSE: {
      if (!(prior_signal_power >= 0.0)) throw DomainError("lmmse_filter: prior signal power must be >= 0");
      if (std::isinf(prior_signal_power)) return apply_receiver(ReceiverKind::RF, received, frame);
      // prior * conj(x) / (prior |x|^2 + sigma^2) is the same weight without dividing by the prior
      for (Eigen::Index n = 0; n < x.size(); ++n) {
        const double den = prior_signal_power * std::norm(x(n)) + noise_power;
        if (den == 0.0) throw SingularError("lmmse_filter: zero weight denominator on subcarrier " + std::to_string(n));
        w(n) = prior_signal_power * std::conj(x(n)) / den;
      }
      break;
    }
  }
  return unscaled_idft(w.cwiseProduct(received));
}

RangeProfile matched_filter(const SensingSnapshot& snap, const OfdmFrame& frame) {
  return {apply_receiver(ReceiverKind::MF, snap.received, frame), ReceiverKind::MF};
}

RangeProfile reciprocal_filter(const SensingSnapshot& snap, const OfdmFrame& frame) {
  return {apply_receiver(ReceiverKind::RF, snap.received, frame), ReceiverKind::RF};
}

RangeProfile lmmse_filter(const SensingSnapshot& snap, const OfdmFrame& frame, double prior_signal_power) {
  return {apply_receiver(ReceiverKind::LMMSE, snap.received, frame, snap.noise_power, prior_signal_power),
          ReceiverKind::LMMSE};
}

std::vector<double> predict_mf_sinr(const Constellation& c, const std::vector<Target>& targets, double noise_power,
                                    int num_subcarriers) {
  if (targets.empty()) throw DomainError("predict_mf_sinr: need at least one target");
  const double mu4 = kurtosis(c);
  double total = 0.0;
  for (const auto& t : targets) total += std::norm(t.amplitude);
  std::vector<double> out;
  for (const auto& t : targets) {
    const double others = total - std::norm(t.amplitude);
    out.push_back(num_subcarriers * std::norm(t.amplitude) / ((mu4 - 1.0) * others + noise_power));
  }
  return out;
}

std::vector<double> predict_rf_snr(const Constellation& c, const std::vector<Target>& targets, double noise_power,
                                   int num_subcarriers) {
  if (targets.empty()) throw DomainError("predict_rf_snr: need at least one target");
  const double nu = inverse_second_moment(c);
  std::vector<double> out;
  for (const auto& t : targets) out.push_back(num_subcarriers * std::norm(t.amplitude) / (nu * noise_power));
  return out;
}

ReceiverStats measure_receiver_sinr(ReceiverKind kind, const Constellation& c, const std::vector<Target>& targets,
                                    double noise_power, int num_subcarriers, int frames, std::uint64_t seed,
                                    double prior_signal_power) {
  if (frames < 1) throw DomainError("measure_receiver_sinr: frames must be >= 1");
  const std::size_t k_count = targets.size();
  ReceiverStats st;
  st.signal_power.assign(k_count, 0.0);
  st.interference_noise_power.assign(k_count, 0.0);
  for (int f = 0; f < frames; ++f) {
    Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(f)));
    const OfdmFrame frame = make_frame(c, num_subcarriers, rng);
    const auto snap = synthesize_echo(frame, targets, noise_power, derive_seed(seed, 2 * static_cast<std::uint64_t>(f) + 1));
    const CVec total = apply_receiver(kind, snap.received, frame, noise_power, prior_signal_power);
    const CVec x = frame.transmitted();
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& t = targets[k];
      const CVec own_rx = t.amplitude * delay_response(num_subcarriers, t.delay_bin).cwiseProduct(x);
      const CVec own = apply_receiver(kind, own_rx, frame, noise_power, prior_signal_power);
      st.signal_power[k] += std::norm(own(t.delay_bin));
      const CVec rest = total - own;
      std::set<int> skip;
      for (std::size_t j = 0; j < k_count; ++j)
        if (j != k) skip.insert(targets[j].delay_bin);
      double acc = 0.0;
      int count = 0;
      for (int m = 0; m < num_subcarriers; ++m) {
        if (skip.count(m)) continue;
        acc += std::norm(rest(m));
        ++count;
      }
      st.interference_noise_power[k] += acc / std::max(count, 1);
    }
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    st.signal_power[k] /= frames;
    st.interference_noise_power[k] /= frames;
    st.sinr.push_back(st.signal_power[k] / st.interference_noise_power[k]);
  }
  return st;
}

double dynamic_range_db(ReceiverKind kind, const Constellation& c, const std::vector<Target>& targets,
                        double noise_power, int num_subcarriers, int frames, std::uint64_t seed,
                        double prior_signal_power) {
  if (targets.empty()) throw DomainError("dynamic_range_db: need at least one target");
  RVec power = RVec::Zero(num_subcarriers);
  for (int f = 0; f < frames; ++f) {
    Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(f)));
    const OfdmFrame frame = make_frame(c, num_subcarriers, rng);
    const auto snap = synthesize_echo(frame, targets, noise_power, derive_seed(seed, 2 * static_cast<std::uint64_t>(f) + 1));
    power += apply_receiver(kind, snap.received, frame, noise_power, prior_signal_power).cwiseAbs2();
  }
  std::set<int> bins;
  for (const auto& t : targets) bins.insert(t.delay_bin);
  double peak = std::numeric_limits<double>::infinity();
  for (int b : bins) peak = std::min(peak, power(b));
  double artifact = 0.0;
  for (int m = 0; m < num_subcarriers; ++m)
    if (!bins.count(m)) artifact = std::max(artifact, power(m));
  return lin2db(peak / artifact);
}

CVec ofdm_modulate(const CVec& symbols, int kappa) {
  if (kappa < 1) throw DomainError("ofdm_modulate: kappa must be >= 1");
  const Eigen::Index q = symbols.size() * kappa;
  CVec padded = CVec::Zero(q);
  padded.head(symbols.size()) = symbols;
  return unscaled_idft(padded) / std::sqrt(static_cast<double>(q));
}

CMat sefdm_matrix(int num_subcarriers, double alpha, int kappa) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("sefdm: alpha must be in (0, 1]");
  if (kappa < 1) throw DomainError("sefdm: kappa must be >= 1");
  const int q = kappa * num_subcarriers;
  CMat f(q, num_subcarriers);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q));
  for (int n = 0; n < num_subcarriers; ++n)
    for (int k = 0; k < q; ++k) {
      // alpha = 1 keeps the exact integer-periodic phase of the DFT
      const double ph = alpha == 1.0 ? 2.0 * kPi * static_cast<double>((static_cast<long long>(n) * k) % q) / q
                                     : 2.0 * kPi * n * k * alpha / q;
      f(k, n) = scale * std::polar(1.0, ph);
    }
  return f;
}

CVec generate_sefdm(const CVec& symbols, double alpha, int kappa) {
  return sefdm_matrix(static_cast<int>(symbols.size()), alpha, kappa) * symbols;
}

CVec demodulate_ofdm(const CVec& samples, int num_subcarriers) {
  const CMat f = sefdm_matrix(num_subcarriers, 1.0, static_cast<int>(samples.size() / num_subcarriers));
  return f.adjoint() * samples;
}

CVec demodulate_sefdm(const CVec& samples, int num_subcarriers, double alpha, int kappa) {
  const CMat f = sefdm_matrix(num_subcarriers, alpha, kappa);
  if (samples.size() != f.rows()) throw ContractError("demodulate_sefdm: sample length mismatch");
  return f.colPivHouseholderQr().solve(samples);
}

void write_profile_csv(const RangeProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "bin,re,im,abs_db\n";
  for (Eigen::Index m = 0; m < p.bins.size(); ++m) {
    const double mag = std::abs(p.bins(m));
    out << m << ',' << p.bins(m).real() << ',' << p.bins(m).imag() << ','
        << (mag > 0.0 ? 20.0 * std::log10(mag) : -400.0) << '\n';
  }
}

}  // namespace isac
