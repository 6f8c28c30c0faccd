#include "isac/im_dfrc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace isac {

namespace {

constexpr int kMaxIndexBits = 20;

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

CVec dictionary_entry(const ImDictionary& d, std::size_t i, const CVec& steering) {
  return d.masks[i].cast<cplx>().cwiseProduct(steering);
}

void check_inputs(const CVec& y, const ImDictionary& d, const CVec& steering, cplx alpha) {
  if (d.masks.empty()) throw ContractError("im_detect: empty dictionary");
  if (steering.size() != d.num_antennas() || y.size() != d.num_antennas())
    throw ContractError("im_detect: received vector, steering and masks must have N_t entries");
  if (std::abs(alpha) == 0.0) throw SingularError("im_detect: alpha is zero");
}

}  // namespace

ImDictionary make_im_dictionary(int num_tx, int num_active) {
  if (num_tx < 2 || num_active < 1 || num_active >= num_tx)
    throw DomainError("make_im_dictionary: need 1 <= N_a < N_t");
  const double total = binomial(num_tx, num_active);
  const int bits = std::min(static_cast<int>(std::floor(std::log2(total) + 1e-9)), kMaxIndexBits + 1);
  if (bits > kMaxIndexBits) throw DomainError("make_im_dictionary: more than 2^20 masks");
  const std::size_t count = std::size_t{1} << bits;

  ImDictionary d;
  d.bits_per_index = bits;
  std::vector<int> idx(num_active);
  for (int i = 0; i < num_active; ++i) idx[i] = i;
  while (d.masks.size() < count) {
    RVec m = RVec::Zero(num_tx);
    for (int i : idx) m(i) = 1.0;
    d.masks.push_back(m);
    int k = num_active - 1;
    while (k >= 0 && idx[k] == num_tx - num_active + k) --k;
    if (k < 0) break;
    ++idx[k];
    for (int j = k + 1; j < num_active; ++j) idx[j] = idx[j - 1] + 1;
  }
  return d;
}

void check_dictionary(const ImDictionary& d) {
  if (d.masks.size() < 2) throw ContractError("im dictionary: need at least two masks");
  const Eigen::Index n = d.num_antennas();
  const double weight = d.masks.front().sum();
  std::set<std::vector<double>> seen;
  for (const auto& m : d.masks) {
    if (m.size() != n) throw ContractError("im dictionary: masks differ in length");
    for (double v : m)
      if (v != 0.0 && v != 1.0) throw ContractError("im dictionary: masks must be binary");
    if (m.sum() != weight) throw ContractError("im dictionary: masks differ in active count");
    if (!seen.insert(std::vector<double>(m.data(), m.data() + m.size())).second)
      throw ContractError("im dictionary: duplicate mask");
  }
  if (d.bits_per_index != static_cast<int>(std::floor(std::log2(static_cast<double>(d.masks.size())) + 1e-9)))
    throw ContractError("im dictionary: bits_per_index must be floor(log2 count)");
}

CVec im_transmit(const ImDictionary& d, std::size_t index, cplx phase_symbol, const CVec& steering) {
  if (index >= d.size())
    throw DomainError("im_transmit: index " + std::to_string(index) + " outside dictionary of " +
                      std::to_string(d.size()));
  if (steering.size() != d.num_antennas()) throw ContractError("im_transmit: steering length differs from masks");
  return phase_symbol * dictionary_entry(d, index, steering);
}

ImDetection im_detect(const CVec& y, const ImDictionary& d, const CVec& steering, cplx alpha, ImDetectMode mode,
                      const Constellation* phase) {
  check_inputs(y, d, steering, alpha);
  const CVec z = y / alpha;
  ImDetection out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const CVec a = dictionary_entry(d, i, steering);
    // both scores are "smaller is better"
    const double score =
        mode == ImDetectMode::Literal ? (z - a).squaredNorm() : -std::norm(a.dot(z)) / a.squaredNorm();
    if (score < best) {
      best = score;
      out.index = i;
    }
  }
  const CVec a = dictionary_entry(d, out.index, steering);
  out.phase_estimate = a.dot(z) / a.squaredNorm();
  if (phase) out.symbol_index = detect_nearest(*phase, out.phase_estimate);
  return out;
}

ImDetection im_detect_joint_ml(const CVec& y, const ImDictionary& d, const CVec& steering, cplx alpha,
                               const Constellation& phase) {
  check_inputs(y, d, steering, alpha);
  const CVec z = y / alpha;
  ImDetection out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const CVec a = dictionary_entry(d, i, steering);
    const cplx c = a.dot(z);
    const double e = a.squaredNorm();
    for (Eigen::Index m = 0; m < phase.size(); ++m) {
      const cplx s = phase.points(m);
      // ||z - s a||^2 without the common ||z||^2
      const double score = std::norm(s) * e - 2.0 * (std::conj(s) * c).real();
      if (score < best) {
        best = score;
        out.index = i;
        out.symbol_index = m;
      }
    }
  }
  const CVec a = dictionary_entry(d, out.index, steering);
  out.phase_estimate = a.dot(z) / a.squaredNorm();
  return out;
}

std::vector<ImBerPoint> im_ber_curve(const ImDictionary& d, const CVec& steering, const Constellation& phase,
                                     const std::vector<double>& snr_db, int trials, std::uint64_t seed) {
  check_dictionary(d);
  if (trials < 1) throw DomainError("im_ber_curve: trials must be positive");
  const cplx alpha{0.8, 0.6};
  std::vector<ImBerPoint> out;
  for (std::size_t p = 0; p < snr_db.size(); ++p) {
    Rng rng(derive_seed(seed, p));
    const double noise = std::norm(alpha) / db2lin(snr_db[p]);
    int idx_err = 0, sym_err = 0, ml_idx_err = 0, ml_sym_err = 0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t i = rng.below(d.size());
      const Eigen::Index m = static_cast<Eigen::Index>(rng.below(phase.size()));
      const CVec y = alpha * im_transmit(d, i, phase.points(m), steering) + rng.cgaussian_vec(steering.size(), noise);
      const auto two = im_detect(y, d, steering, alpha, ImDetectMode::PhaseAgnostic, &phase);
      const auto ml = im_detect_joint_ml(y, d, steering, alpha, phase);
      idx_err += two.index != i;
      sym_err += two.index != i || two.symbol_index != m;
      ml_idx_err += ml.index != i;
      ml_sym_err += ml.index != i || ml.symbol_index != m;
    }
    const double n = trials;
    out.push_back({snr_db[p], idx_err / n, sym_err / n, ml_idx_err / n, ml_sym_err / n});
  }
  return out;
}

std::optional<double> snr_at_index_error_rate(const std::vector<ImBerPoint>& curve, double target, bool joint_ml) {
  auto rate = [joint_ml](const ImBerPoint& p) { return joint_ml ? p.ml_index_error_rate : p.index_error_rate; };
  for (std::size_t k = 1; k < curve.size(); ++k) {
    const double r0 = rate(curve[k - 1]), r1 = rate(curve[k]);
    if (r0 >= target && r1 <= target) {
      if (r1 <= 0.0 || r0 == r1) return curve[k].snr_db;
      const double t = (std::log(r0) - std::log(target)) / (std::log(r0) - std::log(r1));
      return curve[k - 1].snr_db + t * (curve[k].snr_db - curve[k - 1].snr_db);
    }
  }
  return std::nullopt;
}

void write_im_ber_csv(const std::vector<ImBerPoint>& curve, const std::filesystem::path& path, bool joint_ml) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "snr_db,index_error_rate,symbol_error_rate\n";
  for (const auto& p : curve)
    out << p.snr_db << ',' << (joint_ml ? p.ml_index_error_rate : p.index_error_rate) << ','
        << (joint_ml ? p.ml_symbol_error_rate : p.symbol_error_rate) << '\n';
}

}  // namespace isac
