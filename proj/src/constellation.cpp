#include "isac/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace isac {

Constellation::Constellation(CVec pts, std::string label)
    : points(std::move(pts)), probabilities(RVec::Constant(points.size(), 1.0 / static_cast<double>(points.size()))),
      name(std::move(label)) {}

Constellation::Constellation(CVec pts, RVec probs, std::string label)
    : points(std::move(pts)), probabilities(std::move(probs)), name(std::move(label)) {
  if (points.size() != probabilities.size())
    throw ContractError("Constellation: points/probabilities length mismatch");
}

cplx Constellation::mean() const {
  cplx m{0.0, 0.0};
  for (Eigen::Index i = 0; i < size(); ++i) m += probabilities(i) * points(i);
  return m;
}

double Constellation::power() const {
  double p = 0.0;
  for (Eigen::Index i = 0; i < size(); ++i) p += probabilities(i) * std::norm(points(i));
  return p;
}

bool Constellation::is_normalized(double tol) const {
  if (size() == 0) return false;
  if ((probabilities.array() < 0.0).any()) return false;
  if (std::abs(probabilities.sum() - 1.0) > tol) return false;
  return std::abs(mean()) <= tol && std::abs(power() - 1.0) <= tol;
}

bool Constellation::is_unit_modulus(double tol) const {
  for (Eigen::Index i = 0; i < size(); ++i)
    if (std::abs(std::abs(points(i)) - 1.0) > tol) return false;
  return true;
}

Constellation normalized(const Constellation& c) {
  Constellation out = c;
  const cplx m = c.mean();
  out.points.array() -= m;
  const double p = out.power();
  if (!(p > 0.0)) throw ContractError("normalized: constellation collapsed to a single point");
  out.points /= std::sqrt(p);
  return out;
}

Constellation make_psk(int order) {
  if (order < 2) throw DomainError("make_psk: order must be >= 2");
  CVec pts(order);
  // QPSK sits on the diagonals; other orders start at phase 0.
  const double offset = order == 4 ? kPi / 4.0 : 0.0;
  for (int m = 0; m < order; ++m) pts(m) = std::polar(1.0, offset + 2.0 * kPi * m / order);
  std::string label = order == 2 ? "BPSK" : order == 4 ? "QPSK" : std::to_string(order) + "PSK";
  return Constellation(pts, label);
}

Constellation make_qam(int order) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
  if (side * side != order || side < 2) throw DomainError("make_qam: order must be a square >= 4");
  CVec pts(order);
  int m = 0;
  for (int i = 0; i < side; ++i)
    for (int q = 0; q < side; ++q) pts(m++) = cplx(2.0 * i - (side - 1), 2.0 * q - (side - 1));
  return normalized(Constellation(pts, std::to_string(order) + "QAM"));
}

Constellation make_apsk(const std::vector<std::tuple<int, double, double>>& rings, std::string label) {
  int total = 0;
  for (const auto& r : rings) total += std::get<0>(r);
  CVec pts(total);
  int m = 0;
  for (const auto& [count, radius, phase] : rings)
    for (int k = 0; k < count; ++k) pts(m++) = std::polar(radius, phase + 2.0 * kPi * k / count);
  return normalized(Constellation(pts, std::move(label)));
}

namespace {

std::filesystem::path data_dir() {
  if (const char* env = std::getenv("ISAC_DATA_DIR")) return env;
#ifdef ISAC_DATA_DIR
  return ISAC_DATA_DIR;
#else
  return "data";
#endif
}

Constellation apsk_from_table(const std::string& name) {
  const auto path = data_dir() / "apsk_rings.json";
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open APSK ring table");
  const auto table = nlohmann::json::parse(in);
  if (!table.contains(name)) throw ValidationError(path.string(), "no entry for " + name);
  std::vector<std::tuple<int, double, double>> rings;
  for (const auto& r : table[name]["rings"]) rings.emplace_back(r[0].get<int>(), r[1].get<double>(), r[2].get<double>());
  return make_apsk(rings, name);
}

}  // namespace

std::vector<std::string> standard_constellation_names() {
  return {"BPSK", "QPSK", "8PSK", "16QAM", "64QAM", "256QAM", "16APSK", "32APSK"};
}

Constellation standard_constellation(const std::string& name) {
  if (name == "BPSK") return make_psk(2);
  if (name == "QPSK") return make_psk(4);
  if (name == "8PSK") return make_psk(8);
  if (name == "16QAM") return make_qam(16);
  if (name == "64QAM") return make_qam(64);
  if (name == "256QAM") return make_qam(256);
  if (name == "16APSK" || name == "32APSK") return apsk_from_table(name);
  throw DomainError("standard_constellation: unknown name '" + name + "'");
}

double kurtosis(const Constellation& c) {
  if (!c.is_normalized(1e-6)) throw ContractError("kurtosis: constellation is not zero-mean unit-power");
  double mu4 = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) mu4 += c.probabilities(i) * std::pow(std::norm(c.points(i)), 2);
  return mu4;
}

double inverse_second_moment(const Constellation& c) {
  if (!c.is_normalized(1e-6))
    throw ContractError("inverse_second_moment: constellation is not zero-mean unit-power");
  double nu = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double e = std::norm(c.points(i));
    if (e == 0.0) throw SingularError("inverse_second_moment: zero-magnitude point makes the reciprocal filter undefined");
    nu += c.probabilities(i) / e;
  }
  return nu;
}

DistancePair closest_pair(const Constellation& c) {
  if (c.size() < 2) throw DomainError("closest_pair: need at least two points");
  DistancePair best{std::numeric_limits<double>::infinity(), 0, 1};
  for (Eigen::Index i = 0; i < c.size(); ++i)
    for (Eigen::Index j = i + 1; j < c.size(); ++j) {
      const double d = std::abs(c.points(i) - c.points(j));
      if (d < best.distance) best = {d, i, j};
    }
  return best;
}

double min_euclidean_distance(const Constellation& c) { return closest_pair(c).distance; }

Eigen::Index detect_nearest(const Constellation& c, cplx z) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double d = std::norm(z - c.points(i));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<Eigen::Index> draw_indices(const Constellation& c, std::size_t n, Rng& rng) {
  std::vector<Eigen::Index> out(n);
  const bool uniform = (c.probabilities.array() == c.probabilities(0)).all();
  std::vector<double> cdf(static_cast<std::size_t>(c.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < c.size(); ++i) cdf[static_cast<std::size_t>(i)] = (acc += c.probabilities(i));
  for (auto& idx : out) {
    if (uniform) {
      idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(c.size())));
    } else {
      const double r = rng.uniform() * acc;
      idx = static_cast<Eigen::Index>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
      idx = std::min<Eigen::Index>(idx, c.size() - 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometric shaping

namespace {

struct ShapeState {
  CVec z;
  double d = 0.0;
};

// Penalized objective (1-rho) mu4 - rho d + kappa/2 sum_{i<j} max(0, d - |z_i - z_j|)^2.
double shaping_objective(const ShapeState& s, double rho, double kappa) {
  const Eigen::Index m = s.z.size();
  double mu4 = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) mu4 += std::pow(std::norm(s.z(i)), 2);
  mu4 /= static_cast<double>(m);
  double pen = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double v = s.d - std::abs(s.z(i) - s.z(j));
      if (v > 0.0) pen += v * v;
    }
  return (1.0 - rho) * mu4 - rho * s.d + 0.5 * kappa * pen;
}

// Real gradient packed as complex numbers (d/dx + j d/dy) plus d/dd.
void shaping_gradient(const ShapeState& s, double rho, double kappa, CVec& gz, double& gd) {
  const Eigen::Index m = s.z.size();
  gz.setZero(m);
  gd = -rho;
  for (Eigen::Index i = 0; i < m; ++i) gz(i) = (1.0 - rho) * 4.0 * std::norm(s.z(i)) * s.z(i) / static_cast<double>(m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const cplx diff = s.z(i) - s.z(j);
      const double dist = std::abs(diff);
      const double v = s.d - dist;
      if (v <= 0.0) continue;
      gd += kappa * v;
      if (dist > 0.0) {
        const cplx dir = diff / dist;
        gz(i) -= kappa * v * dir;
        gz(j) += kappa * v * dir;
      }
    }
}

// Euclidean projection onto {mean zero, unit power}; false if degenerate.
bool project_constellation(CVec& z) {
  z.array() -= z.mean();
  const double p = z.squaredNorm() / static_cast<double>(z.size());
  if (!(p > 1e-24)) return false;
  z /= std::sqrt(p);
  return true;
}

}  // namespace

ShapingResult shape_constellation(int order, double rho, const ShapingOptions& opts) {
  if (order < 2) throw DomainError("shape_constellation: order must be >= 2");
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("shape_constellation: rho must lie in [0, 1]");
  ShapingResult best;
  best.objective = std::numeric_limits<double>::infinity();
  Rng rng(derive_seed(opts.seed, static_cast<std::uint64_t>(order)));
  const double kappas[] = {10.0, 100.0, 1e3, 1e4, 1e5};

  for (int r = 0; r < opts.restarts; ++r) {
    ++best.restarts_run;
    ShapeState s{rng.cgaussian_vec(order), 0.0};
    if (!project_constellation(s.z)) {
      ++best.restarts_degenerate;
      continue;
    }
    s.d = min_euclidean_distance(Constellation(s.z));
    bool degenerate = false;
    CVec gz;
    double gd = 0.0;
    for (double kappa : kappas) {
      double step = 0.05 / (1.0 + kappa * 0.01);
      double f = shaping_objective(s, rho, kappa);
      for (int it = 0; it < opts.iterations_per_stage && !degenerate; ++it) {
        shaping_gradient(s, rho, kappa, gz, gd);
        const double gnorm2 = gz.squaredNorm() + gd * gd;
        if (gnorm2 < 1e-26) break;
        // Armijo backtracking on the projected step.
        bool accepted = false;
        for (int bt = 0; bt < 40; ++bt) {
          ShapeState trial{s.z - step * gz, std::max(0.0, s.d - step * gd)};
          if (!project_constellation(trial.z)) {
            degenerate = true;
            break;
          }
          const double ft = shaping_objective(trial, rho, kappa);
          const double moved = (trial.z - s.z).squaredNorm() + (trial.d - s.d) * (trial.d - s.d);
          if (ft <= f - 1e-4 * moved / step) {
            const bool tiny = f - ft < 1e-15;
            s = std::move(trial);
            f = ft;
            step *= 1.5;
            accepted = !tiny;
            break;
          }
          step *= 0.5;
        }
        if (!accepted) break;
      }
      if (degenerate) break;
    }
    if (degenerate) {
      ++best.restarts_degenerate;
      continue;
    }
    Constellation c(s.z, "shaped");
    const double mu4 = kurtosis(c);
    const double dmin = min_euclidean_distance(c);
    const double obj = (1.0 - rho) * mu4 - rho * dmin;
    if (obj < best.objective) {
      best.objective = obj;
      best.constellation = c;
      best.mu4 = mu4;
      best.d_min = dmin;
    }
  }
  if (best.constellation.size() == 0)
    throw InfeasibleError("shape_constellation: every restart degenerated under projection");
  best.constellation.name = "shaped-" + std::to_string(order);
  return best;
}

void write_constellation_csv(const Constellation& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "re,im,prob\n";
  for (Eigen::Index i = 0; i < c.size(); ++i)
    out << c.points(i).real() << ',' << c.points(i).imag() << ',' << c.probabilities(i) << '\n';
}

Constellation read_constellation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<cplx> pts;
  std::vector<double> probs;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, p;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, p, ','))
      throw ValidationError(path.string() + ":" + std::to_string(row), "expected re,im,prob");
    pts.emplace_back(std::stod(a), std::stod(b));
    probs.push_back(std::stod(p));
  }
  CVec cp(static_cast<Eigen::Index>(pts.size()));
  RVec rp(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    cp(static_cast<Eigen::Index>(i)) = pts[i];
    rp(static_cast<Eigen::Index>(i)) = probs[i];
  }
  return Constellation(cp, rp, path.stem().string());
}

}  // namespace isac
