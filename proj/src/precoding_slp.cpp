#include "isac/precoding_slp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "isac/constellation.hpp"

namespace isac {

namespace {

RVec to_real(const CVec& x) {
  RVec xi(2 * x.size());
  xi << x.real(), x.imag();
  return xi;
}

CVec to_complex(const RVec& xi) {
  const Eigen::Index n = xi.size() / 2;
  CVec x(n);
  for (Eigen::Index i = 0; i < n; ++i) x(i) = cplx(xi(i), xi(n + i));
  return x;
}

double psk_phase(int order, int index) { return std::arg(make_psk(order).points(index)); }

std::vector<CiConstraint> user_constraints(const Scenario& s, const std::vector<int>& symbols, int order) {
  if (symbols.size() != s.users.size())
    throw ContractError("solve_symbol: " + std::to_string(symbols.size()) + " symbols for " +
                        std::to_string(s.users.size()) + " users");
  std::vector<CiConstraint> cs;
  for (std::size_t u = 0; u < s.users.size(); ++u) {
    if (symbols[u] < 0 || symbols[u] >= order) throw DomainError("solve_symbol: symbol index out of range");
    CiConstraint c;
    c.user_channel = s.users[u].channel;
    c.symbol_phase = psk_phase(order, symbols[u]);
    c.snr_target = s.users[u].sinr_target();
    c.noise_power = s.users[u].noise_power;
    c.modulation_order = order;
    check_constraint(c);
    cs.push_back(c);
  }
  return cs;
}

// Projection onto {A xi >= b} intersected with the power ball. With a
// multiplier lambda on the ball, the minimizer is the polyhedral projection
// of z / (1 + lambda), so bisect on t = 1 / (1 + lambda) for the norm.
RVec project_feasible(const RMat& a, const RVec& b, double power, const RVec& z) {
  RVec x;
  if (!project_polyhedron(a, b, z, x)) throw InfeasibleError("slp: constraint polyhedron is empty");
  if (x.squaredNorm() <= power) return x;
  RVec lo_x;
  if (!project_polyhedron(a, b, RVec::Zero(z.size()), lo_x) || lo_x.squaredNorm() > power * (1.0 + 1e-12))
    throw InfeasibleError("slp: CI constraints need more than the power budget");
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60 && hi - lo > 1e-15; ++it) {
    const double t = 0.5 * (lo + hi);
    RVec y;
    if (!project_polyhedron(a, b, t * z, y)) break;
    if (y.squaredNorm() <= power) {
      lo = t;
      lo_x = y;
    } else {
      hi = t;
    }
  }
  return lo_x;
}

}  // namespace

void check_constraint(const CiConstraint& c) {
  const int m = c.modulation_order;
  if (m < 2 || (m & (m - 1)) != 0) throw DomainError("CI constraint: modulation order must be a power of two >= 2");
  if (!(c.snr_target > 0.0)) throw DomainError("CI constraint: SNR target must be > 0");
  if (!(c.noise_power > 0.0)) throw DomainError("CI constraint: noise power must be > 0");
}

cplx rotated_point(const CVec& x, const CiConstraint& c) {
  return c.user_channel.dot(x) * std::polar(1.0, -c.symbol_phase);
}

double ci_margin_point(cplx r, int modulation_order, double threshold) {
  if (modulation_order == 2) return r.real() - threshold;
  return (r.real() - threshold) * std::tan(kPi / modulation_order) - std::abs(r.imag());
}

double ci_margin(const CVec& x, const CiConstraint& c) {
  return ci_margin_point(rotated_point(x, c), c.modulation_order, c.threshold());
}

int di_region_of_point(cplx r) {
  double deg = rad2deg(std::arg(r));  // (-180, 180]
  if (deg <= -45.0) deg += 360.0;     // now (-45, 315]
  if (deg <= 45.0) return 0;
  if (deg <= 135.0) return 1;
  if (deg <= 225.0) return 2;
  return 3;
}

int di_region_test(const CVec& x, const CiConstraint& c) {
  if (c.modulation_order != 4) throw DomainError("di_region_test: DI zones are defined for QPSK only");
  return di_region_of_point(rotated_point(x, c));
}

std::string to_string(SlpObjective o) {
  switch (o) {
    case SlpObjective::MinPower: return "min_power";
    case SlpObjective::RadarBeamError: return "radar_beam_error";
    case SlpObjective::Crlb: return "crlb";
  }
  return "?";
}

std::string to_string(SlpExtra e) {
  switch (e) {
    case SlpExtra::None: return "none";
    case SlpExtra::ConstantModulus: return "constant_modulus";
    case SlpExtra::DiOnEve: return "di_on_eve";
  }
  return "?";
}

void ci_polyhedron(const std::vector<CiConstraint>& cs, RMat& a, RVec& b) {
  std::vector<RVec> rows;
  std::vector<double> rhs;
  for (const auto& c : cs) {
    check_constraint(c);
    // Re(g^H x) = r_re . xi and Im(g^H x) = r_im . xi with g = h e^{j phi}
    const CVec g = c.user_channel * std::polar(1.0, c.symbol_phase);
    RVec r_re(2 * g.size()), r_im(2 * g.size());
    r_re << g.real(), g.imag();
    r_im << -g.imag(), g.real();
    const double t = c.threshold();
    if (c.modulation_order == 2) {
      rows.push_back(r_re);
      rhs.push_back(t);
    } else {
      const double tn = std::tan(kPi / c.modulation_order);
      rows.push_back(tn * r_re - r_im);
      rhs.push_back(tn * t);
      rows.push_back(tn * r_re + r_im);
      rhs.push_back(tn * t);
    }
  }
  const Eigen::Index n = cs.empty() ? 0 : 2 * cs[0].user_channel.size();
  a.resize(static_cast<Eigen::Index>(rows.size()), n);
  b.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    b(static_cast<Eigen::Index>(i)) = rhs[i];
  }
}

SymbolSolve solve_symbol(const Scenario& s, const std::vector<int>& symbols, const SlpOptions& opts,
                         std::uint64_t symbol_index) {
  const int order = opts.modulation_order;
  const Eigen::Index n = s.num_tx();
  const double power = opts.power_budget > 0.0 ? opts.power_budget : s.power_budget;
  const auto users = user_constraints(s, symbols, order);
  std::vector<CiConstraint> all = users;

  SymbolSolve out;
  if (opts.extra == SlpExtra::DiOnEve) {
    if (order != 4) throw DomainError("solve_symbol: DI constraints are implemented for QPSK only");
    const auto eve = s.eavesdropper_index();
    if (!eve) throw DomainError("solve_symbol: di_on_eve needs an eavesdropper target");
    if (users.empty()) throw DomainError("solve_symbol: di_on_eve needs at least one user");
    Rng rng(derive_seed(opts.seed, symbol_index));
    const int zone = 1 + static_cast<int>(rng.below(3));
    CiConstraint e;
    e.user_channel = steering_vector(s.tx_array, s.targets[*eve].angle_deg);
    e.symbol_phase = users[0].symbol_phase + zone * kPi / 2.0;
    e.noise_power = users[0].noise_power;
    e.snr_target = opts.eve_margin * opts.eve_margin;
    e.modulation_order = 4;
    all.push_back(e);
    out.eve_zone = zone;
  }

  RMat a;
  RVec b;
  ci_polyhedron(all, a, b);
  auto max_violation = [&](const RVec& xi) { return a.rows() ? std::max(0.0, (b - a * xi).maxCoeff()) : 0.0; };

  // radar reference: a beam toward the first non-eavesdropper target at full power
  CVec x_ref = CVec::Zero(n);
  for (const auto& t : s.targets)
    if (!t.is_eavesdropper) {
      x_ref = steering_vector(s.tx_array, t.angle_deg) * std::sqrt(power / static_cast<double>(n));
      break;
    }

  RVec xi;
  if (!project_polyhedron(a, b, RVec::Zero(2 * n), xi) || max_violation(xi) > opts.feasibility_tol)
    throw InfeasibleError("solve_symbol: CI constraints infeasible, largest violated margin " +
                          std::to_string(xi.size() ? max_violation(xi) : INFINITY));
  const double min_power = xi.squaredNorm();

  switch (opts.objective) {
    case SlpObjective::MinPower:
      break;
    case SlpObjective::RadarBeamError: {
      RVec y;
      if (!project_polyhedron(a, b, to_real(x_ref), y)) throw InfeasibleError("solve_symbol: projection failed");
      xi = y;
      break;
    }
    case SlpObjective::Crlb: {
      if (min_power > power * (1.0 + 1e-9))
        throw InfeasibleError("solve_symbol: CI constraints need power " + std::to_string(min_power) +
                              " above the budget " + std::to_string(power));
      if (s.targets.empty()) throw DomainError("solve_symbol: crlb objective needs a target");
      const CrlbModel model = crlb_model(s, 0);
      RVec start = project_feasible(a, b, power, to_real(x_ref));
      const double ref = crlb_of_precoder(to_complex(start), model);
      const double scale = std::isfinite(ref) && ref > 0.0 ? ref : 1.0;
      const MatrixObjective f = [&](const CMat& x, CMat* g) {
        const double v = crlb_of_precoder(x, model, g);
        if (g) *g /= scale;
        return v / scale;
      };
      const MatrixProjection proj = [&](const CMat& x) {
        return CMat(to_complex(project_feasible(a, b, power, to_real(CVec(x.col(0))))));
      };
      PgOptions po;
      po.max_iterations = opts.max_iterations;
      po.initial_step = 1e-2;
      const auto r = projected_gradient(f, proj, CMat(to_complex(start)), po);
      xi = to_real(CVec(r.x.col(0)));
      out.iterations = r.iterations;
      break;
    }
  }

  if (opts.extra == SlpExtra::ConstantModulus) {
    const double amp = std::sqrt(power / static_cast<double>(n));
    CVec x = to_complex(xi);
    for (int it = 0; it < opts.max_iterations; ++it) {
      for (Eigen::Index i = 0; i < n; ++i) x(i) = std::abs(x(i)) > 0.0 ? amp * x(i) / std::abs(x(i)) : amp;
      out.iterations = it + 1;
      if (max_violation(to_real(x)) <= opts.feasibility_tol) break;
      RVec y;
      if (!project_polyhedron(a, b, to_real(x), y)) break;
      x = to_complex(y);
    }
    xi = to_real(x);
  }

  out.x = to_complex(xi);
  out.ci_residuals.resize(static_cast<Eigen::Index>(users.size()));
  for (std::size_t u = 0; u < users.size(); ++u)
    out.ci_residuals(static_cast<Eigen::Index>(u)) = -ci_margin(out.x, users[u]);
  if (out.eve_zone) out.eve_margin = ci_margin(out.x, all.back());
  out.feasible = max_violation(xi) <= opts.feasibility_tol;
  switch (opts.objective) {
    case SlpObjective::MinPower: out.objective = out.x.squaredNorm(); break;
    case SlpObjective::RadarBeamError: out.objective = (out.x - x_ref).squaredNorm(); break;
    case SlpObjective::Crlb: out.objective = crlb_of_precoder(out.x, crlb_model(s, 0)); break;
  }
  return out;
}

PrecoderSet blp_ci_min_power(const Scenario& s, int modulation_order) {
  const Eigen::Index n = s.num_tx(), u_count = s.num_users();
  const auto c = make_psk(modulation_order);
  std::vector<RVec> rows;
  std::vector<double> rhs;
  for (const auto& v : all_symbol_vectors(static_cast<int>(u_count), modulation_order)) {
    for (const auto& ci : user_constraints(s, v, modulation_order)) {
      const CVec g = ci.user_channel * std::polar(1.0, ci.symbol_phase);
      // g^H W s = sum_u (conj(s_u) g)^H w_u, laid out over xi = [Re w_1; Im w_1; Re w_2; ...]
      RVec r_re(2 * n * u_count), r_im(2 * n * u_count);
      for (Eigen::Index u = 0; u < u_count; ++u) {
        const CVec gp = g * std::conj(c.points(v[static_cast<std::size_t>(u)]));
        r_re.segment(2 * n * u, 2 * n) << gp.real(), gp.imag();
        r_im.segment(2 * n * u, 2 * n) << -gp.imag(), gp.real();
      }
      const double t = ci.threshold();
      if (modulation_order == 2) {
        rows.push_back(r_re);
        rhs.push_back(t);
      } else {
        const double tn = std::tan(kPi / modulation_order);
        rows.push_back(tn * r_re - r_im);
        rhs.push_back(tn * t);
        rows.push_back(tn * r_re + r_im);
        rhs.push_back(tn * t);
      }
    }
  }
  RMat a(static_cast<Eigen::Index>(rows.size()), 2 * n * u_count);
  RVec b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    b(static_cast<Eigen::Index>(i)) = rhs[i];
  }
  RVec xi;
  if (!project_polyhedron(a, b, RVec::Zero(a.cols()), xi, 2000) || (b - a * xi).maxCoeff() > 1e-8)
    throw InfeasibleError("blp_ci_min_power: no linear precoder meets the CI conditions");
  PrecoderSet p;
  p.w_comm.resize(n, u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) p.w_comm.col(u) = to_complex(xi.segment(2 * n * u, 2 * n));
  p.w_radar = CMat::Zero(n, 0);
  p.power_budget = p.power();
  return p;
}

std::vector<std::vector<int>> all_symbol_vectors(int num_users, int modulation_order) {
  std::vector<std::vector<int>> out;
  std::vector<int> v(static_cast<std::size_t>(num_users), 0);
  while (true) {
    out.push_back(v);
    int k = num_users - 1;
    while (k >= 0 && ++v[static_cast<std::size_t>(k)] == modulation_order) v[static_cast<std::size_t>(k--)] = 0;
    if (k < 0) break;
  }
  return out;
}

std::vector<std::vector<int>> random_symbol_stream(int num_users, int modulation_order, int length, Rng& rng) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(length));
  for (auto& v : out)
    for (int u = 0; u < num_users; ++u) v.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(modulation_order))));
  return out;
}

namespace {

// Nearest PSK point by phase.
int detect_psk(cplx r, int order) {
  const auto c = make_psk(order);
  return static_cast<int>(detect_nearest(c, r / std::max(std::abs(r), 1e-300)));
}

double awgn_ser(const Scenario& s, const std::vector<CVec>& xs, const std::vector<std::vector<int>>& stream, int order,
                int trials, std::uint64_t seed) {
  if (xs.empty()) return 0.0;
  Rng rng(seed);
  long errors = 0, total = 0;
  for (std::size_t k = 0; k < xs.size(); ++k)
    for (int t = 0; t < trials; ++t)
      for (std::size_t u = 0; u < s.users.size(); ++u) {
        const cplx r = s.users[u].channel.dot(xs[k]) + rng.cgaussian(s.users[u].noise_power);
        errors += detect_psk(r, order) != stream[k][u];
        ++total;
      }
  return static_cast<double>(errors) / static_cast<double>(total);
}

}  // namespace

SlpBlockResult slp_block_run(const Scenario& s, const std::vector<std::vector<int>>& stream, const SlpOptions& opts,
                             int noise_trials, std::uint64_t noise_seed) {
  SlpBlockResult r;
  if (stream.empty()) return r;
  DesiredBeampattern desired;
  std::vector<double> centers;
  for (const auto& t : s.targets)
    if (!t.is_eavesdropper) centers.push_back(t.angle_deg);
  if (!centers.empty()) desired = make_desired_beampattern(centers, 10.0);
  std::vector<CVec> xs;
  int inside = 0;
  for (std::size_t k = 0; k < stream.size(); ++k) {
    r.solves.push_back(solve_symbol(s, stream[k], opts, k));
    const auto& sol = r.solves.back();
    xs.push_back(sol.x);
    r.average_power += sol.x.squaredNorm();
    if (!centers.empty()) r.average_beampattern_error += beampattern_mse(CMat(sol.x * sol.x.adjoint()), s.tx_array, desired);
    if (sol.ci_residuals.size() == 0 || sol.ci_residuals.maxCoeff() <= 1e-9) ++inside;
  }
  const double k = static_cast<double>(stream.size());
  r.average_power /= k;
  r.average_beampattern_error /= k;
  r.inside_ci_fraction = inside / k;
  r.symbol_error_rate = awgn_ser(s, xs, stream, opts.modulation_order, noise_trials, noise_seed);
  return r;
}

double blp_symbol_error_rate(const Scenario& s, const PrecoderSet& p, const std::vector<std::vector<int>>& stream,
                             int modulation_order, double average_power, int noise_trials, std::uint64_t noise_seed) {
  const auto c = make_psk(modulation_order);
  const double scale = std::sqrt(average_power / p.w_comm.squaredNorm());
  std::vector<CVec> xs;
  for (const auto& v : stream) {
    CVec sym(static_cast<Eigen::Index>(v.size()));
    for (std::size_t u = 0; u < v.size(); ++u) sym(static_cast<Eigen::Index>(u)) = c.points(v[u]);
    xs.push_back(scale * p.w_comm * sym);
  }
  return awgn_ser(s, xs, stream, modulation_order, noise_trials, noise_seed);
}

void write_scatter_csv(const Scenario& s, const SlpBlockResult& r, const std::vector<std::vector<int>>& stream,
                       int modulation_order, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "symbol_idx,user,re,im,inside_ci\n";
  for (std::size_t k = 0; k < r.solves.size(); ++k) {
    const auto cs = user_constraints(s, stream[k], modulation_order);
    for (std::size_t u = 0; u < cs.size(); ++u) {
      const cplx rx = cs[u].user_channel.dot(r.solves[k].x);
      out << k << ',' << u << ',' << rx.real() << ',' << rx.imag() << ','
          << (ci_margin(r.solves[k].x, cs[u]) >= -1e-9 ? 1 : 0) << '\n';
    }
  }
}

}  // namespace isac
