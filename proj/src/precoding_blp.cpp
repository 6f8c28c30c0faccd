#include "isac/precoding_blp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace isac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CMat steering_matrix(const ArrayGeometry& g, const RVec& angles_deg) {
  CMat a(g.num_elements, angles_deg.size());
  for (Eigen::Index i = 0; i < angles_deg.size(); ++i) a.col(i) = steering_vector(g, angles_deg(i));
  return a;
}

CMat channel_rows(const std::vector<CommUser>& users) {
  if (users.empty()) return CMat(0, 0);
  CMat h(static_cast<Eigen::Index>(users.size()), users[0].channel.size());
  for (std::size_t u = 0; u < users.size(); ++u) h.row(static_cast<Eigen::Index>(u)) = users[u].channel.adjoint();
  return h;
}

RVec sinr_of_stacked(const CMat& w, Eigen::Index num_users, const std::vector<CommUser>& users) {
  RVec g(num_users);
  for (Eigen::Index u = 0; u < num_users; ++u) {
    const auto& user = users[static_cast<std::size_t>(u)];
    const Eigen::RowVectorXcd y = user.channel.adjoint() * w;
    const double s = std::norm(y(u));
    g(u) = s / (y.squaredNorm() - s + user.noise_power);
  }
  return g;
}

// Beampattern MSE and its gradient; `a` holds steering vectors column-wise.
double mse_and_grad(const CMat& w, const CMat& a, const RVec& p, AlphaMode mode, double alpha, CMat* grad) {
  const CMat b_mat = a.adjoint() * w;
  const RVec b = b_mat.rowwise().squaredNorm();
  const double m = static_cast<double>(p.size());
  if (mode == AlphaMode::Optimized) {
    const double pp = p.squaredNorm();
    alpha = pp > 0.0 ? p.dot(b) / pp : 0.0;
  }
  const RVec e = b - alpha * p;
  if (grad) *grad = (2.0 / m) * a * (e.cast<cplx>().asDiagonal() * b_mat);
  return e.squaredNorm() / m;
}

struct CrlbTerms {
  CMat a_mat, a_dot;
  double c = 0.0;  // 2 L |alpha|^2 / sigma^2
};

CrlbTerms crlb_terms(const CrlbModel& m) {
  const CVec a = steering_vector(m.tx, m.angle_deg);
  const CVec ad = steering_derivative(m.tx, m.angle_deg);
  const CVec b = steering_vector(m.rx, m.angle_deg);
  const CVec bd = steering_derivative(m.rx, m.angle_deg);
  CrlbTerms t;
  t.a_mat = b * a.adjoint();
  t.a_dot = bd * a.adjoint() + b * ad.adjoint();
  t.c = 2.0 * m.snapshots * std::norm(m.amplitude) / m.noise_power;
  return t;
}

// CRLB as a function of the stacked precoder, with gradient.
double crlb_and_grad(const CMat& w, const CrlbTerms& t, CMat* grad) {
  const CMat aw = t.a_mat * w;
  const CMat dw = t.a_dot * w;
  const double t1 = dw.squaredNorm();
  const double t3 = aw.squaredNorm();
  const cplx t2 = (aw.array() * dw.array().conjugate()).sum();  // tr(A R Adot^H)
  // zero up to rounding relative to the transmit power counts as unobservable
  const double wn = w.squaredNorm();
  if (!(t3 > 1e-12 * wn * t.a_mat.squaredNorm())) return kInf;
  const double g = t1 - std::norm(t2) / t3;
  if (!(g > 1e-12 * wn * t.a_dot.squaredNorm()) || !(t.c > 0.0)) return kInf;
  const double crb = 1.0 / (t.c * g);
  if (grad) {
    const CMat c1w = t.a_dot.adjoint() * dw;
    const CMat c3w = t.a_mat.adjoint() * aw;
    // C2 = Adot^H A, C2^H = A^H Adot
    const CMat c2w = t.a_dot.adjoint() * aw;
    const CMat c2hw = t.a_mat.adjoint() * dw;
    const CMat dg = c1w - (std::conj(t2) * c2w + t2 * c2hw) / t3 + (std::norm(t2) / (t3 * t3)) * c3w;
    *grad = (-1.0 / (t.c * g * g)) * dg;
  }
  return crb;
}

}  // namespace

CMat PrecoderSet::stacked() const {
  CMat w(w_comm.rows(), w_comm.cols() + w_radar.cols());
  w << w_comm, w_radar;
  return w;
}

PrecoderSet PrecoderSet::from_stacked(const CMat& w, Eigen::Index num_users, double power_budget) {
  PrecoderSet p;
  p.w_comm = w.leftCols(num_users);
  p.w_radar = w.rightCols(w.cols() - num_users);
  p.power_budget = power_budget;
  return p;
}

DesiredBeampattern make_desired_beampattern(const std::vector<double>& centers_deg, double half_width_deg,
                                            double grid_step_deg, double edge_deg, double floor_db) {
  if (!(grid_step_deg > 0.0)) throw DomainError("desired beampattern: grid step must be > 0");
  const double floor = std::pow(10.0, floor_db / 10.0);
  const int m = static_cast<int>(std::floor(180.0 / grid_step_deg + 1e-9)) + 1;
  DesiredBeampattern d;
  d.angles_deg.resize(m);
  d.gains.resize(m);
  for (int i = 0; i < m; ++i) {
    const double th = -90.0 + i * grid_step_deg;
    double dist = kInf;
    for (double c : centers_deg) dist = std::min(dist, std::abs(th - c));
    double g = floor;
    if (dist <= half_width_deg)
      g = 1.0;
    else if (edge_deg > 0.0 && dist < half_width_deg + edge_deg)
      g = floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(kPi * (dist - half_width_deg) / edge_deg));
    d.angles_deg(i) = th;
    d.gains(i) = g;
  }
  return d;
}

CMat transmit_covariance(const PrecoderSet& p) {
  CMat r = p.w_comm * p.w_comm.adjoint();
  if (p.w_radar.size()) r += p.w_radar * p.w_radar.adjoint();
  return r;
}

RVec user_sinr(const PrecoderSet& p, const std::vector<CommUser>& users) {
  if (static_cast<std::size_t>(p.w_comm.cols()) != users.size())
    throw ContractError("user_sinr: precoder has " + std::to_string(p.w_comm.cols()) + " columns for " +
                        std::to_string(users.size()) + " users");
  return sinr_of_stacked(p.stacked(), p.w_comm.cols(), users);
}

double sum_rate(const PrecoderSet& p, const std::vector<CommUser>& users) {
  const RVec g = user_sinr(p, users);
  double r = 0.0;
  for (Eigen::Index u = 0; u < g.size(); ++u) r += std::log2(1.0 + g(u));
  return r;
}

double mui_energy(const CMat& x, const CMat& s_comm, const std::vector<CommUser>& users) {
  const CMat h = channel_rows(users);
  if (h.cols() != x.rows() || s_comm.rows() != h.rows() || s_comm.cols() != x.cols())
    throw ContractError("mui_energy: dimension mismatch");
  return (h * x - s_comm).squaredNorm();
}

double mui_energy(const PrecoderSet& p, const CMat& s_comm, const CMat& s_radar, const std::vector<CommUser>& users) {
  CMat x = p.w_comm * s_comm;
  if (p.w_radar.size()) x += p.w_radar * s_radar;
  return mui_energy(x, s_comm, users);
}

RVec beampattern(const CMat& r, const ArrayGeometry& tx, const RVec& angles_deg) {
  RVec out(angles_deg.size());
  for (Eigen::Index i = 0; i < angles_deg.size(); ++i) {
    const CVec a = steering_vector(tx, angles_deg(i));
    out(i) = a.dot(r * a).real();
  }
  return out;
}

double beampattern_mse(const CMat& r, const ArrayGeometry& tx, const DesiredBeampattern& d, AlphaMode mode,
                       double alpha) {
  const RVec b = beampattern(r, tx, d.angles_deg);
  if (mode == AlphaMode::Optimized) {
    const double pp = d.gains.squaredNorm();
    alpha = pp > 0.0 ? d.gains.dot(b) / pp : 0.0;
  }
  return (b - alpha * d.gains).squaredNorm() / static_cast<double>(b.size());
}

double beampattern_mse(const PrecoderSet& p, const ArrayGeometry& tx, const DesiredBeampattern& d, AlphaMode mode,
                       double alpha) {
  return beampattern_mse(transmit_covariance(p), tx, d, mode, alpha);
}

RMat fisher_information(const CMat& r, const CrlbModel& m) {
  const auto t = crlb_terms(m);
  const double t1 = (t.a_dot * r * t.a_dot.adjoint()).trace().real();
  const cplx t2 = (t.a_mat * r * t.a_dot.adjoint()).trace();
  const double t3 = (t.a_mat * r * t.a_mat.adjoint()).trace().real();
  const double c = 2.0 * m.snapshots / m.noise_power;
  const cplx z = std::conj(m.amplitude) * t2;
  RMat j(3, 3);
  j << std::norm(m.amplitude) * t1, z.real(), (kJ * z).real(),  //
      z.real(), t3, 0.0,                                         //
      (kJ * z).real(), 0.0, t3;
  return c * j;
}

double beampattern_mse_of_precoder(const CMat& w, const ArrayGeometry& tx, const DesiredBeampattern& d, CMat* grad) {
  return mse_and_grad(w, steering_matrix(tx, d.angles_deg), d.gains, AlphaMode::Optimized, 1.0, grad);
}

double crlb_angle(const CMat& r, const CrlbModel& m) {
  // R = W W^H for any square root W; use the Cholesky-free eigen route.
  Eigen::SelfAdjointEigenSolver<CMat> es(r);
  const RVec ev = es.eigenvalues().cwiseMax(0.0);
  const CMat w = es.eigenvectors() * ev.cwiseSqrt().cast<cplx>().asDiagonal();
  return crlb_and_grad(w, crlb_terms(m), nullptr);
}

double crlb_of_precoder(const CMat& w, const CrlbModel& m, CMat* grad) {
  return crlb_and_grad(w, crlb_terms(m), grad);
}

double crlb_angle(const PrecoderSet& p, const CrlbModel& m) { return crlb_and_grad(p.stacked(), crlb_terms(m), nullptr); }

CrlbModel crlb_model(const Scenario& s, std::size_t target) {
  if (target >= s.targets.size()) throw DomainError("crlb_model: scenario has no target " + std::to_string(target));
  CrlbModel m;
  m.tx = s.tx_array;
  m.rx = s.rx_array;
  m.angle_deg = s.targets[target].angle_deg;
  m.amplitude = s.targets[target].amplitude;
  m.snapshots = s.num_blocks;
  m.noise_power = s.sensing_noise_power;
  return m;
}

PrecoderSet zf_waterfilling(const std::vector<CommUser>& users, double power_budget, int num_tx) {
  const CMat h = channel_rows(users);
  if (h.rows() > num_tx) throw DomainError("zf_waterfilling: more users than antennas");
  const CMat gram = h * h.adjoint();
  Eigen::FullPivLU<CMat> lu(gram);
  if (lu.rank() < h.rows()) throw SingularError("zf_waterfilling: user channels are linearly dependent");
  const CMat v = h.adjoint() * lu.inverse();
  const Eigen::Index u_count = h.rows();
  RVec inv_gain(u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) inv_gain(u) = v.col(u).squaredNorm() * users[static_cast<std::size_t>(u)].noise_power;
  // water level by bisection
  double lo = 0.0, hi = power_budget + inv_gain.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double used = (mid - inv_gain.array()).cwiseMax(0.0).sum();
    (used > power_budget ? hi : lo) = mid;
  }
  const RVec p = (lo - inv_gain.array()).cwiseMax(0.0);
  PrecoderSet out;
  out.power_budget = power_budget;
  out.w_comm.resize(num_tx, u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) out.w_comm.col(u) = std::sqrt(p(u)) * v.col(u) / v.col(u).norm();
  out.w_radar = CMat::Zero(num_tx, num_tx);
  return out;
}

PrecoderSet min_power_beamforming(const std::vector<CommUser>& users, const RVec& gamma, int num_tx,
                                  int max_iterations) {
  const auto u_count = static_cast<Eigen::Index>(users.size());
  if (gamma.size() != u_count) throw ContractError("min_power_beamforming: one SINR target per user");
  CMat hn(num_tx, u_count);  // noise-normalized channels as columns
  for (Eigen::Index u = 0; u < u_count; ++u)
    hn.col(u) = users[static_cast<std::size_t>(u)].channel / std::sqrt(users[static_cast<std::size_t>(u)].noise_power);
  RVec lambda = RVec::Ones(u_count);
  CMat dirs(num_tx, u_count);
  for (int it = 0; it < max_iterations; ++it) {
    CMat sigma = CMat::Identity(num_tx, num_tx);
    for (Eigen::Index j = 0; j < u_count; ++j) sigma += lambda(j) * hn.col(j) * hn.col(j).adjoint();
    const Eigen::LDLT<CMat> ldlt(sigma);
    RVec next(u_count);
    for (Eigen::Index u = 0; u < u_count; ++u) {
      dirs.col(u) = ldlt.solve(hn.col(u));
      next(u) = 1.0 / ((1.0 + 1.0 / gamma(u)) * hn.col(u).dot(dirs.col(u)).real());
    }
    const double change = (next - lambda).cwiseAbs().maxCoeff() / std::max(1.0, next.cwiseAbs().maxCoeff());
    lambda = next;
    if (!lambda.allFinite() || lambda.maxCoeff() > 1e12)
      throw InfeasibleError("min_power_beamforming: dual fixed point diverged");
    if (change < 1e-13) break;
  }
  for (Eigen::Index u = 0; u < u_count; ++u) dirs.col(u).normalize();
  RMat d(u_count, u_count);
  for (Eigen::Index u = 0; u < u_count; ++u)
    for (Eigen::Index i = 0; i < u_count; ++i) {
      const double g = std::norm(hn.col(u).dot(dirs.col(i)));
      d(u, i) = (u == i) ? g / gamma(u) : -g;
    }
  const RVec p = d.fullPivLu().solve(RVec::Ones(u_count));
  if (!p.allFinite() || (p.array() <= 0.0).any())
    throw InfeasibleError("min_power_beamforming: SINR targets not reachable");
  PrecoderSet out;
  out.w_comm.resize(num_tx, u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) out.w_comm.col(u) = std::sqrt(p(u)) * dirs.col(u);
  out.w_radar = CMat::Zero(num_tx, 0);
  out.power_budget = out.power();
  return out;
}

std::string to_string(SensingMetric m) { return m == SensingMetric::Beampattern ? "beampattern" : "crlb"; }

TradeoffProblem::TradeoffProblem(const Scenario& s, const TradeoffOptions& opts) : s_(s), opts_(opts) {
  n_ = s.num_tx();
  u_ = s.num_users();
  if (u_ < 1) throw DomainError("tradeoff: scenario needs at least one user");
  if (s.targets.empty()) throw DomainError("tradeoff: scenario needs at least one target");
  std::vector<double> centers;
  for (const auto& t : s.targets) centers.push_back(t.angle_deg);
  desired_ = make_desired_beampattern(centers, opts.mainlobe_half_width_deg);
  steering_ = steering_matrix(s.tx_array, desired_.angles_deg);
  crlb_ = crlb_model(s, 0);

  // Single-objective optima fix the normalization.
  comm_ref_ = 1.0;
  sens_ref_ = 1.0;
  double best_c = kInf, best_s = kInf;
  Rng rng(opts.seed);
  std::vector<CMat> starts = {zf_start()};
  for (int k = 0; k < opts.random_starts; ++k) starts.push_back(rng.cgaussian_mat(n_, u_ + n_));
  for (const auto& w0 : starts) {
    best_c = std::min(best_c, solve_from(w0, 1.0).objective);
    best_s = std::min(best_s, solve_from(w0, 0.0).objective);
  }
  comm_ref_ = std::max(-best_c, 1e-9);
  sens_ref_ = std::max(best_s, 1e-12 * std::max(1.0, std::abs(best_s)));
  if (!std::isfinite(sens_ref_)) throw DomainError("tradeoff: sensing metric is unbounded at every start");
}

CMat TradeoffProblem::zf_start() const {
  const double p = s_.power_budget;
  const auto zf = zf_waterfilling(s_.users, 0.9 * p, static_cast<int>(n_));
  CMat w(n_, u_ + n_);
  w << zf.w_comm, CMat::Identity(n_, n_) * std::sqrt(0.1 * p / static_cast<double>(n_));
  return w;
}

double TradeoffProblem::comm(const CMat& w, CMat* grad) const {
  double val = 0.0;
  if (grad) *grad = CMat::Zero(w.rows(), w.cols());
  for (Eigen::Index u = 0; u < u_; ++u) {
    const auto& user = s_.users[static_cast<std::size_t>(u)];
    const Eigen::RowVectorXcd y = user.channel.adjoint() * w;
    const double total = y.squaredNorm() + user.noise_power;
    const double interf = total - std::norm(y(u));
    val -= std::log2(total / interf);
    if (grad) {
      CMat g = user.channel * y * (1.0 / total - 1.0 / interf);
      g.col(u) += user.channel * y(u) / interf;
      *grad -= g / std::log(2.0);
    }
  }
  return val;
}

double TradeoffProblem::sensing(const CMat& w, CMat* grad) const {
  if (opts_.metric == SensingMetric::Beampattern)
    return mse_and_grad(w, steering_, desired_.gains, AlphaMode::Optimized, 1.0, grad);
  return crlb_and_grad(w, crlb_terms(crlb_), grad);
}

double TradeoffProblem::objective(const CMat& w, double rho, CMat* grad) const {
  double val = 0.0;
  CMat g;
  if (grad) *grad = CMat::Zero(w.rows(), w.cols());
  if (rho > 0.0) {
    val += rho * comm(w, grad ? &g : nullptr) / comm_ref_;
    if (grad) *grad += (rho / comm_ref_) * g;
  }
  if (rho < 1.0) {
    const double f = sensing(w, grad ? &g : nullptr);
    if (!std::isfinite(f)) return kInf;
    val += (1.0 - rho) * f / sens_ref_;
    if (grad) *grad += ((1.0 - rho) / sens_ref_) * g;
  }
  return val;
}

TradeoffPoint TradeoffProblem::evaluate(const CMat& w, double rho, int iterations, bool converged) const {
  TradeoffPoint pt;
  pt.rho = rho;
  pt.precoders = PrecoderSet::from_stacked(w, u_, s_.power_budget);
  pt.comm_metric = -comm(w, nullptr);
  pt.sensing_metric = sensing(w, nullptr);
  pt.objective = objective(w, rho, nullptr);
  pt.iterations = iterations;
  pt.converged = converged;
  return pt;
}

TradeoffPoint TradeoffProblem::solve_from(const CMat& w0, double rho) const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("solve_tradeoff: rho must be in [0, 1]");
  const double p = s_.power_budget;
  const MatrixObjective f = [&](const CMat& w, CMat* g) { return objective(w, rho, g); };
  const MatrixProjection proj = [p](const CMat& w) { return project_power_sphere(w, p); };
  PgOptions o;
  o.max_iterations = opts_.max_iterations;
  o.tolerance = 1e-10;
  o.patience = 10;
  o.initial_step = 1e-2;
  const auto r = projected_gradient(f, proj, w0, o);
  return evaluate(r.x, rho, r.iterations, r.converged);
}

std::vector<TradeoffPoint> sweep_tradeoff(const Scenario& s, const std::vector<double>& rhos,
                                          const TradeoffOptions& opts) {
  const TradeoffProblem prob(s, opts);
  std::vector<double> sorted = rhos;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  std::vector<TradeoffPoint> best(k);
  auto keep = [&](std::size_t i, TradeoffPoint pt) {
    if (best[i].iterations == 0 || pt.objective < best[i].objective) {
      pt.iterations += best[i].iterations;
      best[i] = std::move(pt);
    } else {
      best[i].iterations += pt.iterations;
    }
  };
  Rng rng(derive_seed(opts.seed, 1));
  std::vector<CMat> cold = {prob.zf_start()};
  for (int r = 0; r < opts.random_starts; ++r) cold.push_back(rng.cgaussian_mat(prob.n_, prob.u_ + prob.n_));
  for (std::size_t i = 0; i < k; ++i)
    for (const auto& w0 : cold) keep(i, prob.solve_from(w0, sorted[i]));
  for (std::size_t i = 1; i < k; ++i) keep(i, prob.solve_from(best[i - 1].precoders.stacked(), sorted[i]));
  for (std::size_t i = k - 1; i-- > 0;) keep(i, prob.solve_from(best[i + 1].precoders.stacked(), sorted[i]));
  return best;
}

TradeoffPoint solve_tradeoff(const Scenario& s, double rho, const TradeoffOptions& opts) {
  return sweep_tradeoff(s, {rho}, opts).front();
}

bool is_pareto_monotone(const std::vector<TradeoffPoint>& pts, double rel_tol) {
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = 0; b < pts.size(); ++b) {
      if (a == b) continue;
      const double tc = rel_tol * std::max(std::abs(pts[a].comm_metric), 1e-300);
      const double ts = rel_tol * std::max(std::abs(pts[a].sensing_metric), 1e-300);
      const bool no_worse = pts[b].comm_metric >= pts[a].comm_metric - tc &&
                            pts[b].sensing_metric <= pts[a].sensing_metric + ts;
      const bool better = pts[b].comm_metric > pts[a].comm_metric + tc ||
                          pts[b].sensing_metric < pts[a].sensing_metric - ts;
      if (no_worse && better) return false;
    }
  return true;
}

namespace {

double min_sinr_db(const PrecoderSet& p, const std::vector<CommUser>& users) {
  return lin2db(user_sinr(p, users).minCoeff());
}

}  // namespace

CrlbSinrPoint zf_crlb_baseline(const Scenario& s, double sinr_db) {
  CrlbSinrPoint out;
  out.sinr_db = sinr_db;
  const double gamma = db2lin(sinr_db);
  const CMat h = s.channel_matrix();
  const Eigen::Index n = s.num_tx(), u_count = s.num_users();
  const CMat v = h.adjoint() * (h * h.adjoint()).inverse();
  PrecoderSet p;
  p.power_budget = s.power_budget;
  p.w_comm.resize(n, u_count);
  double used = 0.0;
  for (Eigen::Index u = 0; u < u_count; ++u) {
    // h_u^H v_u = 1, so power gamma * sigma^2 * |v_u|^2 meets the target exactly
    const double pu = gamma * s.users[static_cast<std::size_t>(u)].noise_power * v.col(u).squaredNorm();
    p.w_comm.col(u) = std::sqrt(pu) * v.col(u) / v.col(u).norm();
    used += pu;
  }
  p.w_radar = CMat::Zero(n, n);
  if (used > s.power_budget * (1.0 + 1e-12)) {
    out.precoders = p;
    out.crlb = kInf;
    out.feasible = false;
    return out;
  }
  const CMat null_proj = CMat::Identity(n, n) - v * h;
  const CVec d = null_proj * steering_vector(s.tx_array, s.targets.at(0).angle_deg);
  const double rest = std::max(0.0, s.power_budget - used);
  if (d.norm() > 1e-12) p.w_radar.col(0) = std::sqrt(rest) * d / d.norm();
  out.precoders = p;
  out.feasible = true;
  out.crlb = crlb_angle(p, crlb_model(s, 0));
  out.min_sinr_db = min_sinr_db(p, s.users);
  return out;
}

CrlbSinrPoint joint_crlb_design(const Scenario& s, double sinr_db, int max_outer) {
  const auto base = zf_crlb_baseline(s, sinr_db);
  if (!base.feasible) return base;
  const double gamma = db2lin(sinr_db);
  const Eigen::Index u_count = s.num_users();
  const double pw = s.power_budget;
  const auto terms = crlb_terms(crlb_model(s, 0));
  const double ref = base.crlb;
  const MatrixObjective f = [&](const CMat& w, CMat* g) {
    const double v = crlb_and_grad(w, terms, g);
    if (g) *g /= ref;
    return v / ref;
  };
  const MatrixConstraints c = [&](const CMat& w, std::vector<CMat>* grads) {
    RVec cv(u_count);
    if (grads) grads->assign(static_cast<std::size_t>(u_count), CMat());
    for (Eigen::Index u = 0; u < u_count; ++u) {
      const auto& user = s.users[static_cast<std::size_t>(u)];
      const Eigen::RowVectorXcd y = user.channel.adjoint() * w;
      const double total = y.squaredNorm() + user.noise_power;
      const double sig = std::norm(y(u));
      const double scale = 1.0 / (user.noise_power * gamma);
      cv(u) = scale * (gamma * total - (1.0 + gamma) * sig);
      if (grads) {
        CMat g = gamma * user.channel * y;
        g.col(u) -= (1.0 + gamma) * user.channel * y(u);
        (*grads)[static_cast<std::size_t>(u)] = scale * g;
      }
    }
    return cv;
  };
  const MatrixProjection proj = [pw](const CMat& w) { return project_power_sphere(w, pw); };
  auto feasible = [&](const CMat& w) {
    return sinr_of_stacked(w, u_count, s.users).minCoeff() >= gamma * (1.0 - 1e-9);
  };

  CMat best = base.precoders.stacked();
  double best_val = f(best, nullptr);
  auto consider = [&](const CMat& w) {
    if (!feasible(w)) return;
    const double v = f(w, nullptr);
    if (v < best_val) {
      best_val = v;
      best = w;
    }
  };
  AlOptions opts;
  opts.outer_iterations = max_outer;
  opts.inner = PgOptions{400, 1e-11, 8, 1e-2};
  opts.on_outer = consider;
  const auto r = augmented_lagrangian(f, c, proj, best, opts);
  // Pull the final iterate back toward the feasible start until it meets every SINR target.
  if (!feasible(r.x)) {
    const CMat w0 = base.precoders.stacked();
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (feasible(proj((1.0 - mid) * r.x + mid * w0)) ? hi : lo) = mid;
    }
    consider(proj((1.0 - hi) * r.x + hi * w0));
  } else {
    consider(r.x);
  }

  CrlbSinrPoint out;
  out.sinr_db = sinr_db;
  out.feasible = true;
  out.precoders = PrecoderSet::from_stacked(best, u_count, pw);
  out.crlb = best_val * ref;
  out.min_sinr_db = min_sinr_db(out.precoders, s.users);
  out.iterations = r.iterations;
  return out;
}

void write_tradeoff_csv(const std::vector<TradeoffPoint>& pts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "rho,comm_metric,sensing_metric,security_metric,iterations,converged\n";
  for (const auto& p : pts)
    out << p.rho << ',' << p.comm_metric << ',' << p.sensing_metric << ",," << p.iterations << ','
        << (p.converged ? 1 : 0) << '\n';
}

}  // namespace isac
