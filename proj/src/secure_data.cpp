#include "isac/secure_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "isac/optim.hpp"

namespace isac {

namespace {

constexpr double kLn2 = 0.69314718055994530942;

RVec eve_angles(const EveModel& e) {
  if (e.uncertainty_deg <= 0.0) return RVec::Constant(1, e.angle_deg);
  const int k = static_cast<int>(std::ceil(2.0 * e.uncertainty_deg / 0.5)) + 1;
  return RVec::LinSpaced(k, e.angle_deg - e.uncertainty_deg, e.angle_deg + e.uncertainty_deg);
}

// Z = [W_c | V] with R_N = V V^H.
AnTransmit to_transmit(const CMat& z, Eigen::Index users, double power, const ArrayGeometry& tx) {
  AnTransmit t;
  t.tx = tx;
  t.w_comm = z.leftCols(users);
  const CMat v = z.rightCols(z.cols() - users);
  t.an_covariance = v * v.adjoint();
  t.power_budget = power;
  return t;
}

// Per-user rate R_B,u with its gradient d/dconj(Z).
double user_rate_grad(const CMat& z, const CommUser& user, Eigen::Index u, CMat* grad) {
  const Eigen::RowVectorXcd y = user.channel.adjoint() * z;
  const double total = y.squaredNorm() + user.noise_power;
  const double interf = total - std::norm(y(u));
  if (grad) {
    *grad = user.channel * y * (1.0 / total - 1.0 / interf);
    grad->col(u) += user.channel * y(u) / interf;
    *grad /= kLn2;
  }
  return std::log2(total / interf);
}

double eve_rate_grad(const CMat& z, Eigen::Index users, const CVec& a, double b2, double noise, CMat* grad) {
  Eigen::RowVectorXcd y = a.adjoint() * z;
  const double total = b2 * y.squaredNorm() + noise;
  y.head(users).setZero();
  const double jam = b2 * y.squaredNorm() + noise;
  if (grad) {
    const Eigen::RowVectorXcd y_all = a.adjoint() * z;
    *grad = (b2 / kLn2) * (a * y_all / total - a * y / jam);
  }
  return std::log2(total / jam);
}

}  // namespace

void check_eve(const EveModel& e) {
  if (!(e.noise_power > 0.0)) throw DomainError("eve: noise power must be > 0");
  if (!(e.uncertainty_deg >= 0.0)) throw DomainError("eve: uncertainty must be >= 0");
}

EveModel eve_model(const Scenario& s, double uncertainty_deg) {
  const auto k = s.eavesdropper_index();
  if (!k) throw DomainError("eve_model: scenario has no eavesdropper target");
  EveModel e;
  e.angle_deg = s.targets[*k].angle_deg;
  e.path_loss = s.targets[*k].amplitude;
  e.noise_power = s.users.empty() ? 1.0 : s.users[0].noise_power;
  e.uncertainty_deg = uncertainty_deg;
  check_eve(e);
  return e;
}

double eve_rate(const AnTransmit& t, const EveModel& eve, double angle_deg) {
  check_eve(eve);
  if (t.tx.num_elements != t.w_comm.rows()) throw ContractError("eve_rate: array size != precoder rows");
  const CVec a = steering_vector(t.tx, angle_deg);
  const double b2 = std::norm(eve.path_loss);
  const double sig = b2 * (t.w_comm.adjoint() * a).squaredNorm();
  const double jam = b2 * a.dot(t.an_covariance * a).real();
  return std::log2(1.0 + sig / (jam + eve.noise_power));
}

double eve_rate(const AnTransmit& t, const EveModel& eve) { return eve_rate(t, eve, eve.angle_deg); }

double worst_eve_rate(const AnTransmit& t, const EveModel& eve) {
  double worst = 0.0;
  for (double th : eve_angles(eve)) worst = std::max(worst, eve_rate(t, eve, th));
  return worst;
}

RVec user_sinr(const AnTransmit& t, const std::vector<CommUser>& users) {
  RVec g(static_cast<Eigen::Index>(users.size()));
  for (std::size_t u = 0; u < users.size(); ++u) {
    const auto& h = users[u].channel;
    const Eigen::RowVectorXcd y = h.adjoint() * t.w_comm;
    const double s = std::norm(y(static_cast<Eigen::Index>(u)));
    const double an = h.dot(t.an_covariance * h).real();
    g(static_cast<Eigen::Index>(u)) = s / (y.squaredNorm() - s + an + users[u].noise_power);
  }
  return g;
}

RVec user_rates(const AnTransmit& t, const std::vector<CommUser>& users) {
  return user_sinr(t, users).unaryExpr([](double x) { return std::log2(1.0 + x); });
}

double secrecy_rate(const AnTransmit& t, const std::vector<CommUser>& users, const EveModel& eve,
                    SecrecyMetric metric) {
  if (users.empty()) return 0.0;
  const double re = worst_eve_rate(t, eve);
  const RVec rb = user_rates(t, users);
  if (metric == SecrecyMetric::WorstCase) return std::max(0.0, rb.minCoeff() - re);
  double sum = 0.0;
  for (double r : rb) sum += std::max(0.0, r - re);
  return sum;
}

double mainlobe_width_deg(const CMat& r, const ArrayGeometry& tx, double center_deg, double step_deg) {
  const int half = static_cast<int>(std::round(30.0 / step_deg));
  const RVec grid = RVec::LinSpaced(2 * half + 1, center_deg - half * step_deg, center_deg + half * step_deg);
  const RVec p = beampattern(r, tx, grid);
  Eigen::Index peak;
  const double pmax = p.maxCoeff(&peak);
  Eigen::Index lo = peak, hi = peak;
  while (lo > 0 && p(lo - 1) >= 0.5 * pmax) --lo;
  while (hi + 1 < p.size() && p(hi + 1) >= 0.5 * pmax) ++hi;
  return grid(hi) - grid(lo);
}

SecureResult solve_secure(const Scenario& s, const EveModel& eve, const SecureOptions& opts) {
  check_eve(eve);
  const Eigen::Index n = s.num_tx(), u_count = s.num_users();
  if (u_count < 1) throw DomainError("solve_secure: scenario needs at least one user");
  const double pw = s.power_budget;
  RVec gamma(u_count);
  for (Eigen::Index u = 0; u < u_count; ++u) gamma(u) = s.users[static_cast<std::size_t>(u)].sinr_target();

  // QoS first: the minimum-power beams must fit in the budget.
  PrecoderSet mp;
  try {
    mp = min_power_beamforming(s.users, gamma, static_cast<int>(n));
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(std::string("QoS infeasible: ") + e.what());
  }
  if (mp.power() > pw * (1.0 + 1e-9))
    throw InfeasibleError("QoS infeasible: SINR targets need power " + std::to_string(mp.power()) +
                          " above the budget " + std::to_string(pw));

  SecureResult out;
  out.desired = make_desired_beampattern({eve.angle_deg}, opts.mainlobe_half_width_deg + eve.uncertainty_deg);
  const ArrayGeometry tx = s.tx_array;
  CrlbModel crlb = crlb_model(s, 0);
  crlb.angle_deg = eve.angle_deg;
  if (const auto k = s.eavesdropper_index()) crlb.amplitude = s.targets[*k].amplitude;
  auto sensing = [&](const CMat& z, CMat* g) {
    return opts.sensing == SensingMetric::Beampattern ? beampattern_mse_of_precoder(z, tx, out.desired, g)
                                                      : crlb_of_precoder(z, crlb, g);
  };

  const bool an = opts.artificial_noise;
  const MatrixProjection proj = [&](const CMat& z) {
    CMat y = z;
    if (!an) y.rightCols(n).setZero();
    return project_power_sphere(y, pw);
  };
  auto sinr_of = [&](const CMat& z) { return user_sinr(to_transmit(z, u_count, pw, s.tx_array), s.users); };
  auto qos_ok = [&](const CMat& z) { return (sinr_of(z).array() >= gamma.array() * (1.0 - 1e-6)).all(); };
  // SINR_u >= Gamma_u as Gamma (total) - (1 + Gamma) signal <= 0, scaled by the noise floor
  const MatrixConstraints qos = [&](const CMat& z, std::vector<CMat>* grads) {
    RVec cv(u_count);
    if (grads) grads->assign(static_cast<std::size_t>(u_count), CMat());
    for (Eigen::Index u = 0; u < u_count; ++u) {
      const auto& user = s.users[static_cast<std::size_t>(u)];
      const double g = gamma(u);
      const Eigen::RowVectorXcd y = user.channel.adjoint() * z;
      const double total = y.squaredNorm() + user.noise_power;
      const double sig = std::norm(y(u));
      const double scale = 1.0 / (user.noise_power * g);
      cv(u) = scale * (g * total - (1.0 + g) * sig);
      if (grads) {
        CMat gr = g * user.channel * y;
        gr.col(u) -= (1.0 + g) * user.channel * y(u);
        (*grads)[static_cast<std::size_t>(u)] = scale * gr;
      }
    }
    return cv;
  };

  // Minimum-power beams at full power: always meets the SINR floors.
  CMat z_safe = CMat::Zero(n, u_count + n);
  z_safe.leftCols(u_count) = mp.w_comm;
  z_safe = project_power_sphere(z_safe, pw);

  // Stage 1: best sensing metric under the SINR floors.
  CMat z_sense = z_safe;
  double f_best = sensing(z_safe, nullptr);
  {
    CMat start = z_safe;
    if (an) start.rightCols(n) = CMat::Identity(n, n) * std::sqrt(0.05 * pw / static_cast<double>(n));
    const double ref = std::isfinite(f_best) && f_best > 0.0 ? f_best : 1.0;
    const MatrixObjective f = [&](const CMat& z, CMat* g) {
      const double v = sensing(z, g);
      if (g) *g /= ref;
      return v / ref;
    };
    AlOptions o;
    o.outer_iterations = opts.max_outer;
    o.inner = PgOptions{opts.inner_iterations, 1e-9, 5, 1e-2};
    o.on_outer = [&](const CMat& z) {
      if (!qos_ok(z)) return;
      const double v = sensing(z, nullptr);
      if (v < f_best) {
        f_best = v;
        z_sense = z;
      }
    };
    const auto r = augmented_lagrangian(f, qos, proj, proj(start), o);
    out.iterations += r.iterations;
  }
  if (opts.sensing_constraint) {
    out.sensing_tolerance = opts.sensing_tolerance ? *opts.sensing_tolerance : (1.0 + opts.sensing_slack) * f_best;
    if (!(f_best <= out.sensing_tolerance * (1.0 + 1e-9)))
      throw InfeasibleError("sensing infeasible: best reachable metric " + std::to_string(f_best) +
                            " exceeds the tolerance " + std::to_string(out.sensing_tolerance));
  } else {
    out.sensing_tolerance = std::numeric_limits<double>::infinity();
  }
  const double eps = out.sensing_tolerance;
  auto feasible = [&](const CMat& z) { return qos_ok(z) && (!opts.sensing_constraint || sensing(z, nullptr) <= eps); };

  // Stage 2: smoothed secrecy objective.
  const RVec angles = eve_angles(eve);
  std::vector<CVec> steer;
  for (double th : angles) steer.push_back(steering_vector(tx, th));
  const double b2 = std::norm(eve.path_loss);
  const double kappa = 40.0;
  const MatrixObjective f = [&](const CMat& z, CMat* grad) {
    std::vector<double> rb(static_cast<std::size_t>(u_count)), re(steer.size());
    std::vector<CMat> gb(rb.size()), ge(re.size());
    for (Eigen::Index u = 0; u < u_count; ++u)
      rb[static_cast<std::size_t>(u)] =
          user_rate_grad(z, s.users[static_cast<std::size_t>(u)], u, grad ? &gb[static_cast<std::size_t>(u)] : nullptr);
    for (std::size_t j = 0; j < steer.size(); ++j)
      re[j] = eve_rate_grad(z, u_count, steer[j], b2, eve.noise_power, grad ? &ge[j] : nullptr);
    if (grad) *grad = CMat::Zero(z.rows(), z.cols());
    // soft-min over Eve angles of each user's secrecy margin
    auto softmin_user = [&](std::size_t u, CMat* g) {
      double lo = std::numeric_limits<double>::infinity();
      for (double r : re) lo = std::min(lo, rb[u] - r);
      double z_sum = 0.0;
      std::vector<double> w(re.size());
      for (std::size_t j = 0; j < re.size(); ++j) z_sum += (w[j] = std::exp(-kappa * (rb[u] - re[j] - lo)));
      if (g) {
        *g = gb[u];
        for (std::size_t j = 0; j < re.size(); ++j) *g -= (w[j] / z_sum) * ge[j];
      }
      return lo - std::log(z_sum) / kappa;
    };
    std::vector<double> m(rb.size());
    std::vector<CMat> gm(rb.size());
    for (std::size_t u = 0; u < rb.size(); ++u) m[u] = softmin_user(u, grad ? &gm[u] : nullptr);
    double val = 0.0;
    if (opts.metric == SecrecyMetric::WorstCase) {
      const double lo = *std::min_element(m.begin(), m.end());
      double z_sum = 0.0;
      std::vector<double> w(m.size());
      for (std::size_t u = 0; u < m.size(); ++u) z_sum += (w[u] = std::exp(-kappa * (m[u] - lo)));
      val = lo - std::log(z_sum) / kappa;
      if (grad)
        for (std::size_t u = 0; u < m.size(); ++u) *grad += (w[u] / z_sum) * gm[u];
    } else {
      for (std::size_t u = 0; u < m.size(); ++u) {
        // softplus keeps the [.]^+ clamp differentiable
        const double x = kappa * m[u];
        val += (x > 30.0 ? m[u] : std::log1p(std::exp(x)) / kappa);
        if (grad) *grad += (1.0 / (1.0 + std::exp(-x))) * gm[u];
      }
    }
    if (grad) *grad = -*grad;
    return -val;
  };
  const MatrixConstraints cons = [&](const CMat& z, std::vector<CMat>* grads) {
    RVec q = qos(z, grads);
    if (!opts.sensing_constraint) return q;
    CMat g;
    const double v = sensing(z, grads ? &g : nullptr);
    RVec all(q.size() + 1);
    all << q, (v - eps) / eps;
    if (grads) grads->push_back(g / eps);
    return all;
  };
  auto sr_of = [&](const CMat& z) { return secrecy_rate(to_transmit(z, u_count, pw, s.tx_array), s.users, eve, opts.metric); };

  CMat best = feasible(z_sense) ? z_sense : z_safe;
  double best_sr = sr_of(best);
  auto consider = [&](const CMat& z) {
    if (!feasible(z)) return;
    const double v = sr_of(z);
    if (v > best_sr) {
      best_sr = v;
      best = z;
    }
  };
  consider(z_safe);
  consider(z_sense);
  std::vector<CMat> starts = {z_sense};
  if (an) {
    // the best design without AN is a point of this problem too
    SecureOptions plain = opts;
    plain.artificial_noise = false;
    plain.sensing_tolerance = opts.sensing_constraint ? std::optional<double>(eps) : std::nullopt;
    try {
      const auto r = solve_secure(s, eve, plain);
      out.plain_secrecy_rate = r.secrecy_rate;
      CMat z(n, u_count + n);
      z << r.transmit.w_comm, CMat::Zero(n, n);
      consider(z);
      starts.push_back(z);
    } catch (const InfeasibleError&) {
    }
  }
  if (opts.random_start) {
    Rng rng(opts.seed);
    starts.push_back(proj(rng.cgaussian_mat(n, u_count + n)));
  }
  AlOptions o;
  o.outer_iterations = opts.max_outer;
  o.inner = PgOptions{opts.inner_iterations, 1e-9, 5, 1e-2};
  o.on_outer = consider;
  for (const auto& z0 : starts) {
    const auto r = augmented_lagrangian(f, cons, proj, z0, o);
    out.iterations += r.iterations;
    consider(r.x);
  }

  out.transmit = to_transmit(best, u_count, pw, s.tx_array);
  out.secrecy_rate = best_sr;
  out.eve_rate = worst_eve_rate(out.transmit, eve);
  out.sinr = user_sinr(out.transmit, s.users);
  out.sensing_metric = sensing(best, nullptr);
  return out;
}

CVec dm_design(const CVec& w_rad, const ArrayGeometry& tx, const std::vector<double>& user_angles_deg,
               const std::vector<cplx>& symbols, const std::vector<double>& eve_angles_deg) {
  if (user_angles_deg.size() != symbols.size())
    throw ContractError("dm_design: one symbol per user angle required");
  if (w_rad.size() != tx.num_elements) throw ContractError("dm_design: radar beam length != N_t");
  const std::size_t k = user_angles_deg.size() + eve_angles_deg.size();
  if (k > static_cast<std::size_t>(tx.num_elements)) throw DomainError("dm_design: more constraints than antennas");
  CMat a(tx.num_elements, static_cast<Eigen::Index>(k));
  CVec target(static_cast<Eigen::Index>(k));
  for (std::size_t u = 0; u < user_angles_deg.size(); ++u) {
    a.col(static_cast<Eigen::Index>(u)) = steering_vector(tx, user_angles_deg[u]);
    target(static_cast<Eigen::Index>(u)) = std::conj(symbols[u]);  // a^H w = conj(w^H a)
  }
  for (std::size_t e = 0; e < eve_angles_deg.size(); ++e) {
    const auto i = static_cast<Eigen::Index>(user_angles_deg.size() + e);
    a.col(i) = steering_vector(tx, eve_angles_deg[e]);
    target(i) = a.col(i).dot(w_rad);
  }
  if (k == 0) return w_rad;
  const CMat gram = a.adjoint() * a;
  Eigen::ColPivHouseholderQR<CMat> qr(gram);
  qr.setThreshold(1e-10);
  if (qr.rank() < gram.rows()) throw SingularError("dm_design: steering vectors are linearly dependent");
  return w_rad + a * qr.solve(CVec(target - a.adjoint() * w_rad));
}

std::vector<CVec> dm_beam_set(const CVec& w_rad, const ArrayGeometry& tx, const std::vector<double>& user_angles_deg,
                              const std::vector<std::vector<cplx>>& dictionaries,
                              const std::vector<double>& eve_angles_deg) {
  if (dictionaries.size() != user_angles_deg.size())
    throw ContractError("dm_beam_set: one dictionary per user angle required");
  for (const auto& d : dictionaries)
    if (d.empty()) throw ContractError("dm_beam_set: empty symbol dictionary");
  std::vector<CVec> beams;
  std::vector<std::size_t> idx(dictionaries.size(), 0);
  while (true) {
    std::vector<cplx> sym;
    for (std::size_t u = 0; u < idx.size(); ++u) sym.push_back(dictionaries[u][idx[u]]);
    beams.push_back(dm_design(w_rad, tx, user_angles_deg, sym, eve_angles_deg));
    std::size_t u = idx.size();
    while (u > 0 && ++idx[u - 1] == dictionaries[u - 1].size()) idx[--u] = 0;
    if (u == 0) break;
  }
  return beams;
}

void write_secure_beampattern_csv(const std::vector<CMat>& covariances, const ArrayGeometry& tx,
                                  const RVec& angles_deg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "angle_deg,gain_db,beam_index\n";
  for (std::size_t k = 0; k < covariances.size(); ++k) {
    const RVec p = beampattern(covariances[k], tx, angles_deg);
    for (Eigen::Index i = 0; i < angles_deg.size(); ++i)
      out << angles_deg(i) << ',' << lin2db(std::max(p(i), 1e-30)) << ',' << k << '\n';
  }
}

}  // namespace isac
