#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "isac/precoding_blp.hpp"

using namespace isac;

namespace {

Scenario two_user_scenario(double power = 10.0) {
  return parse_scenario(
      R"({"tx_elements": 16, "users": [{"angle_deg": -45}, {"angle_deg": 30}], "targets": [{"angle_deg": 0}]})",
      {{"power_budget", std::to_string(power)}});
}

CommUser user_with(const CVec& h, double noise = 1.0) {
  CommUser u;
  u.channel = h;
  u.noise_power = noise;
  return u;
}

PrecoderSet random_precoder(Rng& rng, int n, int u) {
  PrecoderSet p;
  p.w_comm = rng.cgaussian_mat(n, u);
  p.w_radar = rng.cgaussian_mat(n, n);
  p.power_budget = p.power();
  return p;
}

// Directional derivative check of a Wirtinger gradient: d/dt f(W + tD) = 2 Re <G, D>.
template <typename F>
double gradient_mismatch(F f, const CMat& w, const CMat& d) {
  CMat g;
  f(w, &g);
  const double h = 1e-6;
  const double fd = (f(w + h * d, nullptr) - f(w - h * d, nullptr)) / (2.0 * h);
  const double an = 2.0 * (g.array().conjugate() * d.array()).sum().real();
  return std::abs(fd - an) / std::max(std::abs(an), 1e-12);
}

}  // namespace

TEST_CASE("transmit covariance") {
  PrecoderSet p;
  p.w_comm = CMat::Zero(4, 2);
  p.w_radar = CMat::Identity(4, 4);
  CHECK((transmit_covariance(p) - CMat::Identity(4, 4)).norm() == 0.0);

  Rng rng(1);
  PrecoderSet q;
  q.w_comm = rng.cgaussian_mat(6, 2);
  q.w_radar = rng.cgaussian_mat(6, 1);
  const CMat r = transmit_covariance(q);
  CHECK((r - r.adjoint()).norm() < 1e-12);
  Eigen::JacobiSVD<CMat> svd_w(q.stacked());
  Eigen::JacobiSVD<CMat> svd_r(r);
  svd_w.setThreshold(1e-10);
  svd_r.setThreshold(1e-10);
  CHECK(svd_r.rank() == svd_w.rank());
  CHECK(svd_r.rank() == 3);
}

TEST_CASE("user SINR: MRT, ZF nulling and the direct formula") {
  Rng rng(2);
  const CVec h = rng.cgaussian_vec(8);
  PrecoderSet mrt;
  mrt.w_comm = h / h.norm() * std::sqrt(2.0);
  mrt.w_radar = CMat::Zero(8, 8);
  CHECK(user_sinr(mrt, {user_with(h, 0.5)})(0) == doctest::Approx(2.0 * h.squaredNorm() / 0.5));

  const std::vector<CommUser> users = {user_with(rng.cgaussian_vec(8)), user_with(rng.cgaussian_vec(8))};
  const auto zf = zf_waterfilling(users, 1.0, 8);
  for (int u = 0; u < 2; ++u)
    for (int i = 0; i < 2; ++i)
      if (u != i) CHECK(std::abs(users[u].channel.dot(zf.w_comm.col(i))) < 1e-9);
  CHECK(zf.power() == doctest::Approx(1.0).epsilon(1e-9));

  const std::vector<CommUser> three = {user_with(rng.cgaussian_vec(5), 0.3), user_with(rng.cgaussian_vec(5), 1.0),
                                       user_with(rng.cgaussian_vec(5), 2.0)};
  const auto p = random_precoder(rng, 5, 3);
  const RVec g = user_sinr(p, three);
  for (int u = 0; u < 3; ++u) {
    double interf = three[u].noise_power;
    for (int i = 0; i < 3; ++i)
      if (i != u) interf += std::norm(three[u].channel.dot(p.w_comm.col(i)));
    for (int r = 0; r < 5; ++r) interf += std::norm(three[u].channel.dot(p.w_radar.col(r)));
    CHECK(g(u) == doctest::Approx(std::norm(three[u].channel.dot(p.w_comm.col(u))) / interf).epsilon(1e-12));
  }
}

TEST_CASE("MUI energy") {
  Rng rng(3);
  const std::vector<CommUser> users = {user_with(rng.cgaussian_vec(6)), user_with(rng.cgaussian_vec(6))};
  CMat h(2, 6);
  h.row(0) = users[0].channel.adjoint();
  h.row(1) = users[1].channel.adjoint();
  const CMat s = rng.cgaussian_mat(2, 10);
  const CMat x_pinv = h.completeOrthogonalDecomposition().pseudoInverse() * s;
  CHECK(mui_energy(x_pinv, s, users) < 1e-20 * s.squaredNorm() + 1e-20);
  CHECK(mui_energy(CMat::Zero(6, 10), s, users) == doctest::Approx(s.squaredNorm()));

  const CMat x = rng.cgaussian_mat(6, 10);
  double oracle = 0.0;
  for (int u = 0; u < 2; ++u)
    for (int l = 0; l < 10; ++l) {
      cplx acc = 0.0;
      for (int n = 0; n < 6; ++n) acc += std::conj(users[u].channel(n)) * x(n, l);
      oracle += std::norm(acc - s(u, l));
    }
  CHECK(mui_energy(x, s, users) == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("sum rate") {
  const CVec e1 = CVec::Unit(4, 0), e2 = CVec::Unit(4, 1);
  const std::vector<CommUser> users = {user_with(e1), user_with(e2)};
  PrecoderSet p;
  p.w_comm = CMat::Zero(4, 2);
  p.w_comm.col(0) = e1;
  p.w_comm.col(1) = e2;
  p.w_radar = CMat::Zero(4, 4);
  CHECK(sum_rate(p, users) == doctest::Approx(2.0));
  p.w_comm.col(0) = std::sqrt(3.0) * e1;
  p.w_comm.col(1).setZero();
  CHECK(sum_rate(p, users) == doctest::Approx(2.0));

  Rng rng(4);
  const auto q = random_precoder(rng, 4, 2);
  const RVec g = user_sinr(q, users);
  CHECK(sum_rate(q, users) == doctest::Approx(std::log2(1 + g(0)) + std::log2(1 + g(1))));
}

TEST_CASE("beampattern MSE") {
  const ArrayGeometry tx{8, 0.5};
  const double power = 3.0;
  DesiredBeampattern flat;
  flat.angles_deg = RVec::LinSpaced(181, -90.0, 90.0);
  flat.gains = RVec::Constant(181, power);
  CHECK(beampattern_mse(CMat::Identity(8, 8) * (power / 8.0), tx, flat, AlphaMode::Fixed, 1.0) < 1e-20);

  const CVec a0 = steering_vector(tx, 20.0);
  const CMat r = power * a0 * a0.adjoint() / 8.0;
  RVec at(1);
  at << 20.0;
  CHECK(beampattern(r, tx, at)(0) == doctest::Approx(power * 8.0));

  const auto desired = make_desired_beampattern({-10.0}, 8.0);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_precoder(rng, 8, 2);
    CHECK(beampattern_mse(p, tx, desired, AlphaMode::Optimized) <=
          beampattern_mse(p, tx, desired, AlphaMode::Fixed, 1.0) + 1e-12);
    // invariance to a unitary mixing of the communication beams
    const CMat q = Eigen::HouseholderQR<CMat>(rng.cgaussian_mat(2, 2)).householderQ();
    PrecoderSet mixed = p;
    mixed.w_comm = p.w_comm * q;
    CHECK(beampattern_mse(mixed, tx, desired) == doctest::Approx(beampattern_mse(p, tx, desired)).epsilon(1e-10));
  }
}

TEST_CASE("desired beampattern shape") {
  const auto d = make_desired_beampattern({0.0}, 10.0, 1.0, 2.0, -30.0);
  CHECK(d.angles_deg.size() == 181);
  for (Eigen::Index i = 1; i < d.angles_deg.size(); ++i) CHECK(d.angles_deg(i) > d.angles_deg(i - 1));
  CHECK(d.gains(90) == 1.0);
  CHECK(d.gains(100) == 1.0);
  CHECK(d.gains(101) == doctest::Approx(0.5 * (1.0 + 1e-3)));
  CHECK(d.gains(102) == doctest::Approx(1e-3));
  CHECK(d.gains(0) == doctest::Approx(1e-3));
}

TEST_CASE("CRLB: Fisher information against a finite-difference Hessian") {
  Rng rng(6);
  CrlbModel m;
  m.tx = {6, 0.5};
  m.rx = {4, 0.5};
  m.angle_deg = 12.0;
  m.amplitude = cplx(0.8, -0.6);
  m.snapshots = 20;
  m.noise_power = 0.7;
  const CMat x = rng.cgaussian_mat(6, m.snapshots);
  const CMat r = x * x.adjoint() / double(m.snapshots);

  // mean of Y as a function of eta = (theta rad, Re alpha, Im alpha)
  auto mean = [&](const Eigen::Vector3d& eta) {
    const double deg = rad2deg(eta(0));
    const CVec a = steering_vector(m.tx, deg), b = steering_vector(m.rx, deg);
    return CMat(cplx(eta(1), eta(2)) * b * a.adjoint() * x);
  };
  const Eigen::Vector3d eta0(deg2rad(m.angle_deg), m.amplitude.real(), m.amplitude.imag());
  const CMat y0 = mean(eta0);
  auto nll = [&](const Eigen::Vector3d& eta) { return (y0 - mean(eta)).squaredNorm() / m.noise_power; };
  Eigen::Matrix3d hess;
  const double h = 1e-4;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d pp = eta0, pm = eta0, mp = eta0, mm = eta0;
      pp(i) += h, pp(j) += h;
      pm(i) += h, pm(j) -= h;
      mp(i) -= h, mp(j) += h;
      mm(i) -= h, mm(j) -= h;
      hess(i, j) = (nll(pp) - nll(pm) - nll(mp) + nll(mm)) / (4.0 * h * h);
    }
  const RMat fim = fisher_information(r, m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fim(i, j) - hess(i, j)) <= 1e-4 * fim.cwiseAbs().maxCoeff());
  CHECK(crlb_angle(r, m) == doctest::Approx(fim.inverse()(0, 0)).epsilon(1e-9));
}

TEST_CASE("CRLB scaling, monotonicity and singular beams") {
  CrlbModel m;
  m.tx = {8, 0.5};
  m.rx = {8, 0.5};
  m.angle_deg = 5.0;
  const CMat r = CMat::Identity(8, 8) / 8.0;
  CHECK(crlb_angle(2.0 * r, m) == doctest::Approx(0.5 * crlb_angle(r, m)).epsilon(1e-12));

  // more power along a(theta) on top of a fixed background
  const CVec a = steering_vector(m.tx, m.angle_deg);
  double prev = crlb_angle(r, m);
  for (double extra : {0.1, 0.5, 1.0, 4.0}) {
    const double c = crlb_angle(r + extra * a * a.adjoint() / 8.0, m);
    CHECK(c < prev);
    prev = c;
  }

  // a beam orthogonal to both a(theta) and its derivative leaves theta unobservable
  CMat basis(8, 2);
  basis << a, steering_derivative(m.tx, m.angle_deg);
  const CMat q = Eigen::HouseholderQR<CMat>(basis).householderQ();
  const CVec w = q.col(5);
  CHECK(std::isinf(crlb_angle(CMat(w * w.adjoint()), m)));
}

TEST_CASE("objective gradients match finite differences") {
  const auto s = two_user_scenario(1.0);
  Rng rng(7);
  for (auto metric : {SensingMetric::Beampattern, SensingMetric::Crlb}) {
    TradeoffOptions o;
    o.metric = metric;
    o.max_iterations = 50;
    o.random_starts = 0;
    const TradeoffProblem prob(s, o);
    const CMat w = rng.cgaussian_mat(16, 18) * 0.2;
    const CMat d = rng.cgaussian_mat(16, 18);
    CHECK(gradient_mismatch([&](const CMat& x, CMat* g) { return prob.comm(x, g); }, w, d) < 1e-5);
    CHECK(gradient_mismatch([&](const CMat& x, CMat* g) { return prob.sensing(x, g); }, w, d) < 1e-5);
    CHECK(gradient_mismatch([&](const CMat& x, CMat* g) { return prob.objective(x, 0.4, g); }, w, d) < 1e-5);
  }
}

TEST_CASE("minimum-power beamforming meets the SINR targets") {
  Rng rng(8);
  std::vector<CommUser> users;
  for (int u = 0; u < 3; ++u) users.push_back(user_with(rng.cgaussian_vec(6), 0.5 + u));
  const RVec gamma = RVec::Constant(3, db2lin(10.0));
  const auto p = min_power_beamforming(users, gamma, 6);
  const RVec g = user_sinr(p, users);
  for (int u = 0; u < 3; ++u) CHECK(g(u) == doctest::Approx(gamma(u)).epsilon(1e-8));

  // ZF at the same targets needs at least as much power
  CMat h(3, 6);
  for (int u = 0; u < 3; ++u) h.row(u) = users[u].channel.adjoint();
  const CMat v = h.adjoint() * (h * h.adjoint()).inverse();
  double zf_power = 0.0;
  for (int u = 0; u < 3; ++u) zf_power += gamma(u) * users[u].noise_power * v.col(u).squaredNorm();
  CHECK(p.power() <= zf_power * (1.0 + 1e-9));
}

TEST_CASE("tradeoff sweep: endpoints and Pareto front") {
  const auto s = two_user_scenario();
  const auto pts = sweep_tradeoff(s, {0.0, 0.25, 0.5, 0.75, 1.0});
  REQUIRE(pts.size() == 5);
  for (const auto& p : pts) CHECK(p.precoders.within_budget());
  CHECK(is_pareto_monotone(pts));
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].comm_metric >= pts[i - 1].comm_metric - 1e-9);
    CHECK(pts[i].sensing_metric >= pts[i - 1].sensing_metric - 1e-9);
  }
  CHECK(pts[0].sensing_metric <= pts[2].sensing_metric);
  CHECK(pts[0].sensing_metric <= 0.1 * pts[4].sensing_metric);

  const RVec zf = user_sinr(zf_waterfilling(s.users, s.power_budget, 16), s.users);
  const RVec top = user_sinr(pts[4].precoders, s.users);
  for (int u = 0; u < 2; ++u) CHECK(lin2db(top(u)) >= lin2db(zf(u)) - 0.1);
}

TEST_CASE("joint CRLB design dominates the ZF baseline") {
  const auto s = two_user_scenario();
  for (double sinr : {0.0, 8.0, 14.0}) {
    const auto zf = zf_crlb_baseline(s, sinr);
    const auto joint = joint_crlb_design(s, sinr);
    REQUIRE(zf.feasible);
    CHECK(joint.crlb <= zf.crlb);
    CHECK(joint.min_sinr_db >= sinr - 1e-6);
    CHECK(zf.min_sinr_db == doctest::Approx(sinr).epsilon(1e-9));
    CHECK(joint.precoders.within_budget());
  }
  CHECK_FALSE(zf_crlb_baseline(s, 30.0).feasible);
}

TEST_CASE("tradeoff CSV header") {
  TradeoffPoint p;
  p.rho = 0.5;
  p.comm_metric = 3.0;
  p.sensing_metric = 0.25;
  p.iterations = 12;
  p.converged = true;
  const auto path = std::filesystem::temp_directory_path() / "isac_tradeoff.csv";
  write_tradeoff_csv({p}, path);
  std::ifstream in(path);
  std::string a, b;
  std::getline(in, a);
  std::getline(in, b);
  CHECK(a == "rho,comm_metric,sensing_metric,security_metric,iterations,converged");
  CHECK(b == "0.5,3,0.25,,12,1");
  std::filesystem::remove(path);
}
