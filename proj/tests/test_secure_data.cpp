#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "isac/secure_data.hpp"

using namespace isac;

namespace {

AnTransmit random_transmit(Rng& rng, int n, int u, double an_scale = 1.0) {
  AnTransmit t;
  t.tx = ArrayGeometry{n, 0.5};
  t.w_comm = rng.cgaussian_mat(n, u);
  const CMat v = rng.cgaussian_mat(n, n) * an_scale;
  t.an_covariance = v * v.adjoint();
  return t;
}

// Element-wise evaluation of the Eve rate.
double eve_rate_oracle(const AnTransmit& t, const EveModel& e) {
  const Eigen::Index n = t.w_comm.rows();
  CVec a(n);
  for (Eigen::Index i = 0; i < n; ++i) a(i) = std::polar(1.0, kPi * static_cast<double>(i) * std::sin(deg2rad(e.angle_deg)));
  double sig = 0.0, jam = 0.0;
  for (Eigen::Index k = 0; k < t.w_comm.cols(); ++k) {
    cplx acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) acc += std::conj(a(i)) * t.w_comm(i, k);
    sig += std::norm(acc);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) jam += (std::conj(a(i)) * t.an_covariance(i, j) * a(j)).real();
  const double b2 = std::norm(e.path_loss);
  return std::log2(1.0 + b2 * sig / (b2 * jam + e.noise_power));
}

Scenario two_user_scenario() {
  return parse_scenario(
      R"({"tx_elements": 16, "power_budget": 10, "users": [{"angle_deg": -45}, {"angle_deg": 30}],
          "targets": [{"angle_deg": 0, "eavesdropper": true}]})");
}

}  // namespace

TEST_CASE("Eve rate") {
  Rng rng(1);
  AnTransmit t = random_transmit(rng, 6, 2);
  EveModel e;
  e.angle_deg = 25.0;
  e.path_loss = 0.0;
  CHECK(eve_rate(t, e) == 0.0);
  t.an_covariance.setZero();
  e.path_loss = cplx(0.3, -0.4);
  CHECK(eve_rate(t, e) == doctest::Approx(eve_rate_oracle(t, e)).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const AnTransmit r = random_transmit(rng, 8, 3, 0.5);
    e.angle_deg = -60.0 + 6.0 * trial;
    e.noise_power = 0.1 + trial;
    CHECK(eve_rate(r, e) == doctest::Approx(eve_rate_oracle(r, e)).epsilon(1e-12));
  }

  // jamming limit
  double prev = kPi * 100;
  for (double scale : {1.0, 10.0, 1e3, 1e5}) {
    const AnTransmit j = random_transmit(rng, 6, 2, scale);
    AnTransmit fixed = t;
    fixed.an_covariance = j.an_covariance;
    const double r = eve_rate(fixed, e);
    CHECK(r <= prev);
    prev = r;
  }
  CHECK(prev < 1e-3);

  e.noise_power = 0.0;
  CHECK_THROWS_AS(eve_rate(t, e), DomainError);
}

TEST_CASE("worst-case Eve rate over the uncertainty interval") {
  Rng rng(2);
  const AnTransmit t = random_transmit(rng, 8, 2, 0.3);
  EveModel e;
  e.angle_deg = 10.0;
  e.uncertainty_deg = 4.0;
  double brute = 0.0;
  for (double th = 6.0; th <= 14.0 + 1e-9; th += 0.5) brute = std::max(brute, eve_rate(t, e, th));
  CHECK(worst_eve_rate(t, e) == doctest::Approx(brute));
  e.uncertainty_deg = 0.0;
  CHECK(worst_eve_rate(t, e) == eve_rate(t, e));
}

TEST_CASE("secrecy rate") {
  // two users on orthogonal unit channels, Eve on e_0
  AnTransmit t;
  t.tx = ArrayGeometry{2, 0.5};
  t.w_comm = CMat::Zero(2, 2);
  t.w_comm(0, 0) = 2.0;  // user 0: |2|^2 / (0 + 0.5 + 1) from AN 0.5 on antenna 0
  t.w_comm(1, 1) = 1.0;  // user 1: 1 / (0 + 0.25 + 1)
  t.an_covariance = CMat::Zero(2, 2);
  t.an_covariance(0, 0) = 0.5;
  t.an_covariance(1, 1) = 0.25;
  std::vector<CommUser> users(2);
  users[0].channel = CVec::Unit(2, 0);
  users[1].channel = CVec::Unit(2, 1);
  const RVec rb = user_rates(t, users);
  CHECK(rb(0) == doctest::Approx(std::log2(1.0 + 4.0 / 1.5)));
  CHECK(rb(1) == doctest::Approx(std::log2(1.0 + 1.0 / 1.25)));

  // Eve looking broadside sees a = [1, 1]: signal |2|^2 + |1|^2 = 5, AN 0.75
  EveModel e;
  e.angle_deg = 0.0;
  e.path_loss = 0.5;
  e.noise_power = 1.0;
  const double re = std::log2(1.0 + 0.25 * 5.0 / (0.25 * 0.75 + 1.0));
  CHECK(eve_rate(t, e) == doctest::Approx(re));
  CHECK(secrecy_rate(t, users, e) == doctest::Approx(std::max(0.0, rb.minCoeff() - re)));
  CHECK(secrecy_rate(t, users, e, SecrecyMetric::Sum) ==
        doctest::Approx(std::max(0.0, rb(0) - re) + std::max(0.0, rb(1) - re)));

  e.noise_power = 1e30;
  CHECK(secrecy_rate(t, users, e) == doctest::Approx(rb.minCoeff()));
  e.noise_power = 1e-9;
  e.path_loss = 100.0;
  CHECK(secrecy_rate(t, users, e) == 0.0);

  // nonincreasing in Eve's SNR
  Rng rng(4);
  const AnTransmit r = random_transmit(rng, 6, 2, 0.2);
  std::vector<CommUser> ru(2);
  for (auto& u : ru) u.channel = rng.cgaussian_vec(6) * 3.0;
  e.noise_power = 1.0;
  double prev = kPi * 100;
  for (double beta : {0.0, 0.1, 0.3, 1.0, 3.0}) {
    e.path_loss = beta;
    const double sr = secrecy_rate(r, ru, e);
    CHECK(sr >= 0.0);
    CHECK(sr <= prev + 1e-12);
    prev = sr;
  }
}

TEST_CASE("loose constraints reach the MISO wiretap optimum") {
  const auto s = parse_scenario(
      R"({"tx_elements": 8, "power_budget": 5, "users": [{"angle_deg": 20, "sinr_target_db": -30}],
          "targets": [{"angle_deg": 0, "eavesdropper": true}]})");
  SecureOptions o;
  o.sensing_constraint = false;
  const auto r = solve_secure(s, eve_model(s), o);
  // max over ||w||^2 <= P of log2((1 + P|h^H w|^2)/(1 + P|a^H w|^2)) is the generalized eigenvalue
  const CVec h = s.users[0].channel, a = steering_vector(s.tx_array, 0.0);
  const CMat num = CMat::Identity(8, 8) + 5.0 * h * h.adjoint();
  const CMat den = CMat::Identity(8, 8) + 5.0 * a * a.adjoint();
  Eigen::GeneralizedSelfAdjointEigenSolver<CMat> es(num, den);
  CHECK(r.secrecy_rate == doctest::Approx(std::log2(es.eigenvalues().maxCoeff())).epsilon(1e-4));
}

TEST_CASE("AN-aided design under angular uncertainty") {
  const auto s = two_user_scenario();
  double prev_sr = 1e9, prev_width = 0.0;
  for (double d : {0.0, 5.0, 10.0}) {
    const auto e = eve_model(s, d);
    const auto r = solve_secure(s, e);
    CHECK(r.transmit.power() <= s.power_budget * (1.0 + 1e-9));
    for (Eigen::Index u = 0; u < 2; ++u)
      CHECK(r.sinr(u) >= s.users[static_cast<std::size_t>(u)].sinr_target() * (1.0 - 1e-6));
    CHECK(r.sensing_metric <= r.sensing_tolerance * (1.0 + 1e-9));
    const double width = mainlobe_width_deg(r.transmit.covariance(), s.tx_array, 0.0);
    MESSAGE("dtheta " << d << ": SR " << r.secrecy_rate << ", mainlobe " << width << " deg");
    CHECK(r.secrecy_rate < prev_sr);
    CHECK(width > prev_width);
    prev_sr = r.secrecy_rate;
    prev_width = width;

    if (d == 0.0) {
      SecureOptions plain;
      plain.artificial_noise = false;
      plain.sensing_tolerance = r.sensing_tolerance;
      const auto no_an = solve_secure(s, e, plain);
      CHECK(no_an.transmit.an_covariance.norm() == 0.0);
      CHECK(r.secrecy_rate >= no_an.secrecy_rate);
    }
  }
}

TEST_CASE("secure design reports which constraint is infeasible") {
  auto s = two_user_scenario();
  s.power_budget = 0.01;
  try {
    solve_secure(s, eve_model(s));
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).rfind("QoS", 0) == 0);
  }
  s.power_budget = 10.0;
  SecureOptions o;
  o.sensing_tolerance = 1e-9;
  try {
    solve_secure(s, eve_model(s), o);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(std::string(e.what()).rfind("sensing", 0) == 0);
  }
  Scenario no_eve = s;
  no_eve.targets[0].is_eavesdropper = false;
  CHECK_THROWS_AS(eve_model(no_eve), DomainError);
}

TEST_CASE("directional modulation: single-user closed form") {
  const ArrayGeometry tx{10, 0.5};
  Rng rng(5);
  const CVec w_rad = steering_vector(tx, 5.0);
  const CVec a = steering_vector(tx, -35.0);
  for (int trial = 0; trial < 5; ++trial) {
    const cplx sym = rng.cgaussian(4.0);
    const CVec w = dm_design(w_rad, tx, {-35.0}, {sym});
    CHECK(std::abs(w.dot(a) - sym) < 1e-10);  // w^H a
    // KKT system [I a; a^H 0][w; nu] = [w_rad; conj(sym)]
    CMat k = CMat::Zero(11, 11);
    k.topLeftCorner(10, 10) = CMat::Identity(10, 10);
    k.topRightCorner(10, 1) = a;
    k.bottomLeftCorner(1, 10) = a.adjoint();
    CVec rhs(11);
    rhs << w_rad, std::conj(sym);
    const CVec sol = k.fullPivLu().solve(rhs);
    CHECK((sol.head(10) - w).norm() < 1e-10);
  }
  // a symbol equal to the radar beam's own sidelobe leaves it unchanged
  const cplx side = w_rad.dot(a);
  CHECK((dm_design(w_rad, tx, {-35.0}, {side}) - w_rad).norm() < 1e-12);
  CHECK_THROWS_AS(dm_design(w_rad, tx, {-35.0, -35.0}, {1.0, 1.0}), SingularError);
  CHECK_THROWS_AS(dm_design(w_rad, tx, {-35.0}, {1.0, 2.0}), ContractError);
}

TEST_CASE("directional modulation: minimum distance and beam set") {
  const ArrayGeometry tx{32, 0.5};
  const CVec w_rad = steering_vector(tx, 0.0);
  std::vector<cplx> qpsk;
  for (int k = 0; k < 4; ++k) qpsk.push_back(std::polar(2.0, kPi / 4.0 + k * kPi / 2.0));
  const std::vector<double> users = {-40.0, 60.0};
  const auto beams = dm_beam_set(w_rad, tx, users, {qpsk, qpsk});
  REQUIRE(beams.size() == 16);
  double lo = 1e9, hi = -1e9;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    const auto& w = beams[b];
    CHECK(std::abs(w.dot(steering_vector(tx, -40.0)) - qpsk[b / 4]) < 1e-10);
    CHECK(std::abs(w.dot(steering_vector(tx, 60.0)) - qpsk[b % 4]) < 1e-10);
    const double g = lin2db(std::norm(w.dot(steering_vector(tx, 0.0))));
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  CHECK(hi - lo < 0.5);

  // any feasible perturbation moves further from w_rad
  Rng rng(6);
  CMat a(32, 2);
  a << steering_vector(tx, -40.0), steering_vector(tx, 60.0);
  const CMat null_proj = CMat::Identity(32, 32) - a * (a.adjoint() * a).inverse() * a.adjoint();
  const double d0 = (beams[5] - w_rad).norm();
  for (int t = 0; t < 50; ++t) {
    const CVec p = null_proj * rng.cgaussian_vec(32) * 0.1;
    const CVec w = beams[5] + p;
    CHECK(std::abs(w.dot(a.col(0)) - qpsk[1]) < 1e-9);
    CHECK((w - w_rad).norm() > d0);
  }

  // Eve constraint: one complex gain toward Eve across every beam
  const auto secured = dm_beam_set(w_rad, tx, users, {qpsk, qpsk}, {20.0});
  const CVec ae = steering_vector(tx, 20.0);
  for (const auto& w : secured) CHECK(std::abs(w.dot(ae) - w_rad.dot(ae)) < 1e-10);
  double spread_plain = 0.0;
  for (const auto& w : beams) spread_plain = std::max(spread_plain, std::abs(w.dot(ae) - w_rad.dot(ae)));
  CHECK(spread_plain > 1e-3);
}

TEST_CASE("secure beampattern CSV") {
  const ArrayGeometry tx{8, 0.5};
  const CVec w = steering_vector(tx, 0.0);
  const auto path = std::filesystem::temp_directory_path() / "isac_secure_bp.csv";
  write_secure_beampattern_csv({CMat(w * w.adjoint()), CMat::Identity(8, 8)}, tx, RVec::LinSpaced(3, -10, 10), path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "angle_deg,gain_db,beam_index");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 6);
  std::filesystem::remove(path);
}
