#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "isac/constellation.hpp"
#include "isac/precoding_slp.hpp"

using namespace isac;

namespace {

Scenario rayleigh_scenario(int nt, int nu, std::uint64_t seed, double power = 100.0, const std::string& targets = "") {
  std::string js = R"({"tx_elements": )" + std::to_string(nt) + R"(, "seed": )" + std::to_string(seed) +
                   R"(, "power_budget": )" + std::to_string(power) + R"(, "users": [)";
  for (int u = 0; u < nu; ++u) js += std::string(u ? "," : "") + "{}";
  js += R"(], "targets": [)" + (targets.empty() ? std::string(R"({"angle_deg": 0})") : targets) + "]}";
  return parse_scenario(js);
}

CiConstraint constraint(const CVec& h, double phase, int m, double gamma = 10.0, double noise = 1.0) {
  CiConstraint c;
  c.user_channel = h;
  c.symbol_phase = phase;
  c.snr_target = gamma;
  c.noise_power = noise;
  c.modulation_order = m;
  return c;
}

double cross(cplx a, cplx b) { return a.real() * b.imag() - a.imag() * b.real(); }

// Inclusion in the sector with apex t e^{j phi} bounded by the rays
// e^{j(phi +- pi/M)}, tested as an intersection of two half-planes.
bool in_sector(cplx p, double phi, double t, int m) {
  const cplx apex = std::polar(t, phi);
  const cplx upper = std::polar(1.0, phi + kPi / m), lower = std::polar(1.0, phi - kPi / m);
  return cross(upper, p - apex) <= 0.0 && cross(lower, p - apex) >= 0.0;
}

// A vector x with h^H x = r for h = e_0.
CVec point_to_x(cplx r, int n = 3) {
  CVec x = CVec::Zero(n);
  x(0) = r;
  return x;
}

std::vector<int> qpsk_symbols(std::initializer_list<int> v) { return std::vector<int>(v); }

}  // namespace

TEST_CASE("CI margin at the apex and for BPSK") {
  const CVec h = CVec::Unit(3, 0);
  for (int m : {2, 4, 8}) {
    const auto c = make_psk(m);
    for (Eigen::Index k = 0; k < c.points.size(); ++k) {
      const double phi = std::arg(c.points(k));
      const auto ci = constraint(h, phi, m);
      CHECK(std::abs(ci_margin(point_to_x(ci.threshold() * c.points(k)), ci)) < 1e-12);
    }
  }
  Rng rng(3);
  const auto ci = constraint(h, kPi, 2, 4.0);
  for (int i = 0; i < 2000; ++i) {
    const cplx r = rng.cgaussian(25.0);
    const bool inside = (r * std::polar(1.0, -kPi)).real() >= 2.0;
    CHECK((ci_margin(point_to_x(r), ci) >= 0.0) == inside);
  }
}

TEST_CASE("CI margin sign matches a geometric sector test") {
  const CVec h = CVec::Unit(3, 0);
  Rng rng(8);
  for (int m : {4, 8}) {
    int inside = 0, mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const double phi = 2.0 * kPi * static_cast<double>(rng.below(static_cast<std::uint64_t>(m))) / m +
                         (m == 4 ? kPi / 4.0 : 0.0);
      const auto ci = constraint(h, phi, m, 2.0);
      const cplx r = rng.cgaussian(8.0) + std::polar(2.0, phi);
      const bool oracle = in_sector(r, phi, ci.threshold(), m);
      mismatches += (ci_margin(point_to_x(r), ci) >= 0.0) != oracle;
      inside += oracle;
    }
    CHECK(mismatches == 0);
    CHECK(inside > 1000);
    CHECK(inside < 9000);
  }
}

TEST_CASE("CI margin grows when a feasible point is scaled up") {
  Rng rng(2);
  const CVec h = rng.cgaussian_vec(4);
  const auto ci = constraint(h, kPi / 4.0, 4, 3.0);
  for (int i = 0; i < 200; ++i) {
    const CVec x = rng.cgaussian_vec(4) * 3.0;
    if (ci_margin(x, ci) < 0.0) continue;
    for (double c : {1.0, 1.5, 4.0}) CHECK(ci_margin(c * x, ci) >= ci_margin(x, ci) - 1e-12);
  }
}

TEST_CASE("DI zones partition the plane") {
  const CVec h = CVec::Unit(3, 0);
  const double phi = 3.0 * kPi / 4.0;
  const auto ci = constraint(h, phi, 4);
  CHECK(di_region_test(point_to_x(-std::polar(1.0, phi)), ci) == 2);
  CHECK(di_region_test(point_to_x(5.0 * std::polar(1.0, phi)), ci) == 0);

  Rng rng(4);
  std::array<int, 4> counts{};
  for (int i = 0; i < 10000; ++i) {
    const cplx r = rng.cgaussian(1.0);
    const int zone = di_region_test(point_to_x(r), ci);
    REQUIRE(zone >= 0);
    REQUIRE(zone <= 3);
    ++counts[static_cast<std::size_t>(zone)];
    // rotating the point back by the zone lands it in the intended sector
    const cplx back = r * std::polar(1.0, -phi - zone * kPi / 2.0);
    CHECK(std::abs(back.imag()) <= back.real() + 1e-12);
  }
  for (int c : counts) CHECK(std::abs(c - 2500) < 250);
  CHECK_THROWS_AS(di_region_test(point_to_x(1.0), constraint(h, 0.0, 8)), DomainError);
}

TEST_CASE("constraint validation") {
  const CVec h = CVec::Unit(2, 0);
  CHECK_THROWS_AS(check_constraint(constraint(h, 0.0, 6)), DomainError);
  CHECK_THROWS_AS(check_constraint(constraint(h, 0.0, 4, 0.0)), DomainError);
  CHECK_NOTHROW(check_constraint(constraint(h, 0.0, 16)));
}

TEST_CASE("single-user minimum power has the closed form") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto s = rayleigh_scenario(6, 1, seed);
    const auto& u = s.users[0];
    const auto c = make_psk(4);
    for (int k = 0; k < 4; ++k) {
      const auto sol = solve_symbol(s, {k}, SlpOptions{});
      const CVec expected = std::sqrt(u.sinr_target() * u.noise_power) * c.points(k) * u.channel /
                            u.channel.squaredNorm();
      CHECK((sol.x - expected).norm() < 1e-6);
      CHECK(sol.feasible);
    }
  }
}

TEST_CASE("orthogonal users decouple") {
  auto s = rayleigh_scenario(4, 2, 1);
  s.users[0].channel = CVec::Unit(4, 0) * cplx(1.0, 1.0);
  s.users[1].channel = CVec::Unit(4, 2) * 2.0;
  s.users[1].sinr_target_db = 5.0;
  const auto both = solve_symbol(s, qpsk_symbols({1, 3}), SlpOptions{});
  double sum = 0.0;
  for (int u = 0; u < 2; ++u) {
    Scenario one = s;
    one.users = {s.users[static_cast<std::size_t>(u)]};
    sum += solve_symbol(one, {u == 0 ? 1 : 3}, SlpOptions{}).x.squaredNorm();
  }
  CHECK(both.x.squaredNorm() == doctest::Approx(sum).epsilon(1e-9));
}

TEST_CASE("SLP needs no more power than a linear precoder with the same per-symbol guarantee") {
  for (auto [nt, nu] : {std::pair{8, 2}, std::pair{4, 3}}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto s = rayleigh_scenario(nt, nu, seed);
      const auto blp = blp_ci_min_power(s, 4);
      const auto stream = all_symbol_vectors(nu, 4);
      // the linear precoder itself is feasible for every symbol combination
      const auto c = make_psk(4);
      double avg = 0.0;
      for (const auto& v : stream) {
        CVec sym(nu);
        for (int u = 0; u < nu; ++u) sym(u) = c.points(v[static_cast<std::size_t>(u)]);
        const CVec x = blp.w_comm * sym;
        avg += x.squaredNorm() / static_cast<double>(stream.size());
        for (int u = 0; u < nu; ++u) {
          const auto& user = s.users[static_cast<std::size_t>(u)];
          CHECK(ci_margin(x, constraint(user.channel, std::arg(sym(u)), 4, user.sinr_target(), user.noise_power)) >=
                -1e-8);
        }
      }
      CHECK(avg == doctest::Approx(blp.power()).epsilon(1e-9));
      const auto r = slp_block_run(s, stream, SlpOptions{}, 1);
      CHECK(r.average_power <= blp.power() * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("block run: constraint feasibility, SER and empty stream") {
  const auto s = rayleigh_scenario(8, 3, 11);
  Rng rng(21);
  const auto stream = random_symbol_stream(3, 4, 200, rng);
  const auto r = slp_block_run(s, stream, SlpOptions{}, 20);
  CHECK(r.solves.size() == 200);
  CHECK(r.inside_ci_fraction == 1.0);
  for (const auto& sol : r.solves) CHECK(sol.ci_residuals.maxCoeff() <= 1e-9);
  const auto zf = zf_waterfilling(s.users, r.average_power, s.num_tx());
  const double zf_ser = blp_symbol_error_rate(s, zf, stream, 4, r.average_power, 20);
  MESSAGE("SLP SER " << r.symbol_error_rate << ", ZF SER " << zf_ser);
  CHECK(r.symbol_error_rate <= zf_ser);

  const auto empty = slp_block_run(s, {}, SlpOptions{});
  CHECK(empty.solves.empty());
  CHECK(empty.symbol_error_rate == 0.0);
  CHECK(empty.average_power == 0.0);
  CHECK(empty.average_beampattern_error == 0.0);
}

TEST_CASE("relaxing one SINR target never increases the minimum power") {
  auto s = rayleigh_scenario(6, 3, 5);
  const auto v = qpsk_symbols({0, 2, 3});
  double prev = solve_symbol(s, v, SlpOptions{}).x.squaredNorm();
  for (double db : {8.0, 5.0, 0.0, -5.0}) {
    s.users[1].sinr_target_db = db;
    const double p = solve_symbol(s, v, SlpOptions{}).x.squaredNorm();
    CHECK(p <= prev * (1.0 + 1e-9));
    prev = p;
  }
}

TEST_CASE("radar objectives stay feasible") {
  const auto s = rayleigh_scenario(8, 2, 7, 50.0, R"({"angle_deg": 20})");
  const auto v = qpsk_symbols({1, 2});
  SlpOptions o;
  const auto minp = solve_symbol(s, v, o);

  o.objective = SlpObjective::RadarBeamError;
  const auto beam = solve_symbol(s, v, o);
  CHECK(beam.feasible);
  const CVec x_ref = steering_vector(s.tx_array, 20.0) * std::sqrt(50.0 / 8.0);
  CHECK((beam.x - x_ref).squaredNorm() <= (minp.x - x_ref).squaredNorm() + 1e-9);
  CHECK(beam.objective == doctest::Approx((beam.x - x_ref).squaredNorm()));

  o.objective = SlpObjective::Crlb;
  const auto crlb = solve_symbol(s, v, o);
  CHECK(crlb.feasible);
  CHECK(crlb.x.squaredNorm() <= 50.0 * (1.0 + 1e-6));
  // the min-power point scaled to the budget is feasible too
  const CVec scaled = minp.x * std::sqrt(50.0 / minp.x.squaredNorm());
  CHECK(crlb.objective <= crlb_of_precoder(scaled, crlb_model(s, 0)) * (1.0 + 1e-6));

  o.power_budget = 1e-3;
  CHECK_THROWS_AS(solve_symbol(s, v, o), InfeasibleError);
}

TEST_CASE("constant-modulus transmit vectors") {
  const auto s = rayleigh_scenario(8, 2, 9, 80.0);
  SlpOptions o;
  o.objective = SlpObjective::RadarBeamError;
  o.extra = SlpExtra::ConstantModulus;
  const auto sol = solve_symbol(s, qpsk_symbols({0, 3}), o);
  for (Eigen::Index i = 0; i < sol.x.size(); ++i) CHECK(std::abs(sol.x(i)) == doctest::Approx(std::sqrt(10.0)));
  const auto c = make_psk(4);
  for (int u = 0; u < 2; ++u) {
    const auto& user = s.users[static_cast<std::size_t>(u)];
    const auto ci = constraint(user.channel, std::arg(c.points(u == 0 ? 0 : 3)), 4, user.sinr_target(), user.noise_power);
    CHECK(sol.ci_residuals(u) == doctest::Approx(-ci_margin(sol.x, ci)));
  }
  CHECK(sol.feasible);
}

TEST_CASE("DI constraints push Eve out of the CI region") {
  const auto s = rayleigh_scenario(8, 2, 13, 100.0, R"({"angle_deg": 0}, {"angle_deg": 35, "eavesdropper": true})");
  SlpOptions o;
  o.extra = SlpExtra::DiOnEve;
  Rng rng(6);
  const auto stream = random_symbol_stream(2, 4, 40, rng);
  const auto r = slp_block_run(s, stream, o, 1);
  const CVec a_eve = steering_vector(s.tx_array, 35.0);
  const auto c = make_psk(4);
  std::array<int, 4> zones{};
  for (std::size_t k = 0; k < stream.size(); ++k) {
    const auto& sol = r.solves[k];
    REQUIRE(sol.eve_zone);
    CHECK(sol.feasible);
    CHECK(*sol.eve_margin >= -1e-8);
    const auto eve_view = constraint(a_eve, std::arg(c.points(stream[k][0])), 4, 0.25, 1.0);
    CHECK(di_region_test(sol.x, eve_view) == *sol.eve_zone);
    CHECK(ci_margin(sol.x, eve_view) < 0.0);
    ++zones[static_cast<std::size_t>(*sol.eve_zone)];
  }
  CHECK(zones[0] == 0);
  CHECK(zones[1] + zones[2] + zones[3] == 40);
  // zones are reproducible per symbol index
  CHECK(solve_symbol(s, stream[5], o, 5).eve_zone == r.solves[5].eve_zone);

  o.modulation_order = 8;
  CHECK_THROWS_AS(solve_symbol(s, {0, 0}, o), DomainError);
}

TEST_CASE("scatter CSV") {
  const auto s = rayleigh_scenario(4, 2, 3);
  const auto stream = all_symbol_vectors(2, 4);
  const auto r = slp_block_run(s, stream, SlpOptions{}, 1);
  const auto path = std::filesystem::temp_directory_path() / "isac_scatter.csv";
  write_scatter_csv(s, r, stream, 4, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "symbol_idx,user,re,im,inside_ci");
  int rows = 0, inside = 0;
  while (std::getline(in, line)) {
    ++rows;
    inside += line.back() == '1';
  }
  CHECK(rows == 32);
  CHECK(inside == 32);
  std::filesystem::remove(path);
}
