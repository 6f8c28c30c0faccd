#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "isac/full_duplex.hpp"

using namespace isac;

namespace {

// Orthonormal null-space basis from an LU kernel, independent of the SVD route.
CMat kernel_projector(const CMat& h) {
  Eigen::FullPivLU<CMat> lu(h);
  lu.setThreshold(1e-10);
  const CMat k = lu.kernel();
  Eigen::HouseholderQR<CMat> qr(k);
  const CMat q = qr.householderQ() * CMat::Identity(k.rows(), k.cols());
  return q * q.adjoint();
}

SiChannel zero_si(int nr, int nt) { return {CMat::Zero(nr, nt), -300.0}; }

}  // namespace

TEST_CASE("fd_receive models") {
  Rng rng(3);
  const int nr = 6, nt = 8, up = 2, l = 20;
  RadarChannels radar{rng.cgaussian_mat(nr, nt), rng.cgaussian_mat(nr, up)};
  const SiChannel si = make_si_channel(nr, nt, 20.0, rng);
  const CMat x = rng.cgaussian_mat(nt, l);
  const CMat xcu = rng.cgaussian_mat(up, l);

  CHECK((fd_receive(FdMode::DownlinkMonostatic, radar, zero_si(nr, nt), x, {}) - radar.downlink * x).norm() < 1e-12);
  CHECK((fd_receive(FdMode::UplinkBistatic, radar, si, CMat::Zero(nt, l), xcu) - radar.uplink * xcu).norm() < 1e-12);

  // superposition: hybrid = DL part + UL part without SI
  const CMat hyb = fd_receive(FdMode::Hybrid, radar, si, x, xcu);
  const CMat dl = fd_receive(FdMode::DownlinkMonostatic, radar, si, x, {});
  const CMat ul = fd_receive(FdMode::UplinkBistatic, radar, zero_si(nr, nt), x, xcu);
  CHECK((hyb - dl - ul).norm() < 1e-10 * hyb.norm());

  const CMat noise = rng.cgaussian_mat(nr, l);
  CHECK((fd_receive(FdMode::DownlinkMonostatic, radar, si, x, {}, noise) - dl - noise).norm() < 1e-12);

  CHECK_THROWS_AS(fd_receive(FdMode::DownlinkMonostatic, radar, si, rng.cgaussian_mat(nt + 1, l), {}), ContractError);
  CHECK_THROWS_AS(fd_receive(FdMode::UplinkBistatic, radar, si, x, rng.cgaussian_mat(up, l + 1)), ContractError);
  CHECK_THROWS_AS(fd_receive(FdMode::DownlinkMonostatic, radar, si, x, {}, CMat::Zero(nr, l - 1)), ContractError);
  CHECK(fd_mode_from_string("hybrid") == FdMode::Hybrid);
  CHECK_THROWS_AS(fd_mode_from_string("simplex"), DomainError);
}

TEST_CASE("SI channel draws") {
  Rng rng(5);
  const SiChannel si = make_si_channel(64, 64, 10.0, rng);
  CHECK(lin2db(si.matrix.squaredNorm() / si.matrix.size()) == doctest::Approx(10.0).epsilon(0.02));
  const SiChannel low = make_si_channel(16, 16, 0.0, rng, 3);
  CHECK(numerical_rank(low.matrix) == 3);
  const SiChannel iso = isolate(si, 40.0);
  CHECK(iso.gain_db == doctest::Approx(-30.0));
  CHECK(iso.matrix.norm() == doctest::Approx(si.matrix.norm() * 1e-2));
}

TEST_CASE("td_cancel residual") {
  Rng rng(7);
  const SiChannel si = make_si_channel(8, 8, 30.0, rng);
  const CMat x = rng.cgaussian_mat(8, 128);
  const CMat y = si.matrix * x;

  CHECK(db2lin(residual_si_db(td_cancel(y, si, x, -std::numeric_limits<double>::infinity(), rng), CMat::Zero(8, 128),
                              si, x)) < 1e-12);

  // every trial, not just the average, lands near the requested error
  for (int t = 0; t < 100; ++t) {
    const CMat xt = rng.cgaussian_mat(8, 128);
    const double r = residual_si_db(td_cancel(si.matrix * xt, si, xt, -30.0, rng), CMat::Zero(8, 128), si, xt);
    CHECK(r >= -33.0);
    CHECK(r <= -27.0);
  }

  // linear in dB down to the distortion floor at -40 dB
  for (double err : {-10.0, -20.0, -30.0}) {
    double acc = 0.0, ref = 0.0;
    for (int t = 0; t < 50; ++t) {
      const CMat xt = rng.cgaussian_mat(8, 64);
      acc += td_cancel(si.matrix * xt, si, xt, err, rng).squaredNorm();
      ref += (si.matrix * xt).squaredNorm();
    }
    CHECK(lin2db(acc / ref) == doctest::Approx(err).epsilon(0.05));
  }
  for (double err : {-60.0, -std::numeric_limits<double>::infinity()}) {
    double acc = 0.0, ref = 0.0;
    for (int t = 0; t < 50; ++t) {
      const CMat xt = rng.cgaussian_mat(8, 64);
      acc += td_cancel(si.matrix * xt, si, distort(xt, 0.01, rng), err, rng).squaredNorm();
      ref += (si.matrix * xt).squaredNorm();
    }
    CHECK(lin2db(acc / ref) == doctest::Approx(-40.0).epsilon(0.025));
  }
  CHECK_THROWS_AS(td_cancel(y, si, x, std::nan(""), rng), DomainError);
}

TEST_CASE("null projector") {
  Rng rng(11);
  const int nt = 16;
  CHECK((null_projector(zero_si(8, nt)) - CMat::Identity(nt, nt)).norm() < 1e-15);

  for (int r : {1, 3, 7, 12}) {
    const SiChannel si = make_si_channel(16, nt, 0.0, rng, r);
    const CMat w = null_projector(si);
    CHECK((si.matrix * w).norm() <= 1e-10 * si.matrix.norm());
    Eigen::JacobiSVD<CMat> svd(w);
    CHECK((svd.singularValues().array() > 0.5).count() == nt - r);
    CHECK((w * w - w).norm() < 1e-12);
    CHECK((w - w.adjoint()).norm() < 1e-12);
    const RVec ev = Eigen::SelfAdjointEigenSolver<CMat>(w).eigenvalues();
    for (double e : ev) CHECK(std::min(std::abs(e), std::abs(e - 1.0)) < 1e-9);
    CHECK((w - kernel_projector(si.matrix)).norm() < 1e-9);
    const CMat x = rng.cgaussian_mat(nt, 64);
    CHECK((si.matrix * w * x).norm() <= 1e-9 * x.norm() * si.matrix.norm());
  }

  // fewer receive than transmit antennas: rank N_r
  const SiChannel wide = make_si_channel(4, nt, 0.0, rng);
  CHECK(numerical_rank(null_projector(wide)) == nt - 4);

  std::string warning;
  const CMat zero = null_projector(make_si_channel(16, nt, 0.0, rng), &warning);
  CHECK(zero.norm() == 0.0);
  CHECK(warning.find("no spatial degrees of freedom") != std::string::npos);
}

TEST_CASE("FD beampattern") {
  const ArrayGeometry tx{16, 0.5};
  const auto desired = make_desired_beampattern({0.0}, 10.0);
  Rng rng(13);
  PrecoderSet p;
  p.w_comm = CMat(16, 0);
  p.w_radar = rng.cgaussian_mat(16, 16);
  CHECK(fd_beampattern_mse(p, zero_si(8, 16), tx, desired) == doctest::Approx(beampattern_mse(p, tx, desired)));

  // SI rows orthogonal to a(0): the target direction survives the projection
  const CVec a0 = steering_vector(tx, 0.0);
  const CMat keep = CMat::Identity(16, 16) - a0 * a0.adjoint() / a0.squaredNorm();
  const SiChannel inside{rng.cgaussian_mat(2, 16) * keep, 0.0};
  const PrecoderSet unc = fd_beampattern_design(zero_si(8, 16), tx, desired, 10.0);
  const PrecoderSet fd = fd_beampattern_design(inside, tx, desired, 10.0);
  const double mse_unc = beampattern_mse(unc, tx, desired);
  const double mse_fd = fd_beampattern_mse(fd, inside, tx, desired);
  MESSAGE("MSE unconstrained " << mse_unc << ", FD " << mse_fd);
  CHECK(lin2db(mse_fd / mse_unc) < 1.0);
  CHECK((inside.matrix * fd.w_radar).norm() < 1e-9 * fd.w_radar.norm());
  CHECK(fd.power() == doctest::Approx(10.0));

  // SI row equal to a(0)^H: the mainlobe is annihilated
  const SiChannel row{a0.adjoint(), 0.0};
  const CMat w = null_projector(row);
  const CMat r = w * transmit_covariance(unc) * w.adjoint();
  const double gain = (a0.adjoint() * r * a0)(0, 0).real();
  const double before = (a0.adjoint() * transmit_covariance(unc) * a0)(0, 0).real();
  CHECK(gain < 1e-12 * before);
  CHECK(fd_beampattern_mse(unc, row, tx, desired) > mse_unc);

  CHECK_THROWS_AS(fd_beampattern_design(make_si_channel(16, 16, 0.0, rng), tx, desired, 10.0), InfeasibleError);
}

TEST_CASE("SI budget") {
  Rng rng(17);
  const SiChannel si = make_si_channel(8, 16, 60.0, rng);
  const auto stages = si_budget(si);
  REQUIRE(stages.size() == 3);
  CHECK(stages[0].stage == "isolation");
  CHECK(stages[0].suppression_db == doctest::Approx(40.0));
  CHECK(stages[1].suppression_db >= 100.0);
  CHECK(stages[2].suppression_db == doctest::Approx(30.0).epsilon(0.1));
  CHECK(stages[2].cumulative_db >= 100.0);
  CHECK(stages[2].cumulative_db ==
        doctest::Approx(stages[0].suppression_db + stages[1].suppression_db + stages[2].suppression_db));

  const auto full = si_budget(make_si_channel(16, 16, 60.0, rng));
  CHECK(full[1].suppression_db == 0.0);
  CHECK(full[2].cumulative_db < 100.0);

  const auto path = std::filesystem::temp_directory_path() / "isac_si_budget.csv";
  write_si_budget_csv(stages, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "stage,suppression_db,cumulative_db");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 3);
}
