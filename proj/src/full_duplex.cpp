#include "isac/full_duplex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace isac {

namespace {

constexpr double kNullCapDb = 300.0;

void check_product(const CMat& h, const CMat& x, const char* what) {
  if (h.cols() != x.rows())
    throw ContractError(std::string("fd_receive: ") + what + " has " + std::to_string(h.cols()) +
                        " columns, signal has " + std::to_string(x.rows()) + " rows");
}

Eigen::JacobiSVD<CMat> svd_of(const CMat& m) { return Eigen::JacobiSVD<CMat>(m, Eigen::ComputeThinU | Eigen::ComputeThinV); }

}  // namespace

SiChannel make_si_channel(int num_rx, int num_tx, double gain_db, Rng& rng, int rank) {
  if (num_rx < 1 || num_tx < 1) throw DomainError("make_si_channel: array sizes must be positive");
  if (rank < 0) throw DomainError("make_si_channel: rank must be >= 0");
  const double g = db2lin(gain_db);
  SiChannel si;
  si.gain_db = gain_db;
  if (rank == 0 || rank >= std::min(num_rx, num_tx)) {
    si.matrix = rng.cgaussian_mat(num_rx, num_tx, g);
  } else {
    const CMat a = rng.cgaussian_mat(num_rx, rank);
    const CMat b = rng.cgaussian_mat(rank, num_tx);
    si.matrix = a * b * std::sqrt(g / rank);
  }
  return si;
}

SiChannel isolate(const SiChannel& si, double isolation_db) {
  return {si.matrix * std::pow(10.0, -isolation_db / 20.0), si.gain_db - isolation_db};
}

std::string to_string(FdMode m) {
  switch (m) {
    case FdMode::DownlinkMonostatic: return "downlink_monostatic";
    case FdMode::UplinkBistatic: return "uplink_bistatic";
    case FdMode::Hybrid: return "hybrid";
  }
  return "?";
}

FdMode fd_mode_from_string(const std::string& s) {
  for (FdMode m : {FdMode::DownlinkMonostatic, FdMode::UplinkBistatic, FdMode::Hybrid})
    if (to_string(m) == s) return m;
  throw DomainError("unknown full-duplex mode '" + s + "'");
}

CMat fd_receive(FdMode mode, const RadarChannels& radar, const SiChannel& si, const CMat& x_bs, const CMat& x_users,
                const CMat& noise) {
  check_product(si.matrix, x_bs, "SI channel");
  CMat y = si.matrix * x_bs;
  if (mode != FdMode::UplinkBistatic) {
    check_product(radar.downlink, x_bs, "downlink radar channel");
    if (radar.downlink.rows() != y.rows()) throw ContractError("fd_receive: downlink radar channel row count");
    y += radar.downlink * x_bs;
  }
  if (mode != FdMode::DownlinkMonostatic) {
    check_product(radar.uplink, x_users, "uplink radar channel");
    if (radar.uplink.rows() != y.rows() || x_users.cols() != y.cols())
      throw ContractError("fd_receive: uplink term does not match the received block");
    y += radar.uplink * x_users;
  }
  if (noise.size() > 0) {
    if (noise.rows() != y.rows() || noise.cols() != y.cols()) throw ContractError("fd_receive: noise block size");
    y += noise;
  }
  return y;
}

CMat td_cancel(const CMat& y, const SiChannel& si, const CMat& x_estimate, double error_db, Rng& rng) {
  if (std::isnan(error_db) || error_db == std::numeric_limits<double>::infinity())
    throw DomainError("td_cancel: estimation error must be finite or -inf");
  CMat h = si.matrix;
  if (std::isfinite(error_db)) {
    CMat e = rng.cgaussian_mat(h.rows(), h.cols());
    const double en = e.norm();
    if (en > 0.0) h += e * (std::pow(10.0, error_db / 20.0) * si.matrix.norm() / en);
  }
  return y - h * x_estimate;
}

CMat distort(const CMat& x, double level, Rng& rng) {
  return x.cwiseProduct((CMat::Ones(x.rows(), x.cols()) + level * rng.cgaussian_mat(x.rows(), x.cols())));
}

double residual_si_db(const CMat& y_hat, const CMat& y_clean, const SiChannel& si, const CMat& x) {
  return lin2db((y_hat - y_clean).squaredNorm() / (si.matrix * x).squaredNorm());
}

int numerical_rank(const CMat& m, double rel_tol) {
  if (m.size() == 0) return 0;
  const RVec sv = svd_of(m).singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  return static_cast<int>((sv.array() > rel_tol * sv(0)).count());
}

CMat null_projector(const SiChannel& si, std::string* warning) {
  const Eigen::Index n = si.matrix.cols();
  const CMat eye = CMat::Identity(n, n);
  if (si.matrix.norm() == 0.0) return eye;
  const auto svd = svd_of(si.matrix);
  const RVec sv = svd.singularValues();
  const int r = numerical_rank(si.matrix);
  if (r >= n) {
    if (warning) *warning = "SI channel has full column rank " + std::to_string(r) + ": no spatial degrees of freedom";
    return CMat::Zero(n, n);
  }
  RVec inv = RVec::Zero(sv.size());
  for (int i = 0; i < r; ++i) inv(i) = 1.0 / sv(i);
  const CMat pinv = svd.matrixV() * inv.cast<cplx>().asDiagonal() * svd.matrixU().adjoint();
  CMat w = eye - si.matrix.adjoint() * pinv.adjoint();
  return (w + w.adjoint()) / 2.0;
}

double fd_beampattern_mse(const PrecoderSet& p, const SiChannel& si, const ArrayGeometry& tx,
                          const DesiredBeampattern& d) {
  const CMat w = null_projector(si);
  return beampattern_mse(w * transmit_covariance(p) * w.adjoint(), tx, d);
}

PrecoderSet fd_beampattern_design(const SiChannel& si, const ArrayGeometry& tx, const DesiredBeampattern& d,
                                  double power, const FdDesignOptions& opts) {
  const int n = tx.num_elements;
  if (si.matrix.cols() != n) throw ContractError("fd_beampattern_design: SI channel does not match the array");
  if (!(power > 0.0)) throw DomainError("fd_beampattern_design: power must be positive");
  std::string warning;
  const CMat wtx = null_projector(si, &warning);
  if (!warning.empty()) throw InfeasibleError("fd_beampattern_design: " + warning);

  // The variable already lives in the null space, so W_tx W = W.
  const MatrixObjective f = [&](const CMat& w, CMat* grad) { return beampattern_mse_of_precoder(w, tx, d, grad); };
  const MatrixProjection proj = [&](const CMat& w) { return project_power_sphere(wtx * w, power); };
  Rng rng(opts.seed);
  PgOptions pg;
  pg.max_iterations = opts.max_iterations;
  pg.tolerance = 1e-12;
  pg.patience = 20;
  const PgResult r = projected_gradient(f, proj, proj(rng.cgaussian_mat(n, n)), pg);

  PrecoderSet out;
  out.w_comm = CMat(n, 0);
  out.w_radar = r.x;
  out.power_budget = power;
  return out;
}

std::vector<SiBudgetStage> si_budget(const SiChannel& si, const SiBudgetOptions& opts) {
  if (opts.samples < 1 || opts.trials < 1) throw DomainError("si_budget: samples and trials must be positive");
  Rng rng(opts.seed);
  const Eigen::Index nt = si.matrix.cols();
  std::vector<SiBudgetStage> out;
  auto push = [&out](const std::string& name, double db) {
    const double prev = out.empty() ? 0.0 : out.back().cumulative_db;
    out.push_back({name, db, prev + db});
  };

  const SiChannel iso = isolate(si, opts.isolation_db);
  const CMat x = rng.cgaussian_mat(nt, opts.samples);
  push("isolation", -lin2db((iso.matrix * x).squaredNorm() / (si.matrix * x).squaredNorm()));

  const CMat wtx = null_projector(iso);
  double null_db = 0.0;
  if (wtx.norm() > 0.0) {
    const double ratio = (iso.matrix * wtx * x).squaredNorm() / (iso.matrix * x).squaredNorm();
    null_db = ratio > 0.0 ? std::min(-lin2db(ratio), kNullCapDb) : kNullCapDb;
  }
  push("spatial_null", null_db);

  double residual = 0.0, reference = 0.0;
  for (int t = 0; t < opts.trials; ++t) {
    const CMat xt = rng.cgaussian_mat(nt, opts.samples);
    const CMat si_part = iso.matrix * xt;
    const CMat x_est = opts.distortion > 0.0 ? distort(xt, opts.distortion, rng) : xt;
    residual += td_cancel(si_part, iso, x_est, opts.td_error_db, rng).squaredNorm();
    reference += si_part.squaredNorm();
  }
  push("td_cancel", residual > 0.0 ? -lin2db(residual / reference) : kNullCapDb);
  return out;
}

void write_si_budget_csv(const std::vector<SiBudgetStage>& stages, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << "stage,suppression_db,cumulative_db\n";
  for (const auto& s : stages) out << s.stage << ',' << s.suppression_db << ',' << s.cumulative_db << '\n';
}

}  // namespace isac
