#include "isac/secure_sensing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <unsupported/Eigen/FFT>

namespace isac {

namespace {

constexpr double kSidelobeFloor = 1e-15;

CVec unscaled_idft(const CVec& in) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  CVec out;
  fft.inv(out, in);
  return out;
}

// Reciprocal filter over the occupied subcarriers; empty ones get weight 0.
CVec legit_profile(const CVec& received, const OfdmFrame& frame) {
  const CVec x = frame.transmitted();
  CVec w = CVec::Zero(x.size());
  for (Eigen::Index n = 0; n < x.size(); ++n)
    if (std::abs(x(n)) > 0.0) w(n) = 1.0 / x(n);
  return unscaled_idft(w.cwiseProduct(received));
}

struct SidelobeLevels {
  double isl_db, psl_db;
};

SidelobeLevels sidelobe_levels(const RVec& power, const std::set<int>& mainlobe) {
  double peak = 0.0;
  for (int d : mainlobe) peak = std::max(peak, power(d));
  double isl = 0.0, psl = 0.0;
  for (Eigen::Index k = 0; k < power.size(); ++k) {
    if (mainlobe.count(static_cast<int>(k))) continue;
    isl += power(k);
    psl = std::max(psl, power(k));
  }
  const double floor = kSidelobeFloor * peak;
  return {lin2db(std::max(isl, floor) / peak), lin2db(std::max(psl, floor) / peak)};
}

}  // namespace

void check_acf_spec(const AcfSpec& s) {
  if (s.num_subcarriers < 1) throw DomainError("acf spec: need at least one subcarrier");
  if (s.lambda_period < 1 || s.num_subcarriers % s.lambda_period != 0)
    throw DomainError("acf spec: lambda " + std::to_string(s.lambda_period) + " does not divide N_s " +
                      std::to_string(s.num_subcarriers));
  if (!(s.peak_amplitude >= 0.0)) throw DomainError("acf spec: alpha must be >= 0");
  if (s.peak_amplitude > s.num_subcarriers)
    throw InfeasibleError("acf spec: alpha " + std::to_string(s.peak_amplitude) +
                          " needs negative subcarrier power (alpha <= N_s)");
}

CVec acf(const OfdmFrame& frame) {
  const CVec x = frame.transmitted();
  return unscaled_idft(x.cwiseAbs2().cast<cplx>());
}

RVec comb_allocation(const AcfSpec& s) {
  check_acf_spec(s);
  const int n = s.num_subcarriers;
  const int step = n / s.lambda_period;
  const double a = s.peak_amplitude / n;
  RVec q(n);
  for (int i = 0; i < n; ++i) q(i) = 1.0 + a * ((i % step == 0 ? static_cast<double>(step) : 0.0) - 1.0);
  return q.cwiseMax(0.0);  // clears -0 rounding at alpha = N_s
}

EveLegitResult eve_vs_legit(const Scenario& s, const AcfSpec& spec, const Constellation& c,
                            const SecuritySettings& settings) {
  check_acf_spec(spec);
  const int n = s.num_subcarriers;
  if (spec.num_subcarriers != n)
    throw ContractError("eve_vs_legit: spec has " + std::to_string(spec.num_subcarriers) + " subcarriers, scenario " +
                        std::to_string(n));
  if (s.targets.empty()) throw DomainError("eve_vs_legit: scenario has no targets");
  const RVec q = comb_allocation(spec);
  const int frames = settings.snapshots > 0 ? settings.snapshots : (c.is_unit_modulus(1e-9) ? 16 : 500);

  std::set<int> mainlobe;
  for (const auto& t : s.targets) mainlobe.insert(t.delay_bin);
  RVec eve_pow = RVec::Zero(n), base_pow = RVec::Zero(n);
  EveLegitResult out;
  for (int f = 0; f < frames; ++f) {
    Rng rng(derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(f)));
    const OfdmFrame comb = make_frame(c, n, rng, q);
    OfdmFrame flat = comb;
    flat.powers = RVec::Ones(n);
    const std::uint64_t noise_seed = derive_seed(settings.seed, 2 * static_cast<std::uint64_t>(f) + 1);
    const auto snap = synthesize_echo(comb, s.targets, s.sensing_noise_power, noise_seed);
    const auto snap_flat = synthesize_echo(flat, s.targets, s.sensing_noise_power, noise_seed);
    const CVec eve = apply_receiver(ReceiverKind::MF, snap.received, comb);
    eve_pow += eve.cwiseAbs2();
    base_pow += apply_receiver(ReceiverKind::MF, snap_flat.received, flat).cwiseAbs2();
    if (f == 0) {
      out.eve = {eve, ReceiverKind::MF};
      out.legit = {legit_profile(snap.received, comb), ReceiverKind::RF};
    }
  }

  const auto e = sidelobe_levels(eve_pow, mainlobe);
  const auto b = sidelobe_levels(base_pow, mainlobe);
  auto& r = out.report;
  r.eve_isl_db = e.isl_db;
  r.eve_psl_db = e.psl_db;
  r.eve_isl_margin = e.isl_db - b.isl_db;
  r.eve_psl_margin = e.psl_db - b.psl_db;
  r.legit_snr_loss_db = lin2db(q.cwiseInverse().mean());
  const double snr0 = db2lin(settings.comm_snr_db);
  r.comm_rate = q.unaryExpr([snr0](double v) { return std::log2(1.0 + v * snr0); }).mean();
  if (spec.num_peaks() > 0) {
    const int d = s.targets[0].delay_bin;
    r.ghost_ratio = std::abs(out.eve.bins((d + spec.lambda_period) % n)) / std::abs(out.eve.bins(d));
  }
  return out;
}

SecurityTradeoff sweep_security_tradeoff(const Scenario& s, const Constellation& c, const std::vector<double>& rho_grid,
                                         const std::vector<double>& alpha_grid, const std::vector<int>& lambda_grid,
                                         const SecurityThresholds& thresholds, const SecuritySettings& settings) {
  if (rho_grid.empty() || alpha_grid.empty() || lambda_grid.empty())
    throw DomainError("sweep_security_tradeoff: grids must be nonempty");
  for (double rho : rho_grid)
    if (!(rho >= 0.0 && rho <= 1.0)) throw DomainError("sweep_security_tradeoff: rho must be in [0, 1]");
  SecurityTradeoff out;
  for (int lambda : lambda_grid)
    for (double alpha : alpha_grid) {
      SecurityCell cell;
      cell.spec = {s.num_subcarriers, lambda, alpha};
      cell.report = eve_vs_legit(s, cell.spec, c, settings).report;
      cell.feasible = cell.report.eve_isl_margin >= thresholds.isl_db && cell.report.eve_psl_margin >= thresholds.psl_db;
      out.grid.push_back(cell);
    }
  for (double rho : rho_grid) {
    SecurityTradeoffRow row;
    row.rho = rho;
    row.objective = -std::numeric_limits<double>::infinity();
    for (const auto& cell : out.grid) {
      if (!cell.feasible) continue;
      // at rho = 1 an infinite loss (alpha = N_s) carries no weight
      const double loss = rho < 1.0 ? (1.0 - rho) * cell.report.legit_snr_loss_db : 0.0;
      const double obj = -loss + rho * cell.report.comm_rate;
      if (!row.feasible || obj > row.objective) {
        row.feasible = true;
        row.objective = obj;
        row.spec = cell.spec;
        row.report = cell.report;
      }
    }
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace isac
