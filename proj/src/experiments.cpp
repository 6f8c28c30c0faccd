#include "isac/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "isac/constellation.hpp"
#include "isac/full_duplex.hpp"
#include "isac/im_dfrc.hpp"
#include "isac/ofdm_sensing.hpp"
#include "isac/precoding_blp.hpp"
#include "isac/precoding_slp.hpp"
#include "isac/secure_data.hpp"
#include "isac/secure_sensing.hpp"

namespace isac {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const char* const kDefaultScenario = R"({
  "tx_elements": 16, "rx_elements": 16, "spacing": 0.5, "subcarriers": 256, "blocks": 64, "seed": 1,
  "power_budget": 10, "sensing_noise_power": 1,
  "users": [{"angle_deg": -45, "sinr_target_db": 10, "noise_power": 1},
            {"angle_deg": 30, "sinr_target_db": 10, "noise_power": 1}],
  "targets": [{"angle_deg": 0, "delay_bin": 40, "amplitude_db": 0, "eavesdropper": true},
              {"angle_deg": 0, "delay_bin": 170, "amplitude_db": 0}]
})";

struct KindInfo {
  ExperimentKind kind;
  const char* name;
  std::vector<std::pair<std::string, std::string>> params;
};

const std::vector<KindInfo>& kinds() {
  static const std::vector<KindInfo> k = {
      {ExperimentKind::ConstellationTradeoff, "constellation_tradeoff",
       {{"order", "16"}, {"rhos", "0,0.25,0.5,0.75,1"}, {"restarts", "8"}}},
      {ExperimentKind::BlpTradeoff, "blp_tradeoff",
       {{"rhos", "0,0.25,0.5,0.75,1"}, {"metric", "beampattern"}, {"crlb_sinrs_db", "0,8,14"}}},
      {ExperimentKind::SlpVsBlp, "slp_vs_blp", {{"order", "4"}, {"symbols", "64"}}},
      {ExperimentKind::SecureData, "secure_data", {{"uncertainties_deg", "0,5"}, {"dm_elements", "32"}}},
      {ExperimentKind::SecureSensing, "secure_sensing",
       {{"constellation", "QPSK"},
        {"lambda", "64"},
        {"alpha", "32"},
        {"alphas", "0,16,32,64,128"},
        {"lambdas", "32,64"},
        {"rhos", "0,0.5,1"},
        {"psl_margin_db", "3"}}},
      {ExperimentKind::FullDuplexBudget, "full_duplex_budget",
       {{"isolation_db", "40"}, {"td_error_db", "-30"}, {"si_gain_db", "0"}, {"si_rank", "auto"}, {"distortion", "0"}}},
      {ExperimentKind::ImBer, "im_ber",
       {{"active", "4"}, {"phase_order", "4"}, {"trials", "4000"}, {"snrs_db", "0:20:2"}}},
      {ExperimentKind::OfdmReceivers, "ofdm_receivers",
       {{"constellation", "16QAM"}, {"frames", "200"}, {"prior", "1"}}},
  };
  return k;
}

const KindInfo& info(ExperimentKind k) {
  for (const auto& i : kinds())
    if (i.kind == k) return i;
  throw DomainError("unknown experiment kind");
}

class Params {
 public:
  Params(ExperimentKind k, const Overrides& given) {
    for (const auto& [key, value] : info(k).params) values_[key] = value;
    for (const auto& [key, value] : given) {
      if (!values_.count(key))
        throw ValidationError(key, std::string("not a scenario key or a parameter of ") + info(k).name);
      values_[key] = value;
    }
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }

  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used == str(key).size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(key, "expected a number, got '" + str(key) + "'");
  }

  int integer(const std::string& key) const {
    const double v = real(key);
    if (v != std::floor(v)) throw ValidationError(key, "expected an integer, got '" + str(key) + "'");
    return static_cast<int>(v);
  }

  // "a,b,c" or "start:stop:step".
  std::vector<double> list(const std::string& key) const {
    const std::string& s = str(key);
    std::vector<double> out;
    auto num = [&](const std::string& t) {
      try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used == t.size()) return v;
      } catch (const std::exception&) {
      }
      throw ValidationError(key, "bad list entry '" + t + "'");
    };
    if (s.empty()) return out;
    if (s.find(':') != std::string::npos) {
      std::vector<double> r;
      std::stringstream ss(s);
      std::string t;
      while (std::getline(ss, t, ':')) r.push_back(num(t));
      if (r.size() != 3 || !(r[2] > 0.0)) throw ValidationError(key, "range must be start:stop:step with step > 0");
      for (int i = 0; r[0] + i * r[2] <= r[1] + 1e-9; ++i) out.push_back(r[0] + i * r[2]);
      return out;
    }
    std::stringstream ss(s);
    std::string t;
    while (std::getline(ss, t, ',')) out.push_back(num(t));
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

std::ofstream open_csv(const fs::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(12);
  out << header << '\n';
  return out;
}

RVec to_rvec(const std::vector<double>& v) { return Eigen::Map<const RVec>(v.data(), static_cast<Eigen::Index>(v.size())); }

RVec profile_db(const RangeProfile& p) {
  RVec out(p.bins.size());
  for (Eigen::Index i = 0; i < p.bins.size(); ++i) out(i) = lin2db(std::max(std::norm(p.bins(i)), 1e-30));
  return out;
}

RVec bin_axis(Eigen::Index n) { return RVec::LinSpaced(n, 0.0, static_cast<double>(n - 1)); }

void require_users(const Scenario& s, const char* kind) {
  if (s.users.empty()) throw DomainError(std::string(kind) + ": scenario has no users");
}

void require_targets(const Scenario& s, const char* kind) {
  if (s.targets.empty()) throw DomainError(std::string(kind) + ": scenario has no targets");
}

// Each runner writes its artifacts into `dir`, appends file names, returns probes.
using Files = std::vector<std::string>;

std::vector<Probe> run_ofdm_receivers(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  require_targets(s, "ofdm_receivers");
  const auto c = standard_constellation(p.str("constellation"));
  const int frames = p.integer("frames");
  const double prior = p.real("prior");
  const int n = s.num_subcarriers;

  Rng rng(derive_seed(s.seed, 1));
  const OfdmFrame frame = make_frame(c, n, rng);
  const auto snap = synthesize_echo(frame, s.targets, s.sensing_noise_power, derive_seed(s.seed, 2));
  const RangeProfile profiles[] = {matched_filter(snap, frame), reciprocal_filter(snap, frame),
                                   lmmse_filter(snap, frame, prior)};
  const char* names[] = {"profile_mf.csv", "profile_rf.csv", "profile_lmmse.csv"};
  SvgPlot plot{"Range profiles, " + c.name, "delay bin", "power (dB)", {}};
  for (int k = 0; k < 3; ++k) {
    write_profile_csv(profiles[k], dir / names[k]);
    files.push_back(names[k]);
    plot.series.push_back({to_string(profiles[k].receiver_kind), bin_axis(n), profile_db(profiles[k])});
  }
  write_svg(plot, dir / "profiles.svg");
  files.push_back("profiles.svg");

  // measured next to the closed-form predictions; LMMSE has none
  std::vector<Probe> probes;
  auto out = open_csv(dir / "sinr.csv", "target,delay_bin,receiver,measured_db,predicted_db");
  const std::vector<double> pred_mf = predict_mf_sinr(c, s.targets, s.sensing_noise_power, n);
  const std::vector<double> pred_rf = predict_rf_snr(c, s.targets, s.sensing_noise_power, n);
  for (ReceiverKind kind : {ReceiverKind::MF, ReceiverKind::RF, ReceiverKind::LMMSE}) {
    const auto st = measure_receiver_sinr(kind, c, s.targets, s.sensing_noise_power, n, frames, derive_seed(s.seed, 3),
                                          prior);
    for (std::size_t k = 0; k < s.targets.size(); ++k) {
      const double measured = lin2db(st.sinr[k]);
      double predicted = kNaN;
      if (kind == ReceiverKind::MF) predicted = lin2db(pred_mf[k]);
      if (kind == ReceiverKind::RF) predicted = lin2db(pred_rf[k]);
      out << k << ',' << s.targets[k].delay_bin << ',' << to_string(kind) << ',' << measured << ',' << predicted << '\n';
      if (kind != ReceiverKind::LMMSE)
        probes.push_back({to_string(kind) + "_sinr_target" + std::to_string(k), measured, predicted, 0.5, "abs"});
    }
  }
  files.push_back("sinr.csv");
  return probes;
}

std::vector<Probe> run_constellation_tradeoff(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  // Tabulated moments of the standard constellations.
  struct Row {
    const char* name;
    double mu4, nu;
  };
  const Row table[] = {{"QPSK", 1.0, 1.0},    {"8PSK", 1.0, 1.0},     {"16QAM", 1.32, 1.89}, {"64QAM", 1.38, 2.69},
                       {"256QAM", 1.40, 3.44}, {"16APSK", 1.25, 2.50}, {"32APSK", 1.41, 3.23}};
  std::vector<Probe> probes;
  auto m = open_csv(dir / "moments.csv", "constellation,mu4,nu_m2,mu4_table,nu_m2_table");
  for (const auto& r : table) {
    const auto c = standard_constellation(r.name);
    const double mu4 = kurtosis(c), nu = inverse_second_moment(c);
    m << r.name << ',' << mu4 << ',' << nu << ',' << r.mu4 << ',' << r.nu << '\n';
    const bool psk = r.mu4 == 1.0;
    probes.push_back({std::string("mu4_") + r.name, mu4, r.mu4, psk ? 1e-12 : 0.01, "abs"});
    probes.push_back({std::string("nu_m2_") + r.name, nu, r.nu, psk ? 1e-12 : 0.01, "abs"});
  }
  m.close();
  files.push_back("moments.csv");

  const int order = p.integer("order");
  ShapingOptions opts;
  opts.restarts = p.integer("restarts");
  opts.seed = derive_seed(s.seed, 4);
  auto sh = open_csv(dir / "shaping.csv", "rho,mu4,d_min,objective");
  std::vector<double> mu4s, dmins;
  SvgPlot plot{"Shaped " + std::to_string(order) + "-point constellations", "in-phase", "quadrature", {}};
  const auto rhos = p.list("rhos");
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    const auto r = shape_constellation(order, rhos[i], opts);
    sh << rhos[i] << ',' << r.mu4 << ',' << r.d_min << ',' << r.objective << '\n';
    mu4s.push_back(r.mu4);
    dmins.push_back(r.d_min);
    const std::string name = "shaped_" + std::to_string(i) + ".csv";
    write_constellation_csv(r.constellation, dir / name);
    files.push_back(name);
    std::ostringstream label;
    label << "rho=" << rhos[i];
    plot.series.push_back({label.str(), r.constellation.points.real(), r.constellation.points.imag(), true});
    probes.push_back({"shaped_power_" + std::to_string(i), r.constellation.power(), 1.0, 1e-6, "abs"});
  }
  sh.close();
  files.push_back("shaping.csv");
  write_svg(plot, dir / "shaped.svg");
  write_svg({"Kurtosis vs minimum distance", "d_min", "mu4", {{"shaped", to_rvec(dmins), to_rvec(mu4s)}}},
            dir / "shaping.svg");
  files.push_back("shaped.svg");
  files.push_back("shaping.svg");
  return probes;
}

std::vector<Probe> run_blp_tradeoff(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  require_users(s, "blp_tradeoff");
  require_targets(s, "blp_tradeoff");
  TradeoffOptions opts;
  const std::string metric = p.str("metric");
  if (metric == "beampattern") opts.metric = SensingMetric::Beampattern;
  else if (metric == "crlb") opts.metric = SensingMetric::Crlb;
  else throw ValidationError("metric", "expected beampattern or crlb");
  opts.seed = derive_seed(s.seed, 5);
  auto rhos = p.list("rhos");
  std::sort(rhos.begin(), rhos.end());
  const auto pts = sweep_tradeoff(s, rhos, opts);
  write_tradeoff_csv(pts, dir / "tradeoff.csv");
  files.push_back("tradeoff.csv");

  RVec comm(pts.size()), sens(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    comm(static_cast<Eigen::Index>(i)) = pts[i].comm_metric;
    sens(static_cast<Eigen::Index>(i)) = pts[i].sensing_metric;
  }
  write_svg({"Communication-sensing tradeoff", "sum rate (bit/s/Hz)", to_string(opts.metric), {{"BLP", comm, sens}}},
            dir / "tradeoff.svg");
  files.push_back("tradeoff.svg");

  std::vector<Probe> probes;
  probes.push_back({"pareto_monotone", is_pareto_monotone(pts) ? 1.0 : 0.0, 1.0, 0.0, "abs"});
  if (!pts.empty() && rhos.front() == 0.0 && rhos.back() == 1.0) {
    if (opts.metric == SensingMetric::Beampattern)
      probes.push_back({"sensing_ratio_rho0_vs_rho1", pts.front().sensing_metric / pts.back().sensing_metric, 0.1, 0.0,
                        "le"});
    const RVec zf = user_sinr(zf_waterfilling(s.users, s.power_budget, s.num_tx()), s.users);
    const RVec top = user_sinr(pts.back().precoders, s.users);
    for (Eigen::Index u = 0; u < zf.size(); ++u)
      probes.push_back({"rho1_sinr_vs_zf_user" + std::to_string(u), lin2db(top(u)), lin2db(zf(u)), 0.1, "ge"});
  }

  const auto sinrs = p.list("crlb_sinrs_db");
  if (!sinrs.empty()) {
    auto out = open_csv(dir / "crlb.csv", "sinr_db,zf_crlb,joint_crlb,zf_feasible,joint_feasible");
    RVec x(sinrs.size()), zf_c(sinrs.size()), joint_c(sinrs.size());
    for (std::size_t i = 0; i < sinrs.size(); ++i) {
      const auto zf = zf_crlb_baseline(s, sinrs[i]);
      const auto joint = joint_crlb_design(s, sinrs[i]);
      out << sinrs[i] << ',' << zf.crlb << ',' << joint.crlb << ',' << zf.feasible << ',' << joint.feasible << '\n';
      const auto k = static_cast<Eigen::Index>(i);
      x(k) = sinrs[i];
      zf_c(k) = zf.feasible ? 10.0 * std::log10(zf.crlb) : kNaN;
      joint_c(k) = joint.feasible ? 10.0 * std::log10(joint.crlb) : kNaN;
      if (zf.feasible) {
        std::ostringstream name;
        name << "crlb_joint_le_zf_" << sinrs[i] << "db";
        probes.push_back({name.str(), joint.crlb, zf.crlb, 1e-12 * zf.crlb, "le"});
      }
    }
    out.close();
    files.push_back("crlb.csv");
    write_svg({"Angle CRLB vs SINR", "SINR (dB)", "CRLB (dB rad^2)", {{"ZF baseline", x, zf_c}, {"joint", x, joint_c}}},
              dir / "crlb.svg");
    files.push_back("crlb.svg");
  }
  return probes;
}

std::vector<Probe> run_slp_vs_blp(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  require_users(s, "slp_vs_blp");
  const int order = p.integer("order");
  Rng rng(derive_seed(s.seed, 6));
  const auto stream = random_symbol_stream(s.num_users(), order, p.integer("symbols"), rng);
  SlpOptions opts;
  opts.modulation_order = order;
  const auto r = slp_block_run(s, stream, opts, 20, derive_seed(s.seed, 7));
  const PrecoderSet blp = blp_ci_min_power(s, order);
  const auto c = make_psk(order);

  auto out = open_csv(dir / "power.csv", "symbol_idx,slp_power,blp_power");
  double worst_residual = -std::numeric_limits<double>::infinity(), worst_gap = -1.0;
  for (std::size_t k = 0; k < stream.size(); ++k) {
    CVec sym(s.num_users());
    for (int u = 0; u < s.num_users(); ++u) sym(u) = c.points(stream[k][static_cast<std::size_t>(u)]);
    const double pb = (blp.w_comm * sym).squaredNorm();
    const double ps = r.solves[k].x.squaredNorm();
    out << k << ',' << ps << ',' << pb << '\n';
    worst_residual = std::max(worst_residual, r.solves[k].ci_residuals.maxCoeff());
    worst_gap = std::max(worst_gap, (ps - pb) / pb);
  }
  out.close();
  files.push_back("power.csv");
  write_scatter_csv(s, r, stream, order, dir / "scatter.csv");
  files.push_back("scatter.csv");

  SvgPlot plot{"Noiseless received points (SLP)", "in-phase", "quadrature", {}};
  for (int u = 0; u < s.num_users(); ++u) {
    RVec re(stream.size()), im(stream.size());
    const CVec h = s.users[static_cast<std::size_t>(u)].channel;
    for (std::size_t k = 0; k < stream.size(); ++k) {
      const cplx y = h.dot(r.solves[k].x);
      re(static_cast<Eigen::Index>(k)) = y.real();
      im(static_cast<Eigen::Index>(k)) = y.imag();
    }
    plot.series.push_back({"user " + std::to_string(u), re, im, true});
  }
  write_svg(plot, dir / "scatter.svg");
  files.push_back("scatter.svg");

  // margin >= -1e-9 is residual = -margin <= 1e-9
  return {{"slp_worst_ci_residual", worst_residual, 0.0, 1e-9, "le"},
          {"slp_minus_blp_power_rel", worst_gap, 0.0, 1e-6, "le"},
          {"inside_ci_fraction", r.inside_ci_fraction, 1.0, 0.0, "abs"}};
}

std::vector<Probe> run_secure_data(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  require_users(s, "secure_data");
  std::vector<Probe> probes;
  auto out = open_csv(dir / "secrecy.csv",
                      "uncertainty_deg,secrecy_rate_an,secrecy_rate_no_an,eve_rate_an,eve_rate_no_an,mainlobe_width_deg");
  std::vector<CMat> covs;
  std::vector<double> dths, sr_an, sr_plain;
  const auto eve_idx = s.eavesdropper_index();
  for (double dth : p.list("uncertainties_deg")) {
    const EveModel eve = eve_model(s, dth);
    const auto an = solve_secure(s, eve);
    SecureOptions plain_opts;
    plain_opts.artificial_noise = false;
    plain_opts.sensing_tolerance = an.sensing_tolerance;
    const auto plain = solve_secure(s, eve, plain_opts);
    const double width = mainlobe_width_deg(an.transmit.covariance(), s.tx_array, eve.angle_deg);
    out << dth << ',' << an.secrecy_rate << ',' << plain.secrecy_rate << ',' << an.eve_rate << ',' << plain.eve_rate
        << ',' << width << '\n';
    covs.push_back(an.transmit.covariance());
    dths.push_back(dth);
    sr_an.push_back(an.secrecy_rate);
    sr_plain.push_back(plain.secrecy_rate);
    std::ostringstream name;
    name << "an_vs_no_an_" << dth << "deg";
    probes.push_back({name.str(), an.secrecy_rate, plain.secrecy_rate, 1e-9, "ge"});
  }
  out.close();
  files.push_back("secrecy.csv");
  const RVec grid = RVec::LinSpaced(361, -90.0, 90.0);
  write_secure_beampattern_csv(covs, s.tx_array, grid, dir / "beampattern.csv");
  files.push_back("beampattern.csv");
  SvgPlot bp{"Secure transmit beampatterns", "angle (deg)", "gain (dB)", {}};
  for (std::size_t k = 0; k < covs.size(); ++k) {
    const RVec g = beampattern(covs[k], s.tx_array, grid);
    std::ostringstream label;
    label << "dtheta=" << dths[k];
    bp.series.push_back({label.str(), grid, g.unaryExpr([](double v) { return lin2db(std::max(v, 1e-30)); })});
  }
  write_svg(bp, dir / "beampattern.svg");
  write_svg({"Secrecy rate vs Eve angle uncertainty", "uncertainty (deg)", "secrecy rate (bit/s/Hz)",
             {{"AN", to_rvec(dths), to_rvec(sr_an)}, {"no AN", to_rvec(dths), to_rvec(sr_plain)}}},
            dir / "secrecy.svg");
  files.push_back("beampattern.svg");
  files.push_back("secrecy.svg");

  // Directional modulation: radar beam toward the target, QPSK per user.
  std::vector<double> user_angles;
  for (const auto& u : s.users) {
    if (!u.angle_deg) throw DomainError("secure_data: directional modulation needs LoS users with angle_deg");
    user_angles.push_back(*u.angle_deg);
  }
  const ArrayGeometry tx{p.integer("dm_elements"), s.tx_array.spacing};
  const double look = eve_idx ? s.targets[*eve_idx].angle_deg : (s.targets.empty() ? 0.0 : s.targets[0].angle_deg);
  const CVec w_rad = steering_vector(tx, look);
  std::vector<cplx> qpsk;
  for (int k = 0; k < 4; ++k) qpsk.push_back(std::polar(2.0, kPi / 4.0 + k * kPi / 2.0));
  const std::vector<std::vector<cplx>> dicts(user_angles.size(), qpsk);
  const auto beams = dm_beam_set(w_rad, tx, user_angles, dicts);
  auto dm = open_csv(dir / "dm_beams.csv", "beam_index,max_constraint_residual,mainlobe_gain_db");
  double worst = 0.0, lo = INFINITY, hi = -INFINITY;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    double res = 0.0;
    std::size_t rest = b;
    for (std::size_t u = user_angles.size(); u-- > 0;) {
      const cplx want = qpsk[rest % 4];
      rest /= 4;
      res = std::max(res, std::abs(beams[b].dot(steering_vector(tx, user_angles[u])) - want));
    }
    const double g = lin2db(std::norm(beams[b].dot(steering_vector(tx, look))));
    dm << b << ',' << res << ',' << g << '\n';
    worst = std::max(worst, res);
    lo = std::min(lo, g);
    hi = std::max(hi, g);
  }
  dm.close();
  files.push_back("dm_beams.csv");
  probes.push_back({"dm_constraint_residual", worst, 0.0, 1e-10, "le"});
  probes.push_back({"dm_mainlobe_variation_db", hi - lo, 0.0, 0.5, "le"});
  return probes;
}

std::vector<Probe> run_secure_sensing(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  require_targets(s, "secure_sensing");
  const auto c = standard_constellation(p.str("constellation"));
  const int n = s.num_subcarriers;
  const AcfSpec spec{n, p.integer("lambda"), p.real("alpha")};
  const auto r = eve_vs_legit(s, spec, c);
  write_profile_csv(r.eve, dir / "profile_eve.csv");
  write_profile_csv(r.legit, dir / "profile_legit.csv");
  write_svg({"Eve (MF) vs legitimate (RF) range profiles", "delay bin", "power (dB)",
             {{"Eve MF", bin_axis(n), profile_db(r.eve)}, {"legit RF", bin_axis(n), profile_db(r.legit)}}},
            dir / "profiles.svg");
  files.insert(files.end(), {"profile_eve.csv", "profile_legit.csv", "profiles.svg"});

  std::vector<Probe> probes;
  // ghosts against the closed form on a noiseless single-target copy
  Scenario quiet = s;
  quiet.sensing_noise_power = 0.0;
  quiet.targets = {s.targets[0]};
  const auto alphas = p.list("alphas");
  auto sweep = open_csv(dir / "alpha_sweep.csv",
                        "alpha,lambda,legit_snr_loss_db,comm_rate,eve_isl_margin_db,eve_psl_margin_db,"
                        "ghost_ratio_noiseless,ghost_ratio_predicted,legit_ghost_noiseless");
  double prev_loss = -INFINITY, prev_rate = INFINITY;
  int loss_violations = 0;
  for (double a : alphas) {
    const AcfSpec sp{n, spec.lambda_period, a};
    const auto noisy = eve_vs_legit(s, sp, c).report;
    const auto clean = eve_vs_legit(quiet, sp, c);
    const int d = s.targets[0].delay_bin;
    const double legit_ghost =
        std::abs(clean.legit.bins((d + sp.lambda_period) % n)) / std::abs(clean.legit.bins(d));
    const double predicted = a / n;
    sweep << a << ',' << sp.lambda_period << ',' << noisy.legit_snr_loss_db << ',' << noisy.comm_rate << ','
          << noisy.eve_isl_margin << ',' << noisy.eve_psl_margin << ',' << clean.report.ghost_ratio << ',' << predicted
          << ',' << legit_ghost << '\n';
    if (c.is_unit_modulus(1e-9) && sp.num_peaks() > 0) {
      std::ostringstream name;
      name << "ghost_ratio_alpha" << a;
      probes.push_back({name.str(), clean.report.ghost_ratio, predicted, 1e-6, "abs"});
    }
    std::ostringstream lname;
    lname << "legit_ghost_alpha" << a;
    probes.push_back({lname.str(), legit_ghost, 0.0, 1e-9, "le"});
    if (noisy.legit_snr_loss_db < prev_loss || noisy.comm_rate > prev_rate) ++loss_violations;
    prev_loss = noisy.legit_snr_loss_db;
    prev_rate = noisy.comm_rate;
  }
  sweep.close();
  files.push_back("alpha_sweep.csv");
  probes.push_back({"loss_rate_monotone_violations", static_cast<double>(loss_violations), 0.0, 0.0, "abs"});

  std::vector<int> lambdas;
  for (double l : p.list("lambdas")) lambdas.push_back(static_cast<int>(l));
  SecurityThresholds th;
  th.psl_db = p.real("psl_margin_db");
  const auto t = sweep_security_tradeoff(s, c, p.list("rhos"), alphas, lambdas, th);
  auto out = open_csv(dir / "tradeoff.csv",
                      "rho,feasible,alpha,lambda,legit_snr_loss_db,comm_rate,eve_isl_margin_db,eve_psl_margin_db");
  for (const auto& row : t.rows)
    out << row.rho << ',' << row.feasible << ',' << row.spec.peak_amplitude << ',' << row.spec.lambda_period << ','
        << row.report.legit_snr_loss_db << ',' << row.report.comm_rate << ',' << row.report.eve_isl_margin << ','
        << row.report.eve_psl_margin << '\n';
  out.close();
  files.push_back("tradeoff.csv");
  return probes;
}

std::vector<Probe> run_full_duplex_budget(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  const int nr = s.rx_array.num_elements, nt = s.num_tx();
  int rank = 0;
  if (p.str("si_rank") == "auto") rank = nr < nt ? 0 : std::max(1, nt / 2);
  else rank = p.integer("si_rank");
  Rng rng(derive_seed(s.seed, 8));
  const SiChannel si = make_si_channel(nr, nt, p.real("si_gain_db"), rng, rank);

  SiBudgetOptions opts;
  opts.isolation_db = p.real("isolation_db");
  opts.td_error_db = p.real("td_error_db");
  opts.distortion = p.real("distortion");
  opts.seed = derive_seed(s.seed, 9);
  const auto stages = si_budget(si, opts);
  write_si_budget_csv(stages, dir / "si_budget.csv");
  files.push_back("si_budget.csv");

  std::vector<Probe> probes;
  const CMat w = null_projector(si);
  const int r = numerical_rank(si.matrix);
  probes.push_back({"null_leakage_rel", (si.matrix * w).norm() / si.matrix.norm(), 0.0, 1e-10, "le"});
  probes.push_back({"null_rank", static_cast<double>(numerical_rank(w)), static_cast<double>(nt - r), 0.0, "abs"});
  probes.push_back({"cumulative_suppression_db", stages.back().cumulative_db, 100.0, 0.0, "ge"});

  // residual vs estimation error: measured next to the closed form
  auto out = open_csv(dir / "td_residual.csv", "td_error_db,measured_residual_db,predicted_residual_db");
  RVec xs(5), meas(5);
  Rng trng(derive_seed(s.seed, 10));
  for (int k = 0; k < 5; ++k) {
    const double err = -10.0 * (k + 1);
    double acc = 0.0, ref = 0.0;
    for (int t = 0; t < 50; ++t) {
      const CMat x = trng.cgaussian_mat(nt, 64);
      acc += td_cancel(si.matrix * x, si, x, err, trng).squaredNorm();
      ref += (si.matrix * x).squaredNorm();
    }
    xs(k) = err;
    meas(k) = lin2db(acc / ref);
    out << err << ',' << meas(k) << ',' << err << '\n';
    std::ostringstream name;
    name << "td_residual_" << err << "db";
    probes.push_back({name.str(), meas(k), err, 1.0, "abs"});
  }
  out.close();
  files.push_back("td_residual.csv");
  write_svg({"Time-domain cancellation residual", "estimation error (dB)", "residual SI (dB)",
             {{"measured", xs, meas}, {"predicted", xs, xs}}},
            dir / "td_residual.svg");
  files.push_back("td_residual.svg");
  return probes;
}

std::vector<Probe> run_im_ber(const Scenario& s, const Params& p, const fs::path& dir, Files& files) {
  const auto dict = make_im_dictionary(s.num_tx(), p.integer("active"));
  const auto phase = make_psk(p.integer("phase_order"));
  const double look = s.users.empty() || !s.users[0].angle_deg ? 0.0 : *s.users[0].angle_deg;
  const CVec a = steering_vector(s.tx_array, look);
  const auto snrs = p.list("snrs_db");
  const auto curve = im_ber_curve(dict, a, phase, snrs, p.integer("trials"), derive_seed(s.seed, 12));
  write_im_ber_csv(curve, dir / "ber.csv");
  write_im_ber_csv(curve, dir / "ber_ml.csv", true);
  files.insert(files.end(), {"ber.csv", "ber_ml.csv"});

  RVec x(curve.size()), two(curve.size()), ml(curve.size());
  int violations = 0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    x(i) = curve[k].snr_db;
    two(i) = curve[k].index_error_rate > 0 ? std::log10(curve[k].index_error_rate) : kNaN;
    ml(i) = curve[k].ml_index_error_rate > 0 ? std::log10(curve[k].ml_index_error_rate) : kNaN;
    if (k > 0 && curve[k].index_error_rate > curve[k - 1].index_error_rate) ++violations;
  }
  write_svg({"Index error rate", "SNR (dB)", "log10 IER", {{"two-stage", x, two}, {"joint ML", x, ml}}},
            dir / "ber.svg");
  files.push_back("ber.svg");

  int correct = 0, total = 0;
  const cplx alpha{0.8, 0.6};
  for (std::size_t i = 0; i < dict.size(); ++i)
    for (Eigen::Index m = 0; m < phase.size(); ++m, ++total) {
      const auto d = im_detect(alpha * im_transmit(dict, i, phase.points(m), a), dict, a, alpha,
                               ImDetectMode::PhaseAgnostic, &phase);
      correct += d.index == i && d.symbol_index == m;
    }
  std::vector<Probe> probes;
  probes.push_back({"noiseless_detection_rate", static_cast<double>(correct) / total, 1.0, 0.0, "abs"});
  probes.push_back({"ier_monotone_violations", static_cast<double>(violations), 0.0, 0.0, "abs"});
  const auto s2 = snr_at_index_error_rate(curve, 1e-2, false);
  const auto s1 = snr_at_index_error_rate(curve, 1e-2, true);
  probes.push_back({"two_stage_gap_at_ier_1e-2_db", s1 && s2 ? *s2 - *s1 : kNaN, 0.0, 0.5, "le"});
  return probes;
}

}  // namespace

std::string to_string(ExperimentKind k) { return info(k).name; }

ExperimentKind experiment_kind_from_string(const std::string& s) {
  std::string known;
  for (const auto& i : kinds()) {
    if (s == i.name) return i.kind;
    known += (known.empty() ? "" : ", ") + std::string(i.name);
  }
  throw DomainError("unknown experiment kind '" + s + "' (known: " + known + ")");
}

std::vector<ExperimentKind> all_experiment_kinds() {
  std::vector<ExperimentKind> out;
  for (const auto& i : kinds()) out.push_back(i.kind);
  return out;
}

std::vector<std::pair<std::string, std::string>> experiment_parameters(ExperimentKind k) { return info(k).params; }

Scenario default_scenario() { return parse_scenario(kDefaultScenario); }

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  Overrides scen, rest;
  for (const auto& kv : spec.overrides) (is_scenario_key(kv.first) ? scen : rest).push_back(kv);
  const Params params(spec.kind, rest);
  const Scenario s = spec.scenario_path.empty() ? parse_scenario(kDefaultScenario, scen)
                                                : load_scenario(spec.scenario_path, scen);

  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (ec || !fs::is_directory(spec.output_dir))
    throw Error("cannot create output directory " + spec.output_dir.string());

  Files files;
  std::vector<Probe> probes;
  const fs::path& dir = spec.output_dir;
  switch (spec.kind) {
    case ExperimentKind::ConstellationTradeoff: probes = run_constellation_tradeoff(s, params, dir, files); break;
    case ExperimentKind::BlpTradeoff: probes = run_blp_tradeoff(s, params, dir, files); break;
    case ExperimentKind::SlpVsBlp: probes = run_slp_vs_blp(s, params, dir, files); break;
    case ExperimentKind::SecureData: probes = run_secure_data(s, params, dir, files); break;
    case ExperimentKind::SecureSensing: probes = run_secure_sensing(s, params, dir, files); break;
    case ExperimentKind::FullDuplexBudget: probes = run_full_duplex_budget(s, params, dir, files); break;
    case ExperimentKind::ImBer: probes = run_im_ber(s, params, dir, files); break;
    case ExperimentKind::OfdmReceivers: probes = run_ofdm_receivers(s, params, dir, files); break;
  }
  write_probes_csv(probes, dir / "probes.csv");
  files.push_back("probes.csv");

  ExperimentResult out;
  out.manifest = make_manifest(to_string(spec.kind), dir, files);
  out.probes = probes;
  out.manifest_path = dir / "manifest.json";
  write_manifest(out.manifest, out.manifest_path);
  return out;
}

ReportResult report(const fs::path& manifest_path) {
  ReportResult r;
  std::ostringstream text;
  const Manifest m = read_manifest(manifest_path);
  if (m.entries.empty()) {
    r.text = "no artifacts\n";
    return r;
  }
  const fs::path dir = manifest_path.parent_path();
  text << m.kind << ": " << m.entries.size() << " artifacts\n";
  std::vector<std::string> failed;
  bool has_probes = false;
  for (const auto& e : m.entries) {
    const fs::path f = dir / e.file;
    if (!fs::exists(f)) {
      text << "  MISSING  " << e.file << '\n';
      failed.push_back(e.file);
      continue;
    }
    const bool same = sha256_file(f) == e.sha256;
    text << "  " << (same ? "ok       " : "ALTERED  ") << e.file;
    if (e.rows > 0) text << " (" << e.rows << " rows)";
    text << '\n';
    if (!same) failed.push_back(e.file);
    if (e.file == "probes.csv") has_probes = true;
  }
  if (has_probes && fs::exists(dir / "probes.csv")) {
    for (const auto& p : read_probes_csv(dir / "probes.csv")) {
      const bool ok = p.pass();
      text << "  " << (ok ? "PASS " : "FAIL ") << p.name << ": measured " << p.measured << ", expected " << p.relation
           << ' ' << p.expected << " (tol " << p.tolerance << ")\n";
      if (!ok) failed.push_back(p.name);
    }
  }
  if (!failed.empty()) {
    r.exit_code = 1;
    text << "failed:";
    for (const auto& f : failed) text << ' ' << f;
    text << '\n';
  }
  r.text = text.str();
  return r;
}

}  // namespace isac
