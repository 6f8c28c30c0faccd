#include "isac/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace isac {

using nlohmann::json;

CMat Scenario::channel_matrix() const {
  CMat h(num_users(), num_tx());
  for (int u = 0; u < num_users(); ++u) h.row(u) = users[u].channel.adjoint();
  return h;
}

std::optional<std::size_t> Scenario::eavesdropper_index() const {
  for (std::size_t k = 0; k < targets.size(); ++k)
    if (targets[k].is_eavesdropper) return k;
  return std::nullopt;
}

CVec steering_vector(const ArrayGeometry& geom, double angle_deg) {
  if (!(std::abs(angle_deg) <= 90.0))
    throw DomainError("steering_vector: angle " + std::to_string(angle_deg) + " deg outside [-90, 90]");
  const double phase = 2.0 * kPi * geom.spacing * std::sin(deg2rad(angle_deg));
  CVec a(geom.num_elements);
  for (int n = 0; n < geom.num_elements; ++n) a(n) = std::polar(1.0, phase * n);
  return a;
}

CVec steering_derivative(const ArrayGeometry& geom, double angle_deg) {
  const double theta = deg2rad(angle_deg);
  const double dphase = 2.0 * kPi * geom.spacing * std::cos(theta);
  CVec a = steering_vector(geom, angle_deg);
  for (int n = 0; n < geom.num_elements; ++n) a(n) *= kJ * dphase * static_cast<double>(n);
  return a;
}

CVec rayleigh_channel(std::uint64_t seed, int num_tx) {
  Rng rng(seed);
  return rng.cgaussian_vec(num_tx);
}

namespace {

std::string idx_path(const std::string& base, std::size_t i, const std::string& field) {
  return base + "[" + std::to_string(i) + "]" + (field.empty() ? "" : "." + field);
}

void check_array(const ArrayGeometry& g, const std::string& path) {
  if (g.num_elements < 1) throw ValidationError(path + "_elements", "must be >= 1");
  if (!(g.spacing > 0.0) || !std::isfinite(g.spacing)) throw ValidationError("spacing", "must be > 0");
}

template <typename T>
T get_or(const json& j, const std::string& key, const std::string& path, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(path.empty() ? key : path + "." + key, std::string("wrong type: ") + e.what());
  }
}

cplx parse_complex(const json& j, const std::string& path) {
  if (j.is_number()) return {j.get<double>(), 0.0};
  if (j.is_array() && j.size() == 2 && j[0].is_number() && j[1].is_number())
    return {j[0].get<double>(), j[1].get<double>()};
  throw ValidationError(path, "expected a number or [re, im] pair");
}

json complex_to_json(cplx z) { return json::array({z.real(), z.imag()}); }

const char* const kScenarioKeys[] = {"tx_elements", "rx_elements", "spacing",      "subcarriers",
                                     "blocks",      "seed",        "power_budget", "sensing_noise_power"};

}  // namespace

void validate(const Scenario& s) {
  check_array(s.tx_array, "tx");
  check_array(s.rx_array, "rx");
  if (s.num_subcarriers < 1) throw ValidationError("subcarriers", "must be >= 1");
  if (s.num_blocks < 1) throw ValidationError("blocks", "must be >= 1");
  if (!(s.power_budget > 0.0)) throw ValidationError("power_budget", "must be > 0");
  if (!(s.sensing_noise_power >= 0.0)) throw ValidationError("sensing_noise_power", "must be >= 0");
  for (std::size_t u = 0; u < s.users.size(); ++u) {
    const auto& user = s.users[u];
    if (user.channel.size() != s.num_tx())
      throw ValidationError(idx_path("users", u, "channel"),
                            "length " + std::to_string(user.channel.size()) + " != tx_elements " +
                                std::to_string(s.num_tx()));
    if (!user.channel.allFinite()) throw ValidationError(idx_path("users", u, "channel"), "non-finite entry");
    if (user.channel.norm() == 0.0) throw ValidationError(idx_path("users", u, "channel"), "all-zero channel");
    if (!(user.noise_power > 0.0)) throw ValidationError(idx_path("users", u, "noise_power"), "must be > 0");
    if (!std::isfinite(user.sinr_target_db))
      throw ValidationError(idx_path("users", u, "sinr_target_db"), "must be finite");
  }
  for (std::size_t k = 0; k < s.targets.size(); ++k) {
    const auto& t = s.targets[k];
    if (!(std::abs(t.angle_deg) <= 90.0))
      throw ValidationError(idx_path("targets", k, "angle_deg"), "outside [-90, 90]");
    if (t.delay_bin < 0 || t.delay_bin >= s.num_subcarriers)
      throw ValidationError(idx_path("targets", k, "delay_bin"),
                            std::to_string(t.delay_bin) + " not in [0, subcarriers=" +
                                std::to_string(s.num_subcarriers) + ")");
    if (!std::isfinite(t.amplitude.real()) || !std::isfinite(t.amplitude.imag()))
      throw ValidationError(idx_path("targets", k, "amplitude"), "non-finite");
  }
}

bool is_scenario_key(const std::string& key) {
  for (const char* k : kScenarioKeys)
    if (key == k) return true;
  return false;
}

Scenario parse_scenario(const std::string& json_text, const Overrides& overrides) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError("<root>", std::string("parse error: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("<root>", "expected a JSON object");
  for (const auto& [key, value] : overrides) {
    if (!is_scenario_key(key)) throw ValidationError(key, "unknown scenario override");
    try {
      j[key] = json::parse(value);
    } catch (const json::parse_error&) {
      throw ValidationError(key, "override value '" + value + "' is not a number");
    }
  }

  Scenario s;
  s.tx_array.num_elements = get_or<int>(j, "tx_elements", "", 16);
  s.rx_array.num_elements = get_or<int>(j, "rx_elements", "", s.tx_array.num_elements);
  s.tx_array.spacing = s.rx_array.spacing = get_or<double>(j, "spacing", "", 0.5);
  s.num_subcarriers = get_or<int>(j, "subcarriers", "", 256);
  s.num_blocks = get_or<int>(j, "blocks", "", 64);
  s.seed = get_or<std::uint64_t>(j, "seed", "", 1);
  s.power_budget = get_or<double>(j, "power_budget", "", 1.0);
  s.sensing_noise_power = get_or<double>(j, "sensing_noise_power", "", 1.0);
  check_array(s.tx_array, "tx");
  check_array(s.rx_array, "rx");

  if (j.contains("users")) {
    if (!j["users"].is_array()) throw ValidationError("users", "expected an array");
    const auto& users = j["users"];
    for (std::size_t u = 0; u < users.size(); ++u) {
      const auto& ju = users[u];
      const std::string path = idx_path("users", u, "");
      if (!ju.is_object()) throw ValidationError(path, "expected an object");
      CommUser user;
      user.sinr_target_db = get_or<double>(ju, "sinr_target_db", path, 10.0);
      user.noise_power = get_or<double>(ju, "noise_power", path, 1.0);
      if (ju.contains("channel")) {
        const auto& jc = ju["channel"];
        if (!jc.is_array()) throw ValidationError(path + ".channel", "expected an array");
        user.channel.resize(static_cast<Eigen::Index>(jc.size()));
        for (std::size_t n = 0; n < jc.size(); ++n)
          user.channel(static_cast<Eigen::Index>(n)) = parse_complex(jc[n], idx_path(path + ".channel", n, ""));
        if (ju.contains("angle_deg")) user.angle_deg = get_or<double>(ju, "angle_deg", path, 0.0);
      } else if (ju.contains("angle_deg")) {
        const double angle = get_or<double>(ju, "angle_deg", path, 0.0);
        if (!(std::abs(angle) <= 90.0)) throw ValidationError(path + ".angle_deg", "outside [-90, 90]");
        user.angle_deg = angle;
        user.channel = steering_vector(s.tx_array, angle);
      } else {
        user.channel = rayleigh_channel(derive_seed(s.seed, 1000 + u), s.num_tx());
      }
      s.users.push_back(std::move(user));
    }
  }
  if (j.contains("targets")) {
    if (!j["targets"].is_array()) throw ValidationError("targets", "expected an array");
    const auto& targets = j["targets"];
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto& jt = targets[k];
      const std::string path = idx_path("targets", k, "");
      if (!jt.is_object()) throw ValidationError(path, "expected an object");
      Target t;
      t.angle_deg = get_or<double>(jt, "angle_deg", path, 0.0);
      t.delay_bin = get_or<int>(jt, "delay_bin", path, 0);
      t.is_eavesdropper = get_or<bool>(jt, "eavesdropper", path, false);
      if (jt.contains("amplitude")) {
        t.amplitude = parse_complex(jt["amplitude"], path + ".amplitude");
      } else {
        const double db = get_or<double>(jt, "amplitude_db", path, 0.0);
        const double phase = get_or<double>(jt, "phase_deg", path, 0.0);
        t.amplitude = std::polar(std::pow(10.0, db / 20.0), deg2rad(phase));
      }
      s.targets.push_back(t);
    }
  }
  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open scenario file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), overrides);
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["tx_elements"] = s.tx_array.num_elements;
  j["rx_elements"] = s.rx_array.num_elements;
  j["spacing"] = s.tx_array.spacing;
  j["subcarriers"] = s.num_subcarriers;
  j["blocks"] = s.num_blocks;
  j["seed"] = s.seed;
  j["power_budget"] = s.power_budget;
  j["sensing_noise_power"] = s.sensing_noise_power;
  j["users"] = json::array();
  for (const auto& u : s.users) {
    json ju;
    ju["channel"] = json::array();
    for (Eigen::Index n = 0; n < u.channel.size(); ++n) ju["channel"].push_back(complex_to_json(u.channel(n)));
    if (u.angle_deg) ju["angle_deg"] = *u.angle_deg;
    ju["sinr_target_db"] = u.sinr_target_db;
    ju["noise_power"] = u.noise_power;
    j["users"].push_back(ju);
  }
  j["targets"] = json::array();
  for (const auto& t : s.targets) {
    j["targets"].push_back({{"angle_deg", t.angle_deg},
                            {"delay_bin", t.delay_bin},
                            {"amplitude", complex_to_json(t.amplitude)},
                            {"eavesdropper", t.is_eavesdropper}});
  }
  return j.dump(2);
}

void save_scenario(const Scenario& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError(path.string(), "cannot write scenario file");
  out << scenario_to_json(s) << '\n';
}

}  // namespace isac
