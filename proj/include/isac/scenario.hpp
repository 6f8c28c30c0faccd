#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "isac/types.hpp"

namespace isac {

// Uniform linear array; spacing in wavelengths.
struct ArrayGeometry {
  int num_elements = 1;
  double spacing = 0.5;

  bool operator==(const ArrayGeometry&) const = default;
};

struct Target {
  double angle_deg = 0.0;
  int delay_bin = 0;
  cplx amplitude{1.0, 0.0};
  bool is_eavesdropper = false;

  bool operator==(const Target&) const = default;
};

struct CommUser {
  CVec channel;
  double sinr_target_db = 10.0;
  double noise_power = 1.0;
  std::optional<double> angle_deg;  // set when the channel is a LoS steering vector

  double sinr_target() const { return db2lin(sinr_target_db); }
  bool operator==(const CommUser& o) const {
    return channel.size() == o.channel.size() && channel == o.channel &&
           sinr_target_db == o.sinr_target_db && noise_power == o.noise_power &&
           angle_deg == o.angle_deg;
  }
};

// Immutable experiment description. Everything random downstream derives
// from `seed`.
struct Scenario {
  ArrayGeometry tx_array{16, 0.5};
  ArrayGeometry rx_array{16, 0.5};
  std::vector<CommUser> users;
  std::vector<Target> targets;
  std::uint64_t seed = 1;
  int num_subcarriers = 256;
  int num_blocks = 64;
  double power_budget = 1.0;
  double sensing_noise_power = 1.0;

  int num_tx() const { return tx_array.num_elements; }
  int num_users() const { return static_cast<int>(users.size()); }
  // U x N_t matrix whose rows are h_u^H.
  CMat channel_matrix() const;
  // Index of the first target flagged as eavesdropper, if any.
  std::optional<std::size_t> eavesdropper_index() const;

  bool operator==(const Scenario&) const = default;
};

// a(theta)_n = exp(j 2 pi spacing n sin(theta)), n = 0..N-1.
CVec steering_vector(const ArrayGeometry& geom, double angle_deg);

// d a(theta) / d theta with theta in radians.
CVec steering_derivative(const ArrayGeometry& geom, double angle_deg);

// i.i.d. CN(0,1) entries, reproducible from `seed`.
CVec rayleigh_channel(std::uint64_t seed, int num_tx);

// Checks every invariant; throws ValidationError naming the field path.
void validate(const Scenario& s);

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Top-level keys accepted by `overrides` (seed, subcarriers, ...).
bool is_scenario_key(const std::string& key);

Scenario parse_scenario(const std::string& json_text, const Overrides& overrides = {});
Scenario load_scenario(const std::filesystem::path& path, const Overrides& overrides = {});
std::string scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

}  // namespace isac
