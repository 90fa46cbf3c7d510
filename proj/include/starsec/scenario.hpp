#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "starsec/types.hpp"

namespace starsec {

enum class SystemVariant { Star, ConventionalRis, NoRis };

std::string variant_name(SystemVariant v);
SystemVariant variant_from_name(const std::string& name);

struct PathLossExponents {
  double direct = 3.6;
  double bs_ris = 2.2;
  double ris_user = 2.4;
  double bs_target = 2.2;
};

double noise_power_watts(double psd_dbm_hz, double bandwidth_hz);
double path_loss_db(double distance_m, double exponent);

// Half-wavelength ULA steering vector; element m carries phase pi*m*sin(az).
CVec steering_vector(double azimuth_rad, int n_elements);

struct ScenarioConfig {
  int n_tx = 6;
  int n_rx = 4;
  int n_user_antennas = 2;
  int n_ris_elements = 100;
  int n_users = 4;
  int n_targets = 2;
  double p_max = dbm_to_watts(10.0);
  double sensing_sinr_threshold = db_to_linear(5.0);
  double mean_rcs = 0.5;
  double noise_power = noise_power_watts(-174.0, 1.0e7);
  double rician_factor = db_to_linear(3.0);
  PathLossExponents path_loss_exponents;
  std::vector<int> reflection_user_indices = {0, 1};
  std::uint64_t rng_seed = 1;
  SystemVariant system_variant = SystemVariant::Star;

  void validate() const;  // throws std::invalid_argument on contract violations
  std::vector<bool> reflection_mask() const;
  SensingSpec sensing_spec() const;
};

struct ScenarioGeometry {
  Vec3 bs_position{0.0, 0.0, 5.0};
  Vec3 ris_position{70.0, 10.0, 10.0};
  std::vector<Vec3> user_positions;
  std::vector<double> target_distances_m;
  std::vector<double> target_azimuths_rad;
};

// Samples user positions uniformly over the two 10 m service disks and
// places targets on the deterministic range/azimuth grid.
ScenarioGeometry default_geometry(const ScenarioConfig& config, std::uint64_t seed);

struct ChannelSet {
  CMat h_bs;                // n_ris x n_tx, noise-normalized
  std::vector<CMat> h_bk;   // per user, n_user_antennas x n_tx, noise-normalized
  std::vector<CMat> h_sk;   // per user, n_user_antennas x n_ris
  CMat v_t;                 // n_targets x n_tx, rows noise-normalized
  CMat v_r;                 // n_rx x n_targets, pure steering columns
  CMat g_si;                // n_rx x n_tx, noise-normalized self-interference
  std::vector<bool> user_in_reflection;

  int n_tx() const { return static_cast<int>(g_si.cols()); }
  int n_rx() const { return static_cast<int>(g_si.rows()); }
  int n_ris() const { return static_cast<int>(h_bs.rows()); }
  int n_users() const { return static_cast<int>(h_bk.size()); }
  int n_targets() const { return static_cast<int>(v_t.rows()); }
  int n_user_antennas() const { return h_bk.empty() ? 0 : static_cast<int>(h_bk[0].rows()); }
};

ChannelSet generate_channels(const ScenarioConfig& config, const ScenarioGeometry& geometry,
                             std::uint64_t seed);

// Zeroes the cascaded links; direct, eavesdropping, and self-interference
// channels are left untouched so variant comparisons stay paired.
ChannelSet zero_ris_links(ChannelSet channels);

ScenarioConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ScenarioConfig& config);
ScenarioConfig load_config(const std::string& path);

// Binary fixture dump: little-endian float32 (re, im) pairs, row-major.
void dump_channels(const ChannelSet& channels, const std::string& path);
ChannelSet load_channels(const std::string& path);

}  // namespace starsec
