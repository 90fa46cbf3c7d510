#include "starsec/scenario.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "starsec/rng.hpp"

namespace starsec {

std::string variant_name(SystemVariant v) {
  switch (v) {
    case SystemVariant::Star: return "STAR";
    case SystemVariant::ConventionalRis: return "cRIS";
    case SystemVariant::NoRis: return "NoRIS";
  }
  throw std::invalid_argument("unknown variant");
}

SystemVariant variant_from_name(const std::string& name) {
  std::string s;
  s.reserve(name.size());
  for (char c : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (s == "star") return SystemVariant::Star;
  if (s == "cris" || s == "conventional" || s == "conventionalris") return SystemVariant::ConventionalRis;
  if (s == "noris" || s == "none") return SystemVariant::NoRis;
  throw std::invalid_argument("unknown variant name: " + name);
}

double noise_power_watts(double psd_dbm_hz, double bandwidth_hz) {
  if (bandwidth_hz <= 0.0) throw std::domain_error("bandwidth must be positive");
  return dbm_to_watts(psd_dbm_hz + 10.0 * std::log10(bandwidth_hz));
}

double path_loss_db(double distance_m, double exponent) {
  if (distance_m <= 0.0) throw std::domain_error("path loss distance must be positive");
  return -30.0 - 10.0 * exponent * std::log10(distance_m);
}

CVec steering_vector(double azimuth_rad, int n_elements) {
  if (n_elements < 1) throw std::invalid_argument("steering vector needs at least one element");
  CVec v(n_elements);
  const double s = std::sin(azimuth_rad);
  for (int m = 0; m < n_elements; ++m) v[m] = std::polar(1.0, M_PI * m * s);
  return v;
}

void ScenarioConfig::validate() const {
  if (n_tx < 1 || n_rx < 1 || n_user_antennas < 1 || n_users < 1 || n_targets < 1)
    throw std::invalid_argument("antenna/user/target counts must be positive");
  if (n_ris_elements < 0) throw std::invalid_argument("n_ris_elements must be non-negative");
  if (n_ris_elements == 0 && system_variant != SystemVariant::NoRis)
    throw std::invalid_argument("n_ris_elements = 0 is only valid without a surface");
  if (system_variant == SystemVariant::ConventionalRis && n_ris_elements % 2 != 0)
    throw std::invalid_argument("split-surface variant needs an even element count");
  if (!(p_max > 0.0)) throw std::invalid_argument("p_max must be positive");
  if (!(noise_power > 0.0)) throw std::invalid_argument("noise power must be positive");
  if (!(sensing_sinr_threshold > 0.0)) throw std::invalid_argument("sensing threshold must be positive");
  if (!(mean_rcs > 0.0) || mean_rcs > 1.0) throw std::invalid_argument("mean_rcs must lie in (0, 1]");
  if (rician_factor < 0.0) throw std::invalid_argument("rician factor must be non-negative");
  const auto& e = path_loss_exponents;
  if (e.direct <= 0.0 || e.bs_ris <= 0.0 || e.ris_user <= 0.0 || e.bs_target <= 0.0)
    throw std::invalid_argument("path loss exponents must be positive");
  std::set<int> seen;
  for (int k : reflection_user_indices) {
    if (k < 0 || k >= n_users) throw std::invalid_argument("reflection user index out of range");
    if (!seen.insert(k).second) throw std::invalid_argument("duplicate reflection user index");
  }
}

std::vector<bool> ScenarioConfig::reflection_mask() const {
  std::vector<bool> mask(static_cast<std::size_t>(n_users), false);
  for (int k : reflection_user_indices) mask[static_cast<std::size_t>(k)] = true;
  return mask;
}

SensingSpec ScenarioConfig::sensing_spec() const {
  return SensingSpec::uniform(sensing_sinr_threshold, n_targets, mean_rcs);
}

namespace {

double azimuth_xy(const Vec3& from, const Vec3& to) {
  return std::atan2(to.y() - from.y(), to.x() - from.x());
}

CMat rician_channel(double path_loss_linear, double kappa, const CVec& a_rx, const CVec& a_tx,
                    Rng& rng) {
  const CMat los = a_rx * a_tx.adjoint();
  const CMat nlos = rng.cnormal_matrix(static_cast<int>(a_rx.size()), static_cast<int>(a_tx.size()));
  const double w_los = std::sqrt(kappa / (1.0 + kappa));
  const double w_nlos = std::sqrt(1.0 / (1.0 + kappa));
  return std::sqrt(path_loss_linear) * (w_los * los + w_nlos * nlos);
}

}  // namespace

ScenarioGeometry default_geometry(const ScenarioConfig& config, std::uint64_t seed) {
  config.validate();
  ScenarioGeometry g;
  g.bs_position = Vec3(0.0, 0.0, 5.0);
  g.ris_position = Vec3(70.0, 10.0, 10.0);

  const Vec3 reflection_center(150.0, -20.0, 2.0);
  const Vec3 transmission_center(150.0, 40.0, 2.0);
  const double radius = 10.0;

  Rng rng = Rng(seed).substream(rng_block::kGeometry);
  const auto mask = config.reflection_mask();
  g.user_positions.resize(static_cast<std::size_t>(config.n_users));
  for (int k = 0; k < config.n_users; ++k) {
    const double r = radius * std::sqrt(rng.uniform());
    const double a = 2.0 * M_PI * rng.uniform();
    const Vec3& center = mask[static_cast<std::size_t>(k)] ? reflection_center : transmission_center;
    g.user_positions[static_cast<std::size_t>(k)] =
        center + Vec3(r * std::cos(a), r * std::sin(a), 0.0);
  }

  g.target_distances_m.resize(static_cast<std::size_t>(config.n_targets));
  g.target_azimuths_rad.resize(static_cast<std::size_t>(config.n_targets));
  for (int l = 0; l < config.n_targets; ++l) {
    g.target_distances_m[static_cast<std::size_t>(l)] = 10.0 + 5.0 * (l + 1);
    g.target_azimuths_rad[static_cast<std::size_t>(l)] = 20.0 * (l + 1) * M_PI / 180.0;
  }
  return g;
}

ChannelSet generate_channels(const ScenarioConfig& config, const ScenarioGeometry& geometry,
                             std::uint64_t seed) {
  config.validate();
  if (static_cast<int>(geometry.user_positions.size()) != config.n_users)
    throw std::invalid_argument("geometry user count does not match config");
  if (static_cast<int>(geometry.target_distances_m.size()) != config.n_targets ||
      static_cast<int>(geometry.target_azimuths_rad.size()) != config.n_targets)
    throw std::invalid_argument("geometry target count does not match config");

  const double sigma = std::sqrt(config.noise_power);
  const double kappa = config.rician_factor;
  const auto& pl = config.path_loss_exponents;
  const Rng master(seed);

  ChannelSet ch;
  ch.user_in_reflection = config.reflection_mask();

  // Direct BS-user links: Rayleigh fading.
  {
    Rng rng = master.substream(rng_block::kDirectLinks);
    ch.h_bk.resize(static_cast<std::size_t>(config.n_users));
    for (int k = 0; k < config.n_users; ++k) {
      const double d = (geometry.user_positions[static_cast<std::size_t>(k)] - geometry.bs_position).norm();
      const double gain = std::sqrt(db_to_linear(path_loss_db(d, pl.direct)));
      ch.h_bk[static_cast<std::size_t>(k)] =
          (gain / sigma) * rng.cnormal_matrix(config.n_user_antennas, config.n_tx);
    }
  }

  const bool with_surface = config.system_variant != SystemVariant::NoRis && config.n_ris_elements > 0;

  // BS-RIS link: Rician with a geometric line-of-sight component.
  {
    Rng rng = master.substream(rng_block::kBsRisLink);
    if (with_surface) {
      const double d = (geometry.ris_position - geometry.bs_position).norm();
      const CVec a_ris = steering_vector(azimuth_xy(geometry.ris_position, geometry.bs_position),
                                         config.n_ris_elements);
      const CVec a_bs = steering_vector(azimuth_xy(geometry.bs_position, geometry.ris_position),
                                        config.n_tx);
      ch.h_bs = rician_channel(db_to_linear(path_loss_db(d, pl.bs_ris)), kappa, a_ris, a_bs, rng) / sigma;
    } else {
      ch.h_bs = CMat::Zero(config.n_ris_elements, config.n_tx);
    }
  }

  // RIS-user links: Rician, not noise-normalized (the cascade already is).
  {
    Rng rng = master.substream(rng_block::kRisUserLinks);
    ch.h_sk.resize(static_cast<std::size_t>(config.n_users));
    for (int k = 0; k < config.n_users; ++k) {
      if (!with_surface) {
        ch.h_sk[static_cast<std::size_t>(k)] = CMat::Zero(config.n_user_antennas, config.n_ris_elements);
        continue;
      }
      const Vec3& u = geometry.user_positions[static_cast<std::size_t>(k)];
      const double d = (u - geometry.ris_position).norm();
      const CVec a_user = steering_vector(azimuth_xy(u, geometry.ris_position), config.n_user_antennas);
      const CVec a_ris = steering_vector(azimuth_xy(geometry.ris_position, u), config.n_ris_elements);
      ch.h_sk[static_cast<std::size_t>(k)] =
          rician_channel(db_to_linear(path_loss_db(d, pl.ris_user)), kappa, a_user, a_ris, rng);
    }
  }

  // Targets double as the eavesdropping array: deterministic steering rows
  // carrying the one-way path loss, noise-normalized.
  ch.v_t = CMat(config.n_targets, config.n_tx);
  ch.v_r = CMat(config.n_rx, config.n_targets);
  for (int l = 0; l < config.n_targets; ++l) {
    const double d = geometry.target_distances_m[static_cast<std::size_t>(l)];
    const double az = geometry.target_azimuths_rad[static_cast<std::size_t>(l)];
    const double gain = std::sqrt(db_to_linear(path_loss_db(d, pl.bs_target)));
    ch.v_t.row(l) = (gain / sigma) * steering_vector(az, config.n_tx).transpose();
    ch.v_r.col(l) = steering_vector(az, config.n_rx);
  }

  // Residual self-interference, unit variance after noise normalization.
  {
    Rng rng = master.substream(rng_block::kSelfInterference);
    ch.g_si = rng.cnormal_matrix(config.n_rx, config.n_tx);
  }

  return ch;
}

ChannelSet zero_ris_links(ChannelSet channels) {
  channels.h_bs.setZero();
  for (auto& h : channels.h_sk) h.setZero();
  return channels;
}

namespace {

template <typename T>
T get_or(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  return doc.at(key).get<T>();
}

}  // namespace

ScenarioConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config document must be a JSON object");
  static const std::set<std::string> known = {
      "n_tx", "n_rx", "n_user_antennas", "n_ris_elements", "n_users", "n_targets",
      "p_max_dbm", "p_max_watts", "sensing_sinr_db", "mean_rcs", "noise_psd_dbm_hz",
      "bandwidth_hz", "noise_power_watts", "rician_factor_db", "path_loss_exponents",
      "reflection_user_indices", "rng_seed", "system_variant", "solver"};
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (!known.count(key)) throw std::invalid_argument("unknown config field: " + key);
  }

  ScenarioConfig c;
  c.n_tx = get_or(doc, "n_tx", c.n_tx);
  c.n_rx = get_or(doc, "n_rx", c.n_rx);
  c.n_user_antennas = get_or(doc, "n_user_antennas", c.n_user_antennas);
  c.n_ris_elements = get_or(doc, "n_ris_elements", c.n_ris_elements);
  c.n_users = get_or(doc, "n_users", c.n_users);
  c.n_targets = get_or(doc, "n_targets", c.n_targets);
  if (doc.contains("p_max_watts"))
    c.p_max = doc.at("p_max_watts").get<double>();
  else if (doc.contains("p_max_dbm"))
    c.p_max = dbm_to_watts(doc.at("p_max_dbm").get<double>());
  if (doc.contains("sensing_sinr_db"))
    c.sensing_sinr_threshold = db_to_linear(doc.at("sensing_sinr_db").get<double>());
  c.mean_rcs = get_or(doc, "mean_rcs", c.mean_rcs);
  if (doc.contains("noise_power_watts"))
    c.noise_power = doc.at("noise_power_watts").get<double>();
  else
    c.noise_power = noise_power_watts(get_or(doc, "noise_psd_dbm_hz", -174.0),
                                      get_or(doc, "bandwidth_hz", 1.0e7));
  if (doc.contains("rician_factor_db"))
    c.rician_factor = db_to_linear(doc.at("rician_factor_db").get<double>());
  if (doc.contains("path_loss_exponents")) {
    const auto& e = doc.at("path_loss_exponents");
    c.path_loss_exponents.direct = get_or(e, "direct", c.path_loss_exponents.direct);
    c.path_loss_exponents.bs_ris = get_or(e, "bs_ris", c.path_loss_exponents.bs_ris);
    c.path_loss_exponents.ris_user = get_or(e, "ris_user", c.path_loss_exponents.ris_user);
    c.path_loss_exponents.bs_target = get_or(e, "bs_target", c.path_loss_exponents.bs_target);
  }
  if (doc.contains("reflection_user_indices"))
    c.reflection_user_indices = doc.at("reflection_user_indices").get<std::vector<int>>();
  else {
    c.reflection_user_indices.clear();
    for (int k = 0; k < (c.n_users + 1) / 2; ++k) c.reflection_user_indices.push_back(k);
  }
  c.rng_seed = get_or(doc, "rng_seed", c.rng_seed);
  if (doc.contains("system_variant"))
    c.system_variant = variant_from_name(doc.at("system_variant").get<std::string>());
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json doc;
  doc["n_tx"] = c.n_tx;
  doc["n_rx"] = c.n_rx;
  doc["n_user_antennas"] = c.n_user_antennas;
  doc["n_ris_elements"] = c.n_ris_elements;
  doc["n_users"] = c.n_users;
  doc["n_targets"] = c.n_targets;
  doc["p_max_watts"] = c.p_max;
  doc["sensing_sinr_db"] = linear_to_db(c.sensing_sinr_threshold);
  doc["mean_rcs"] = c.mean_rcs;
  doc["noise_power_watts"] = c.noise_power;
  doc["rician_factor_db"] = linear_to_db(c.rician_factor);
  doc["path_loss_exponents"] = {{"direct", c.path_loss_exponents.direct},
                                {"bs_ris", c.path_loss_exponents.bs_ris},
                                {"ris_user", c.path_loss_exponents.ris_user},
                                {"bs_target", c.path_loss_exponents.bs_target}};
  doc["reflection_user_indices"] = c.reflection_user_indices;
  doc["rng_seed"] = c.rng_seed;
  doc["system_variant"] = variant_name(c.system_variant);
  return doc;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config parse error in " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_matrix(std::ofstream& out, const CMat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float re = static_cast<float>(m(r, c).real());
      const float im = static_cast<float>(m(r, c).imag());
      out.write(reinterpret_cast<const char*>(&re), sizeof(re));
      out.write(reinterpret_cast<const char*>(&im), sizeof(im));
    }
}

CMat read_matrix(std::ifstream& in, int rows, int cols) {
  CMat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      float re = 0.0f, im = 0.0f;
      in.read(reinterpret_cast<char*>(&re), sizeof(re));
      in.read(reinterpret_cast<char*>(&im), sizeof(im));
      m(r, c) = cxd(re, im);
    }
  return m;
}

constexpr std::uint32_t kChannelMagic = 0x53524353u;  // "SCRS"

}  // namespace

void dump_channels(const ChannelSet& ch, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open channel dump for writing: " + path);
  write_u32(out, kChannelMagic);
  write_u32(out, 1u);
  write_u32(out, static_cast<std::uint32_t>(ch.n_tx()));
  write_u32(out, static_cast<std::uint32_t>(ch.n_rx()));
  write_u32(out, static_cast<std::uint32_t>(ch.n_user_antennas()));
  write_u32(out, static_cast<std::uint32_t>(ch.n_ris()));
  write_u32(out, static_cast<std::uint32_t>(ch.n_users()));
  write_u32(out, static_cast<std::uint32_t>(ch.n_targets()));
  for (bool b : ch.user_in_reflection) {
    const char c = b ? 1 : 0;
    out.write(&c, 1);
  }
  write_matrix(out, ch.h_bs);
  for (const auto& m : ch.h_bk) write_matrix(out, m);
  for (const auto& m : ch.h_sk) write_matrix(out, m);
  write_matrix(out, ch.v_t);
  write_matrix(out, ch.v_r);
  write_matrix(out, ch.g_si);
  if (!out) throw std::runtime_error("channel dump write failed: " + path);
}

ChannelSet load_channels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open channel dump: " + path);
  if (read_u32(in) != kChannelMagic) throw std::runtime_error("bad channel dump magic: " + path);
  if (read_u32(in) != 1u) throw std::runtime_error("unsupported channel dump version: " + path);
  const int n_tx = static_cast<int>(read_u32(in));
  const int n_rx = static_cast<int>(read_u32(in));
  const int n_user_antennas = static_cast<int>(read_u32(in));
  const int n_ris = static_cast<int>(read_u32(in));
  const int n_users = static_cast<int>(read_u32(in));
  const int n_targets = static_cast<int>(read_u32(in));
  ChannelSet ch;
  ch.user_in_reflection.resize(static_cast<std::size_t>(n_users));
  for (int k = 0; k < n_users; ++k) {
    char c = 0;
    in.read(&c, 1);
    ch.user_in_reflection[static_cast<std::size_t>(k)] = c != 0;
  }
  ch.h_bs = read_matrix(in, n_ris, n_tx);
  ch.h_bk.resize(static_cast<std::size_t>(n_users));
  for (auto& m : ch.h_bk) m = read_matrix(in, n_user_antennas, n_tx);
  ch.h_sk.resize(static_cast<std::size_t>(n_users));
  for (auto& m : ch.h_sk) m = read_matrix(in, n_user_antennas, n_ris);
  ch.v_t = read_matrix(in, n_targets, n_tx);
  ch.v_r = read_matrix(in, n_rx, n_targets);
  ch.g_si = read_matrix(in, n_rx, n_tx);
  if (!in) throw std::runtime_error("channel dump truncated: " + path);
  return ch;
}

}  // namespace starsec
