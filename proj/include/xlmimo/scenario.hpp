#pragma once

// System configuration for a single VR user group and the unit helpers
// shared by every other module. Powers are watts internally; dBm only
// appears where text is parsed or printed.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "xlmimo/errors.hpp"

namespace xlmimo {

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

/// Large-scale gain for a BS-user distance in metres:
/// -35.3 dB at 1 m with exponent 3.76.
inline double pathloss(double distance_m) {
  if (!(distance_m > 0.0)) throw ParameterError("pathloss: distance must be positive");
  return std::pow(10.0, -3.53) * std::pow(distance_m, -3.76);
}

struct CircuitPower {
  double amplifier_efficiency = 0.35;  // varsigma
  double p_syn = 0.05;
  double p_ct = 0.0482;
  double p_cr = 0.0625;
};

struct FddParams {
  double p_dp = 0.1;
  int feedback_bits = 32;
};

struct SystemConfig {
  int M = 128;
  int L = 16;
  int K = 4;
  int T = 200;
  double bandwidth = 100e6;
  double p_tr = 0.1;        // pilot power of user 1; others are compensated
  double sigma2_tr = 0.0;   // uplink noise
  double sigma2_dl = 0.0;   // downlink noise, same for every user
  double p_total = 1.0;     // P_T
  std::vector<double> p_dl;
  std::vector<double> beta;
  std::vector<double> distance;
  CircuitPower circuit;
  double xi = 0.0;
  std::optional<FddParams> fdd;

  /// Common received pilot gain p_tr,k * beta_k (pilot-power compensated).
  double g() const { return p_tr * beta.at(0); }

  /// Compensated pilot power of user k, chosen so that p_tr,k * beta_k == g().
  double pilot_power(int k) const {
    const double b = beta.at(static_cast<std::size_t>(k));
    return b > 0.0 ? g() / b : p_tr;
  }
};

/// Flat `key = value` map as read from a config file. Ordered so that
/// serialisation is stable.
using RawConfig = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto t = trim(text);
  const auto* first = t.data();
  const auto* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ConfigError("config key '" + key + "': cannot parse number '" + t + "'");
  return v;
}

inline int parse_int(const std::string& key, const std::string& text) {
  const double v = parse_double(key, text);
  if (v != std::floor(v) || std::abs(v) > 1e9)
    throw ConfigError("config key '" + key + "': expected an integer, got '" + trim(text) + "'");
  return static_cast<int>(v);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

inline const std::set<std::string>& power_keys() {
  static const std::set<std::string> keys{"p_tr", "sigma2_tr", "sigma2_dl", "P_T",
                                          "P_syn", "P_CT", "P_CR", "p_dp"};
  return keys;
}

inline const std::set<std::string>& plain_keys() {
  static const std::set<std::string> keys{"M", "L", "K", "T", "W", "p_dl", "beta", "d",
                                          "varsigma", "xi", "B"};
  return keys;
}

}  // namespace detail

/// Canonical key of a possibly `_dbm`-suffixed power key, or empty if unknown.
inline std::string canonical_key(const std::string& key) {
  if (detail::plain_keys().count(key) || detail::power_keys().count(key)) return key;
  constexpr std::string_view suffix = "_dbm";
  if (key.size() > suffix.size() && key.compare(key.size() - suffix.size(), suffix.size(), suffix) == 0) {
    auto base = key.substr(0, key.size() - suffix.size());
    if (detail::power_keys().count(base)) return base;
  }
  return {};
}

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are rejected.
inline RawConfig parse_config_text(std::string_view text) {
  RawConfig raw;
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    auto key = detail::trim(std::string_view(t).substr(0, eq));
    auto value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    if (canonical_key(key).empty()) throw ConfigError("unknown config key '" + key + "'");
    raw[key] = value;
  }
  return raw;
}

/// Sets `key` in `raw`, dropping any spelling of the same quantity with or
/// without the `_dbm` suffix so the override wins.
inline void set_raw(RawConfig& raw, const std::string& key, const std::string& value) {
  const auto canon = canonical_key(key);
  if (canon.empty()) throw ConfigError("unknown config key '" + key + "'");
  raw.erase(canon);
  raw.erase(canon + "_dbm");
  raw[key] = value;
}

/// The simulation defaults used throughout the numerical section.
inline RawConfig default_raw_config() {
  return RawConfig{
      {"M", "128"},          {"L", "16"},          {"K", "4"},           {"T", "200"},
      {"W", "100e6"},        {"p_tr_dbm", "20"},   {"sigma2_tr_dbm", "-96"},
      {"P_T_dbm", "30"},     {"d", "400"},         {"varsigma", "0.35"}, {"P_syn", "0.05"},
      {"P_CT", "0.0482"},    {"P_CR", "0.0625"},   {"p_dp_dbm", "20"},   {"B", "32"},
  };
}

/// Validates a raw map and derives g and the default regularisation.
inline SystemConfig build_config(const RawConfig& raw) {
  std::map<std::string, std::pair<std::string, bool>> canon;  // key -> (value, is_dbm)
  for (const auto& [key, value] : raw) {
    const auto c = canonical_key(key);
    if (c.empty()) throw ConfigError("unknown config key '" + key + "'");
    if (canon.count(c)) throw ConfigError("config key '" + c + "' given twice (with and without _dbm)");
    canon[c] = {value, key != c};
  }
  auto has = [&](const std::string& k) { return canon.count(k) > 0; };
  auto need = [&](const std::string& k) -> const std::pair<std::string, bool>& {
    auto it = canon.find(k);
    if (it == canon.end()) throw ConfigError("missing config key '" + k + "'");
    return it->second;
  };
  auto power = [&](const std::string& k) {
    const auto& [text, dbm] = need(k);
    const double v = detail::parse_double(k, text);
    const double w = dbm ? dbm_to_watt(v) : v;
    if (!(w > 0.0)) throw ConfigError("config key '" + k + "' must be positive");
    return w;
  };
  auto positive_int = [&](const std::string& k) {
    const int v = detail::parse_int(k, need(k).first);
    if (v < 1) throw ConfigError("config key '" + k + "' must be a positive integer");
    return v;
  };
  auto positive = [&](const std::string& k) {
    const double v = detail::parse_double(k, need(k).first);
    if (!(v > 0.0)) throw ConfigError("config key '" + k + "' must be positive");
    return v;
  };
  auto per_user = [&](const std::string& k, int K) {
    auto v = detail::parse_list(k, need(k).first);
    if (v.size() == 1) v.assign(static_cast<std::size_t>(K), v.front());
    if (v.size() != static_cast<std::size_t>(K))
      throw ConfigError("config key '" + k + "' needs 1 or K values");
    for (double x : v)
      if (!(x > 0.0)) throw ConfigError("config key '" + k + "' must be positive");
    return v;
  };

  SystemConfig c;
  c.M = positive_int("M");
  c.L = positive_int("L");
  c.K = positive_int("K");
  c.T = positive_int("T");
  if (c.L > c.M) throw ConfigError("config key 'L' must not exceed M");
  if (c.K > c.T) throw ConfigError("config key 'K' must not exceed T");
  c.bandwidth = positive("W");
  c.p_tr = power("p_tr");
  c.sigma2_tr = power("sigma2_tr");
  c.sigma2_dl = has("sigma2_dl") ? power("sigma2_dl") : c.sigma2_tr;
  c.p_total = power("P_T");
  if (has("beta")) {
    c.beta = per_user("beta", c.K);
    if (has("d")) c.distance = per_user("d", c.K);
  } else if (has("d")) {
    c.distance = per_user("d", c.K);
    for (double d : c.distance) c.beta.push_back(pathloss(d));
  } else {
    throw ConfigError("missing config key 'd' (or 'beta')");
  }
  c.p_dl = has("p_dl") ? per_user("p_dl", c.K) : std::vector<double>(static_cast<std::size_t>(c.K), 1.0);
  c.circuit.amplifier_efficiency = positive("varsigma");
  if (c.circuit.amplifier_efficiency > 1.0) throw ConfigError("config key 'varsigma' must be <= 1");
  c.circuit.p_syn = power("P_syn");
  c.circuit.p_ct = power("P_CT");
  c.circuit.p_cr = power("P_CR");
  c.xi = has("xi") ? positive("xi") : c.sigma2_dl / (c.p_dl.front() * c.M * c.p_total);
  if (has("p_dp") || has("B")) {
    FddParams f;
    if (has("p_dp")) f.p_dp = power("p_dp");
    if (has("B")) {
      f.feedback_bits = detail::parse_int("B", need("B").first);
      if (f.feedback_bits < 0) throw ConfigError("config key 'B' must be non-negative");
    }
    c.fdd = f;
  }
  return c;
}

inline SystemConfig default_config() { return build_config(default_raw_config()); }

/// Builds from defaults with `overrides` applied on top.
inline SystemConfig config_with(const std::map<std::string, std::string>& overrides) {
  auto raw = default_raw_config();
  for (const auto& [k, v] : overrides) set_raw(raw, k, v);
  return build_config(raw);
}

}  // namespace xlmimo
