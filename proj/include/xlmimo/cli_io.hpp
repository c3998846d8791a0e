#pragma once

// Command-line experiments: config resolution, the figure-style commands and
// CSV / JSON emission. Every command builds its whole table in memory and
// writes it only on success.

#include <CLI11.hpp>
#include <json.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "xlmimo/detequiv.hpp"
#include "xlmimo/energy_ee.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/optimizer.hpp"
#include "xlmimo/parallel.hpp"
#include "xlmimo/precode_mc.hpp"
#include "xlmimo/scenario.hpp"
#include "xlmimo/vr_detect.hpp"

namespace xlmimo::cli {

struct ExperimentSpec {
  std::string command;
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;  // key=value
  std::uint64_t seed = 42;
  int trials = 10000;
  std::optional<std::string> output;
  std::string format = "csv";
  unsigned threads = 0;  // 0: XLMIMO_THREADS or hardware

  std::vector<int> taus;
  std::vector<double> pt_dbm;
  std::vector<std::string> outcomes;  // "I,J"
  std::string duplex = "tdd";
  std::string mode = "exact";
  std::optional<double> zeta0_dbm;
  double zeta_min_dbm = -100.0;
  double zeta_max_dbm = -60.0;
  double zeta_step_db = 1.0;
  std::string sweep_key = "P_T_dbm";
  std::vector<std::string> sweep_values;
};

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

constexpr double kLn2 = 0.69314718055994530942;

inline Duplex parse_duplex(const std::string& s) {
  if (s == "tdd") return Duplex::tdd;
  if (s == "fdd") return Duplex::fdd;
  throw ConfigError("unknown duplex '" + s + "' (tdd|fdd)");
}

inline ThresholdMode parse_mode(const std::string& s) {
  if (s == "exact") return ThresholdMode::exact;
  if (s == "min_sum") return ThresholdMode::min_sum;
  if (s == "equal_error") return ThresholdMode::equal_error;
  if (s == "fixed") return ThresholdMode::fixed;
  throw ConfigError("unknown threshold mode '" + s + "'");
}

inline std::pair<int, int> parse_outcome(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("outcome '" + s + "' must be I,J");
  try {
    std::size_t a = 0;
    std::size_t b = 0;
    const int I = std::stoi(s.substr(0, comma), &a);
    const int J = std::stoi(s.substr(comma + 1), &b);
    if (a != comma || b != s.size() - comma - 1) throw std::invalid_argument(s);
    return {I, J};
  } catch (const std::logic_error&) {
    throw ConfigError("outcome '" + s + "' must be I,J");
  }
}

/// Defaults, then the config file, then --set overrides.
inline RawConfig resolve_raw(const ExperimentSpec& spec) {
  auto raw = default_raw_config();
  if (spec.config_path) {
    std::ifstream in(*spec.config_path);
    if (!in) throw ConfigError("cannot read config file '" + *spec.config_path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_config_text(ss.str())) set_raw(raw, k, v);
  }
  for (const auto& kv : spec.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_raw(raw, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return raw;
}

inline SystemConfig with_power_dbm(RawConfig raw, double pt_dbm) {
  std::ostringstream v;
  v.precision(17);
  v << pt_dbm;
  set_raw(raw, "P_T_dbm", v.str());
  return build_config(raw);
}

/// Commands that sweep P_T use --pt-dbm when given, else their own default
/// sweep; either way P_T from the config is replaced.
inline std::vector<double> pt_list(const ExperimentSpec& spec, std::vector<double> fallback) {
  return spec.pt_dbm.empty() ? fallback : spec.pt_dbm;
}

// ------------------------------------------------------------- commands

inline Table cmd_probs(const ExperimentSpec& spec, const RawConfig& raw) {
  const auto cfg = build_config(raw);
  if (spec.zeta_step_db <= 0.0 || spec.zeta_max_dbm < spec.zeta_min_dbm)
    throw ConfigError("probs: need zeta-step > 0 and zeta-max >= zeta-min");
  const std::vector<int> taus = spec.taus.empty() ? std::vector<int>{4, 8} : spec.taus;
  Table t{{"tau", "zeta0_dbm", "p10", "p01", "p10_mc", "p01_mc"}, {}};
  const int steps = static_cast<int>(std::floor((spec.zeta_max_dbm - spec.zeta_min_dbm) / spec.zeta_step_db + 1e-9));
  for (int tau : taus) {
    if (tau < 1) throw ConfigError("probs: tau must be >= 1");
    for (int i = 0; i <= steps; ++i) {
      const double zdbm = spec.zeta_min_dbm + i * spec.zeta_step_db;
      const double z = dbm_to_watt(zdbm);
      const auto p = error_probs(detector_params(cfg, z, tau));
      const std::uint64_t sub = mix64(spec.seed ^ mix64(static_cast<std::uint64_t>(tau) * 1000003u + i));
      const auto mc = mc_error_probs(cfg, z, tau, spec.trials, sub);
      t.rows.push_back({std::int64_t{tau}, zdbm, p.p10, p.p01, mc.p10, mc.p01});
    }
  }
  return t;
}

inline Table cmd_rate(const ExperimentSpec& spec, const RawConfig& raw) {
  const auto duplex = parse_duplex(spec.duplex);
  const int tau = spec.taus.empty() ? 200 : spec.taus.front();
  std::vector<std::pair<int, int>> outcomes;
  if (spec.outcomes.empty()) {
    const auto cfg = build_config(raw);
    outcomes = {{cfg.L, 0}, {cfg.L / 2, 0}, {cfg.L, cfg.M - cfg.L}, {cfg.L / 2, 16}};
  }
  for (const auto& o : spec.outcomes) outcomes.push_back(parse_outcome(o));
  Table t{{"P_T_dbm", "duplex", "I", "J", "rate_de", "rate_mc", "rate_mc_stderr"}, {}};
  for (double pt : pt_list(spec, {0, 10, 20, 30, 40})) {
    const auto cfg = with_power_dbm(raw, pt);
    for (const auto& [I, J] : outcomes) {
      const auto de = duplex == Duplex::tdd ? gamma_bar_tdd(cfg, tau, I, J) : gamma_bar_fdd(cfg, I, J);
      LinkSettings link;
      link.duplex = duplex;
      link.tau = tau;
      MonteCarloOptions mo;
      mo.seed = spec.seed;
      mo.trials = spec.trials;
      const auto mc = ergodic_rate(cfg, link, FixedOutcome{I, J}, mo);
      t.rows.push_back({pt, std::string(to_string(duplex)), std::int64_t{I}, std::int64_t{J}, sum_rate(de) / kLn2,
                        mc.sum_rate / kLn2, mc.sum_rate_stderr / kLn2});
    }
  }
  return t;
}

inline double zeta_dbm(double z) { return watt_to_dbm(z); }

inline Table cmd_ee(const ExperimentSpec& spec, const RawConfig& raw) {
  const auto duplex = parse_duplex(spec.duplex);
  const double fixed = dbm_to_watt(spec.zeta0_dbm.value_or(-60.0));
  Table t{{"P_T_dbm", "scheme", "ee_bits_per_joule", "tau", "zeta0_dbm", "iterations", "converged"}, {}};
  for (double pt : pt_list(spec, {10, 20, 30})) {
    EnergyModel model(with_power_dbm(raw, pt));
    auto row = [&](const char* scheme, const OptResult& r, bool has_zeta) {
      t.rows.push_back({pt, std::string(scheme), r.ee / kLn2, std::int64_t{r.tau},
                        has_zeta ? Cell{zeta_dbm(r.zeta0)} : Cell{std::string("")}, std::int64_t{r.iterations},
                        std::int64_t{r.converged ? 1 : 0}});
    };
    row("perfect", optimize_perfect_vr(model, duplex), false);
    {
      OptimizerOptions o;
      o.duplex = duplex;
      o.threshold = ThresholdMode::fixed;
      o.fixed_zeta0 = 0.0;
      row("without_vr", alternate_optimize(model, o), false);
    }
    for (auto mode : {ThresholdMode::exact, ThresholdMode::min_sum, ThresholdMode::equal_error}) {
      OptimizerOptions o;
      o.duplex = duplex;
      o.threshold = mode;
      row(to_string(mode), alternate_optimize(model, o), true);
    }
    OptimizerOptions o;
    o.duplex = duplex;
    o.threshold = ThresholdMode::fixed;
    o.fixed_zeta0 = fixed;
    row("fixed_threshold", alternate_optimize(model, o), true);
  }
  return t;
}

inline Table cmd_optimize(const ExperimentSpec& spec, const RawConfig& raw) {
  OptimizerOptions o;
  o.duplex = parse_duplex(spec.duplex);
  o.threshold = parse_mode(spec.mode);
  if (spec.zeta0_dbm) o.fixed_zeta0 = dbm_to_watt(*spec.zeta0_dbm);
  Table t{{"P_T_dbm", "mode", "iteration", "zeta0_dbm", "tau", "ee_bits_per_joule", "is_best", "converged"}, {}};
  for (double pt : pt_list(spec, {10, 20, 30})) {
    EnergyModel model(with_power_dbm(raw, pt));
    const auto r = alternate_optimize(model, o);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      const auto& p = r.trace[i];
      const bool best = p.tau == r.tau && p.zeta0 == r.zeta0 && p.ee == r.ee;
      t.rows.push_back({pt, spec.mode, static_cast<std::int64_t>(i + 1), zeta_dbm(p.zeta0), std::int64_t{p.tau},
                        p.ee / kLn2, std::int64_t{best ? 1 : 0}, std::int64_t{r.converged ? 1 : 0}});
    }
  }
  return t;
}

inline Table cmd_montecarlo(const ExperimentSpec& spec, const RawConfig& raw) {
  const auto duplex = parse_duplex(spec.duplex);
  const std::vector<int> taus = spec.taus.empty() ? std::vector<int>{50, 100, 150} : spec.taus;
  Table t{{"P_T_dbm", "duplex", "tau", "zeta0_dbm", "ee_de", "ee_mc", "ee_mc_stderr", "z_score"}, {}};
  for (double pt : pt_list(spec, {30})) {
    const auto cfg = with_power_dbm(raw, pt);
    EnergyModel model(cfg);
    for (int tau : taus) {
      const double z = spec.zeta0_dbm ? dbm_to_watt(*spec.zeta0_dbm) : threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
      const double de = model.ee(duplex, z, tau).ee;
      MonteCarloOptions mo;
      mo.seed = spec.seed;
      mo.trials = spec.trials;
      const auto mc = mc_average_ee(cfg, z, tau, duplex, mo);
      const double zs = mc.std_error > 0.0 ? (de - mc.ee) / mc.std_error : 0.0;
      t.rows.push_back({pt, std::string(to_string(duplex)), std::int64_t{tau}, zeta_dbm(z), de / kLn2, mc.ee / kLn2,
                        mc.std_error / kLn2, zs});
    }
  }
  return t;
}

inline Table cmd_sweep(const ExperimentSpec& spec, const RawConfig& raw) {
  OptimizerOptions o;
  o.duplex = parse_duplex(spec.duplex);
  o.threshold = parse_mode(spec.mode);
  if (spec.zeta0_dbm) o.fixed_zeta0 = dbm_to_watt(*spec.zeta0_dbm);
  if (canonical_key(spec.sweep_key).empty()) throw ConfigError("unknown sweep key '" + spec.sweep_key + "'");
  std::vector<std::string> values = spec.sweep_values;
  if (values.empty()) {
    if (spec.sweep_key != "P_T_dbm") throw ConfigError("sweep: --values is required for key " + spec.sweep_key);
    values = {"20", "25", "30", "35", "40", "45", "50"};
  }
  Table t{{"key", "value", "mode", "zeta0_dbm", "tau", "ee_bits_per_joule", "iterations", "converged"}, {}};
  for (const auto& v : values) {
    auto r = raw;
    set_raw(r, spec.sweep_key, v);
    EnergyModel model(build_config(r));
    const auto res = alternate_optimize(model, o);
    t.rows.push_back({spec.sweep_key, v, spec.mode, zeta_dbm(res.zeta0), std::int64_t{res.tau}, res.ee / kLn2,
                      std::int64_t{res.iterations}, std::int64_t{res.converged ? 1 : 0}});
  }
  return t;
}

/// Every command except `validate`.
inline Table run_command(const ExperimentSpec& spec, const RawConfig& raw) {
  if (spec.trials < 1) throw ConfigError("--trials must be >= 1");
  if (spec.command == "probs") return cmd_probs(spec, raw);
  if (spec.command == "rate") return cmd_rate(spec, raw);
  if (spec.command == "ee") return cmd_ee(spec, raw);
  if (spec.command == "optimize") return cmd_optimize(spec, raw);
  if (spec.command == "montecarlo") return cmd_montecarlo(spec, raw);
  if (spec.command == "sweep") return cmd_sweep(spec, raw);
  throw ConfigError("unknown command '" + spec.command + "'");
}

// --------------------------------------------------------------- output

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const Table& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using V = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<V, double>)
              out += format_double(v);
            else if constexpr (std::is_same_v<V, std::int64_t>)
              out += std::to_string(v);
            else
              out += v;
          },
          row[i]);
    }
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json config_json(const RawConfig& raw) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json entries = nlohmann::ordered_json::object();
  for (const auto& [k, v] : raw) entries[k] = v;
  j["entries"] = entries;
  const auto cfg = build_config(raw);
  j["M"] = cfg.M;
  j["L"] = cfg.L;
  j["K"] = cfg.K;
  j["T"] = cfg.T;
  j["W"] = cfg.bandwidth;
  j["p_tr_w"] = cfg.p_tr;
  j["sigma2_tr_w"] = cfg.sigma2_tr;
  j["sigma2_dl_w"] = cfg.sigma2_dl;
  j["P_T_w"] = cfg.p_total;
  j["beta"] = cfg.beta;
  j["p_dl"] = cfg.p_dl;
  j["xi"] = cfg.xi;
  j["g"] = cfg.g();
  if (cfg.fdd) {
    j["p_dp_w"] = cfg.fdd->p_dp;
    j["B"] = cfg.fdd->feedback_bits;
  }
  return j;
}

inline std::string to_json(const Table& t, const ExperimentSpec& spec, const RawConfig& raw) {
  nlohmann::ordered_json j;
  j["command"] = spec.command;
  j["seed"] = spec.seed;
  j["trials"] = spec.trials;
  j["config"] = config_json(raw);
  j["columns"] = t.columns;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : row) std::visit([&](const auto& v) { r.push_back(v); }, c);
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

inline std::string render(const Table& t, const ExperimentSpec& spec, const RawConfig& raw) {
  if (spec.format == "csv") return to_csv(t);
  if (spec.format == "json") return to_json(t, spec, raw);
  throw ConfigError("unknown format '" + spec.format + "' (csv|json)");
}

/// Writes `text` to --output or `out`. The file is only created once the
/// whole text exists.
inline void emit(const ExperimentSpec& spec, const std::string& text, std::ostream& out) {
  if (!spec.output) {
    out << text;
    out.flush();
    return;
  }
  std::ofstream f(*spec.output, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open output file '" + *spec.output + "'");
  f << text;
  f.close();
  if (!f) throw std::runtime_error("failed writing output file '" + *spec.output + "'");
}

// -------------------------------------------------------------- parsing

/// Builds the CLI11 parser writing into `spec`.
inline void configure_parser(CLI::App& app, ExperimentSpec& spec) {
  app.require_subcommand(1, 1);
  const std::vector<std::pair<std::string, std::string>> commands{
      {"probs", "detection error probabilities versus threshold"},
      {"rate", "deterministic and Monte-Carlo sum rate per detection outcome"},
      {"ee", "optimised energy efficiency per threshold scheme"},
      {"optimize", "alternating threshold / pilot-length optimisation trace"},
      {"montecarlo", "deterministic versus Monte-Carlo average EE"},
      {"sweep", "optimised EE while sweeping one config key"},
      {"validate", "run the acceptance checks"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", spec.config_path, "flat key = value config file");
    sub->add_option("--set", spec.overrides, "override a config key (key=value)");
    sub->add_option("--seed", spec.seed, "master seed")->capture_default_str();
    sub->add_option("--trials", spec.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--output", spec.output, "output file (default stdout)");
    sub->add_option("--format", spec.format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    sub->add_option("--threads", spec.threads, "worker threads (0 = auto)");
    sub->add_option("--tau", spec.taus, "pilot length(s)");
    sub->add_option("--pt-dbm", spec.pt_dbm, "total transmit power(s) in dBm");
    sub->add_option("--outcome", spec.outcomes, "detection outcome I,J");
    sub->add_option("--duplex", spec.duplex, "tdd or fdd")->check(CLI::IsMember({"tdd", "fdd"}))->capture_default_str();
    sub->add_option("--mode", spec.mode, "threshold mode")
        ->check(CLI::IsMember({"exact", "min_sum", "equal_error", "fixed"}))
        ->capture_default_str();
    sub->add_option("--zeta0-dbm", spec.zeta0_dbm, "fixed threshold in dBm");
    sub->add_option("--zeta-min-dbm", spec.zeta_min_dbm)->capture_default_str();
    sub->add_option("--zeta-max-dbm", spec.zeta_max_dbm)->capture_default_str();
    sub->add_option("--zeta-step-db", spec.zeta_step_db)->capture_default_str();
    sub->add_option("--key", spec.sweep_key, "config key to sweep")->capture_default_str();
    sub->add_option("--values", spec.sweep_values, "values for the swept key");
    sub->callback([&spec, name = name] { spec.command = name; });
  }
}

}  // namespace xlmimo::cli
