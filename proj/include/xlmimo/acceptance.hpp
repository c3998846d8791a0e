#pragma once

// The acceptance checks, one function per criterion. Shared by the
// acceptance test binary and the `validate` command.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "xlmimo/cli_io.hpp"
#include "xlmimo/detequiv.hpp"
#include "xlmimo/energy_ee.hpp"
#include "xlmimo/optimizer.hpp"
#include "xlmimo/precode_mc.hpp"
#include "xlmimo/random.hpp"
#include "xlmimo/scenario.hpp"
#include "xlmimo/vr_detect.hpp"

namespace xlmimo::acceptance {

struct Options {
  std::uint64_t seed = 42;
  int trials = 10000;
};

struct Result {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

inline double rel_err(double a, double ref) {
  const double scale = std::max(std::abs(ref), 1e-300);
  return std::abs(a - ref) / scale;
}

// Largest per-user relative error of log(1 + gamma_bar) against MC.
inline double worst_user_error(const DetEquiv& de, const RateStats& mc) {
  double worst = 0.0;
  for (std::size_t k = 0; k < de.gamma_bar.size(); ++k)
    worst = std::max(worst, rel_err(std::log1p(de.gamma_bar[k]), mc.user_rate[k]));
  return worst;
}

}  // namespace detail

/// Analytic detection error probabilities against empirical frequencies at
/// ten random (threshold, pilot length) points.
inline Result probability_oracle(const Options& o) {
  const auto cfg = default_config();
  auto rng = make_stream(o.seed, Stream::test, 1);
  std::uniform_int_distribution<int> tau_dist(cfg.K, cfg.T);
  std::uniform_real_distribution<double> log_ratio(std::log(0.1), std::log(3.0));
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const int tau = tau_dist(rng);
    const double zeta = tau * cfg.sigma2_tr * std::exp(log_ratio(rng));
    const auto p = error_probs(detector_params(cfg, zeta, tau));
    const auto f = mc_error_probs(cfg, zeta, tau, o.trials, mix64(o.seed + 1000 + i));
    for (auto [pe, pm] : {std::pair{p.p10, f.p10}, std::pair{p.p01, f.p01}}) {
      const double band = std::sqrt(pe * (1.0 - pe) / o.trials);
      worst = std::max(worst, std::abs(pm - pe) / band);
    }
  }
  return {1, "probability_oracle", worst <= 3.0, detail::fmt("max |MC - analytic| = %.3f binomial sd (tol 3)", worst)};
}

/// P_{I,J} sums to one and its marginals are the two binomials.
inline Result outcome_distribution_check(const Options& o) {
  auto rng = make_stream(o.seed, Stream::test, 2);
  std::uniform_int_distribution<int> L_dist(1, 64);
  std::uniform_int_distribution<int> extra(0, 128);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  auto binom = [](int n, int k, double p) {
    long double c = 1.0L;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return static_cast<double>(c * std::pow(static_cast<long double>(p), k) *
                               std::pow(static_cast<long double>(1.0 - p), n - k));
  };
  double worst_sum = 0.0;
  double worst_marg = 0.0;
  for (int d = 0; d < 20; ++d) {
    const int L = L_dist(rng);
    const int M = L + extra(rng);
    const ErrorProbs p{prob(rng), prob(rng)};
    const auto dist = outcome_distribution(p, L, M);
    worst_sum = std::max(worst_sum, std::abs(dist.total() - 1.0));
    for (int I = 0; I <= L; ++I) {
      double s = 0.0;
      for (int J = 0; J <= M - L; ++J) s += dist.at(I, J);
      worst_marg = std::max(worst_marg, std::abs(s - binom(L, I, 1.0 - p.p01)));
    }
    for (int J = 0; J <= M - L; ++J) {
      double s = 0.0;
      for (int I = 0; I <= L; ++I) s += dist.at(I, J);
      worst_marg = std::max(worst_marg, std::abs(s - binom(M - L, J, p.p10)));
    }
  }
  const bool ok = worst_sum <= 1e-12 && worst_marg <= 1e-12;
  return {2, "outcome_distribution", ok,
          detail::fmt("max |sum - 1| = %.2e, max marginal error = %.2e (tol 1e-12)", worst_sum, worst_marg)};
}

/// Closed-form min-sum threshold against a brute-force grid, and the
/// equal-error root against its defining identities.
inline Result heuristic_thresholds(const Options&) {
  const auto cfg = default_config();
  double worst_grid = 0.0;
  double worst_gap = 0.0;
  double worst_identity = 0.0;
  double worst_routes = 0.0;
  for (int tau : {cfg.K, 20, 100, cfg.T}) {
    DetectorParams p = detector_params(cfg, 0.0, tau);
    const double closed = threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
    const double hi = 4.0 * signal_energy(p);
    constexpr int n = 100000;
    double best_z = 0.0;
    double best_v = 3.0;
    for (int i = 1; i <= n; ++i) {
      p.zeta0 = hi * i / n;
      const double v = p_false(p) + p_miss(p);
      if (v < best_v) {
        best_v = v;
        best_z = p.zeta0;
      }
    }
    worst_grid = std::max(worst_grid, detail::rel_err(closed, best_z));

    const double ee = threshold_equal_error(tau, cfg.sigma2_tr, cfg.g());
    p.zeta0 = ee;
    worst_gap = std::max(worst_gap, std::abs(p_false(p) - p_miss(p)));
    const double c = cfg.sigma2_tr * (tau * cfg.g() + cfg.sigma2_tr) / cfg.g();
    const double rhs = c * std::log(std::expm1(ee / (tau * cfg.sigma2_tr)));
    worst_identity = std::max(worst_identity, detail::rel_err(rhs, ee));
    worst_routes =
        std::max(worst_routes, detail::rel_err(threshold_equal_error_iterative(tau, cfg.sigma2_tr, cfg.g()), ee));
  }
  const bool ok = worst_grid <= 1e-3 && worst_gap <= 1e-10 && worst_identity <= 1e-9 && worst_routes <= 1e-9;
  return {3, "heuristic_thresholds", ok,
          detail::fmt("min-sum vs grid %.2e (tol 1e-3); |P10-P01| %.2e (tol 1e-10); identity %.2e, "
                      "iterative route %.2e (tol 1e-9)",
                      worst_grid, worst_gap, worst_identity, worst_routes)};
}

/// Operating point for the MC comparisons: full-block training and a 40 dBm
/// budget, where the large-system approximation is accurate at M = 128.
inline SystemConfig mc_comparison_config() { return config_with({{"P_T_dbm", "40"}}); }
constexpr int kComparisonTau = 200;

inline Result theorem1_vs_mc(const Options& o) {
  const auto cfg = mc_comparison_config();
  LinkSettings link;
  link.tau = kComparisonTau;
  MonteCarloOptions mo;
  mo.seed = o.seed;
  mo.trials = o.trials;
  std::string note;
  double worst = 0.0;
  for (auto [I, J] : {std::pair{16, 0}, std::pair{8, 0}, std::pair{16, 112}, std::pair{8, 16}}) {
    const auto de = gamma_bar_tdd(cfg, kComparisonTau, I, J);
    const auto mc = ergodic_rate(cfg, link, FixedOutcome{I, J}, mo);
    const double e = detail::worst_user_error(de, mc);
    worst = std::max(worst, e);
    note += detail::fmt("(%d,%d) %.2f%% ", I, J, 100.0 * e);
  }
  note += detail::fmt("(tol 5%%; tau=%d, P_T=40 dBm)", kComparisonTau);
  return {4, "theorem1_vs_mc", worst <= 0.05, note};
}

inline Result limit_equivalences(const Options&) {
  double worst_cb = 0.0;
  double worst_perfect = 0.0;
  const std::vector<SystemConfig> cfgs{
      default_config(),
      config_with({{"d", "300,400,500,600"}, {"p_dl", "1,2,1,0.5"}}),
  };
  for (const auto& base : cfgs) {
    auto cfg = base;
    cfg.xi *= 1e6;
    for (int tau : {cfg.K, 20, 100})
      for (auto [I, J] : {std::pair{16, 0}, std::pair{8, 16}, std::pair{16, 112}}) {
        const auto de = gamma_bar_tdd(cfg, tau, I, J);
        const auto cb = gamma_cb_limit(cfg, tau, I, J);
        for (std::size_t k = 0; k < cb.size(); ++k) worst_cb = std::max(worst_cb, detail::rel_err(de.gamma_bar[k], cb[k]));
      }
    cfg.p_tr *= 1e8;
    const auto de = gamma_bar_tdd(cfg, 20, cfg.L, 0);
    const auto lim = gamma_perfect_limit(cfg);
    for (std::size_t k = 0; k < lim.size(); ++k)
      worst_perfect = std::max(worst_perfect, detail::rel_err(de.gamma_bar[k], lim[k]));
  }
  return {5, "limit_equivalences", worst_cb <= 1e-3 && worst_perfect <= 1e-3,
          detail::fmt("conjugate-beamforming limit %.2e, perfect-CSI limit %.2e (tol 1e-3)", worst_cb, worst_perfect)};
}

inline Result appendix_cross_check(const Options& o) {
  auto rng = make_stream(o.seed, Stream::test, 6);
  std::uniform_int_distribution<int> K_dist(1, 6);
  std::uniform_real_distribution<double> d_dist(100.0, 600.0);
  std::uniform_real_distribution<double> pt_dist(0.0, 50.0);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const int K = K_dist(rng);
    std::string d;
    for (int k = 0; k < K; ++k) d += (k ? "," : "") + std::to_string(d_dist(rng));
    const auto cfg = config_with({{"K", std::to_string(K)}, {"d", d}, {"P_T_dbm", std::to_string(pt_dist(rng))}});
    const int tau = std::uniform_int_distribution<int>(K, cfg.T)(rng);
    const int I = std::uniform_int_distribution<int>(0, cfg.L)(rng);
    const int J = std::uniform_int_distribution<int>(I == 0 ? 1 : 0, cfg.M - cfg.L)(rng);
    const auto closed = gamma_bar_tdd(cfg, tau, I, J);
    const auto route = mu_via_generic(cfg, tau, I, J);
    auto cmp = [&](double a, double b) {
      const double scale = std::max(std::abs(a), std::abs(b));
      return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
    };
    worst = std::max(worst, cmp(closed.mu_bar, route.mu_bar));
    for (int k = 0; k < K; ++k) worst = std::max(worst, cmp(closed.mu[k], route.mu[k]));
  }
  return {6, "appendix_cross_check", worst <= 1e-8, detail::fmt("max relative gap in mu_k, mu_bar %.2e (tol 1e-8)", worst)};
}

inline Result theorem2_vs_mc(const Options& o) {
  const auto base = mc_comparison_config();
  LinkSettings link;
  link.duplex = Duplex::fdd;
  link.tau = kComparisonTau;
  MonteCarloOptions mo;
  mo.seed = o.seed;
  mo.trials = o.trials;
  std::string note;
  double worst = 0.0;
  for (int bits : {32, 10000}) {
    auto cfg = base;
    cfg.fdd->feedback_bits = bits;
    for (auto [I, J] : {std::pair{16, 0}, std::pair{16, 112}}) {
      const auto de = gamma_bar_fdd(cfg, I, J);
      const auto mc = ergodic_rate(cfg, link, FixedOutcome{I, J}, mo);
      const double e = detail::worst_user_error(de, mc);
      worst = std::max(worst, e);
      note += detail::fmt("B=%d (%d,%d) %.2f%% ", bits, I, J, 100.0 * e);
    }
  }
  note += "(tol 7%; P_T=40 dBm, tau_d=I+J)";
  return {7, "theorem2_vs_mc", worst <= 0.07, note};
}

inline Result optimizer_behavior(const Options&) {
  bool ok = true;
  std::string note;
  for (double pt : {10.0, 20.0, 30.0}) {
    EnergyModel model(config_with({{"P_T_dbm", detail::fmt("%.17g", pt)}}));
    OptimizerOptions opts;
    const auto exact = alternate_optimize(model, opts);
    opts.threshold = ThresholdMode::min_sum;
    const auto ms = alternate_optimize(model, opts);
    opts.threshold = ThresholdMode::equal_error;
    const auto eq = alternate_optimize(model, opts);
    opts.threshold = ThresholdMode::fixed;
    opts.fixed_zeta0 = dbm_to_watt(-60.0);
    const auto fx = alternate_optimize(model, opts);
    const bool conv = exact.converged && exact.iterations <= 10;
    const bool order = exact.ee >= ms.ee && ms.ee >= eq.ee && eq.ee >= fx.ee;
    const double gap = 1.0 - ms.ee / exact.ee;
    const bool close = gap <= 0.02;
    ok = ok && conv && order && close;
    note += detail::fmt("P_T=%g: iters %d%s, order %s, min_sum gap %.2f%%; ", pt, exact.iterations,
                          conv ? "" : " (not converged)", order ? "ok" : "violated", 100.0 * gap);
  }
  note += "(tol: <=10 iterations, gap 2%)";
  return {8, "optimizer_behavior", ok, note};
}

inline Result ee_cross_oracle(const Options& o) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  MonteCarloOptions mo;
  mo.seed = o.seed;
  mo.trials = o.trials;
  double worst = 0.0;
  std::string note;
  for (int tau : {50, 100, 150}) {
    const double z = threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
    const double de = model.ee_tdd_bar(z, tau).ee;
    const auto mc = mc_average_ee(cfg, z, tau, Duplex::tdd, mo);
    const double score = std::abs(de - mc.ee) / mc.std_error;
    worst = std::max(worst, score);
    note += detail::fmt("tau=%d: %.2f se (%.2f%%) ", tau, score, 100.0 * (de - mc.ee) / mc.ee);
  }
  note += "(tol 3 se; P_T=30 dBm, min-sum threshold)";
  return {9, "ee_cross_oracle", worst <= 3.0, note};
}

/// Every stochastic or iterative command, run twice single-threaded and once
/// each with automatic and four workers, must print identical bytes.
inline Result determinism(const Options& o) {
  using cli::ExperimentSpec;
  auto make = [&](std::string cmd) {
    ExperimentSpec s;
    s.command = std::move(cmd);
    s.seed = o.seed;
    return s;
  };
  std::vector<ExperimentSpec> specs;
  {
    auto s = make("probs");
    s.trials = 2000;
    specs.push_back(s);
  }
  {
    auto s = make("rate");
    s.trials = 300;
    s.pt_dbm = {30};
    specs.push_back(s);
  }
  {
    auto s = make("ee");
    s.pt_dbm = {30};
    specs.push_back(s);
  }
  {
    auto s = make("optimize");
    s.pt_dbm = {20};
    s.format = "json";
    specs.push_back(s);
  }
  {
    auto s = make("montecarlo");
    s.trials = 500;
    s.taus = {100};
    specs.push_back(s);
  }
  {
    auto s = make("sweep");
    s.mode = "min_sum";
    s.sweep_values = {"30", "40"};
    specs.push_back(s);
  }
  std::vector<std::string> failed;
  const unsigned saved = worker_override();
  for (const auto& s : specs) {
    const auto raw = cli::resolve_raw(s);
    std::vector<std::string> outputs;
    for (unsigned threads : {1u, 1u, 0u, 4u}) {
      set_worker_count(threads);
      outputs.push_back(cli::render(cli::run_command(s, raw), s, raw));
    }
    if (!std::all_of(outputs.begin(), outputs.end(), [&](const auto& x) { return x == outputs.front(); }))
      failed.push_back(s.command);
  }
  set_worker_count(saved);
  std::string note = detail::fmt("%zu commands x (1, 1, auto, 4 threads)", specs.size());
  for (const auto& f : failed) note += " differs: " + f;
  return {10, "determinism", failed.empty(), note};
}

using Check = std::function<Result(const Options&)>;

inline std::vector<Check> all_checks() {
  return {probability_oracle, outcome_distribution_check, heuristic_thresholds, theorem1_vs_mc,
          limit_equivalences, appendix_cross_check,       theorem2_vs_mc,       optimizer_behavior,
          ee_cross_oracle,    determinism};
}

inline std::string format_line(const Result& r) {
  return detail::fmt("[%s] %d %s: ", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str()) + r.detail;
}

/// Runs every check; `on_result` sees each result as soon as it is known.
inline std::vector<Result> run_all(const Options& o, const std::function<void(const Result&)>& on_result = {}) {
  std::vector<Result> out;
  const auto checks = all_checks();
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Result r;
    try {
      r = checks[i](o);
    } catch (const std::exception& e) {
      r = {static_cast<int>(i + 1), "criterion", false, std::string("exception: ") + e.what()};
    }
    out.push_back(r);
    if (on_result) on_result(out.back());
  }
  return out;
}

}  // namespace xlmimo::acceptance
