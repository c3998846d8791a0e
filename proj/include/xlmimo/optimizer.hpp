#pragma once

// Threshold and pilot-length subproblems, the alternating loop over the two,
// and the FDD downlink pilot length for a perfectly known VR.

#include <cmath>
#include <optional>
#include <vector>

#include "xlmimo/energy_ee.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/parallel.hpp"
#include "xlmimo/vr_detect.hpp"

namespace xlmimo {

enum class ThresholdMode { exact, min_sum, equal_error, fixed };

inline const char* to_string(ThresholdMode m) {
  switch (m) {
    case ThresholdMode::exact: return "exact";
    case ThresholdMode::min_sum: return "min_sum";
    case ThresholdMode::equal_error: return "equal_error";
    case ThresholdMode::fixed: return "fixed";
  }
  return "?";
}

struct OptimizerOptions {
  ThresholdMode threshold = ThresholdMode::exact;
  Duplex duplex = Duplex::tdd;
  double fixed_zeta0 = 1e-9;  // -60 dBm
  int grid_points = 60;
  double grid_low = 1e-3;     // relative to tau * sigma2_tr
  double grid_high = 1e3;
  double golden_rel_width = 1e-6;
  int max_iterations = 20;
};

struct TracePoint {
  double zeta0 = 0.0;
  int tau = 0;
  double ee = 0.0;
};

struct OptResult {
  double zeta0 = 0.0;
  int tau = 0;
  double ee = 0.0;  // nats per joule
  int iterations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
  ThresholdMode threshold_mode = ThresholdMode::exact;
};

/// Threshold for pilot length tau under the chosen rule. Exact mode scans a
/// log grid, refines the best bracket by golden section and keeps whichever
/// of that and the two heuristic thresholds scores highest.
inline double opt_threshold(EnergyModel& model, int tau, const OptimizerOptions& opts) {
  const auto& cfg = model.config();
  if (tau < cfg.K || tau > cfg.T) throw ParameterError("opt_threshold: need K <= tau <= T");
  switch (opts.threshold) {
    case ThresholdMode::min_sum: return threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
    case ThresholdMode::equal_error: return threshold_equal_error(tau, cfg.sigma2_tr, cfg.g());
    case ThresholdMode::fixed: return opts.fixed_zeta0;
    case ThresholdMode::exact: break;
  }
  auto f = [&](double log_z) { return model.ee(opts.duplex, std::exp(log_z), tau).ee; };

  const double base = tau * cfg.sigma2_tr;
  const int n = std::max(opts.grid_points, 3);
  const double lo = std::log(opts.grid_low * base);
  const double hi = std::log(opts.grid_high * base);
  std::vector<double> grid(static_cast<std::size_t>(n));
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    grid[i] = lo + (hi - lo) * i / (n - 1);
    vals[i] = f(grid[i]);
  }
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (vals[i] > vals[best]) best = i;

  double a = grid[std::max(best - 1, 0)];
  double b = grid[std::min(best + 1, n - 1)];
  constexpr double inv_phi = 0.6180339887498949;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  const double width = std::log1p(opts.golden_rel_width);
  while (b - a > width) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }

  struct Candidate {
    double zeta;
    double ee;
  };
  std::vector<Candidate> cands;
  cands.push_back({std::exp(fc >= fd ? c : d), std::max(fc, fd)});
  cands.push_back({std::exp(grid[best]), vals[best]});
  for (double z : {threshold_min_sum(tau, cfg.sigma2_tr, cfg.g()), threshold_equal_error(tau, cfg.sigma2_tr, cfg.g())})
    cands.push_back({z, model.ee(opts.duplex, z, tau).ee});
  Candidate pick = cands.front();
  for (const auto& cand : cands)
    if (cand.ee > pick.ee) pick = cand;
  return pick.zeta;
}

/// Exhaustive pilot-length search for a fixed threshold; ties go to the
/// smaller tau.
inline int opt_tau(EnergyModel& model, double zeta0, Duplex duplex) {
  const auto& cfg = model.config();
  if (zeta0 < 0.0) throw ParameterError("opt_tau: zeta0 must be >= 0");
  const int hi = duplex == Duplex::tdd ? cfg.T : std::max(cfg.T - 1, cfg.K);
  const int count = hi - cfg.K + 1;
  std::vector<double> ee(static_cast<std::size_t>(count));
  parallel_for(ee.size(), [&](std::size_t i) { ee[i] = model.ee(duplex, zeta0, cfg.K + static_cast<int>(i)).ee; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < ee.size(); ++i)
    if (ee[i] > ee[best]) best = i;
  return cfg.K + static_cast<int>(best);
}

/// Alternates threshold and pilot-length updates from tau = K until tau
/// repeats, returning the best point seen.
inline OptResult alternate_optimize(EnergyModel& model, const OptimizerOptions& opts = {}) {
  const auto& cfg = model.config();
  OptResult r;
  r.threshold_mode = opts.threshold;
  int tau = cfg.K;
  bool have_best = false;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const double zeta = opt_threshold(model, tau, opts);
    const int next = opt_tau(model, zeta, opts.duplex);
    const double ee = model.ee(opts.duplex, zeta, next).ee;
    r.trace.push_back({zeta, next, ee});
    r.iterations = it;
    if (!have_best || ee > r.ee) {
      r.zeta0 = zeta;
      r.tau = next;
      r.ee = ee;
      have_best = true;
    }
    if (next == tau) {
      r.converged = true;
      break;
    }
    tau = next;
  }
  return r;
}

inline OptResult alternate_optimize(const SystemConfig& cfg, const OptimizerOptions& opts = {}) {
  EnergyModel model(cfg);
  return alternate_optimize(model, opts);
}

/// Best tau with the VR known exactly (single outcome (L, 0)).
inline OptResult optimize_perfect_vr(EnergyModel& model, Duplex duplex) {
  const auto& cfg = model.config();
  const int hi = duplex == Duplex::tdd ? cfg.T : std::max(cfg.T - 1, cfg.K);
  std::vector<double> ee(static_cast<std::size_t>(hi - cfg.K + 1));
  parallel_for(ee.size(), [&](std::size_t i) { ee[i] = model.ee_perfect_vr(duplex, cfg.K + static_cast<int>(i)).ee; });
  std::size_t best = 0;
  for (std::size_t i = 1; i < ee.size(); ++i)
    if (ee[i] > ee[best]) best = i;
  OptResult r;
  r.tau = cfg.K + static_cast<int>(best);
  r.ee = ee[best];
  r.iterations = 1;
  r.converged = true;
  r.trace.push_back({0.0, r.tau, r.ee});
  return r;
}

struct TauDResult {
  int tau_d = 0;
  double ee = 0.0;
  std::vector<double> scan;  // ee for tau_d = L, L+1, ...
};

/// Downlink pilot length for FDD with the VR known exactly, searched over
/// [L, T - tau].
inline TauDResult opt_tau_d_perfect_vr(const SystemConfig& cfg, int tau) {
  if (!cfg.fdd) throw ParameterError("opt_tau_d_perfect_vr: config has no FDD parameters");
  if (cfg.T - tau < cfg.L) throw ParameterError("opt_tau_d_perfect_vr: no feasible tau_d (T - tau < L)");
  const int count = cfg.T - tau - cfg.L + 1;
  TauDResult r;
  r.scan.resize(static_cast<std::size_t>(count));
  const double power = p_cir(cfg.L, cfg);
  parallel_for(r.scan.size(), [&](std::size_t i) {
    const int tau_d = cfg.L + static_cast<int>(i);
    FddSettings s;
    s.tau_d = tau_d;
    const double rate = sum_rate(gamma_bar_fdd(cfg, cfg.L, 0, s));
    r.scan[i] = cfg.bandwidth * (cfg.T - tau - tau_d) / (cfg.T * power) * rate;
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < r.scan.size(); ++i)
    if (r.scan[i] > r.scan[best]) best = i;
  r.tau_d = cfg.L + static_cast<int>(best);
  r.ee = r.scan[best];
  return r;
}

}  // namespace xlmimo
