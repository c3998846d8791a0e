#pragma once

// Circuit power and the deterministic average EE, summed over the detection
// outcome distribution with cached per-outcome rates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <vector>

#include "xlmimo/detequiv.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/parallel.hpp"
#include "xlmimo/precode_mc.hpp"
#include "xlmimo/scenario.hpp"
#include "xlmimo/vr_detect.hpp"

namespace xlmimo {

/// P_cir = M P_T / varsigma + 2 P_syn + n P_CT + K P_CR, n = I + J.
inline double p_cir(int active_antennas, const SystemConfig& cfg) {
  if (active_antennas < 0 || active_antennas > cfg.M) throw ParameterError("p_cir: need 0 <= I+J <= M");
  const auto& c = cfg.circuit;
  return cfg.M * cfg.p_total / c.amplifier_efficiency + 2.0 * c.p_syn + active_antennas * c.p_ct + cfg.K * c.p_cr;
}

enum class EEMode { tdd, fdd, static_vr };

inline const char* to_string(EEMode m) {
  switch (m) {
    case EEMode::tdd: return "tdd";
    case EEMode::fdd: return "fdd";
    case EEMode::static_vr: return "static";
  }
  return "?";
}

struct EETerm {
  int I = 0;
  int J = 0;
  double probability = 0.0;
  double rate = 0.0;   // sum rate, nats/s/Hz
  double p_cir = 0.0;  // W
};

struct EEReport {
  double ee = 0.0;  // nats per joule
  double zeta0 = 0.0;
  int tau = 0;
  EEMode mode = EEMode::tdd;
  std::vector<EETerm> breakdown;
  double retained_mass = 0.0;
  double truncation_bound = 0.0;  // upper bound on the discarded EE
};

struct EEOptions {
  bool exhaustive = false;            // sum every outcome with P > 0
  double mass_target = 1.0 - 1e-9;
  FddSettings fdd;                    // forced q^2 / tau_d for FDD rates
};

/// Deterministic EE evaluator bound to one configuration. Rates R_{I,J} are
/// computed on demand and cached per table: one per tau for TDD, a single
/// tau-independent one for FDD. Safe to call from several threads.
class EnergyModel {
 public:
  explicit EnergyModel(SystemConfig cfg, EEOptions opts = {}) : cfg_(std::move(cfg)), opts_(opts) {}

  const SystemConfig& config() const { return cfg_; }
  const EEOptions& options() const { return opts_; }

  double p_cir(int n) const { return xlmimo::p_cir(n, cfg_); }

  double rate_tdd(int tau, int I, int J) {
    const std::vector<std::pair<int, int>> one{{I, J}};
    return rates(table_for(EEMode::tdd, tau), EEMode::tdd, tau, one).front();
  }

  double rate_fdd(int I, int J) {
    const std::vector<std::pair<int, int>> one{{I, J}};
    return rates(table_for(EEMode::fdd, 0), EEMode::fdd, 0, one).front();
  }

  EEReport ee_tdd_bar(double zeta0, int tau) {
    check_tau(tau);
    if (zeta0 < 0.0) throw ParameterError("ee_tdd_bar: zeta0 must be >= 0");
    const auto dist = outcome_distribution(error_probs(detector_params(cfg_, zeta0, tau)), cfg_.L, cfg_.M);
    auto r = assemble(dist, EEMode::tdd, tau);
    r.zeta0 = zeta0;
    return r;
  }

  EEReport ee_fdd_bar(double zeta0, int tau) {
    if (!cfg_.fdd) throw ParameterError("ee_fdd_bar: config has no FDD parameters");
    check_tau(tau);
    if (zeta0 < 0.0) throw ParameterError("ee_fdd_bar: zeta0 must be >= 0");
    const auto dist = outcome_distribution(error_probs(detector_params(cfg_, zeta0, tau)), cfg_.L, cfg_.M);
    auto r = assemble(dist, EEMode::fdd, tau);
    r.zeta0 = zeta0;
    return r;
  }

  /// The outcome distribution is held fixed across blocks; tau still enters
  /// through the data phase and the estimation error.
  EEReport ee_static_vr(const OutcomeDistribution& fixed, int tau) {
    check_tau(tau);
    if (fixed.L() != cfg_.L || fixed.M() != cfg_.M) throw ParameterError("ee_static_vr: distribution shape mismatch");
    return assemble(fixed, EEMode::static_vr, tau);
  }

  EEReport ee(Duplex duplex, double zeta0, int tau) {
    return duplex == Duplex::tdd ? ee_tdd_bar(zeta0, tau) : ee_fdd_bar(zeta0, tau);
  }

  /// EE at the single outcome (L, 0).
  EEReport ee_perfect_vr(Duplex duplex, int tau) {
    check_tau(tau);
    const auto point = OutcomeDistribution::point_mass(cfg_.L, cfg_.M, cfg_.L, 0);
    return assemble(point, duplex == Duplex::tdd ? EEMode::tdd : EEMode::fdd, tau);
  }

 private:
  struct Table {
    std::mutex mutex;
    std::vector<double> values;
  };

  void check_tau(int tau) const {
    if (tau < cfg_.K || tau > cfg_.T) throw ParameterError("energy_ee: need K <= tau <= T");
  }

  Table& table_for(EEMode mode, int tau) {
    const int key = mode == EEMode::fdd ? -1 : tau;
    std::lock_guard lock(tables_mutex_);
    auto& slot = tables_[key];
    if (!slot) {
      slot = std::make_unique<Table>();
      slot->values.assign(static_cast<std::size_t>((cfg_.L + 1) * (cfg_.M - cfg_.L + 1)),
                          std::numeric_limits<double>::quiet_NaN());
    }
    return *slot;
  }

  std::size_t index(int I, int J) const { return static_cast<std::size_t>(I * (cfg_.M - cfg_.L + 1) + J); }

  double solve_rate(EEMode mode, int tau, int I, int J) const {
    if (I + J == 0) return 0.0;
    if (mode == EEMode::fdd) return sum_rate(gamma_bar_fdd(cfg_, I, J, opts_.fdd));
    return sum_rate(gamma_bar_tdd(cfg_, tau, I, J));
  }

  std::vector<double> rates(Table& table, EEMode mode, int tau, const std::vector<std::pair<int, int>>& outcomes) {
    std::lock_guard lock(table.mutex);
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      if (std::isnan(table.values[index(outcomes[i].first, outcomes[i].second)])) missing.push_back(i);
    std::vector<double> fresh(missing.size());
    parallel_for(missing.size(), [&](std::size_t m) {
      const auto [I, J] = outcomes[missing[m]];
      fresh[m] = solve_rate(mode, tau, I, J);
    });
    for (std::size_t m = 0; m < missing.size(); ++m) {
      const auto [I, J] = outcomes[missing[m]];
      table.values[index(I, J)] = fresh[m];
    }
    std::vector<double> out(outcomes.size());
    for (std::size_t i = 0; i < outcomes.size(); ++i)
      out[i] = table.values[index(outcomes[i].first, outcomes[i].second)];
    return out;
  }

  int data_symbols(EEMode mode, int tau, int active) const {
    if (mode != EEMode::fdd) return cfg_.T - tau;
    const int tau_d = opts_.fdd.tau_d.value_or(active);
    return std::max(cfg_.T - tau - tau_d, 0);
  }

  EEReport assemble(const OutcomeDistribution& dist, EEMode mode, int tau) {
    const auto probs = dist.values();
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

    const int cols = dist.cols();
    std::vector<std::pair<int, int>> kept;
    double mass = 0.0;
    double comp = 0.0;
    for (std::size_t idx : order) {
      const double p = probs[idx];
      if (p <= 0.0) break;
      if (!opts_.exhaustive && mass + comp >= opts_.mass_target) break;
      kept.emplace_back(static_cast<int>(idx) / cols, static_cast<int>(idx) % cols);
      const double t = mass + p;
      comp += std::abs(mass) >= std::abs(p) ? (mass - t) + p : (p - t) + mass;
      mass = t;
    }
    mass += comp;
    if (mass < opts_.mass_target)
      throw NumericError("energy_ee: outcome distribution retains too little mass", 1.0 - mass);

    EEReport r;
    r.mode = mode;
    r.tau = tau;
    r.retained_mass = mass;

    // Outcomes without a data phase contribute nothing; skip solving them.
    std::vector<std::pair<int, int>> need;
    for (const auto& o : kept)
      if (data_symbols(mode, tau, o.first + o.second) > 0) need.push_back(o);
    auto& table = table_for(mode == EEMode::fdd ? EEMode::fdd : EEMode::tdd, mode == EEMode::fdd ? 0 : tau);
    const auto solved = rates(table, mode == EEMode::fdd ? EEMode::fdd : EEMode::tdd, tau, need);

    std::vector<double> contrib;
    contrib.reserve(kept.size());
    r.breakdown.reserve(kept.size());
    double max_rate = 0.0;
    std::size_t j = 0;
    for (const auto& [I, J] : kept) {
      const int data = data_symbols(mode, tau, I + J);
      EETerm term{I, J, dist.at(I, J), 0.0, p_cir(I + J)};
      if (data > 0) term.rate = solved[j++];
      max_rate = std::max(max_rate, term.rate);
      contrib.push_back(cfg_.bandwidth * data / cfg_.T * term.probability * term.rate / term.p_cir);
      r.breakdown.push_back(term);
    }
    r.ee = compensated_sum(contrib);
    const int max_data = mode == EEMode::fdd ? std::max(cfg_.T - tau, 0) : cfg_.T - tau;
    r.truncation_bound =
        std::max(0.0, 1.0 - mass) * cfg_.bandwidth * max_data / cfg_.T * max_rate / p_cir(0);
    if (!(r.ee >= 0.0) || !std::isfinite(r.ee)) throw NumericError("energy_ee: invalid EE", r.ee);
    return r;
  }

  SystemConfig cfg_;
  EEOptions opts_;
  std::mutex tables_mutex_;
  std::map<int, std::unique_ptr<Table>> tables_;
};

inline EEReport ee_tdd_bar(double zeta0, int tau, const SystemConfig& cfg, const EEOptions& opts = {}) {
  return EnergyModel(cfg, opts).ee_tdd_bar(zeta0, tau);
}

inline EEReport ee_fdd_bar(double zeta0, int tau, const SystemConfig& cfg, const EEOptions& opts = {}) {
  return EnergyModel(cfg, opts).ee_fdd_bar(zeta0, tau);
}

inline EEReport ee_static_vr(const OutcomeDistribution& fixed, int tau, const SystemConfig& cfg,
                             const EEOptions& opts = {}) {
  return EnergyModel(cfg, opts).ee_static_vr(fixed, tau);
}

}  // namespace xlmimo
