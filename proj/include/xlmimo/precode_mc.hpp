#pragma once

// RZF precoding, power normalisation, instantaneous SINR and the Monte-Carlo
// estimators of ergodic rate and average EE. This is the reference the
// deterministic equivalents are checked against, so it shares no code with
// detequiv.hpp.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "xlmimo/channel.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/parallel.hpp"
#include "xlmimo/random.hpp"
#include "xlmimo/scenario.hpp"
#include "xlmimo/vr_detect.hpp"

namespace xlmimo {

enum class Duplex { tdd, fdd };

inline const char* to_string(Duplex d) { return d == Duplex::tdd ? "tdd" : "fdd"; }

/// How estimates are produced for a trial.
struct LinkSettings {
  Duplex duplex = Duplex::tdd;
  int tau = 4;                        // uplink pilot length
  std::optional<double> forced_q2;    // FDD: overrides 2^(-B/(n-1))
  std::optional<int> tau_d;           // FDD: overrides tau_d = I + J
};

struct Precoder {
  CMatrix W;          // (I+J) x K directions A^{-1} H^
  double alpha = 0.0;
};

/// W = (H H^H + xi I)^{-1} H. For K < n the push-through form
/// H (H^H H + xi I_K)^{-1} is used; both satisfy A W = H.
inline CMatrix rzf_directions(const CMatrix& h_hat, double xi) {
  if (!(xi > 0.0)) throw ParameterError("rzf_directions: xi must be positive");
  if (!h_hat.allFinite()) throw NumericError("rzf_directions: non-finite channel estimate");
  const Eigen::Index n = h_hat.rows();
  const Eigen::Index K = h_hat.cols();
  CMatrix W;
  if (K < n) {
    CMatrix gram = h_hat.adjoint() * h_hat;
    gram.diagonal().array() += xi;
    Eigen::LLT<CMatrix> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericError("rzf_directions: Gram factorisation failed");
    W = h_hat * llt.solve(CMatrix::Identity(K, K));
  } else {
    CMatrix A = h_hat * h_hat.adjoint();
    A.diagonal().array() += xi;
    Eigen::LLT<CMatrix> llt(A);
    if (llt.info() != Eigen::Success) throw NumericError("rzf_directions: factorisation failed");
    W = llt.solve(h_hat);
  }
  if (!W.allFinite()) throw NumericError("rzf_directions: non-finite result");
  return W;
}

/// ||(H H^H + xi I) W - H|| / ||H||.
inline double rzf_residual(const CMatrix& h_hat, double xi, const CMatrix& W) {
  const CMatrix r = h_hat * (h_hat.adjoint() * W) + xi * W - h_hat;
  const double scale = h_hat.norm();
  return scale > 0.0 ? r.norm() / scale : r.norm();
}

/// tr(P_DL W^H W).
inline double power_trace(const CMatrix& W, const SystemConfig& cfg) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < W.cols(); ++k) s += cfg.p_dl[static_cast<std::size_t>(k)] * W.col(k).squaredNorm();
  return s;
}

/// Per-user SINR with w_k = alpha * W(:,k) against the true channel on the
/// detected VR.
inline std::vector<double> instantaneous_sinr(const CMatrix& h_true_on_hat, const CMatrix& W, double alpha,
                                              const SystemConfig& cfg) {
  if (h_true_on_hat.rows() != W.rows() || h_true_on_hat.cols() != W.cols())
    throw ParameterError("instantaneous_sinr: dimension mismatch");
  const Eigen::Index K = W.cols();
  const CMatrix G = h_true_on_hat.adjoint() * W;  // G(k, j) = h_k^H w_j
  std::vector<double> sinr(static_cast<std::size_t>(K));
  const double a2 = alpha * alpha;
  for (Eigen::Index k = 0; k < K; ++k) {
    double interference = 0.0;
    for (Eigen::Index j = 0; j < K; ++j)
      if (j != k) interference += cfg.p_dl[static_cast<std::size_t>(j)] * std::norm(G(k, j)) * a2;
    const double signal = cfg.p_dl[static_cast<std::size_t>(k)] * std::norm(G(k, k)) * a2;
    sinr[static_cast<std::size_t>(k)] = signal / (interference + cfg.sigma2_dl);
  }
  return sinr;
}

/// True channel and the estimate the BS precodes with, for one trial.
struct TrialChannels {
  CMatrix h_true;
  CMatrix h_est;
  int I = 0;
  int J = 0;
};

namespace detail {

// Contiguous true VR at a uniformly random offset.
inline std::vector<int> random_vr(const SystemConfig& cfg, Rng& rng) {
  std::uniform_int_distribution<int> offset(0, cfg.M - cfg.L);
  const int start = offset(rng);
  std::vector<int> vr(static_cast<std::size_t>(cfg.L));
  for (int i = 0; i < cfg.L; ++i) vr[static_cast<std::size_t>(i)] = start + i;
  return vr;
}

// `count` distinct elements of `pool`, uniformly at random (partial Fisher-Yates).
inline std::vector<int> sample_subset(std::vector<int> pool, int count, Rng& rng) {
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

inline CMatrix estimate_on_hat(const SystemConfig& cfg, const LinkSettings& link, const CMatrix& h_true,
                               const CMatrix* y_on_hat, Rng& rng) {
  const int n = static_cast<int>(h_true.rows());
  if (link.duplex == Duplex::tdd) {
    CMatrix y = y_on_hat ? *y_on_hat : correlated_observation(h_true, cfg, link.tau, rng);
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return *ls_estimate_tdd(y, all, cfg, link.tau);
  }
  const auto model = feedback_model(cfg, n, link.forced_q2, link.tau_d);
  return fdd_estimate_and_feedback(h_true, model, cfg, rng);
}

}  // namespace detail

/// One trial with exactly I correct and J false antennas, placed uniformly
/// at random inside and outside a random true VR.
inline TrialChannels sample_fixed_outcome(const SystemConfig& cfg, const LinkSettings& link, int I, int J, Rng& rng) {
  if (I < 0 || I > cfg.L || J < 0 || J > cfg.M - cfg.L) throw ParameterError("sample_fixed_outcome: (I,J) out of range");
  const auto vr = detail::random_vr(cfg, rng);
  std::vector<int> outside;
  outside.reserve(static_cast<std::size_t>(cfg.M - cfg.L));
  for (int m = 0; m < cfg.M; ++m)
    if (m < vr.front() || m > vr.back()) outside.push_back(m);
  auto hat = detail::sample_subset(vr, I, rng);
  const auto wrong = detail::sample_subset(std::move(outside), J, rng);
  hat.insert(hat.end(), wrong.begin(), wrong.end());
  std::sort(hat.begin(), hat.end());

  const CMatrix h_full = draw_channel(cfg, vr, rng);
  TrialChannels t;
  t.I = I;
  t.J = J;
  t.h_true = restrict_rows(h_full, hat);
  if (!hat.empty()) t.h_est = detail::estimate_on_hat(cfg, link, t.h_true, nullptr, rng);
  return t;
}

/// One trial of the full chain: channel, training, energy detection on
/// user 1's column, estimation on the detected VR.
inline TrialChannels sample_pipeline(const SystemConfig& cfg, const LinkSettings& link, double zeta0, Rng& rng) {
  const auto vr = detail::random_vr(cfg, rng);
  const CMatrix h_full = draw_channel(cfg, vr, rng);
  const CMatrix y = correlated_observation(h_full, cfg, link.tau, rng);
  const CVector y0 = y.col(0);
  const auto hat = detect(std::span<const std::complex<double>>(y0.data(), static_cast<std::size_t>(y0.size())), zeta0);
  TrialChannels t;
  for (int m : hat) (m >= vr.front() && m <= vr.back() ? t.I : t.J) += 1;
  t.h_true = restrict_rows(h_full, hat);
  if (!hat.empty()) {
    const CMatrix y_hat = restrict_rows(y, hat);
    t.h_est = detail::estimate_on_hat(cfg, link, t.h_true, &y_hat, rng);
  }
  return t;
}

struct MonteCarloOptions {
  std::uint64_t seed = 42;
  int trials = 10000;
  int calibration_trials = 1000;
};

/// alpha = sqrt(M P_T / E[tr(P_DL W^H W)]) with the expectation taken over
/// `n_cal` independent fixed-(I,J) realisations.
inline double calibrate_alpha(const SystemConfig& cfg, const LinkSettings& link, int I, int J, int n_cal,
                              std::uint64_t seed, bool parallel = true) {
  if (n_cal < 100) throw ParameterError("calibrate_alpha: need at least 100 calibration trials");
  if (I + J == 0) throw DegenerateScenario("calibrate_alpha: empty detected VR");
  const std::uint64_t base = (static_cast<std::uint64_t>(I) * static_cast<std::uint64_t>(cfg.M + 1) +
                              static_cast<std::uint64_t>(J)) << 24;
  std::vector<double> traces(static_cast<std::size_t>(n_cal));
  auto one = [&](std::size_t i) {
    auto rng = make_stream(seed, Stream::calibration, base + i);
    const auto t = sample_fixed_outcome(cfg, link, I, J, rng);
    traces[i] = power_trace(rzf_directions(t.h_est, cfg.xi), cfg);
  };
  if (parallel)
    parallel_for(traces.size(), one);
  else
    for (std::size_t i = 0; i < traces.size(); ++i) one(i);
  const double mean = compensated_sum(traces) / n_cal;
  if (!(mean > 0.0)) throw DegenerateScenario("calibrate_alpha: zero precoder power");
  return std::sqrt(cfg.M * cfg.p_total / mean);
}

/// Calibrated alpha per (I,J), filled lazily and safely from worker threads.
/// Each value depends only on (seed, I, J), never on fill order.
class AlphaCache {
 public:
  AlphaCache(const SystemConfig& cfg, const LinkSettings& link, int n_cal, std::uint64_t seed)
      : cfg_(cfg), link_(link), n_cal_(n_cal), seed_(seed) {}

  double get(int I, int J) {
    const auto key = std::make_pair(I, J);
    std::lock_guard lock(mutex_);
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    const double a = calibrate_alpha(cfg_, link_, I, J, n_cal_, seed_, false);
    values_.emplace(key, a);
    return a;
  }

 private:
  const SystemConfig& cfg_;
  LinkSettings link_;
  int n_cal_;
  std::uint64_t seed_;
  std::mutex mutex_;
  std::map<std::pair<int, int>, double> values_;
};

struct RateStats {
  double sum_rate = 0.0;          // nats per channel use
  double sum_rate_stderr = 0.0;
  std::vector<double> user_rate;
  std::vector<double> user_rate_stderr;
  int trials = 0;
  int empty_trials = 0;
  double alpha = 0.0;             // fixed-(I,J) mode only
};

struct FixedOutcome {
  int I = 0;
  int J = 0;
};

struct PipelineOutcome {
  double zeta0 = 0.0;
};

using RateMode = std::variant<FixedOutcome, PipelineOutcome>;

namespace detail {

inline std::vector<double> trial_rates(const SystemConfig& cfg, const TrialChannels& t, double alpha) {
  std::vector<double> rates(static_cast<std::size_t>(cfg.K), 0.0);
  if (t.h_true.rows() == 0) return rates;
  const auto W = rzf_directions(t.h_est, cfg.xi);
  const auto sinr = instantaneous_sinr(t.h_true, W, alpha, cfg);
  for (std::size_t k = 0; k < rates.size(); ++k) rates[k] = std::log1p(sinr[k]);
  return rates;
}

}  // namespace detail

/// Monte-Carlo ergodic sum rate, either at a fixed (I,J) or through the
/// detection pipeline at threshold zeta0.
inline RateStats ergodic_rate(const SystemConfig& cfg, const LinkSettings& link, const RateMode& mode,
                              const MonteCarloOptions& opts) {
  if (opts.trials < 1) throw ParameterError("ergodic_rate: trials must be >= 1");
  const auto n = static_cast<std::size_t>(opts.trials);
  const auto K = static_cast<std::size_t>(cfg.K);
  std::vector<double> per_user(n * K, 0.0);
  std::vector<char> empty(n, 0);
  RateStats out;

  if (const auto* fixed = std::get_if<FixedOutcome>(&mode)) {
    if (fixed->I + fixed->J > 0) {
      out.alpha = calibrate_alpha(cfg, link, fixed->I, fixed->J, opts.calibration_trials, opts.seed);
      parallel_for(n, [&](std::size_t i) {
        auto rng = make_stream(opts.seed, Stream::trial, i);
        const auto t = sample_fixed_outcome(cfg, link, fixed->I, fixed->J, rng);
        const auto r = detail::trial_rates(cfg, t, out.alpha);
        std::copy(r.begin(), r.end(), per_user.begin() + static_cast<std::ptrdiff_t>(i * K));
      });
    } else {
      std::fill(empty.begin(), empty.end(), 1);
    }
  } else {
    const double zeta0 = std::get<PipelineOutcome>(mode).zeta0;
    AlphaCache alphas(cfg, link, opts.calibration_trials, opts.seed);
    parallel_for(n, [&](std::size_t i) {
      auto rng = make_stream(opts.seed, Stream::trial, i);
      const auto t = sample_pipeline(cfg, link, zeta0, rng);
      if (t.I + t.J == 0) {
        empty[i] = 1;
        return;
      }
      const auto r = detail::trial_rates(cfg, t, alphas.get(t.I, t.J));
      std::copy(r.begin(), r.end(), per_user.begin() + static_cast<std::ptrdiff_t>(i * K));
    });
  }

  std::vector<double> sums(n, 0.0);
  std::vector<double> col(n);
  out.trials = opts.trials;
  for (std::size_t i = 0; i < n; ++i) {
    sums[i] = compensated_sum(std::span<const double>(per_user.data() + i * K, K));
    out.empty_trials += empty[i];
  }
  const auto s = sample_stats(sums);
  out.sum_rate = s.mean;
  out.sum_rate_stderr = s.std_error;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < n; ++i) col[i] = per_user[i * K + k];
    const auto u = sample_stats(col);
    out.user_rate.push_back(u.mean);
    out.user_rate_stderr.push_back(u.std_error);
  }
  return out;
}

struct DetectionFrequencies {
  double p10 = 0.0;
  double p01 = 0.0;
  int draws = 0;
};

/// Empirical error rates of the energy detector: per draw, one antenna
/// outside the VR (noise only) and one inside it, user 1's statistics.
inline DetectionFrequencies mc_error_probs(const SystemConfig& cfg, double zeta0, int tau, int draws,
                                           std::uint64_t seed) {
  if (draws < 1) throw ParameterError("mc_error_probs: draws must be >= 1");
  const auto n = static_cast<std::size_t>(draws);
  std::vector<char> false_hit(n, 0);
  std::vector<char> miss(n, 0);
  const double noise_var = tau * cfg.sigma2_tr;
  const double gain = tau * std::sqrt(static_cast<double>(cfg.M) * cfg.pilot_power(0));
  parallel_for(n, [&](std::size_t i) {
    auto rng = make_stream(seed, Stream::detection, i);
    const auto outside = complex_normal(rng, noise_var);
    const auto h = complex_normal(rng, cfg.beta[0] / cfg.M);
    const auto inside = gain * h + complex_normal(rng, noise_var);
    false_hit[i] = std::norm(outside) > zeta0;
    miss[i] = std::norm(inside) <= zeta0;
  });
  DetectionFrequencies f;
  f.draws = draws;
  for (std::size_t i = 0; i < n; ++i) {
    f.p10 += false_hit[i];
    f.p01 += miss[i];
  }
  f.p10 /= draws;
  f.p01 /= draws;
  return f;
}

/// Circuit power with n active antennas; duplicated in energy_ee.hpp's
/// p_cir, kept here so the oracle stays self-contained.
inline double mc_circuit_power(const SystemConfig& cfg, int n) {
  const auto& c = cfg.circuit;
  return cfg.M * cfg.p_total / c.amplifier_efficiency + 2.0 * c.p_syn + n * c.p_ct + cfg.K * c.p_cr;
}

struct MonteCarloEE {
  double ee = 0.0;          // nats per joule
  double std_error = 0.0;
  double zeta0 = 0.0;
  int tau = 0;
  Duplex duplex = Duplex::tdd;
  int trials = 0;
  int empty_trials = 0;
};

/// Per-trial EE contribution averaged over the detection pipeline:
/// W (T - tau [- n]) / T * rate / P_cir(n), the data phase clamped at 0.
inline MonteCarloEE mc_average_ee(const SystemConfig& cfg, double zeta0, int tau, Duplex duplex,
                                  const MonteCarloOptions& opts) {
  if (tau < cfg.K || tau > cfg.T) throw ParameterError("mc_average_ee: need K <= tau <= T");
  LinkSettings link;
  link.duplex = duplex;
  link.tau = tau;
  const auto n = static_cast<std::size_t>(opts.trials);
  std::vector<double> ee(n, 0.0);
  std::vector<char> empty(n, 0);
  AlphaCache alphas(cfg, link, opts.calibration_trials, opts.seed);
  parallel_for(n, [&](std::size_t i) {
    auto rng = make_stream(opts.seed, Stream::trial, i);
    const auto t = sample_pipeline(cfg, link, zeta0, rng);
    const int active = t.I + t.J;
    if (active == 0) {
      empty[i] = 1;
      return;
    }
    const int data = duplex == Duplex::tdd ? cfg.T - tau : std::max(cfg.T - tau - active, 0);
    if (data == 0) return;
    const auto r = detail::trial_rates(cfg, t, alphas.get(t.I, t.J));
    const double rate = compensated_sum(r);
    ee[i] = cfg.bandwidth * data / cfg.T * rate / mc_circuit_power(cfg, active);
  });
  const auto s = sample_stats(ee);
  MonteCarloEE out;
  out.ee = s.mean;
  out.std_error = s.std_error;
  out.zeta0 = zeta0;
  out.tau = tau;
  out.duplex = duplex;
  out.trials = opts.trials;
  for (char e : empty) out.empty_trials += e;
  return out;
}

}  // namespace xlmimo
