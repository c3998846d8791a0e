#pragma once

// Large-system deterministic equivalents of the RZF downlink SINR on a
// detected VR with I correct and J false antennas.
//
// TDD and FDD are written out term by term in their published algebraic
// form. generic_trace_fixed_point() iterates the underlying trace fixed point
// directly on diagonal covariances and serves as the independent route.

#include <Eigen/Dense>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "xlmimo/channel.hpp"
#include "xlmimo/errors.hpp"
#include "xlmimo/scenario.hpp"

namespace xlmimo {

struct FixedPointOptions {
  double tolerance = 1e-12;
  int max_iterations = 10000;
};

struct FixedPointStatus {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Quantities shared by the TDD and FDD equivalents. For TDD eta2 is unused
/// and eta1 holds eta.
struct DetEquiv {
  int I = 0;
  int J = 0;
  std::vector<double> e;
  double eta1 = 0.0;
  double eta2 = 0.0;
  std::vector<double> mu;
  double mu_bar = 0.0;
  std::vector<double> lambda;
  std::vector<double> lambda_bar_k;
  double lambda_bar = 0.0;
  std::vector<double> a;
  Eigen::MatrixXd jacobian;        // the K x K matrix J
  Eigen::MatrixXd e_prime_k;       // column k solves the system for v_k
  Eigen::VectorXd e_prime;         // solves the system for v'
  std::vector<double> gamma_bar;
  FixedPointStatus status;
  double q2 = 0.0;                 // FDD only
  int tau_d = 0;                   // FDD only
};

using TddDetEquiv = DetEquiv;
using FddDetEquiv = DetEquiv;

namespace detail {

// Damped Picard iteration for e = F(e); the step halves whenever the
// residual grows.
template <typename Map>
std::vector<double> iterate_fixed_point(std::vector<double> e, Map&& F, const FixedPointOptions& opts,
                                        FixedPointStatus& status, const char* who) {
  double omega = 1.0;
  double prev = std::numeric_limits<double>::infinity();
  double r = prev;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const auto next = F(e);
    r = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) r = std::max(r, std::abs(next[i] - e[i]) / (1.0 + std::abs(e[i])));
    if (!std::isfinite(r)) throw NumericError(std::string(who) + ": non-finite iterate", r);
    if (r <= opts.tolerance) {
      status = {true, it, r};
      return next;
    }
    if (r > prev) omega = std::max(omega * 0.5, 1.0 / 1024.0);
    for (std::size_t i = 0; i < e.size(); ++i) e[i] += omega * (next[i] - e[i]);
    prev = r;
  }
  throw NumericError(std::string(who) + ": fixed point did not converge (residual " + std::to_string(r) + ")", r);
}

inline Eigen::VectorXd solve_checked(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const char* who) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw NumericError(std::string(who) + ": singular corrector system");
  Eigen::VectorXd x = lu.solve(b);
  const double scale = std::max(b.norm(), std::numeric_limits<double>::min());
  const double res = (A * x - b).norm();
  if (!x.allFinite() || (b.norm() > 0.0 && res > 1e-10 * scale))
    throw NumericError(std::string(who) + ": corrector solve inaccurate", res / scale);
  return x;
}

// lambda_k, lambda-bar_k, lambda-bar and the master SINR, given mu, e', a
// and the (1 - q^2) factor (1 for TDD).
inline void assemble_sinr(const SystemConfig& cfg, DetEquiv& d, double keep) {
  const int K = cfg.K;
  const double M = cfg.M;
  const auto& p = cfg.p_dl;
  d.lambda.assign(static_cast<std::size_t>(K), 0.0);
  d.lambda_bar_k.assign(static_cast<std::size_t>(K), 0.0);
  d.lambda_bar = 0.0;
  for (int i = 0; i < K; ++i) d.lambda_bar += p[i] * d.e_prime(i) / std::pow(1.0 + d.e[i], 2);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < K; ++i) {
      if (i == k) continue;
      const double w = p[i] / std::pow(1.0 + d.e[i], 2);
      d.lambda[k] += w * d.e_prime_k(i, k);
      d.lambda_bar_k[k] += w * d.e_prime(i);
    }
  }
  d.gamma_bar.assign(static_cast<std::size_t>(K), 0.0);
  for (int k = 0; k < K; ++k) {
    const double mu = d.mu[k];
    const double ak = d.a[k];
    const double num = keep / M * p[k] * mu * mu;
    if (num == 0.0) continue;
    const double den = d.lambda[k] * std::pow(1.0 + ak * d.mu_bar, 2) + keep / M * ak * d.lambda_bar_k[k] * mu * mu +
                       d.lambda_bar * cfg.sigma2_dl / cfg.p_total * std::pow(1.0 + ak * d.mu_bar + keep / M * mu, 2);
    d.gamma_bar[k] = num / den;
  }
}

}  // namespace detail

// ---------------------------------------------------------------- TDD

/// Uplink estimation-noise ratio sigma2_tr / (g tau).
inline double estimation_noise_ratio(const SystemConfig& cfg, int tau) { return cfg.sigma2_tr / (cfg.g() * tau); }

/// Solves e_i = beta_i (I(1+s)/(M xi + eta(1+s)) + J/(M xi g tau/s2 + eta)),
/// eta = sum beta_i/(1+e_i), from e_i = 1/xi.
inline DetEquiv solve_e_tdd(const SystemConfig& cfg, int tau, int I, int J, const FixedPointOptions& opts = {}) {
  if (I < 0 || J < 0 || I + J > cfg.M) throw ParameterError("solve_e_tdd: need I, J >= 0 and I + J <= M");
  if (tau < 1) throw ParameterError("solve_e_tdd: tau must be >= 1");
  const double M = cfg.M;
  const double xi = cfg.xi;
  const double s = estimation_noise_ratio(cfg, tau);
  const double snr_up = cfg.g() * tau / cfg.sigma2_tr;
  const auto& beta = cfg.beta;
  auto eta_of = [&](const std::vector<double>& e) {
    double eta = 0.0;
    for (int i = 0; i < cfg.K; ++i) eta += beta[i] / (1.0 + e[i]);
    return eta;
  };
  auto F = [&](const std::vector<double>& e) {
    const double eta = eta_of(e);
    std::vector<double> out(e.size());
    for (int i = 0; i < cfg.K; ++i)
      out[i] = beta[i] == 0.0 ? 0.0 : beta[i] * (I * (1.0 + s) / (M * xi + eta * (1.0 + s)) + J / (M * xi * snr_up + eta));
    return out;
  };
  DetEquiv d;
  d.I = I;
  d.J = J;
  d.e = detail::iterate_fixed_point(std::vector<double>(static_cast<std::size_t>(cfg.K), 1.0 / xi), F, opts,
                                    d.status, "solve_e_tdd");
  d.eta1 = eta_of(d.e);
  return d;
}

/// Fills J, v_k, v' and solves (I_K - J) x = v for every target user and for v'.
inline void correctors_tdd(const SystemConfig& cfg, int tau, DetEquiv& d) {
  const int K = cfg.K;
  const double M = cfg.M;
  const double xi = cfg.xi;
  const double s = estimation_noise_ratio(cfg, tau);
  const double snr_up = 1.0 / s;
  const double eta = d.eta1;
  const double I = d.I;
  const double J = d.J;
  const auto& beta = cfg.beta;

  d.jacobian.resize(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      d.jacobian(i, j) = beta[i] * beta[j] / std::pow(1.0 + d.e[j], 2) *
                         (I * std::pow(1.0 + s, 2) / std::pow(M * xi + eta * (1.0 + s), 2) +
                          J / std::pow(M * xi * snr_up + eta, 2));

  const double d1 = eta / M + eta * s / M + xi;
  const double d0 = xi + s * eta / M;
  Eigen::VectorXd v_prime(K);
  for (int i = 0; i < K; ++i) v_prime(i) = beta[i] / M * (I * (1.0 + s) / (d1 * d1) + J * s / (d0 * d0));

  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(K, K) - d.jacobian;
  d.e_prime = detail::solve_checked(system, v_prime, "correctors_tdd");
  d.e_prime_k.resize(K, K);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd vk(K);
    for (int i = 0; i < K; ++i) vk(i) = (1.0 + s) * I * beta[i] * beta[k] / (M * d1 * d1);
    d.e_prime_k.col(k) = detail::solve_checked(system, vk, "correctors_tdd");
  }
}

/// Deterministic SINR per user for TDD with LS estimates from tau pilots.
inline DetEquiv gamma_bar_tdd(const SystemConfig& cfg, int tau, int I, int J, const FixedPointOptions& opts = {}) {
  auto d = solve_e_tdd(cfg, tau, I, J, opts);
  correctors_tdd(cfg, tau, d);
  const double M = cfg.M;
  const double xi = cfg.xi;
  const double s = estimation_noise_ratio(cfg, tau);
  const double eta = d.eta1;
  d.mu.resize(static_cast<std::size_t>(cfg.K));
  d.a.resize(static_cast<std::size_t>(cfg.K));
  for (int k = 0; k < cfg.K; ++k) {
    d.mu[k] = I * cfg.beta[k] / (xi + eta / M * (1.0 + s));
    d.a[k] = ls_error_variance(cfg, tau, k);
  }
  d.mu_bar = I / (xi + eta / M * (1.0 + s)) + J / (xi + cfg.sigma2_tr * eta / (M * tau * cfg.g()));
  detail::assemble_sinr(cfg, d, 1.0);
  return d;
}

// ---------------------------------------------------------------- FDD

struct FddSettings {
  std::optional<double> forced_q2;  // default 2^(-B/(I+J-1))
  std::optional<int> tau_d;         // default I + J
};

/// Deterministic SINR per user for FDD with downlink LS estimation and
/// quantised feedback.
inline DetEquiv gamma_bar_fdd(const SystemConfig& cfg, int I, int J, const FddSettings& fdd = {},
                              const FixedPointOptions& opts = {}) {
  if (!cfg.fdd) throw ParameterError("gamma_bar_fdd: config has no FDD parameters");
  if (I < 0 || J < 0 || I + J > cfg.M) throw ParameterError("gamma_bar_fdd: need I, J >= 0 and I + J <= M");
  DetEquiv d;
  d.I = I;
  d.J = J;
  const int K = cfg.K;
  if (I + J == 0) {
    d.gamma_bar.assign(static_cast<std::size_t>(K), 0.0);
    d.status.converged = true;
    return d;
  }
  const double q2 = fdd.forced_q2.value_or(quantization_q2(cfg.fdd->feedback_bits, I + J));
  if (q2 < 0.0 || q2 > 1.0 - 1e-9) throw ParameterError("gamma_bar_fdd: q^2 must lie in [0, 1 - 1e-9]");
  const int tau_d = fdd.tau_d.value_or(I + J);
  if (tau_d < 1) throw ParameterError("gamma_bar_fdd: tau_d must be >= 1");
  d.q2 = q2;
  d.tau_d = tau_d;

  const double M = cfg.M;
  const double xi = cfg.xi;
  const double keep = 1.0 - q2;
  const auto& beta = cfg.beta;
  d.a.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k)
    d.a[k] = keep * cfg.sigma2_dl / (cfg.fdd->p_dp * M * tau_d) + beta[k] * q2 / M;

  auto etas = [&](const std::vector<double>& e) {
    double eta1 = 0.0;
    double eta2 = 0.0;
    for (int i = 0; i < K; ++i) {
      eta1 += keep * beta[i] / (1.0 + e[i]);
      eta2 += d.a[i] / (1.0 + e[i]);
    }
    return std::pair{eta1, eta2};
  };
  auto F = [&](const std::vector<double>& e) {
    const auto [eta1, eta2] = etas(e);
    std::vector<double> out(e.size());
    for (int i = 0; i < K; ++i)
      out[i] = (keep * beta[i] / M + d.a[i]) * I / (eta1 / M + eta2 + xi) + d.a[i] * J / (eta2 + xi);
    return out;
  };
  d.e = detail::iterate_fixed_point(std::vector<double>(static_cast<std::size_t>(K), 1.0 / xi), F, opts, d.status,
                                    "gamma_bar_fdd");
  std::tie(d.eta1, d.eta2) = etas(d.e);
  const double d1 = d.eta1 / M + d.eta2 + xi;
  const double d0 = d.eta2 + xi;

  d.jacobian.resize(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j)
      d.jacobian(i, j) = keep / std::pow(1.0 + d.e[j], 2) *
                         ((beta[i] / M + d.a[i] / keep) * (beta[j] / M + d.a[j] / keep) * I / (d1 * d1) +
                          d.a[i] * d.a[j] / (keep * keep) * J / (d0 * d0));
  Eigen::VectorXd v_prime(K);
  for (int i = 0; i < K; ++i)
    v_prime(i) = (beta[i] / M + d.a[i] / keep) * I / (d1 * d1) + d.a[i] / keep * J / (d0 * d0);
  const Eigen::MatrixXd system = Eigen::MatrixXd::Identity(K, K) / keep - d.jacobian;
  d.e_prime = detail::solve_checked(system, v_prime, "gamma_bar_fdd");
  d.e_prime_k.resize(K, K);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd vk(K);
    for (int i = 0; i < K; ++i) vk(i) = beta[k] * (beta[i] / M + d.a[i] / keep) * I / (d1 * d1);
    d.e_prime_k.col(k) = detail::solve_checked(system, vk, "gamma_bar_fdd");
  }

  d.mu.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) d.mu[k] = I * beta[k] / d1;
  d.mu_bar = I / d1 + J / d0;
  detail::assemble_sinr(cfg, d, keep);
  return d;
}

/// sum_k log(1 + gamma_bar_k) in nats.
inline double sum_rate(const DetEquiv& d) {
  double r = 0.0;
  for (double g : d.gamma_bar) r += std::log1p(g);
  return r;
}

// ---------------------------------------------------------- limit forms

/// Conjugate-beamforming limit (xi -> infinity, I > 0).
inline std::vector<double> gamma_cb_limit(const SystemConfig& cfg, int tau, int I, int J) {
  if (I <= 0) throw ParameterError("gamma_cb_limit: needs I > 0");
  const double s = estimation_noise_ratio(cfg, tau);
  std::vector<double> out(static_cast<std::size_t>(cfg.K));
  double all = 0.0;
  for (int j = 0; j < cfg.K; ++j) all += cfg.p_dl[j] * cfg.beta[j];
  for (int k = 0; k < cfg.K; ++k) {
    const double others = all - cfg.p_dl[k] * cfg.beta[k];
    const double noise_term = cfg.sigma2_dl / cfg.p_total * all * (1.0 + s * (1.0 + static_cast<double>(J) / I));
    out[k] = cfg.p_dl[k] * I * cfg.beta[k] * cfg.beta[k] / (cfg.beta[k] * (1.0 + s) * others + noise_term);
  }
  return out;
}

/// Perfect-VR, perfect-CSI conjugate-beamforming limit.
inline std::vector<double> gamma_perfect_limit(const SystemConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(cfg.K));
  double all = 0.0;
  for (int j = 0; j < cfg.K; ++j) all += cfg.p_dl[j] * cfg.beta[j];
  for (int k = 0; k < cfg.K; ++k) {
    const double others = all - cfg.p_dl[k] * cfg.beta[k];
    out[k] = cfg.p_dl[k] * cfg.L * cfg.beta[k] * cfg.beta[k] /
             (cfg.beta[k] * others + cfg.sigma2_dl / cfg.p_total * all);
  }
  return out;
}

// ---------------------------------------------------- generic fixed point

struct TraceFixedPoint {
  double trace = 0.0;         // tr(Q S) / M
  std::vector<double> e;      // e_k = tr(T_k S) / M
  std::vector<double> s_diag;
  FixedPointStatus status;
};

/// S = ((1/M) sum_k T_k / (1 + e_k) + c I)^{-1}, e_k = tr(T_k S) / M, for
/// diagonal T_k and Q given by their diagonals.
inline TraceFixedPoint generic_trace_fixed_point(std::span<const std::vector<double>> t_diag, double c,
                                                 std::span<const double> q_diag, int M,
                                                 const FixedPointOptions& opts = {}) {
  if (!(c > 0.0)) throw ParameterError("generic_trace_fixed_point: c must be positive");
  const std::size_t n = q_diag.size();
  for (const auto& t : t_diag)
    if (t.size() != n) throw ParameterError("generic_trace_fixed_point: dimension mismatch");
  auto s_of = [&](const std::vector<double>& e) {
    std::vector<double> s(n);
    for (std::size_t m = 0; m < n; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t_diag.size(); ++k) acc += t_diag[k][m] / (1.0 + e[k]);
      s[m] = 1.0 / (acc / M + c);
    }
    return s;
  };
  auto F = [&](const std::vector<double>& e) {
    const auto s = s_of(e);
    std::vector<double> out(e.size());
    for (std::size_t k = 0; k < t_diag.size(); ++k) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n; ++m) acc += t_diag[k][m] * s[m];
      out[k] = acc / M;
    }
    return out;
  };
  TraceFixedPoint r;
  std::vector<double> e0(t_diag.size(), 1.0 / c);
  r.e = t_diag.empty() ? e0 : detail::iterate_fixed_point(e0, F, opts, r.status, "generic_trace_fixed_point");
  if (t_diag.empty()) r.status.converged = true;
  r.s_diag = s_of(r.e);
  for (std::size_t m = 0; m < n; ++m) r.trace += q_diag[m] * r.s_diag[m];
  r.trace /= M;
  return r;
}

/// mu_k and mu-bar for TDD through the generic fixed point with
/// T_j = M R-bar_j, R-bar_j = beta_j/M (Lambda + s I), c = xi.
struct MuRoute {
  std::vector<double> mu;
  double mu_bar = 0.0;
  std::vector<double> e;
};

inline MuRoute mu_via_generic(const SystemConfig& cfg, int tau, int I, int J) {
  const double s = estimation_noise_ratio(cfg, tau);
  const std::size_t n = static_cast<std::size_t>(I + J);
  std::vector<std::vector<double>> T(static_cast<std::size_t>(cfg.K), std::vector<double>(n));
  for (int k = 0; k < cfg.K; ++k)
    for (std::size_t m = 0; m < n; ++m)
      T[k][m] = cfg.beta[k] * ((m < static_cast<std::size_t>(I) ? 1.0 : 0.0) + s);
  MuRoute out;
  std::vector<double> ones(n, static_cast<double>(cfg.M));
  const auto base = generic_trace_fixed_point(T, cfg.xi, ones, cfg.M);
  out.mu_bar = base.trace;
  out.e = base.e;
  for (int k = 0; k < cfg.K; ++k) {
    std::vector<double> q(n, 0.0);
    for (std::size_t m = 0; m < static_cast<std::size_t>(I); ++m) q[m] = cfg.M * cfg.beta[k];
    double tr = 0.0;
    for (std::size_t m = 0; m < n; ++m) tr += q[m] * base.s_diag[m];
    out.mu.push_back(tr / cfg.M);
  }
  return out;
}

}  // namespace xlmimo
