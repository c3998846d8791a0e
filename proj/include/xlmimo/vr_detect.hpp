#pragma once

// Per-antenna energy detection of the visibility region, its two error
// probabilities, the distribution of (correct, false) detection counts and
// the two heuristic threshold rules.

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "xlmimo/errors.hpp"
#include "xlmimo/scenario.hpp"

namespace xlmimo {

struct DetectorParams {
  double zeta0 = 0.0;      // energy threshold, linear units
  int tau = 1;             // uplink pilot length
  double sigma2_tr = 1.0;  // uplink noise
  double g = 1.0;          // p_tr,k * beta_k
};

inline DetectorParams detector_params(const SystemConfig& cfg, double zeta0, int tau) {
  return {zeta0, tau, cfg.sigma2_tr, cfg.g()};
}

struct ErrorProbs {
  double p10 = 0.0;  // false detection
  double p01 = 0.0;  // missed detection
};

/// Mean of |y|^2 on an antenna outside the VR.
inline double noise_energy(const DetectorParams& p) { return p.tau * p.sigma2_tr; }

/// Mean of |y|^2 on an antenna inside the VR.
inline double signal_energy(const DetectorParams& p) {
  return static_cast<double>(p.tau) * p.tau * p.g + p.tau * p.sigma2_tr;
}

inline double p_false(const DetectorParams& p) { return std::exp(-p.zeta0 / noise_energy(p)); }

inline double p_miss(const DetectorParams& p) { return -std::expm1(-p.zeta0 / signal_energy(p)); }

inline ErrorProbs error_probs(const DetectorParams& p) { return {p_false(p), p_miss(p)}; }

/// Indices m with |y_m|^2 > zeta0, ascending.
inline std::vector<int> detect(std::span<const std::complex<double>> column, double zeta0) {
  std::vector<int> vr;
  for (std::size_t m = 0; m < column.size(); ++m)
    if (std::norm(column[m]) > zeta0) vr.push_back(static_cast<int>(m));
  return vr;
}

/// P_{I,J} over I in [0, L] correct and J in [0, M-L] false detections.
class OutcomeDistribution {
 public:
  OutcomeDistribution() = default;
  OutcomeDistribution(int L, int M) : L_(L), M_(M), grid_(static_cast<std::size_t>((L + 1) * (M - L + 1)), 0.0) {}

  int L() const { return L_; }
  int M() const { return M_; }
  int rows() const { return L_ + 1; }
  int cols() const { return M_ - L_ + 1; }

  double& at(int I, int J) { return grid_[index(I, J)]; }
  double at(int I, int J) const { return grid_[index(I, J)]; }

  std::span<const double> values() const { return grid_; }

  double total() const {
    double s = 0.0;
    for (double v : grid_) s += v;
    return s;
  }

  /// Point mass at a single outcome.
  static OutcomeDistribution point_mass(int L, int M, int I, int J) {
    OutcomeDistribution d(L, M);
    d.at(I, J) = 1.0;
    return d;
  }

 private:
  std::size_t index(int I, int J) const {
    if (I < 0 || I > L_ || J < 0 || J > M_ - L_) throw ParameterError("outcome index out of range");
    return static_cast<std::size_t>(I * (M_ - L_ + 1) + J);
  }

  int L_ = 0;
  int M_ = 0;
  std::vector<double> grid_;
};

namespace detail {

inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

// count * log(p), with 0 * log(0) == 0.
inline double xlogp(int count, double p) {
  if (count == 0) return 0.0;
  return count * std::log(p);
}

}  // namespace detail

/// Binomial product over true-VR and non-VR antennas, evaluated in the log
/// domain (factorials overflow at M = 128).
inline OutcomeDistribution outcome_distribution(const ErrorProbs& p, int L, int M) {
  if (L < 0 || L > M) throw ParameterError("outcome_distribution: need 0 <= L <= M");
  OutcomeDistribution d(L, M);
  const int N = M - L;
  std::vector<double> logI(static_cast<std::size_t>(L + 1));
  std::vector<double> logJ(static_cast<std::size_t>(N + 1));
  for (int I = 0; I <= L; ++I)
    logI[I] = detail::log_binomial(L, I) + detail::xlogp(L - I, p.p01) + detail::xlogp(I, 1.0 - p.p01);
  for (int J = 0; J <= N; ++J)
    logJ[J] = detail::log_binomial(N, J) + detail::xlogp(J, p.p10) + detail::xlogp(N - J, 1.0 - p.p10);
  for (int I = 0; I <= L; ++I)
    for (int J = 0; J <= N; ++J) d.at(I, J) = std::exp(logI[I] + logJ[J]);
  return d;
}

/// Threshold minimising P10 + P01 in closed form.
inline double threshold_min_sum(int tau, double sigma2_tr, double g) {
  if (tau < 1 || !(sigma2_tr > 0.0) || !(g > 0.0)) throw ParameterError("threshold_min_sum: inputs must be positive");
  const double tg = tau * g;
  return sigma2_tr * (tg + sigma2_tr) / g * std::log((sigma2_tr + tg) / sigma2_tr);
}

/// Threshold with P10 == P01. h = P10 - P01 falls strictly from +1 to -1, so
/// bisection on a doubled bracket always converges.
inline double threshold_equal_error(int tau, double sigma2_tr, double g) {
  if (tau < 1 || !(sigma2_tr > 0.0) || !(g > 0.0)) throw ParameterError("threshold_equal_error: inputs must be positive");
  DetectorParams p{0.0, tau, sigma2_tr, g};
  auto h = [&](double z) {
    p.zeta0 = z;
    return p_false(p) - p_miss(p);
  };
  double lo = 0.0;
  double hi = noise_energy(p);
  while (h(hi) >= 0.0) {
    lo = hi;
    hi *= 2.0;
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    mid = 0.5 * (lo + hi);
    const double v = h(mid);
    if (std::abs(v) <= 1e-15 || hi - lo <= 1e-16 * hi) break;
    (v > 0.0 ? lo : hi) = mid;
  }
  return mid;
}

/// The alternating-substitution route to the equal-error threshold, kept as
/// a cross-check of the bisection. Iterates zeta <- tau*s2*ln(1 + exp(zeta/c)),
/// the contracting inverse of zeta = c*ln(exp(zeta/(tau*s2)) - 1).
inline double threshold_equal_error_iterative(int tau, double sigma2_tr, double g, int max_iter = 100000) {
  const double a = tau * sigma2_tr;
  const double c = sigma2_tr * (tau * g + sigma2_tr) / g;
  double z = a;
  for (int it = 0; it < max_iter; ++it) {
    const double x = z / c;
    // log1p(exp(x)) without overflow
    const double next = a * (x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
    if (std::abs(next - z) <= 1e-15 * std::abs(next)) return next;
    z = next;
  }
  throw NumericError("threshold_equal_error_iterative: no convergence");
}

}  // namespace xlmimo
