#pragma once

// Channel synthesis on a binary VR mask, the pilot-correlated uplink
// observation, LS estimates restricted to the detected VR, and the FDD
// downlink estimate with quantised feedback.
//
// Pilot matrices are never formed: with orthogonal pilots the correlated
// observation is entry-wise Gaussian, so it is drawn directly.

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "xlmimo/errors.hpp"
#include "xlmimo/random.hpp"
#include "xlmimo/scenario.hpp"

namespace xlmimo {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

struct ChannelRealization {
  CMatrix h_full;              // M x K, zero outside vr_true
  std::vector<int> vr_true;    // |A| = L
  CMatrix y_corr;              // M x K correlated training observation
  std::vector<int> vr_hat;     // detected VR
  CMatrix h_hat;               // |vr_hat| x K estimates
  CMatrix h_true_on_hat;       // true channel rows on vr_hat
};

/// h_full(m,k) ~ CN(0, beta_k / M) for m in vr_true, exactly 0 elsewhere.
inline CMatrix draw_channel(const SystemConfig& cfg, std::span<const int> vr_true, Rng& rng) {
  CMatrix h = CMatrix::Zero(cfg.M, cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    const double var = cfg.beta[static_cast<std::size_t>(k)] / cfg.M;
    for (int m : vr_true) h(m, k) = complex_normal(rng, var);
  }
  return h;
}

/// y(m,k) = tau*sqrt(M*p_tr,k)*h(m,k) + n, n ~ CN(0, tau*sigma2_tr).
inline CMatrix correlated_observation(const CMatrix& h_full, const SystemConfig& cfg, int tau, Rng& rng,
                                      double noise_scale = 1.0) {
  CMatrix y(h_full.rows(), h_full.cols());
  const double noise_var = tau * cfg.sigma2_tr * noise_scale;
  for (Eigen::Index k = 0; k < h_full.cols(); ++k) {
    const double gain = tau * std::sqrt(static_cast<double>(cfg.M) * cfg.pilot_power(static_cast<int>(k)));
    for (Eigen::Index m = 0; m < h_full.rows(); ++m) {
      y(m, k) = gain * h_full(m, k);
      if (noise_var > 0.0) y(m, k) += complex_normal(rng, noise_var);
    }
  }
  return y;
}

/// Rows `rows` of `x`, in the given order.
inline CMatrix restrict_rows(const CMatrix& x, std::span<const int> rows) {
  CMatrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(rows[r]);
  return out;
}

/// LS estimate on the detected VR; nullopt when nothing was detected (the
/// caller counts such a trial as zero rate).
inline std::optional<CMatrix> ls_estimate_tdd(const CMatrix& y_corr, std::span<const int> vr_hat,
                                              const SystemConfig& cfg, int tau) {
  if (vr_hat.empty()) return std::nullopt;
  CMatrix h = restrict_rows(y_corr, vr_hat);
  for (Eigen::Index k = 0; k < h.cols(); ++k)
    h.col(k) /= tau * std::sqrt(static_cast<double>(cfg.M) * cfg.pilot_power(static_cast<int>(k)));
  return h;
}

/// Variance of one LS error entry for user k: sigma2_tr / (p_tr,k * M * tau).
inline double ls_error_variance(const SystemConfig& cfg, int tau, int k) {
  return cfg.sigma2_tr / (cfg.pilot_power(k) * cfg.M * tau);
}

/// Squared feedback accuracy for B bits over n antennas; n == 1 feeds back a
/// scalar, taken as exact.
inline double quantization_q2(int bits, int n) {
  if (n < 1) throw ParameterError("quantization_q2: needs at least one detected antenna");
  if (n == 1) return 0.0;
  return std::pow(2.0, -static_cast<double>(bits) / (n - 1));
}

struct FeedbackModel {
  double q2 = 0.0;
  int bits = 32;
  int tau_d = 1;
  double p_dp = 0.1;

  double q() const { return std::sqrt(q2); }
};

/// Feedback model for n detected antennas with tau_d = n unless overridden.
inline FeedbackModel feedback_model(const SystemConfig& cfg, int n, std::optional<double> forced_q2 = {},
                                    std::optional<int> tau_d = {}) {
  if (!cfg.fdd) throw ParameterError("feedback_model: config has no FDD parameters");
  FeedbackModel f;
  f.bits = cfg.fdd->feedback_bits;
  f.p_dp = cfg.fdd->p_dp;
  f.tau_d = tau_d.value_or(n);
  if (f.tau_d < 1) throw ParameterError("feedback_model: tau_d must be >= 1");
  f.q2 = forced_q2 ? *forced_q2 : quantization_q2(f.bits, n);
  if (f.q2 < 0.0 || f.q2 > 1.0) throw ParameterError("feedback_model: q^2 must lie in [0, 1]");
  return f;
}

/// h~ = sqrt(1-q^2) (h + e_LS) + q e_q with e_LS ~ CN(0, s2_dl/(p_dp M tau_d))
/// and e_q ~ CN(0, beta_k / M).
inline CMatrix fdd_estimate_and_feedback(const CMatrix& h_true_on_hat, const FeedbackModel& model,
                                         const SystemConfig& cfg, Rng& rng, double noise_scale = 1.0) {
  const double ls_var = noise_scale * cfg.sigma2_dl / (model.p_dp * cfg.M * model.tau_d);
  const double keep = std::sqrt(1.0 - model.q2);
  const double q = model.q();
  CMatrix out(h_true_on_hat.rows(), h_true_on_hat.cols());
  for (Eigen::Index k = 0; k < out.cols(); ++k) {
    const double q_var = cfg.beta[static_cast<std::size_t>(k)] / cfg.M;
    for (Eigen::Index m = 0; m < out.rows(); ++m) {
      std::complex<double> est = h_true_on_hat(m, k);
      if (ls_var > 0.0) est += complex_normal(rng, ls_var);
      std::complex<double> v = keep * est;
      if (q > 0.0) v += q * complex_normal(rng, q_var);
      out(m, k) = v;
    }
  }
  return out;
}

}  // namespace xlmimo
