#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "xlmimo/precode_mc.hpp"
#include "xlmimo/vr_detect.hpp"

using namespace xlmimo;

TEST(ErrorProbs, FalseDetection) {
  DetectorParams p{0.0, 1, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(p_false(p), 1.0);
  p.zeta0 = 1.0;
  EXPECT_NEAR(p_false(p), std::exp(-1.0), 1e-15);
  p.zeta0 = 2.0 * std::log(2.0);
  EXPECT_NEAR(p_false(p), 0.25, 1e-15);
}

TEST(ErrorProbs, MissedDetection) {
  DetectorParams p{0.0, 3, 2.0, 2.0 / 3.0};  // tau g == sigma2
  EXPECT_DOUBLE_EQ(p_miss(p), 0.0);
  p.zeta0 = 3 * 2.0;
  EXPECT_NEAR(p_miss(p), 1.0 - std::exp(-0.5), 1e-15);
}

TEST(ErrorProbs, Monotone) {
  DetectorParams p{0.0, 4, 1.0, 0.3};
  double prev_f = 2.0;
  double prev_m = -1.0;
  for (int i = 0; i < 50; ++i) {
    p.zeta0 = 0.2 * i;
    const auto e = error_probs(p);
    EXPECT_LT(e.p10, prev_f);
    EXPECT_GT(e.p01, prev_m);
    EXPECT_NEAR(e.p10 + e.p01, 1.0 + std::exp(-p.zeta0 / noise_energy(p)) - std::exp(-p.zeta0 / signal_energy(p)),
                1e-15);
    prev_f = e.p10;
    prev_m = e.p01;
  }
}

TEST(ErrorProbs, MatchesMonteCarloAtDefaults) {
  const auto cfg = default_config();
  const int n = 10000;
  const auto p = error_probs(detector_params(cfg, 1e-12, 4));
  const auto f = mc_error_probs(cfg, 1e-12, 4, n, 7);
  EXPECT_LE(std::abs(f.p10 - p.p10), 3.0 * std::sqrt(p.p10 * (1 - p.p10) / n));
  EXPECT_LE(std::abs(f.p01 - p.p01), 3.0 * std::sqrt(p.p01 * (1 - p.p01) / n));
}

TEST(Detect, Basics) {
  std::vector<std::complex<double>> zero(8, 0.0);
  EXPECT_TRUE(detect(zero, 0.1).empty());
  std::vector<std::complex<double>> col{{1.0, 0.0}, {0.0, 0.0}, {0.0, 2.0}};
  EXPECT_EQ(detect(col, 0.0), (std::vector<int>{0, 2}));
  // Noiseless energy tau^2 g on the true VR, threshold at half of it.
  const double e = 4.0;
  std::vector<std::complex<double>> vr(10, 0.0);
  for (int m : {3, 4, 5}) vr[m] = std::sqrt(e);
  EXPECT_EQ(detect(vr, e / 2), (std::vector<int>{3, 4, 5}));
}

TEST(OutcomeDistribution, PerfectDetection) {
  const auto d = outcome_distribution({0.0, 0.0}, 16, 128);
  EXPECT_DOUBLE_EQ(d.at(16, 0), 1.0);
  EXPECT_DOUBLE_EQ(d.total(), 1.0);
}

TEST(OutcomeDistribution, SmallGrid) {
  const auto d = outcome_distribution({0.5, 0.5}, 2, 4);
  EXPECT_NEAR(d.at(1, 1), 0.25, 1e-15);
  EXPECT_NEAR(d.total(), 1.0, 1e-15);
  EXPECT_THROW(d.at(3, 0), ParameterError);
}

TEST(OutcomeDistribution, SumsToOne) {
  for (double p10 : {1e-6, 0.1, 0.5, 0.97})
    for (double p01 : {0.0, 0.2, 0.8, 1.0}) {
      const auto d = outcome_distribution({p10, p01}, 16, 128);
      EXPECT_NEAR(d.total(), 1.0, 1e-12);
    }
}

TEST(Thresholds, MinSumClosedForm) {
  EXPECT_NEAR(threshold_min_sum(1, 1.0, 1.0), 2.0 * std::log(2.0), 1e-15);
  EXPECT_THROW(threshold_min_sum(0, 1.0, 1.0), ParameterError);
  double prev = 0.0;
  for (double g = 0.1; g < 1e6; g *= 3.0) {
    const double z = threshold_min_sum(2, 1.0, g);
    EXPECT_GT(z, prev);
    prev = z;
  }
}

TEST(Thresholds, MinSumIsGridArgmin) {
  const double s2 = 1.0;
  const double g = 0.7;
  const int tau = 3;
  DetectorParams p{0.0, tau, s2, g};
  double best = 0.0;
  double best_v = 3.0;
  for (int i = 1; i <= 200000; ++i) {
    p.zeta0 = 20.0 * i / 200000;
    const double v = p_false(p) + p_miss(p);
    if (v < best_v) {
      best_v = v;
      best = p.zeta0;
    }
  }
  EXPECT_NEAR(threshold_min_sum(tau, s2, g) / best, 1.0, 1e-3);
}

TEST(Thresholds, EqualErrorUnitCase) {
  const double z = threshold_equal_error(1, 1.0, 1.0);
  EXPECT_NEAR(z, 2.0 * std::log((1.0 + std::sqrt(5.0)) / 2.0), 1e-12);
  DetectorParams p{z, 1, 1.0, 1.0};
  EXPECT_LE(std::abs(p_false(p) - p_miss(p)), 1e-10);
}

TEST(Thresholds, EqualErrorRoutesAgree) {
  const auto cfg = default_config();
  for (int tau : {1, 4, 50, 200}) {
    const double a = threshold_equal_error(tau, cfg.sigma2_tr, cfg.g());
    const double b = threshold_equal_error_iterative(tau, cfg.sigma2_tr, cfg.g());
    EXPECT_NEAR(a / b, 1.0, 1e-9);
    const double c = cfg.sigma2_tr * (tau * cfg.g() + cfg.sigma2_tr) / cfg.g();
    EXPECT_NEAR(c * std::log(std::expm1(a / (tau * cfg.sigma2_tr))) / a, 1.0, 1e-9);
  }
}
