#include <gtest/gtest.h>

#include <cmath>

#include "xlmimo/energy_ee.hpp"

using namespace xlmimo;

TEST(CircuitPower, DefaultValue) {
  const auto cfg = default_config();
  // 128 * 1 / 0.35 + 2 * 0.05 + 20 * 0.0482 + 4 * 0.0625
  EXPECT_NEAR(p_cir(20, cfg), 128.0 / 0.35 + 0.1 + 20 * 0.0482 + 0.25, 1e-12);
  EXPECT_NEAR(p_cir(cfg.M, cfg) - p_cir(0, cfg), cfg.M * cfg.circuit.p_ct, 1e-10);
  EXPECT_THROW(p_cir(-1, cfg), ParameterError);
  EXPECT_THROW(p_cir(cfg.M + 1, cfg), ParameterError);
}

TEST(EnergyTdd, NoDataPhaseMeansZero) {
  const auto cfg = default_config();
  EXPECT_EQ(ee_tdd_bar(1e-12, cfg.T, cfg).ee, 0.0);
}

TEST(EnergyTdd, RejectsBadArguments) {
  const auto cfg = default_config();
  EXPECT_THROW(ee_tdd_bar(1e-12, cfg.K - 1, cfg), ParameterError);
  EXPECT_THROW(ee_tdd_bar(1e-12, cfg.T + 1, cfg), ParameterError);
  EXPECT_THROW(ee_tdd_bar(-1.0, 20, cfg), ParameterError);
}

TEST(EnergyTdd, PointMassMatchesClosedForm) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const int tau = 30;
  const auto dist = OutcomeDistribution::point_mass(cfg.L, cfg.M, 12, 7);
  const double rate = sum_rate(gamma_bar_tdd(cfg, tau, 12, 7));
  const double expect = cfg.bandwidth * (cfg.T - tau) / cfg.T * rate / p_cir(19, cfg);
  EXPECT_NEAR(model.ee_static_vr(dist, tau).ee / expect, 1.0, 1e-14);
  EXPECT_NEAR(model.rate_tdd(tau, 12, 7), rate, 0.0);
}

TEST(EnergyTdd, TinyThresholdAdmitsEverything) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const auto all = OutcomeDistribution::point_mass(cfg.L, cfg.M, cfg.L, cfg.M - cfg.L);
  const double a = model.ee_tdd_bar(1e-30, 40).ee;
  const double b = model.ee_static_vr(all, 40).ee;
  EXPECT_NEAR(a / b, 1.0, 1e-9);
}

TEST(EnergyTdd, LinearInBandwidth) {
  const auto a = config_with({{"W", "100e6"}});
  const auto b = config_with({{"W", "200e6"}});
  const double zeta = threshold_min_sum(20, a.sigma2_tr, a.g());
  EXPECT_EQ(ee_tdd_bar(zeta, 20, b).ee, 2.0 * ee_tdd_bar(zeta, 20, a).ee);
}

TEST(EnergyTdd, MinSumBeatsFixedThreshold) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  for (int tau : {10, 50, 100}) {
    const double ms = threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
    EXPECT_GT(model.ee_tdd_bar(ms, tau).ee, model.ee_tdd_bar(1e-9, tau).ee) << tau;
  }
}

TEST(EnergyTdd, MassAndBreakdownInvariants) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const int tau = 20;
  const double zeta = threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
  const auto r = model.ee_tdd_bar(zeta, tau);
  EXPECT_GE(r.retained_mass, 1.0 - 1e-9);
  EXPECT_LE(r.retained_mass, 1.0 + 1e-12);
  EXPECT_FALSE(r.breakdown.empty());
  double mass = 0.0;
  double ee = 0.0;
  for (std::size_t i = 0; i < r.breakdown.size(); ++i) {
    const auto& t = r.breakdown[i];
    if (i > 0) {
      EXPECT_LE(t.probability, r.breakdown[i - 1].probability);
    }
    EXPECT_GE(t.rate, 0.0);
    mass += t.probability;
    ee += cfg.bandwidth * (cfg.T - tau) / cfg.T * t.probability * t.rate / t.p_cir;
  }
  EXPECT_NEAR(mass, r.retained_mass, 1e-12);
  EXPECT_NEAR(ee / r.ee, 1.0, 1e-12);

  EEOptions full;
  full.exhaustive = true;
  EnergyModel exhaustive(cfg, full);
  const auto e = exhaustive.ee_tdd_bar(zeta, tau);
  EXPECT_GE(e.breakdown.size(), r.breakdown.size());
  EXPECT_LE(std::abs(e.ee - r.ee), r.truncation_bound + 1e-12 * r.ee);
}

TEST(EnergyTdd, CacheGivesIdenticalResults) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const double zeta = threshold_min_sum(40, cfg.sigma2_tr, cfg.g());
  const double first = model.ee_tdd_bar(zeta, 40).ee;
  EXPECT_EQ(model.ee_tdd_bar(zeta, 40).ee, first);
  EXPECT_EQ(ee_tdd_bar(zeta, 40, cfg).ee, first);
}

TEST(EnergyFdd, NoDataPhaseClampsToZero) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  // Every antenna is admitted, so tau_d = M and tau + tau_d > T.
  EXPECT_EQ(model.ee_fdd_bar(1e-30, 100).ee, 0.0);
  EXPECT_GT(model.ee_fdd_bar(1e-30, cfg.T - cfg.M - 1).ee, 0.0);
}

TEST(EnergyFdd, PerfectFeedbackBeatsQuantized) {
  const auto cfg = default_config();
  EEOptions exact;
  exact.fdd.forced_q2 = 0.0;
  EnergyModel ideal(cfg, exact);
  EnergyModel quant(cfg);
  for (int tau : {10, 40}) {
    const double zeta = threshold_min_sum(tau, cfg.sigma2_tr, cfg.g());
    EXPECT_GE(ideal.ee_fdd_bar(zeta, tau).ee, quant.ee_fdd_bar(zeta, tau).ee);
  }
}

TEST(EnergyFdd, PerfectVrUsesDownlinkPilotsOfLengthL) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const int tau = 25;
  const double rate = sum_rate(gamma_bar_fdd(cfg, cfg.L, 0));
  const double expect = cfg.bandwidth * (cfg.T - tau - cfg.L) / cfg.T * rate / p_cir(cfg.L, cfg);
  EXPECT_NEAR(model.ee_perfect_vr(Duplex::fdd, tau).ee / expect, 1.0, 1e-14);
}

TEST(EnergyFdd, RequiresFddParameters) {
  auto cfg = default_config();
  cfg.fdd.reset();
  EXPECT_THROW(ee_fdd_bar(1e-12, 20, cfg), ParameterError);
}

TEST(EnergyStatic, MixtureOfTwoOutcomes) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  OutcomeDistribution mix(cfg.L, cfg.M);
  mix.at(cfg.L, 0) = 0.5;
  mix.at(cfg.L / 2, 10) = 0.5;
  const int tau = 60;
  const double a = model.ee_static_vr(OutcomeDistribution::point_mass(cfg.L, cfg.M, cfg.L, 0), tau).ee;
  const double b = model.ee_static_vr(OutcomeDistribution::point_mass(cfg.L, cfg.M, cfg.L / 2, 10), tau).ee;
  EXPECT_NEAR(model.ee_static_vr(mix, tau).ee, 0.5 * (a + b), 1e-12 * (a + b));
  EXPECT_THROW(model.ee_static_vr(OutcomeDistribution(cfg.L + 1, cfg.M), tau), ParameterError);
}
