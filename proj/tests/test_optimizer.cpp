#include <gtest/gtest.h>

#include <cmath>

#include "xlmimo/optimizer.hpp"

using namespace xlmimo;

namespace {

OptimizerOptions with_mode(ThresholdMode m) {
  OptimizerOptions o;
  o.threshold = m;
  return o;
}

}  // namespace

TEST(OptThreshold, HeuristicModesReturnClosedForms) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  EXPECT_EQ(opt_threshold(model, 20, with_mode(ThresholdMode::min_sum)),
            threshold_min_sum(20, cfg.sigma2_tr, cfg.g()));
  EXPECT_EQ(opt_threshold(model, 20, with_mode(ThresholdMode::equal_error)),
            threshold_equal_error(20, cfg.sigma2_tr, cfg.g()));
  auto fixed = with_mode(ThresholdMode::fixed);
  fixed.fixed_zeta0 = 3e-10;
  EXPECT_EQ(opt_threshold(model, 20, fixed), 3e-10);
  EXPECT_THROW(opt_threshold(model, cfg.K - 1, fixed), ParameterError);
}

TEST(OptThreshold, ExactBeatsHeuristics) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  for (int tau : {cfg.K, 20, 80}) {
    const double z = opt_threshold(model, tau, {});
    const double best = model.ee_tdd_bar(z, tau).ee;
    EXPECT_GE(best, model.ee_tdd_bar(threshold_min_sum(tau, cfg.sigma2_tr, cfg.g()), tau).ee);
    EXPECT_GE(best, model.ee_tdd_bar(threshold_equal_error(tau, cfg.sigma2_tr, cfg.g()), tau).ee);
    EXPECT_GE(best, model.ee_tdd_bar(1e-9, tau).ee);
  }
}

TEST(OptThreshold, StableUnderGridRefinement) {
  const auto cfg = config_with({{"P_T_dbm", "20"}});
  EnergyModel model(cfg);
  OptimizerOptions fine;
  fine.grid_points = 120;
  const double a = model.ee_tdd_bar(opt_threshold(model, 30, {}), 30).ee;
  const double b = model.ee_tdd_bar(opt_threshold(model, 30, fine), 30).ee;
  EXPECT_NEAR(a / b, 1.0, 1e-6);
}

TEST(OptTau, IsLocalAndGlobalArgmax) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const double zeta = threshold_min_sum(cfg.K, cfg.sigma2_tr, cfg.g());
  const int tau = opt_tau(model, zeta, Duplex::tdd);
  ASSERT_GT(tau, cfg.K);
  ASSERT_LT(tau, cfg.T);
  const double best = model.ee_tdd_bar(zeta, tau).ee;
  for (int t = cfg.K; t <= cfg.T; t += 7) EXPECT_GE(best, model.ee_tdd_bar(zeta, t).ee) << t;
  EXPECT_GT(best, model.ee_tdd_bar(zeta, tau - 1).ee);
  EXPECT_GE(best, model.ee_tdd_bar(zeta, tau + 1).ee);
  EXPECT_THROW(opt_tau(model, -1.0, Duplex::tdd), ParameterError);
}

TEST(OptTau, FddStopsBeforeT) {
  const auto cfg = config_with({{"T", "30"}, {"L", "4"}, {"M", "16"}});
  EnergyModel model(cfg);
  const int tau = opt_tau(model, 1e-30, Duplex::fdd);
  EXPECT_GE(tau, cfg.K);
  EXPECT_LE(tau, cfg.T - 1);
}

TEST(Alternate, DegenerateBlockTerminatesImmediately) {
  const auto cfg = config_with({{"T", "4"}});
  const auto r = alternate_optimize(cfg);
  EXPECT_EQ(r.tau, cfg.K);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.ee, 0.0);
}

TEST(Alternate, ReportsConsistentBestPoint) {
  const auto cfg = config_with({{"P_T_dbm", "20"}});
  EnergyModel model(cfg);
  const auto r = alternate_optimize(model, {});
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 20);
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(r.iterations));
  double best = 0.0;
  for (const auto& p : r.trace) {
    EXPECT_TRUE(std::isfinite(p.ee));
    EXPECT_GE(p.tau, cfg.K);
    EXPECT_LE(p.tau, cfg.T);
    best = std::max(best, p.ee);
  }
  EXPECT_EQ(r.ee, best);
  EXPECT_EQ(r.trace.back().tau, r.trace.size() > 1 ? r.trace[r.trace.size() - 2].tau : r.trace.back().tau);
  EXPECT_EQ(ee_tdd_bar(r.zeta0, r.tau, cfg).ee, r.ee);

  const double zk = threshold_min_sum(cfg.K, cfg.sigma2_tr, cfg.g());
  EXPECT_GE(r.ee, model.ee_tdd_bar(zk, cfg.K).ee);
  EXPECT_GE(r.ee, model.ee_tdd_bar(zk, opt_tau(model, zk, Duplex::tdd)).ee);
}

TEST(Alternate, DeterministicAcrossThreadCounts) {
  const auto cfg = default_config();
  const unsigned saved = worker_override();
  set_worker_count(1);
  const auto a = alternate_optimize(cfg, with_mode(ThresholdMode::min_sum));
  set_worker_count(4);
  const auto b = alternate_optimize(cfg, with_mode(ThresholdMode::min_sum));
  set_worker_count(saved);
  EXPECT_EQ(a.ee, b.ee);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_EQ(a.zeta0, b.zeta0);
  EXPECT_EQ(a.iterations, b.iterations);
}

TEST(PerfectVr, BeatsDetectedVr) {
  const auto cfg = default_config();
  EnergyModel model(cfg);
  const auto p = optimize_perfect_vr(model, Duplex::tdd);
  const auto r = alternate_optimize(model, {});
  EXPECT_GT(p.ee, r.ee);
  EXPECT_EQ(p.ee, model.ee_perfect_vr(Duplex::tdd, p.tau).ee);
}

TEST(TauD, SinglePointAndInfeasible) {
  const auto cfg = default_config();
  const auto r = opt_tau_d_perfect_vr(cfg, cfg.T - cfg.L);
  EXPECT_EQ(r.tau_d, cfg.L);
  EXPECT_EQ(r.scan.size(), 1u);
  EXPECT_EQ(r.ee, 0.0);
  EXPECT_THROW(opt_tau_d_perfect_vr(cfg, cfg.T - cfg.L + 1), ParameterError);
  auto tdd_only = cfg;
  tdd_only.fdd.reset();
  EXPECT_THROW(opt_tau_d_perfect_vr(tdd_only, 20), ParameterError);
}

TEST(TauD, StrongPilotsNeedNoExtraLength) {
  const auto cfg = config_with({{"p_dp_dbm", "80"}});
  EXPECT_EQ(opt_tau_d_perfect_vr(cfg, 20).tau_d, cfg.L);
}

TEST(TauD, ScanArgmax) {
  const auto cfg = config_with({{"p_dp_dbm", "-10"}});
  const auto r = opt_tau_d_perfect_vr(cfg, 20);
  ASSERT_EQ(r.scan.size(), static_cast<std::size_t>(cfg.T - 20 - cfg.L + 1));
  for (double v : r.scan) EXPECT_LE(v, r.ee);
  EXPECT_EQ(r.scan[static_cast<std::size_t>(r.tau_d - cfg.L)], r.ee);
  EXPECT_EQ(r.scan.back(), 0.0);
}
