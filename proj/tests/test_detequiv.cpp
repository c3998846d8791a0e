#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "xlmimo/detequiv.hpp"

using namespace xlmimo;

TEST(SolveE, TrivialCases) {
  auto cfg = default_config();
  const auto none = solve_e_tdd(cfg, 20, 0, 0);
  for (double e : none.e) EXPECT_EQ(e, 0.0);
  auto dark = cfg;
  std::fill(dark.beta.begin(), dark.beta.end(), 0.0);
  dark.p_tr = 0.1;
  const auto d = solve_e_tdd(dark, 20, 16, 4);
  for (double e : d.e) EXPECT_EQ(e, 0.0);
  EXPECT_EQ(d.eta1, 0.0);
  EXPECT_THROW(solve_e_tdd(cfg, 20, -1, 0), ParameterError);
  EXPECT_THROW(solve_e_tdd(cfg, 20, 100, 100), ParameterError);
}

TEST(SolveE, ScalarQuadraticOracle) {
  auto cfg = config_with({{"K", "1"}});
  cfg.p_tr *= 1e14;  // sigma2/(g tau) -> 0
  const int I = 12;
  const auto d = solve_e_tdd(cfg, 10, I, 0);
  const double Mxi = cfg.M * cfg.xi;
  const double b = cfg.beta[0];
  const double B = Mxi + b - b * I;
  const double e = (-B + std::sqrt(B * B + 4.0 * Mxi * b * I)) / (2.0 * Mxi);
  EXPECT_NEAR(d.e[0] / e, 1.0, 1e-10);
}

TEST(SolveE, ConvergedResidualAndPositivity) {
  const auto cfg = default_config();
  const auto d = gamma_bar_tdd(cfg, 30, 14, 20);
  EXPECT_TRUE(d.status.converged);
  EXPECT_LE(d.status.residual, 1e-12);
  for (double e : d.e) EXPECT_GT(e, 0.0);
  for (double g : d.gamma_bar) EXPECT_GE(g, 0.0);
}

TEST(Correctors, ZeroOutcome) {
  const auto cfg = default_config();
  auto d = solve_e_tdd(cfg, 10, 0, 0);
  correctors_tdd(cfg, 10, d);
  EXPECT_EQ(d.jacobian.norm(), 0.0);
  EXPECT_EQ(d.e_prime.norm(), 0.0);
  EXPECT_EQ(d.e_prime_k.norm(), 0.0);
}

TEST(Correctors, SymmetricUsersAndSolveResidual) {
  const auto cfg = default_config();
  auto d = solve_e_tdd(cfg, 40, 16, 30);
  correctors_tdd(cfg, 40, d);
  for (int i = 1; i < cfg.K; ++i) EXPECT_NEAR(d.e_prime(i) / d.e_prime(0), 1.0, 1e-12);
  const double off = d.e_prime_k(1, 0);
  for (int i = 0; i < cfg.K; ++i)
    for (int k = 0; k < cfg.K; ++k)
      if (i != k) {
        EXPECT_NEAR(d.e_prime_k(i, k) / off, 1.0, 1e-12);
      }
  const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(cfg.K, cfg.K) - d.jacobian;
  Eigen::VectorXd v(cfg.K);
  const double s = estimation_noise_ratio(cfg, 40);
  const double t1 = 1.0 / (d.eta1 * (1 + s) / cfg.M + cfg.xi);
  const double t0 = 1.0 / (d.eta1 * s / cfg.M + cfg.xi);
  for (int i = 0; i < cfg.K; ++i) v(i) = cfg.beta[i] / cfg.M * (16 * (1 + s) * t1 * t1 + 30 * s * t0 * t0);
  EXPECT_LE((A * d.e_prime - v).norm(), 1e-12 * v.norm());
}

TEST(GammaTdd, NoCorrectAntennasMeansZero) {
  const auto d = gamma_bar_tdd(default_config(), 20, 0, 40);
  for (double g : d.gamma_bar) EXPECT_EQ(g, 0.0);
  for (double m : d.mu) EXPECT_EQ(m, 0.0);
}

TEST(GammaTdd, PermutationSymmetry) {
  const auto a = config_with({{"d", "300,400,500,600"}, {"p_dl", "1,2,1,0.5"}});
  const auto b = config_with({{"d", "300,600,500,400"}, {"p_dl", "1,0.5,1,2"}});
  const auto ga = gamma_bar_tdd(a, 25, 12, 10).gamma_bar;
  const auto gb = gamma_bar_tdd(b, 25, 12, 10).gamma_bar;
  // Users 2 and 4 swapped; user 1 keeps the same pilot gain reference.
  EXPECT_NEAR(ga[0] / gb[0], 1.0, 1e-10);
  EXPECT_NEAR(ga[1] / gb[3], 1.0, 1e-10);
  EXPECT_NEAR(ga[2] / gb[2], 1.0, 1e-10);
  EXPECT_NEAR(ga[3] / gb[1], 1.0, 1e-10);
}

TEST(GammaTdd, MonotoneInCorrectAntennas) {
  const auto cfg = default_config();
  std::vector<double> prev(static_cast<std::size_t>(cfg.K), 0.0);
  for (int I = 1; I <= cfg.L; I += 1) {
    if (I > 10) break;
    const auto g = gamma_bar_tdd(cfg, 30, I, 8).gamma_bar;
    for (int k = 0; k < cfg.K; ++k) EXPECT_GE(g[k], prev[k]);
    prev = g;
  }
}

TEST(GammaTdd, MonotoneInUplinkNoise) {
  std::vector<double> prev(4, std::numeric_limits<double>::infinity());
  for (int i = 0; i < 10; ++i) {
    const double dbm = -110.0 + 3.0 * i;
    const auto cfg = config_with({{"sigma2_dl_dbm", "-96"}, {"sigma2_tr_dbm", std::to_string(dbm)}});
    const auto g = gamma_bar_tdd(cfg, 30, 16, 8).gamma_bar;
    for (int k = 0; k < cfg.K; ++k) EXPECT_LE(g[k], prev[k]);
    prev = g;
  }
}

TEST(GammaTdd, ConjugateBeamformingLimits) {
  auto cfg = default_config();
  cfg.xi *= 1e6;
  const auto g = gamma_bar_tdd(cfg, 20, 12, 30).gamma_bar;
  const auto cb = gamma_cb_limit(cfg, 20, 12, 30);
  for (int k = 0; k < cfg.K; ++k) EXPECT_NEAR(g[k] / cb[k], 1.0, 1e-3);
  cfg.p_tr *= 1e8;
  const auto gp = gamma_bar_tdd(cfg, 20, cfg.L, 0).gamma_bar;
  const auto lim = gamma_perfect_limit(cfg);
  for (int k = 0; k < cfg.K; ++k) EXPECT_NEAR(gp[k] / lim[k], 1.0, 1e-3);
}

TEST(GammaFdd, ReducesToTddWhenErrorsMatch) {
  const auto cfg = default_config();  // p_dp = p_tr, sigma2_dl = sigma2_tr
  for (auto [I, J] : {std::pair{16, 0}, std::pair{9, 21}, std::pair{16, 112}}) {
    const int tau = 37;
    FddSettings s;
    s.forced_q2 = 0.0;
    s.tau_d = tau;
    const auto f = gamma_bar_fdd(cfg, I, J, s).gamma_bar;
    const auto t = gamma_bar_tdd(cfg, tau, I, J).gamma_bar;
    for (int k = 0; k < cfg.K; ++k) EXPECT_NEAR(f[k] / t[k], 1.0, 1e-10);
  }
}

TEST(GammaFdd, PerfectFeedbackLimit) {
  auto cfg = config_with({{"p_dp_dbm", "120"}, {"B", "100000"}});
  cfg.xi *= 1e6;
  const auto g = gamma_bar_fdd(cfg, cfg.L, 0).gamma_bar;
  const auto lim = gamma_perfect_limit(cfg);
  for (int k = 0; k < cfg.K; ++k) EXPECT_NEAR(g[k] / lim[k], 1.0, 1e-2);
}

TEST(GammaFdd, FalseDetectionsHurt) {
  const auto cfg = default_config();
  const auto clean = gamma_bar_fdd(cfg, cfg.L, 0).gamma_bar;
  const auto all = gamma_bar_fdd(cfg, cfg.L, cfg.M - cfg.L).gamma_bar;
  for (int k = 0; k < cfg.K; ++k) EXPECT_LT(all[k], clean[k]);
}

TEST(GammaFdd, EdgeCases) {
  const auto cfg = default_config();
  const auto z = gamma_bar_fdd(cfg, 0, 0);
  for (double g : z.gamma_bar) EXPECT_EQ(g, 0.0);
  FddSettings s;
  s.forced_q2 = 1.0;
  EXPECT_THROW(gamma_bar_fdd(cfg, 4, 4, s), ParameterError);
  const auto d = gamma_bar_fdd(cfg, 16, 20);
  EXPECT_TRUE(d.status.converged);
  EXPECT_LE(d.status.residual, 1e-12);
  EXPECT_NEAR(d.q2, quantization_q2(32, 36), 0.0);
  EXPECT_EQ(d.tau_d, 36);
}

TEST(GenericFixedPoint, ScalarOracle) {
  const int M = 50;
  const std::vector<std::vector<double>> T{std::vector<double>(M, 1.0)};
  const std::vector<double> Q(M, 1.0);
  const auto r = generic_trace_fixed_point(T, 1.0, Q, M);
  const double e = (-1.0 + std::sqrt(1.0 + 4.0 * M * M)) / (2.0 * M);
  EXPECT_NEAR(r.e[0], e, 1e-10);
  EXPECT_NEAR(r.trace, e, 1e-10);
}

TEST(GenericFixedPoint, ZeroCovariances) {
  const int M = 20;
  const std::vector<std::vector<double>> T(3, std::vector<double>(8, 0.0));
  std::vector<double> Q(8);
  for (int i = 0; i < 8; ++i) Q[i] = i + 1.0;
  const auto r = generic_trace_fixed_point(T, 2.5, Q, M);
  EXPECT_NEAR(r.trace, 36.0 / (M * 2.5), 1e-15);
  EXPECT_THROW(generic_trace_fixed_point(T, 0.0, Q, M), ParameterError);
}

TEST(GenericFixedPoint, MatchesClosedForms) {
  for (auto [tau, I, J] : {std::tuple{4, 16, 0}, std::tuple{30, 5, 60}, std::tuple{200, 16, 112}}) {
    const auto cfg = config_with({{"d", "250,400,480,550"}});
    const auto closed = gamma_bar_tdd(cfg, tau, I, J);
    const auto route = mu_via_generic(cfg, tau, I, J);
    EXPECT_NEAR(route.mu_bar / closed.mu_bar, 1.0, 1e-8);
    for (int k = 0; k < cfg.K; ++k) {
      EXPECT_NEAR(route.mu[k] / closed.mu[k], 1.0, 1e-8);
      EXPECT_NEAR(route.e[k] / closed.e[k], 1.0, 1e-8);
    }
  }
}
