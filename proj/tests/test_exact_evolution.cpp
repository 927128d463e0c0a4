#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "decoherence/analytic_n1.hpp"
#include "decoherence/exact_evolution.hpp"
#include "test_support.hpp"

using namespace decoherence;

namespace {

ModelParams n1(double w1, double lambda) { return ModelParams::uniform_coupling(1.0, {w1}, lambda); }

// Flow matrix written out independently: z' = A z for z = (x, p_x, q_n, p_n).
Eigen::MatrixXd reference_flow(const ModelParams& p) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  const Eigen::MatrixXd w = p.frequency_matrix();
  for (Eigen::Index i = 0; i < d / 2; ++i) {
    a(2 * i, 2 * i + 1) = 1.0;
    for (Eigen::Index j = 0; j < d / 2; ++j) a(2 * i + 1, 2 * j) = -w(i, j);
  }
  return a;
}

double max_rel_drift(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x - v.front()) / std::abs(v.front()));
  return m;
}

}  // namespace

TEST(ModelParams, StabilityCheck) {
  EXPECT_NO_THROW(n1(2.0, 1.99));
  EXPECT_THROW(n1(2.0, 2.01), InvertedOscillator);
  // Many weak couplings can add up to an inverted mode.
  EXPECT_THROW(ModelParams::uniform_coupling(1.0, std::vector<double>(10, 1.0), 0.4), InvertedOscillator);
  EXPECT_THROW(ModelParams::uniform_coupling(1.0, {-1.0}, 0.1), InvalidParameters);
  ModelParams bad;
  bad.omegas = {1.0, 2.0};
  bad.lambdas = {0.1};
  EXPECT_THROW(bad.validate(), DimensionMismatch);
}

TEST(ExactRhs, FreeThermalStateHasNoGrowth) {
  const ModelParams p = ModelParams::uniform_coupling(1.0, {1.5, 2.5}, 0.0);
  const CorrelatorState s = pure_thermal_ic(p, 0.7);
  const Eigen::MatrixXd d = exact_rhs(p, s);
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExactRhs, MomentumCrossTermStartsFlat) {
  const ModelParams p = n1(2.0, 0.5);
  const Eigen::MatrixXd d = exact_rhs(p, pure_thermal_ic(p, 2000.0));
  EXPECT_NEAR(d(index::px, index::pq(0)), 0.0, 1e-15);
  // The x-q correlation is what starts to build up first.
  EXPECT_NEAR(d(index::px, index::q(0)), -0.5 * 0.25, 1e-15);  // -lambda <q^2>
}

TEST(ExactRhs, MatchesMatrixFormOnRandomStates) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const ModelParams p = n1(1.0 + 0.1 * trial, 0.3);
    const CorrelatorState s{testing_support::random_covariance(rng, 2), 0.0};
    const Eigen::MatrixXd a = reference_flow(p);
    const Eigen::MatrixXd ref = a * s.cov + s.cov * a.transpose();
    EXPECT_LT(testing_support::max_abs_diff(exact_rhs(p, s), ref), 1e-13);
    EXPECT_LT(testing_support::max_abs_diff(exact_rhs_dense(p, s), ref), 1e-13);
    EXPECT_LT(testing_support::max_abs_diff(exact_rhs_families(p, s), ref), 1e-13);
  }
}

TEST(ExactRhs, EquationFamiliesMatchMatrixFormManyModes) {
  std::mt19937_64 rng(22);
  ModelParams p;
  p.omega0 = 1.1;
  p.omegas = {0.9, 1.3, 2.0, 2.7};
  p.lambdas = {0.1, -0.2, 0.3, 0.15};
  p.validate();
  const CorrelatorState s{testing_support::random_covariance(rng, 5), 0.0};
  const Eigen::MatrixXd a = reference_flow(p);
  const Eigen::MatrixXd ref = a * s.cov + s.cov * a.transpose();
  EXPECT_LT(testing_support::max_abs_diff(exact_rhs_families(p, s), ref), 1e-12);
  EXPECT_LT(testing_support::max_abs_diff(exact_rhs(p, s), ref), 1e-12);
  EXPECT_LT(testing_support::max_abs_diff(flow_matrix(p), a), 0.0 + 1e-300);
}

TEST(ExactRhs, DimensionMismatch) {
  const ModelParams p = n1(2.0, 0.5);
  EXPECT_THROW(exact_rhs(p, CorrelatorState{Eigen::MatrixXd::Identity(6, 6), 0.0}), DimensionMismatch);
}

TEST(Evolve, FreeOscillatorReturnsAfterOnePeriod) {
  const ModelParams p = ModelParams::uniform_coupling(1.3, {2.0}, 0.0);
  std::mt19937_64 rng(4);
  const CorrelatorState s0{testing_support::random_covariance(rng, 2), 0.0};
  const double period = 2.0 * std::numbers::pi / p.omega0;
  const auto traj = evolve(p, s0, period, 2);
  const Eigen::MatrixXd& c = traj.back().cov;
  EXPECT_NEAR(c(0, 0), s0.cov(0, 0), 1e-8);
  EXPECT_NEAR(c(1, 1), s0.cov(1, 1), 1e-8);
  EXPECT_NEAR(c(0, 1), s0.cov(0, 1), 1e-8);
}

TEST(Evolve, MatchesAnalyticSolutionFig1) {
  const ModelParams p = n1(2.0, 0.5);
  const double beta = 2000.0;
  const auto times = ode::linspace(0.0, 50.0, 200);
  const auto traj = evolve(p, pure_thermal_ic(p, beta), default_integrator_opts(p, times));
  const analytic::AnalyticSolution sol(1.0, 2.0, 0.5, analytic::pure_thermal_ics(1.0, 2.0, beta));
  ASSERT_EQ(traj.size(), times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_NEAR(subsystem_delta(traj[i], 0).delta, sol.system_delta(times[i]).delta, 1e-6) << times[i];
}

TEST(Evolve, TimeTranslationInvariantStateStaysPure) {
  const ModelParams p = n1(2.0, 0.25);
  const CorrelatorState s0 = analytic::state_from_ics(analytic::time_translation_invariant_ic(1.0, 2.0, 0.25));
  const auto traj = evolve(p, s0, 100.0, 2001);
  for (const auto& s : traj) EXPECT_NEAR(subsystem_delta(s, 0).delta, 1.0, 1e-8) << s.time;
}

TEST(PureThermalIc, Examples) {
  const ModelParams p = n1(2.0, 0.5);
  const CorrelatorState cold = pure_thermal_ic(p, 2000.0);
  EXPECT_EQ(cold.cov(2, 2), 0.25);
  EXPECT_EQ(subsystem_delta(cold, 1).delta, 1.0);

  const CorrelatorState hot = pure_thermal_ic(p, 0.2);
  EXPECT_NEAR(hot.cov(2, 2), 1.0 / std::tanh(0.2) / 4.0, 1e-15);
  EXPECT_NEAR(hot.cov(2, 2), 1.266622, 1e-6);
  EXPECT_NEAR(subsystem_delta(hot, 0).delta, 1.0, 1e-15);
  EXPECT_NEAR(subsystem_delta(hot, 1).delta, 1.0 / std::tanh(0.2), 1e-13);
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 2; j < 4; ++j) EXPECT_EQ(hot.cov(i, j), 0.0);
}

TEST(Energy, Examples) {
  const ModelParams p = n1(2.0, 0.5);
  EXPECT_NEAR(energy(p, pure_thermal_ic(p, 0.2)), 0.5 + 0.5 * (1.0 / std::tanh(0.2)) * 2.0, 1e-13);
  EXPECT_NEAR(energy(p, pure_thermal_ic(p, 0.2)), 5.566490, 1e-6);
  const ModelParams free = ModelParams::uniform_coupling(0.7, {1.1, 2.3}, 0.0);
  EXPECT_NEAR(energy(free, pure_thermal_ic(free, std::numeric_limits<double>::infinity())),
              0.5 * (0.7 + 1.1 + 2.3), 1e-15);
}

TEST(SubsystemDelta, EnvironmentMatchesAnalyticFig4) {
  const ModelParams p = n1(2.0, 0.5);
  const double beta = 0.2;
  const auto traj = evolve(p, pure_thermal_ic(p, beta), 5.0, 2);
  const analytic::AnalyticSolution sol(1.0, 2.0, 0.5, analytic::pure_thermal_ics(1.0, 2.0, beta));
  EXPECT_NEAR(subsystem_delta(traj.back(), 1).delta, sol.environment_delta(5.0).delta, 1e-6);
}

TEST(SymplecticEigenvalues, KnownSpectra) {
  const ModelParams p = ModelParams::uniform_coupling(1.0, {0.5, 2.0}, 0.0);
  const auto nu = symplectic_eigenvalues(pure_thermal_ic(p, 1.0).cov);
  std::vector<double> ref{0.5, 0.5 / std::tanh(0.25), 0.5 / std::tanh(1.0)};
  std::sort(ref.begin(), ref.end());
  ASSERT_EQ(nu.size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(nu[k], ref[k], 1e-12);

  std::mt19937_64 rng(8);
  Eigen::VectorXd d(6);
  d << 0.7, 0.7, 0.5, 0.5, 1.9, 1.9;
  const Eigen::MatrixXd s = testing_support::random_symplectic(rng, 3, 0.5);
  const auto nu2 = symplectic_eigenvalues(s * d.asDiagonal() * s.transpose());
  EXPECT_NEAR(nu2[0], 0.5, 1e-10);
  EXPECT_NEAR(nu2[1], 0.7, 1e-10);
  EXPECT_NEAR(nu2[2], 1.9, 1e-10);
}

TEST(IsPhysical, RejectsUncertaintyViolation) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Identity(4, 4) * 0.4;
  EXPECT_FALSE(is_physical(c));
  EXPECT_TRUE(is_physical(Eigen::MatrixXd::Identity(4, 4) * 0.5));
}

TEST(ExactEvolutionProperty, ConservationManyModes) {
  ModelParams p = ModelParams::uniform_coupling(1.0, {0.8, 0.95, 1.05, 1.4, 2.2}, 0.08);
  std::mt19937_64 rng(31);
  const CorrelatorState s0 = pure_thermal_ic(p, 1.0);
  const auto times = ode::linspace(0.0, 200.0, 401);
  std::vector<double> e, ld;
  std::vector<std::vector<double>> nus;
  double minDelta = 10.0;
  evolve_observed(p, s0, default_integrator_opts(p, times), [&](std::size_t, double, const auto& c) {
    const Eigen::MatrixXd m = c;
    e.push_back(energy(p, m));
    ld.push_back(log_determinant(m));
    nus.push_back(symplectic_eigenvalues(m));
    for (std::size_t k = 0; k <= p.env_count(); ++k)
      minDelta = std::min(minDelta, 2.0 * std::sqrt(mode_triple(m, k).determinant()));
    EXPECT_LT(testing_support::max_abs_diff(m, m.transpose()), 1e-12);
    return true;
  });
  EXPECT_LT(max_rel_drift(e), 1e-8);
  double detDrift = 0.0;
  for (double v : ld) detDrift = std::max(detDrift, std::abs(std::expm1(v - ld.front())));
  EXPECT_LT(detDrift, 1e-8);
  for (const auto& nu : nus)
    for (std::size_t k = 0; k < nu.size(); ++k) EXPECT_NEAR(nu[k], nus.front()[k], 1e-7);
  EXPECT_GE(minDelta, 1.0 - 1e-9);
}

TEST(ExactEvolutionProperty, LinearInInitialCovariance) {
  const ModelParams p = ModelParams::uniform_coupling(1.0, {1.3, 1.7}, 0.3);
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd a = testing_support::random_covariance(rng, 3);
  const Eigen::MatrixXd b = testing_support::random_covariance(rng, 3);
  const double alpha = 0.37;
  const auto times = ode::linspace(0.0, 30.0, 31);
  // A fixed step keeps the discrete flow itself linear; adaptive steps
  // would depend on the state.
  auto opts = default_integrator_opts(p, times);
  opts.fixedStep = 0.01;
  const auto ta = evolve(p, {a, 0.0}, opts);
  const auto tb = evolve(p, {b, 0.0}, opts);
  const auto tm = evolve(p, {alpha * a + (1.0 - alpha) * b, 0.0}, opts);
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_LT(testing_support::max_abs_diff(tm[i].cov, alpha * ta[i].cov + (1.0 - alpha) * tb[i].cov), 1e-11);
}

TEST(ExactEvolutionProperty, AllTenCorrelatorsMatchClosedForms) {
  std::mt19937_64 rng(51);
  struct Case {
    double w1, lambda;
    Eigen::Matrix4d cov;
  };
  std::vector<Case> cases;
  cases.push_back({2.0, 0.5, analytic::covariance_from_ics(analytic::pure_thermal_ics(1.0, 2.0, 0.2))});
  cases.push_back({2.0, 0.25, analytic::covariance_from_ics(analytic::time_translation_invariant_ic(1.0, 2.0, 0.25))});
  cases.push_back({1.5, -0.4, Eigen::Matrix4d(testing_support::random_covariance(rng, 2))});
  for (const auto& c : cases) {
    const ModelParams p = n1(c.w1, c.lambda);
    const auto times = ode::linspace(0.0, 100.0, 401);
    const auto traj = evolve(p, {Eigen::MatrixXd(c.cov), 0.0}, default_integrator_opts(p, times));
    const analytic::AnalyticSolution sol(1.0, c.w1, c.lambda, analytic::ics_from_covariance(c.cov));
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
      worst = std::max(worst, testing_support::max_abs_diff(traj[i].cov, Eigen::MatrixXd(sol.covariance(times[i]))));
    EXPECT_LT(worst, 1e-6) << "w1=" << c.w1 << " lambda=" << c.lambda;
  }
}
