#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>

#include "decoherence/exact_evolution.hpp"
#include "decoherence/experiments.hpp"
#include "decoherence/master_equation.hpp"

using namespace decoherence;
using namespace decoherence::master;

namespace {

ModelParams n1(double w1, double lambda) { return ModelParams::uniform_coupling(1.0, {w1}, lambda); }

// Kernels written out directly from their mode sums.
double nu_ref(const ModelParams& p, double beta, double t) {
  double s = 0.0;
  for (std::size_t n = 0; n < p.env_count(); ++n) {
    const double w = p.omegas[n], l = p.lambdas[n];
    const double k = std::isinf(beta) ? 1.0 : 1.0 / std::tanh(0.5 * beta * w);
    s += l * l * std::cos(w * t) / (2.0 * w) * k;
  }
  return s;
}

double eta_ref(const ModelParams& p, double t) {
  double s = 0.0;
  for (std::size_t n = 0; n < p.env_count(); ++n)
    s += p.lambdas[n] * p.lambdas[n] * std::sin(p.omegas[n] * t) / (2.0 * p.omegas[n]);
  return s;
}

// The four coefficients as integrals of the kernels, by adaptive
// Gauss-Kronrod quadrature.
MasterCoeffs quadrature_coeffs(const ModelParams& p, double beta, double t) {
  using Q = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double w0 = p.omega0;
  auto integ = [&](auto f) { return t == 0.0 ? 0.0 : Q::integrate(f, 0.0, t, 20, 1e-14); };
  MasterCoeffs m;
  m.omega2Shift = -2.0 * integ([&](double u) { return eta_ref(p, u) * std::cos(w0 * u); });
  m.gamma = integ([&](double u) { return eta_ref(p, u) * std::sin(w0 * u) / w0; });
  m.bigD = integ([&](double u) { return nu_ref(p, beta, u) * std::cos(w0 * u); });
  m.f = -integ([&](double u) { return nu_ref(p, beta, u) * std::sin(w0 * u) / w0; });
  return m;
}

void expect_coeffs_near(const MasterCoeffs& a, const MasterCoeffs& b, double tol) {
  EXPECT_NEAR(a.omega2Shift, b.omega2Shift, tol);
  EXPECT_NEAR(a.gamma, b.gamma, tol);
  EXPECT_NEAR(a.bigD, b.bigD, tol);
  EXPECT_NEAR(a.f, b.f, tol);
}

CorrelatorTriple ground(double w0) { return CorrelatorTriple{0.5 / w0, 0.5 * w0, 0.0}; }

}  // namespace

TEST(Kernels, Examples) {
  const ModelParams p = n1(2.0, 0.5);
  const Kernels k(p, 0.2);
  EXPECT_EQ(k.eta(0.0), 0.0);
  EXPECT_NEAR(k.nu(0.0), 0.316656, 1e-6);
  const Kernels cold(p, std::numeric_limits<double>::infinity());
  EXPECT_DOUBLE_EQ(cold.nu(0.0), 0.25 / 4.0);
}

TEST(Kernels, MatchModeSums) {
  const ModelParams p = ModelParams::uniform_coupling(1.0, {0.7, 1.3, 2.9}, 0.2);
  const Kernels k(p, 1.5);
  for (double t = 0.0; t < 20.0; t += 0.37) {
    EXPECT_NEAR(k.nu(t), nu_ref(p, 1.5, t), 1e-15);
    EXPECT_NEAR(k.eta(t), eta_ref(p, t), 1e-15);
  }
}

TEST(MasterCoeffs, VanishAtZeroTime) {
  const MasterCoeffs m = master_coeffs(n1(2.0, 0.5), 0.2, 0.0);
  EXPECT_EQ(m.omega2Shift, 0.0);
  EXPECT_EQ(m.gamma, 0.0);
  EXPECT_EQ(m.bigD, 0.0);
  EXPECT_EQ(m.f, 0.0);
}

TEST(MasterCoeffs, QuadraticInCoupling) {
  for (double t : {0.3, 1.0, 7.5, 40.0}) {
    const MasterCoeffs a = master_coeffs(n1(2.0, 0.5), 0.2, t);
    const MasterCoeffs b = master_coeffs(n1(2.0, 0.25), 0.2, t);
    EXPECT_NEAR(a.omega2Shift, 4.0 * b.omega2Shift, 1e-9 * std::abs(a.omega2Shift) + 1e-15);
    EXPECT_NEAR(a.gamma, 4.0 * b.gamma, 1e-9 * std::abs(a.gamma) + 1e-15);
    EXPECT_NEAR(a.bigD, 4.0 * b.bigD, 1e-9 * std::abs(a.bigD) + 1e-15);
    EXPECT_NEAR(a.f, 4.0 * b.f, 1e-9 * std::abs(a.f) + 1e-15);
  }
}

TEST(MasterCoeffs, ClosedFormMatchesQuadratureAtUnitTime) {
  const ModelParams p = n1(2.0, 0.5);
  for (double beta : {2000.0, 0.2})
    expect_coeffs_near(master_coeffs(p, beta, 1.0), quadrature_coeffs(p, beta, 1.0), 1e-9);
}

TEST(MasterCoeffs, ResonantLimitMatchesQuadrature) {
  const ModelParams p = n1(1.0, 0.3);
  for (double t : {0.5, 3.0, 17.0})
    expect_coeffs_near(master_coeffs(p, 0.7, t), quadrature_coeffs(p, 0.7, t), 1e-9);
}

TEST(EffectiveCoupling, Examples) {
  EXPECT_NEAR(effective_coupling(n1(2.0, 0.5), 0), -1.0 / 6.0, 1e-15);
  const double near = effective_coupling(n1(201.0 / 200.0, 0.25), 0);
  EXPECT_NEAR(near, 0.25 / (1.0 - std::pow(201.0 / 200.0, 2)), 1e-12);
  EXPECT_NEAR(near, -24.9377, 1e-4);
  EXPECT_EQ(effective_coupling(n1(2.0, 0.0), 0), 0.0);
  EXPECT_THROW(effective_coupling(n1(1.0, 0.1), 0), ResonantDivergence);
  EXPECT_THROW(effective_coupling(n1(2.0, 0.1), 1), DimensionMismatch);
}

TEST(CorrelatorRhs, FlatAtStartForPureState) {
  const ModelParams p = n1(2.0, 0.5);
  const CorrelatorTriple d = master_correlator_rhs(p, 0.2, 0.0, ground(1.0));
  EXPECT_EQ(d.xx, 0.0);
  EXPECT_EQ(d.pp, 0.0);
  EXPECT_EQ(d.xp, 0.0);
}

TEST(CorrelatorRhs, FreeOscillatorKeepsArea) {
  const ModelParams p = n1(2.0, 0.0);
  ode::IntegratorOpts o = decoherence::default_integrator_opts(p, ode::linspace(0.0, 200.0, 401));
  o.relTol = 1e-12;
  o.absTol = 1e-14;
  const CorrelatorTriple c0{0.8, 0.7, 0.3};  // mixed and squeezed
  const double d0 = 4.0 * c0.determinant();
  for (const auto& c : evolve_correlators(p, 0.2, c0, 0.0, o))
    EXPECT_NEAR(4.0 * c.determinant(), d0, 1e-9);
  for (const auto& c : evolve_correlators(p, 0.2, ground(1.0), 0.0, o)) {
    EXPECT_NEAR(4.0 * c.determinant(), 1.0, 1e-10);
    EXPECT_NEAR(c.xx, 0.5, 1e-10);
  }
}

TEST(CoeffRhs, FreeGroundStateIsStationary) {
  const ModelParams p = n1(2.0, 0.0);
  const GaussianCoeffs1D g0 = correlators_to_coeffs(ground(1.0));
  EXPECT_NEAR(g0.a.real(), 0.5, 1e-15);
  const GaussianCoeffs1D d = master_coeff_ode_rhs(p, 0.2, 3.0, g0);
  EXPECT_NEAR(d.a.real(), 0.0, 1e-15);
  EXPECT_NEAR(d.a.imag(), 0.0, 1e-15);
  EXPECT_NEAR(d.c, 0.0, 1e-15);
  EXPECT_EQ(d.logNorm, 0.0);
  const auto gs = evolve_coefficients(p, 0.2, g0, 0.0,
                                      decoherence::default_integrator_opts(p, ode::linspace(0.0, 30.0, 31)));
  for (const auto& g : gs) {
    EXPECT_NEAR(g.a.real(), 0.5, 1e-12);
    EXPECT_NEAR(g.a.imag(), 0.0, 1e-12);
    EXPECT_NEAR(g.c, 0.0, 1e-12);
  }
}

TEST(CoeffRhs, NormalizationRateAtStart) {
  const GaussianCoeffs1D g0 = correlators_to_coeffs(ground(1.0));
  EXPECT_EQ(master_coeff_ode_rhs(n1(2.0, 0.5), 0.2, 0.0, g0).logNorm, 0.0);
}

TEST(CoeffRhs, DelocalizedMatrixIsDegenerate) {
  GaussianCoeffs1D g;
  g.a = {0.5, 0.0};
  g.c = 0.5;
  EXPECT_THROW(master_coeff_ode_rhs(n1(2.0, 0.5), 0.2, 1.0, g), DegenerateCoeffs);
}

TEST(CoeffRhs, AgreesWithCorrelatorForm) {
  const ModelParams p = n1(2.0, 0.5);
  const double beta = 0.2;
  const auto times = ode::linspace(0.0, 25.0, 501);
  ode::IntegratorOpts o = decoherence::default_integrator_opts(p, times);
  o.relTol = 1e-11;
  o.absTol = 1e-13;
  const CorrelatorTriple c0 = ground(1.0);
  const auto cs = evolve_correlators(p, beta, c0, 0.0, o);
  const auto gs = evolve_coefficients(p, beta, correlators_to_coeffs(c0), 0.0, o);
  ASSERT_EQ(cs.size(), gs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const double viaCorr = 2.0 * std::sqrt(cs[i].determinant());
    const double viaCoeff = 2.0 * std::sqrt(coeffs_to_correlators(gs[i]).determinant());
    EXPECT_NEAR(viaCorr, viaCoeff, 1e-8) << times[i];
  }
}

TEST(RequireSeparable, RejectsCorrelatedState) {
  const ModelParams p = n1(2.0, 0.5);
  Eigen::MatrixXd cov = pure_thermal_ic(p, 0.2).cov;
  EXPECT_NO_THROW(require_separable(cov));
  cov(index::px, index::pq(0)) = cov(index::pq(0), index::px) = 0.1;
  EXPECT_THROW(require_separable(cov), EntangledInitialState);
}

TEST(MasterDelta, TracksExactAtWeakCoupling) {
  const ModelParams p = n1(2.0, 0.5);
  const double beta = 2000.0;
  const auto times = ode::linspace(0.0, 25.0, 501);
  const auto cs = evolve_correlators(p, beta, ground(1.0), 0.0, decoherence::default_integrator_opts(p, times));
  const auto ex = evolve(p, pure_thermal_ic(p, beta), decoherence::default_integrator_opts(p, times));
  double worst = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i)
    worst = std::max(worst, std::abs(2.0 * std::sqrt(cs[i].determinant()) -
                                     subsystem_delta(ex[i], 0).delta));
  EXPECT_LT(worst, 0.15);
}

TEST(MasterProperty, ZeroCouplingGivesZeroCoefficients) {
  const ModelParams p = ModelParams::uniform_coupling(1.0, {0.5, 1.7, 2.2}, 0.0);
  for (double t = 0.0; t < 50.0; t += 0.5) {
    const MasterCoeffs m = master_coeffs(p, 0.3, t);
    EXPECT_EQ(m.omega2Shift, 0.0);
    EXPECT_EQ(m.gamma, 0.0);
    EXPECT_EQ(m.bigD, 0.0);
    EXPECT_EQ(m.f, 0.0);
  }
}

TEST(MasterProperty, DoubledCouplingQuadruplesCoefficients) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> w(0.3, 3.0), t(0.0, 60.0);
  for (int k = 0; k < 20; ++k) {
    const std::vector<double> omegas{w(rng), w(rng)};
    const ModelParams a = ModelParams::uniform_coupling(1.0, omegas, 0.02);
    const ModelParams b = ModelParams::uniform_coupling(1.0, omegas, 0.04);
    const double tt = t(rng);
    const MasterCoeffs ma = master_coeffs(a, 0.9, tt), mb = master_coeffs(b, 0.9, tt);
    EXPECT_NEAR(mb.omega2Shift, 4.0 * ma.omega2Shift, 1e-12);
    EXPECT_NEAR(mb.gamma, 4.0 * ma.gamma, 1e-12);
    EXPECT_NEAR(mb.bigD, 4.0 * ma.bigD, 1e-12);
    EXPECT_NEAR(mb.f, 4.0 * ma.f, 1e-12);
  }
}

TEST(MasterProperty, ClosedFormMatchesQuadratureOnRandomSamples) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> w(0.2, 3.0), lam(0.0, 0.15), bD(0.1, 5.0), tD(0.0, 30.0);
  std::uniform_int_distribution<int> nD(1, 4);
  int done = 0;
  while (done < 50) {
    std::vector<double> omegas;
    const int n = nD(rng);
    for (int i = 0; i < n; ++i) omegas.push_back(w(rng));
    bool resonant = false;
    for (double o : omegas) resonant = resonant || std::abs(o - 1.0) < 0.05;
    if (resonant) continue;
    ModelParams p;
    p.omegas = omegas;
    for (int i = 0; i < n; ++i) p.lambdas.push_back(lam(rng));
    p.validate();
    const double beta = bD(rng), t = tD(rng);
    expect_coeffs_near(master_coeffs(p, beta, t), quadrature_coeffs(p, beta, t), 1e-9);
    ++done;
  }
}

TEST(MasterProperty, EarlyTimeAgreementWithExact) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> w(0.3, 3.0), lam(0.005, 0.1), bD(0.5, 5.0);
  std::uniform_int_distribution<int> nD(1, 3);
  const auto times = ode::linspace(0.0, 10.0, 201);
  int done = 0;
  while (done < 10) {
    ModelParams p;
    const int n = nD(rng);
    for (int i = 0; i < n; ++i) {
      p.omegas.push_back(w(rng));
      p.lambdas.push_back(lam(rng));
    }
    const double beta = bD(rng);
    bool weak = true;
    for (int i = 0; i < n; ++i) {
      if (is_resonant(p, i, 1e-3)) {
        weak = false;
        break;
      }
      const double k = coth_factor(beta, p.omegas[i]);
      weak = weak && std::abs(effective_coupling(p, i)) * std::max(1.0, k) < 0.2;
    }
    if (!weak) continue;
    p.validate();
    const CorrelatorState s0 = pure_thermal_ic(p, beta);
    const auto cs = evolve_correlators(p, beta, mode_triple(s0.cov, 0), 0.0,
                                       decoherence::default_integrator_opts(p, times));
    const auto ex = evolve(p, s0, decoherence::default_integrator_opts(p, times));
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double dm = 2.0 * std::sqrt(cs[i].determinant());
      const double de = subsystem_delta(ex[i], 0).delta;
      EXPECT_LT(std::abs(dm - de), 0.05 * (de - 1.0) + 0.02) << "t=" << times[i];
    }
    ++done;
  }
}

TEST(MasterProperty, ResonantN1BreaksDown) {
  // Master-only run of the near-resonant single-oscillator preset.
  experiments::Scenario s = experiments::preset("fig6");
  s.methods = {experiments::Method::MasterCorrelator};
  const auto r = experiments::run_scenario(s);
  ASSERT_TRUE(r.breakdownTime.has_value());
}
