#pragma once

// Perturbative master equation for the reduced system oscillator: noise and
// dissipation kernels, the time-dependent coefficients, and the two
// equivalent ODE systems (correlator triple and density-matrix coefficients).

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "decoherence/errors.hpp"
#include "decoherence/exact_evolution.hpp"
#include "decoherence/gaussian_core.hpp"
#include "decoherence/ode_integrator.hpp"

namespace decoherence::master {

/// Frequency shift Omega^2(t), damping gamma(t), normal diffusion D(t) and
/// anomalous diffusion f(t).
struct MasterCoeffs {
  double omega2Shift = 0.0;
  double gamma = 0.0;
  double bigD = 0.0;
  double f = 0.0;
};

inline constexpr double kDefaultResonanceTol = 1e-12;

/// |omega0^2 - omega_n^2| below tol * omega0^2.
inline bool is_resonant(const ModelParams& p, std::size_t n, double tol = kDefaultResonanceTol) {
  const double w02 = p.omega0 * p.omega0;
  return std::abs(w02 - p.omegas.at(n) * p.omegas.at(n)) < tol * w02;
}

/// lambda_n / (omega0^2 - omega_n^2).
inline double effective_coupling(const ModelParams& p, std::size_t n,
                                 double tol = kDefaultResonanceTol) {
  if (n >= p.env_count()) throw DimensionMismatch("environment index out of range");
  if (is_resonant(p, n, tol))
    throw ResonantDivergence("effective coupling diverges: omega_" + std::to_string(n + 1) +
                             " equals omega0");
  return p.lambdas[n] / (p.omega0 * p.omega0 - p.omegas[n] * p.omegas[n]);
}

/// Noise kernel nu(t) and dissipation kernel eta(t).
class Kernels {
 public:
  Kernels(ModelParams p, double beta) : p_(std::move(p)), beta_(beta) {
    p_.validate();
    for (double w : p_.omegas) coth_.push_back(coth_factor(beta_, w));
  }

  double nu(double t) const {
    double s = 0.0;
    for (std::size_t n = 0; n < p_.env_count(); ++n) {
      const double w = p_.omegas[n], l = p_.lambdas[n];
      s += l * l * std::cos(w * t) / (2.0 * w) * coth_[n];
    }
    return s;
  }

  double eta(double t) const {
    double s = 0.0;
    for (std::size_t n = 0; n < p_.env_count(); ++n) {
      const double w = p_.omegas[n], l = p_.lambdas[n];
      s += l * l * std::sin(w * t) / (2.0 * w);
    }
    return s;
  }

  const ModelParams& params() const { return p_; }
  double beta() const { return beta_; }

 private:
  ModelParams p_;
  double beta_;
  std::vector<double> coth_;
};

inline Kernels kernels(const ModelParams& p, double beta) { return Kernels(p, beta); }

/// Closed-form coefficients with per-mode constants cached. Resonant modes
/// use the analytic limit of the closed forms.
class CoefficientModel {
 public:
  CoefficientModel(const ModelParams& p, double beta, double resonanceTol = kDefaultResonanceTol)
      : p_(p), beta_(beta) {
    p_.validate();
    const std::size_t n = p_.env_count();
    coth_.resize(n);
    resonant_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      coth_[i] = coth_factor(beta, p_.omegas[i]);
      resonant_[i] = is_resonant(p_, i, resonanceTol);
    }
  }

  MasterCoeffs at(double t) const {
    MasterCoeffs m;
    const double w0 = p_.omega0;
    const double c0 = std::cos(w0 * t), s0 = std::sin(w0 * t);
    for (std::size_t i = 0; i < p_.env_count(); ++i) {
      const double wn = p_.omegas[i];
      const double l2 = p_.lambdas[i] * p_.lambdas[i];
      const double k = coth_[i];
      if (resonant_[i]) {
        const double w = w0;
        const double sin2 = std::sin(2.0 * w * t);
        m.omega2Shift += -l2 * s0 * s0 / (2.0 * w * w);
        m.gamma += l2 / (2.0 * w * w) * (0.5 * t - sin2 / (4.0 * w));
        m.bigD += l2 * k / (2.0 * w) * (0.5 * t + sin2 / (4.0 * w));
        m.f += -l2 * k * s0 * s0 / (4.0 * w * w * w);
        continue;
      }
      const double den = w0 * w0 - wn * wn;
      const double cn = std::cos(wn * t), sn = std::sin(wn * t);
      m.omega2Shift += -l2 / (wn * den) * (wn * (c0 * cn - 1.0) + w0 * s0 * sn);
      m.gamma += l2 / (2.0 * w0 * wn * den) * (wn * cn * s0 - w0 * c0 * sn);
      m.bigD += l2 * k / (2.0 * wn * den) * (w0 * cn * s0 - wn * c0 * sn);
      m.f += l2 * k / (2.0 * w0 * wn * den) * (w0 * (c0 * cn - 1.0) + wn * s0 * sn);
    }
    return m;
  }

  const ModelParams& params() const { return p_; }
  double beta() const { return beta_; }

 private:
  ModelParams p_;
  double beta_;
  std::vector<double> coth_;
  std::vector<bool> resonant_;
};

inline MasterCoeffs master_coeffs(const ModelParams& p, double beta, double t,
                                  double resonanceTol = kDefaultResonanceTol) {
  return CoefficientModel(p, beta, resonanceTol).at(t);
}

/// d/dt of (<x^2>, <p^2>, <{x,p}>/2) for given coefficients.
inline CorrelatorTriple correlator_rhs(double omega0, const MasterCoeffs& m,
                                       const CorrelatorTriple& c) {
  const double w2 = omega0 * omega0 + m.omega2Shift;
  CorrelatorTriple d;
  d.xx = 2.0 * c.xp;
  d.pp = -2.0 * w2 * c.xp - 4.0 * m.gamma * c.pp + 2.0 * m.bigD;
  d.xp = -w2 * c.xx + c.pp - m.f - 2.0 * m.gamma * c.xp;
  return d;
}

inline CorrelatorTriple master_correlator_rhs(const ModelParams& p, double beta, double t,
                                              const CorrelatorTriple& c) {
  return correlator_rhs(p.omega0, master_coeffs(p, beta, t), c);
}

/// d/dt of the reduced density-matrix coefficients, returned in the same
/// layout: a -> (dRe a, dIm a), c -> dc, logNorm -> d ln N.
inline GaussianCoeffs1D coeff_rhs(double omega0, const MasterCoeffs& m, const GaussianCoeffs1D& g) {
  const double aR = g.a.real(), aI = g.a.imag(), c = g.c;
  if (!(aR - c > 0.0))
    throw DegenerateCoeffs("reduced density matrix delocalized: Re(a) - c = " +
                           std::to_string(aR - c));
  const double w2 = omega0 * omega0 + m.omega2Shift;
  const double common = -2.0 * m.gamma * (aR + c) + m.bigD - 2.0 * m.f * aI;
  GaussianCoeffs1D d;
  const double daR = 4.0 * aI * aR + common;
  const double daI = 2.0 * (aI * aI - aR * aR + c * c) + 0.5 * w2 - 2.0 * m.gamma * aI +
                     2.0 * m.f * (aR - c);
  d.a = {daR, daI};
  d.c = 4.0 * aI * c + common;
  d.logNorm = 2.0 * aI;
  return d;
}

inline GaussianCoeffs1D master_coeff_ode_rhs(const ModelParams& p, double beta, double t,
                                             const GaussianCoeffs1D& g) {
  return coeff_rhs(p.omega0, master_coeffs(p, beta, t), g);
}

/// Rejects initial states that are not a product of system and environment.
inline void require_separable(const Eigen::MatrixXd& cov, double tol = 0.0) {
  for (Eigen::Index i = 0; i < 2; ++i)
    for (Eigen::Index j = 2; j < cov.cols(); ++j)
      if (std::abs(cov(i, j)) > tol)
        throw EntangledInitialState(
            "master equation assumes an uncorrelated system-environment initial state");
}

inline ode::IntegratorOpts default_integrator_opts(const ModelParams& p,
                                                   std::vector<double> outputTimes) {
  return decoherence::default_integrator_opts(p, std::move(outputTimes));
}

/// Integrates the correlator form. Samples are raw triples; they may leave
/// the physical region once the approximation breaks down.
template <class Observer>
ode::IntegratorStats evolve_correlators_observed(const ModelParams& p, double beta,
                                                 const CorrelatorTriple& c0, double t0,
                                                 const ode::IntegratorOpts& opts,
                                                 Observer&& observer) {
  const CoefficientModel model(p, beta);
  const double w0 = p.omega0;
  ode::Rhs rhs = [&model, w0](double t, const ode::State& y, ode::State& dy) {
    const CorrelatorTriple d = correlator_rhs(w0, model.at(t), CorrelatorTriple{y[0], y[1], y[2]});
    dy.resize(3);
    dy << d.xx, d.pp, d.xp;
  };
  ode::State y0(3);
  y0 << c0.xx, c0.pp, c0.xp;
  return ode::integrate_observed(rhs, t0, y0, opts,
                                 [&](std::size_t i, double t, const ode::State& y) {
                                   return observer(i, t, CorrelatorTriple{y[0], y[1], y[2]});
                                 });
}

inline std::vector<CorrelatorTriple> evolve_correlators(const ModelParams& p, double beta,
                                                        const CorrelatorTriple& c0, double t0,
                                                        const ode::IntegratorOpts& opts) {
  std::vector<CorrelatorTriple> out;
  evolve_correlators_observed(p, beta, c0, t0, opts, [&](std::size_t, double, const CorrelatorTriple& c) {
    out.push_back(c);
    return true;
  });
  return out;
}

template <class Observer>
ode::IntegratorStats evolve_coefficients_observed(const ModelParams& p, double beta,
                                                  const GaussianCoeffs1D& g0, double t0,
                                                  const ode::IntegratorOpts& opts,
                                                  Observer&& observer) {
  const CoefficientModel model(p, beta);
  const double w0 = p.omega0;
  ode::Rhs rhs = [&model, w0](double t, const ode::State& y, ode::State& dy) {
    GaussianCoeffs1D g;
    g.a = {y[0], y[1]};
    g.c = y[2];
    g.logNorm = y[3];
    const GaussianCoeffs1D d = coeff_rhs(w0, model.at(t), g);
    dy.resize(4);
    dy << d.a.real(), d.a.imag(), d.c, d.logNorm;
  };
  ode::State y0(4);
  y0 << g0.a.real(), g0.a.imag(), g0.c, g0.logNorm;
  return ode::integrate_observed(rhs, t0, y0, opts,
                                 [&](std::size_t i, double t, const ode::State& y) {
                                   GaussianCoeffs1D g;
                                   g.a = {y[0], y[1]};
                                   g.c = y[2];
                                   g.logNorm = y[3];
                                   return observer(i, t, g);
                                 });
}

inline std::vector<GaussianCoeffs1D> evolve_coefficients(const ModelParams& p, double beta,
                                                         const GaussianCoeffs1D& g0, double t0,
                                                         const ode::IntegratorOpts& opts) {
  std::vector<GaussianCoeffs1D> out;
  evolve_coefficients_observed(p, beta, g0, t0, opts, [&](std::size_t, double, const GaussianCoeffs1D& g) {
    out.push_back(g);
    return true;
  });
  return out;
}

}  // namespace decoherence::master
