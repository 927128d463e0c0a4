#pragma once

// Full two-mode Gaussian density matrix for one system and one environment
// oscillator:
//   rho(x,q;y,r) = N exp[-X^T Acal X - Y^T conj(Acal) Y + 2 X^T Ccal Y]
// with X = (x, q), Y = (y, r), Acal = [[a, d/2], [d/2, a1]] and
// Ccal = [[c, e/2], [conj(e)/2, c1]], c and c1 real.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "decoherence/errors.hpp"
#include "decoherence/exact_evolution.hpp"
#include "decoherence/gaussian_core.hpp"
#include "decoherence/ode_integrator.hpp"

namespace decoherence::density {

using cd = std::complex<double>;

struct GaussianCoeffs2D {
  cd a{0.0, 0.0};
  cd a1{0.0, 0.0};
  double c = 0.0;
  double c1 = 0.0;
  cd d{0.0, 0.0};
  cd e{0.0, 0.0};
  double logNorm = 0.0;

  /// Argument of the square root in the normalization.
  double normalizability() const {
    const double de = d.real() - e.real();
    return 4.0 * (a.real() - c) * (a1.real() - c1) - de * de;
  }

  bool normalizable() const { return a1.real() - c1 > 0.0 && normalizability() > 0.0; }

  /// ln N fixed by unit trace.
  double closed_form_log_norm() const {
    return 0.5 * std::log(normalizability()) - std::log(std::numbers::pi);
  }
};

inline constexpr int kStateSize = 11;

inline ode::State pack(const GaussianCoeffs2D& g) {
  ode::State y(kStateSize);
  y << g.a.real(), g.a.imag(), g.c, g.a1.real(), g.a1.imag(), g.c1, g.d.real(), g.d.imag(),
      g.e.real(), g.e.imag(), g.logNorm;
  return y;
}

inline GaussianCoeffs2D unpack(const ode::State& y) {
  GaussianCoeffs2D g;
  g.a = {y[0], y[1]};
  g.c = y[2];
  g.a1 = {y[3], y[4]};
  g.c1 = y[5];
  g.d = {y[6], y[7]};
  g.e = {y[8], y[9]};
  g.logNorm = y[10];
  return g;
}

/// Von Neumann flow of the ten real coefficients plus ln N.
inline GaussianCoeffs2D full_vn_rhs(const ModelParams& p, const GaussianCoeffs2D& g) {
  if (p.env_count() != 1)
    throw DimensionMismatch("two-mode density matrix needs exactly one environment oscillator");
  if (!g.normalizable())
    throw NormalizabilityLoss("two-mode density matrix is no longer normalizable");
  const double w0 = p.omega0, w1 = p.omegas[0], lam = p.lambdas[0];
  const double aR = g.a.real(), aI = g.a.imag(), a1R = g.a1.real(), a1I = g.a1.imag();
  const double c = g.c, c1 = g.c1;
  const double dR = g.d.real(), dI = g.d.imag(), eR = g.e.real(), eI = g.e.imag();
  const double mix = 0.5 * (dR * dR - eR * eR - dI * dI + eI * eI);
  const double sI = aI + a1I;

  GaussianCoeffs2D r;
  r.a = {4.0 * aI * aR + dR * dI - eR * eI,
         0.5 * w0 * w0 + 2.0 * (aI * aI - aR * aR + c * c) - mix};
  r.c = 4.0 * aI * c - (dR * eI - eR * dI);
  r.a1 = {4.0 * a1I * a1R + dR * dI + eR * eI,
          0.5 * w1 * w1 + 2.0 * (a1I * a1I - a1R * a1R + c1 * c1) - mix};
  r.c1 = 4.0 * a1I * c1 + (dR * eI + eR * dI);
  r.d = {2.0 * ((aR + a1R) * dI + sI * dR + (c - c1) * eI),
         lam + 2.0 * (-(aR + a1R) * dR + sI * dI + (c + c1) * eR)};
  r.e = {2.0 * ((aR - a1R) * eI + sI * eR + (c + c1) * dI),
         2.0 * (-(aR - a1R) * eR + sI * eI + (c - c1) * dR)};
  r.logNorm = 2.0 * sI;
  return r;
}

/// Integrates over the environment coordinate.
inline GaussianCoeffs1D trace_out_environment(const GaussianCoeffs2D& g) {
  const double w1 = g.a1.real() - g.c1;
  if (!(w1 > 0.0))
    throw DegenerateEnvironment("environment block not normalizable: Re(a1) - c1 = " +
                                std::to_string(w1));
  const cd diff = g.d - g.e;
  GaussianCoeffs1D r;
  r.a = g.a - diff * diff / (8.0 * w1);
  r.c = g.c + std::norm(diff) / (8.0 * w1);
  const double dRe = diff.real();
  const double arg = 2.0 * (g.a.real() - g.c) / std::numbers::pi - dRe * dRe / (2.0 * std::numbers::pi * w1);
  if (!(arg > 0.0)) throw NormalizabilityLoss("reduced density matrix not normalizable");
  r.logNorm = 0.5 * std::log(arg);
  return r;
}

/// Delta of the reduced matrix, Delta^2 = (Re a + c) / (Re a - c).
inline PhaseSpaceArea reduced_delta(const GaussianCoeffs2D& g) {
  const GaussianCoeffs1D r = trace_out_environment(g);
  const double den = r.a.real() - r.c;
  if (!(den > 0.0)) throw DegenerateCoeffs("reduced density matrix delocalized");
  return area_from_delta_squared((r.a.real() + r.c) / den);
}

inline double reduced_entropy(const GaussianCoeffs2D& g) { return entropy_from_delta(reduced_delta(g)); }

namespace detail {

// Ordering of the 4x4 covariance is (x, p_x, q, p_q); positions sit at 0, 2.
inline constexpr int kPos[2] = {0, 2};
inline constexpr int kMom[2] = {1, 3};

}  // namespace detail

/// Coefficients whose second moments reproduce `cov`. The state's Wigner
/// function is Gaussian with position block Sxx, momentum block Spp and
/// cross block C(i,j) = <{P_i, X_j}>/2.
inline GaussianCoeffs2D coeffs2d_from_covariance(const Eigen::Matrix4d& cov,
                                                 bool requirePhysical = true) {
  using detail::kMom;
  using detail::kPos;
  if (requirePhysical && !is_physical(Eigen::MatrixXd(cov)))
    throw UnphysicalState("two-mode covariance violates the uncertainty relation");
  Eigen::Matrix2d sxx, spp, cpx;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      sxx(i, j) = cov(kPos[i], kPos[j]);
      spp(i, j) = cov(kMom[i], kMom[j]);
      cpx(i, j) = cov(kMom[i], kPos[j]);
    }
  Eigen::LLT<Eigen::Matrix2d> llt(sxx);
  if (llt.info() != Eigen::Success)
    throw UnphysicalState("position covariance is not positive definite");
  const Eigen::Matrix2d prec = llt.solve(Eigen::Matrix2d::Identity());
  const Eigen::Matrix2d k = cpx * prec;
  const Eigen::Matrix2d b = spp - k * sxx * k.transpose();
  const Eigen::Matrix2d ksym = 0.5 * (k + k.transpose());
  const Eigen::Matrix2d kanti = k - k.transpose();

  const Eigen::Matrix2d acalRe = prec / 8.0 + b / 2.0;
  const Eigen::Matrix2d acalIm = -ksym / 2.0;
  const Eigen::Matrix2d ccalRe = -prec / 8.0 + b / 2.0;
  const Eigen::Matrix2d ccalIm = kanti / 4.0;

  GaussianCoeffs2D g;
  g.a = {acalRe(0, 0), acalIm(0, 0)};
  g.a1 = {acalRe(1, 1), acalIm(1, 1)};
  g.d = {2.0 * acalRe(0, 1), 2.0 * acalIm(0, 1)};
  g.c = ccalRe(0, 0);
  g.c1 = ccalRe(1, 1);
  g.e = {2.0 * ccalRe(0, 1), 2.0 * ccalIm(0, 1)};
  if (!g.normalizable()) throw UnphysicalState("covariance maps to a non-normalizable matrix");
  g.logNorm = g.closed_form_log_norm();
  return g;
}

/// Second moments of the state, inverse of coeffs2d_from_covariance.
inline Eigen::Matrix4d covariance_from_coeffs2d(const GaussianCoeffs2D& g) {
  using detail::kMom;
  using detail::kPos;
  if (!g.normalizable()) throw NormalizabilityLoss("density matrix not normalizable");
  Eigen::Matrix2d acalRe, acalIm, ccalRe, ccalIm;
  acalRe << g.a.real(), 0.5 * g.d.real(), 0.5 * g.d.real(), g.a1.real();
  acalIm << g.a.imag(), 0.5 * g.d.imag(), 0.5 * g.d.imag(), g.a1.imag();
  ccalRe << g.c, 0.5 * g.e.real(), 0.5 * g.e.real(), g.c1;
  ccalIm << 0.0, 0.5 * g.e.imag(), -0.5 * g.e.imag(), 0.0;
  const Eigen::Matrix2d prec = 4.0 * (acalRe - ccalRe);
  const Eigen::Matrix2d b = acalRe + ccalRe;
  const Eigen::Matrix2d k = -2.0 * acalIm + 2.0 * ccalIm;
  const Eigen::Matrix2d sxx = prec.inverse();
  const Eigen::Matrix2d cpx = k * sxx;
  const Eigen::Matrix2d spp = b + k * sxx * k.transpose();
  Eigen::Matrix4d cov;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      cov(kPos[i], kPos[j]) = sxx(i, j);
      cov(kMom[i], kMom[j]) = spp(i, j);
      cov(kMom[i], kPos[j]) = cpx(i, j);
      cov(kPos[j], kMom[i]) = cpx(i, j);
    }
  return cov;
}

/// Integrates the coefficient flow; every sample is checked for
/// normalizability.
template <class Observer>
ode::IntegratorStats evolve_observed(const ModelParams& p, const GaussianCoeffs2D& g0, double t0,
                                     const ode::IntegratorOpts& opts, Observer&& observer) {
  p.validate();
  if (p.env_count() != 1)
    throw DimensionMismatch("two-mode density matrix needs exactly one environment oscillator");
  ode::Rhs rhs = [&p](double, const ode::State& y, ode::State& dy) {
    dy = pack(full_vn_rhs(p, unpack(y)));
  };
  return ode::integrate_observed(rhs, t0, pack(g0), opts,
                                 [&](std::size_t i, double t, const ode::State& y) {
                                   const GaussianCoeffs2D g = unpack(y);
                                   if (!g.normalizable())
                                     throw NormalizabilityLoss("normalizability lost at t=" +
                                                               std::to_string(t));
                                   return observer(i, t, g);
                                 });
}

inline std::vector<GaussianCoeffs2D> evolve(const ModelParams& p, const GaussianCoeffs2D& g0,
                                            double t0, const ode::IntegratorOpts& opts) {
  std::vector<GaussianCoeffs2D> out;
  evolve_observed(p, g0, t0, opts, [&](std::size_t, double, const GaussianCoeffs2D& g) {
    out.push_back(g);
    return true;
  });
  return out;
}

}  // namespace decoherence::density
