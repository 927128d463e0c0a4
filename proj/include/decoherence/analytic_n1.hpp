#pragma once

// Closed-form solution for one environment oscillator: normal modes, the
// statistical propagators F_x, F_q, F_xq for arbitrary Gaussian initial
// correlations, and the time-translation-invariant initial state.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "decoherence/errors.hpp"
#include "decoherence/exact_evolution.hpp"
#include "decoherence/gaussian_core.hpp"

namespace decoherence::analytic {

struct NormalModeBasis {
  double omegaBar0 = 0.0;  // lower normal-mode frequency
  double omegaBar1 = 0.0;
  double theta = 0.0;
  double cos2theta = 1.0;
  double sin2theta = 0.0;

  double cos_theta() const { return std::cos(theta); }
  double sin_theta() const { return std::sin(theta); }

  /// Rotation R with R Omega R^T diagonal; (xbar, qbar) = R (x, q).
  Eigen::Matrix2d rotation() const {
    const double c = cos_theta(), s = sin_theta();
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }
};

/// Second moments of the normal-mode amplitudes A_k, B_k. The cross entries
/// are anticommutators, e.g. A0B0 = <{A_0, B_0}>.
struct ModeAmplitudeCorrelators {
  double A0A0 = 0, B0B0 = 0, A1A1 = 0, B1B1 = 0;
  double A0B0 = 0, A1B1 = 0, A0A1 = 0, B0B1 = 0, A0B1 = 0, B0A1 = 0;
};

/// Initial expectation values. xpx and qpq are anticommutators <{x,p_x}>,
/// <{q,p_q}>; the remaining entries are plain products of commuting pairs.
struct InitialConditions10 {
  double xx = 0, qq = 0, xq = 0, pxpx = 0, pqpq = 0, pxpq = 0;
  double xpx = 0, qpq = 0, xpq = 0, qpx = 0;
};

inline NormalModeBasis diagonalize(double omega0, double omega1, double lambda1) {
  if (!(omega0 > 0.0) || !(omega1 > 0.0))
    throw InvalidParameters("frequencies must be positive");
  if (std::abs(lambda1) > omega0 * omega1)
    throw InvertedOscillator("coupling exceeds omega0*omega1; lower normal mode is inverted");
  const double split = omega1 * omega1 - omega0 * omega0;
  const double root = std::sqrt(split * split + 4.0 * lambda1 * lambda1);
  const double mean = 0.5 * (omega0 * omega0 + omega1 * omega1);
  NormalModeBasis b;
  if (root == 0.0) {
    b.cos2theta = 1.0;
    b.sin2theta = 0.0;
  } else {
    b.cos2theta = split / root;
    b.sin2theta = 2.0 * lambda1 / root;
  }
  b.theta = 0.5 * std::atan2(b.sin2theta, b.cos2theta);
  // Lower eigenvalue via the product to avoid cancellation.
  const double hi = mean + 0.5 * root;
  const double det = omega0 * omega0 * omega1 * omega1 - lambda1 * lambda1;
  b.omegaBar1 = std::sqrt(hi);
  b.omegaBar0 = std::sqrt(std::max(0.0, det / hi));
  return b;
}

inline ModeAmplitudeCorrelators amplitudes_from_ics(const NormalModeBasis& b,
                                                    const InitialConditions10& ic) {
  const double c2 = b.cos2theta, s2 = b.sin2theta;
  const double w0 = b.omegaBar0, w1 = b.omegaBar1;
  ModeAmplitudeCorrelators m;
  m.A0A0 = 0.5 * (ic.xx + ic.qq + c2 * (ic.xx - ic.qq) - 2.0 * s2 * ic.xq);
  m.A1A1 = 0.5 * (ic.xx + ic.qq - c2 * (ic.xx - ic.qq) + 2.0 * s2 * ic.xq);
  m.A0A1 = (ic.xx - ic.qq) * s2 + 2.0 * c2 * ic.xq;
  m.B0B0 = (ic.pxpx + ic.pqpq + c2 * (ic.pxpx - ic.pqpq) - 2.0 * s2 * ic.pxpq) / (2.0 * w0 * w0);
  m.B1B1 = (ic.pxpx + ic.pqpq - c2 * (ic.pxpx - ic.pqpq) + 2.0 * s2 * ic.pxpq) / (2.0 * w1 * w1);
  m.B0B1 = ((ic.pxpx - ic.pqpq) * s2 + 2.0 * c2 * ic.pxpq) / (w0 * w1);
  m.A0B0 = (ic.xpx + ic.qpq + c2 * (ic.xpx - ic.qpq) - 2.0 * s2 * (ic.qpx + ic.xpq)) / (2.0 * w0);
  m.A1B1 = (ic.xpx + ic.qpq - c2 * (ic.xpx - ic.qpq) + 2.0 * s2 * (ic.qpx + ic.xpq)) / (2.0 * w1);
  m.A0B1 = (s2 * (ic.xpx - ic.qpq) + 2.0 * (ic.xpq - ic.qpx) + 2.0 * c2 * (ic.xpq + ic.qpx)) /
           (2.0 * w1);
  m.B0A1 = (s2 * (ic.xpx - ic.qpq) - 2.0 * (ic.xpq - ic.qpx) + 2.0 * c2 * (ic.xpq + ic.qpx)) /
           (2.0 * w0);
  return m;
}

inline InitialConditions10 ics_from_amplitudes(const NormalModeBasis& b,
                                               const ModeAmplitudeCorrelators& m) {
  const double c = b.cos_theta(), s = b.sin_theta();
  const double cc = c * c, ss = s * s, c2 = b.cos2theta, s2 = b.sin2theta;
  const double w0 = b.omegaBar0, w1 = b.omegaBar1;
  InitialConditions10 ic;
  ic.xx = cc * m.A0A0 + ss * m.A1A1 + 0.5 * s2 * m.A0A1;
  ic.qq = ss * m.A0A0 + cc * m.A1A1 - 0.5 * s2 * m.A0A1;
  ic.xq = 0.5 * (s2 * (m.A1A1 - m.A0A0) + c2 * m.A0A1);
  ic.pxpx = cc * w0 * w0 * m.B0B0 + ss * w1 * w1 * m.B1B1 + 0.5 * s2 * w0 * w1 * m.B0B1;
  ic.pqpq = ss * w0 * w0 * m.B0B0 + cc * w1 * w1 * m.B1B1 - 0.5 * s2 * w0 * w1 * m.B0B1;
  ic.pxpq = 0.5 * (s2 * (w1 * w1 * m.B1B1 - w0 * w0 * m.B0B0) + c2 * w0 * w1 * m.B0B1);
  ic.xpx = cc * w0 * m.A0B0 + ss * w1 * m.A1B1 + 0.5 * s2 * (w1 * m.A0B1 + w0 * m.B0A1);
  ic.qpq = ss * w0 * m.A0B0 + cc * w1 * m.A1B1 - 0.5 * s2 * (w1 * m.A0B1 + w0 * m.B0A1);
  ic.xpq = 0.5 * (0.5 * s2 * (w1 * m.A1B1 - w0 * m.A0B0) + cc * w1 * m.A0B1 - ss * w0 * m.B0A1);
  ic.qpx = 0.5 * (0.5 * s2 * (w1 * m.A1B1 - w0 * m.A0B0) + cc * w0 * m.B0A1 - ss * w1 * m.A0B1);
  return ic;
}

/// 4x4 covariance over (x, p_x, q, p_q) with symmetrized entries.
inline Eigen::Matrix4d covariance_from_ics(const InitialConditions10& ic) {
  Eigen::Matrix4d c;
  // clang-format off
  c << ic.xx,        0.5 * ic.xpx, ic.xq,        ic.xpq,
       0.5 * ic.xpx, ic.pxpx,      ic.qpx,       ic.pxpq,
       ic.xq,        ic.qpx,       ic.qq,        0.5 * ic.qpq,
       ic.xpq,       ic.pxpq,      0.5 * ic.qpq, ic.pqpq;
  // clang-format on
  return c;
}

inline InitialConditions10 ics_from_covariance(const Eigen::Matrix4d& c) {
  InitialConditions10 ic;
  ic.xx = c(0, 0);
  ic.pxpx = c(1, 1);
  ic.qq = c(2, 2);
  ic.pqpq = c(3, 3);
  ic.xpx = 2.0 * c(0, 1);
  ic.qpq = 2.0 * c(2, 3);
  ic.xq = c(0, 2);
  ic.xpq = c(0, 3);
  ic.qpx = c(1, 2);
  ic.pxpq = c(1, 3);
  return ic;
}

inline CorrelatorState state_from_ics(const InitialConditions10& ic, double time = 0.0) {
  return CorrelatorState{Eigen::MatrixXd(covariance_from_ics(ic)), time};
}

/// System ground state and environment thermal at beta, uncorrelated.
inline InitialConditions10 pure_thermal_ics(double omega0, double omega1, double beta) {
  const CorrelatorTriple env = thermal_correlators(ThermalSpec{beta, omega1});
  InitialConditions10 ic;
  ic.xx = 1.0 / (2.0 * omega0);
  ic.pxpx = 0.5 * omega0;
  ic.qq = env.xx;
  ic.pqpq = env.pp;
  return ic;
}

/// Entangled initial state with a pure system whose F_x does not depend on
/// the average time.
inline InitialConditions10 time_translation_invariant_ic(double omega0, double omega1,
                                                         double lambda1) {
  if (std::abs(lambda1) > omega0 * omega1)
    throw InvertedOscillator("coupling exceeds omega0*omega1");
  InitialConditions10 ic;
  ic.xx = 1.0 / (2.0 * omega0);
  ic.pxpx = 0.5 * omega0;
  ic.qq = 1.0 / (2.0 * omega0);
  ic.pqpq = omega1 * omega1 / (2.0 * omega0);
  ic.pxpq = lambda1 / (2.0 * omega0);
  return ic;
}

/// Inverse temperature with coth(beta*omega1/2) = omega1/omega0, the
/// environment temperature implied by the time-translation-invariant state.
inline double implied_environment_beta(double omega0, double omega1) {
  if (!(omega1 > omega0))
    throw InvalidParameters("implied temperature needs omega1 > omega0");
  return 2.0 * std::atanh(omega0 / omega1) / omega1;
}

/// sum_k coef_k f_k(w_k t) g_k(v_k t') with f, g in {cos, sin}.
class SeparableKernel {
 public:
  enum class Fn { Cos, Sin };
  struct Term {
    double coef;
    Fn f;
    double w;
    Fn g;
    double v;
  };

  void add(double coef, Fn f, double w, Fn g, double v) {
    if (coef != 0.0) terms_.push_back(Term{coef, f, w, g, v});
  }

  /// Mixed derivative d^m/dt^m d^n/dt'^n evaluated at (t, t').
  double eval(double t, double tp, int m = 0, int n = 0) const {
    double s = 0.0;
    for (const Term& k : terms_) s += k.coef * basis(k.f, k.w, t, m) * basis(k.g, k.v, tp, n);
    return s;
  }

  const std::vector<Term>& terms() const { return terms_; }

 private:
  static double basis(Fn f, double w, double t, int order) {
    // k-th derivative of cos(wt) is w^k cos(wt + k pi/2), likewise for sin.
    const double arg = w * t;
    const double c = std::cos(arg), s = std::sin(arg);
    double val;
    if (f == Fn::Cos) {
      const double cyc[4] = {c, -s, -c, s};
      val = cyc[order % 4];
    } else {
      const double cyc[4] = {s, c, -s, -c};
      val = cyc[order % 4];
    }
    return order == 0 ? val : val * std::pow(w, order);
  }

  std::vector<Term> terms_;
};

namespace detail {

using Fn = SeparableKernel::Fn;

// Adds weight * { AA c(t)c(t') + BB s(t)s(t') + AB/2 (c(t)s(t') + s(t)c(t')) }.
inline void add_mode_block(SeparableKernel& k, double weight, double w, double aa, double bb,
                           double ab) {
  k.add(weight * aa, Fn::Cos, w, Fn::Cos, w);
  k.add(weight * bb, Fn::Sin, w, Fn::Sin, w);
  k.add(weight * 0.5 * ab, Fn::Cos, w, Fn::Sin, w);
  k.add(weight * 0.5 * ab, Fn::Sin, w, Fn::Cos, w);
}

// Adds weight * { A0A1 (c0 c1' + c1 c0') + B0B1 (s0 s1' + s1 s0')
//               + A0B1 (c0 s1' + s1 c0') + B0A1 (s0 c1' + c1 s0') }.
inline void add_cross_block(SeparableKernel& k, double weight, const NormalModeBasis& b,
                            const ModeAmplitudeCorrelators& m) {
  const double w0 = b.omegaBar0, w1 = b.omegaBar1;
  k.add(weight * m.A0A1, Fn::Cos, w0, Fn::Cos, w1);
  k.add(weight * m.A0A1, Fn::Cos, w1, Fn::Cos, w0);
  k.add(weight * m.B0B1, Fn::Sin, w0, Fn::Sin, w1);
  k.add(weight * m.B0B1, Fn::Sin, w1, Fn::Sin, w0);
  k.add(weight * m.A0B1, Fn::Cos, w0, Fn::Sin, w1);
  k.add(weight * m.A0B1, Fn::Sin, w1, Fn::Cos, w0);
  k.add(weight * m.B0A1, Fn::Sin, w0, Fn::Cos, w1);
  k.add(weight * m.B0A1, Fn::Cos, w1, Fn::Sin, w0);
}

}  // namespace detail

/// F_x(t; t') = <{x(t'), x(t)}>/2.
inline SeparableKernel propagator_x(const NormalModeBasis& b, const ModeAmplitudeCorrelators& m) {
  const double c = b.cos_theta(), s = b.sin_theta();
  SeparableKernel k;
  detail::add_mode_block(k, c * c, b.omegaBar0, m.A0A0, m.B0B0, m.A0B0);
  detail::add_mode_block(k, s * s, b.omegaBar1, m.A1A1, m.B1B1, m.A1B1);
  detail::add_cross_block(k, 0.25 * b.sin2theta, b, m);
  return k;
}

/// F_q(t; t') = <{q(t'), q(t)}>/2.
inline SeparableKernel propagator_q(const NormalModeBasis& b, const ModeAmplitudeCorrelators& m) {
  const double c = b.cos_theta(), s = b.sin_theta();
  SeparableKernel k;
  detail::add_mode_block(k, s * s, b.omegaBar0, m.A0A0, m.B0B0, m.A0B0);
  detail::add_mode_block(k, c * c, b.omegaBar1, m.A1A1, m.B1B1, m.A1B1);
  detail::add_cross_block(k, -0.25 * b.sin2theta, b, m);
  return k;
}

/// F_xq(t; t') = <{x(t'), q(t)}>/2.
inline SeparableKernel propagator_xq(const NormalModeBasis& b, const ModeAmplitudeCorrelators& m) {
  using detail::Fn;
  const double c = b.cos_theta(), s = b.sin_theta();
  const double w0 = b.omegaBar0, w1 = b.omegaBar1;
  SeparableKernel k;
  detail::add_mode_block(k, 0.5 * b.sin2theta, w1, m.A1A1, m.B1B1, m.A1B1);
  detail::add_mode_block(k, -0.5 * b.sin2theta, w0, m.A0A0, m.B0B0, m.A0B0);
  const double hc = 0.5 * c * c, hs = -0.5 * s * s;
  k.add(hc * m.A0A1, Fn::Cos, w1, Fn::Cos, w0);
  k.add(hc * m.B0B1, Fn::Sin, w1, Fn::Sin, w0);
  k.add(hc * m.A0B1, Fn::Sin, w1, Fn::Cos, w0);
  k.add(hc * m.B0A1, Fn::Cos, w1, Fn::Sin, w0);
  k.add(hs * m.A0A1, Fn::Cos, w0, Fn::Cos, w1);
  k.add(hs * m.B0B1, Fn::Sin, w0, Fn::Sin, w1);
  k.add(hs * m.A0B1, Fn::Cos, w0, Fn::Sin, w1);
  k.add(hs * m.B0A1, Fn::Sin, w0, Fn::Cos, w1);
  return k;
}

inline double statistical_propagator_x(const NormalModeBasis& b, const ModeAmplitudeCorrelators& m,
                                       double t, double tp) {
  return propagator_x(b, m).eval(t, tp);
}
inline double statistical_propagator_q(const NormalModeBasis& b, const ModeAmplitudeCorrelators& m,
                                       double t, double tp) {
  return propagator_q(b, m).eval(t, tp);
}
inline double statistical_propagator_xq(const NormalModeBasis& b,
                                        const ModeAmplitudeCorrelators& m, double t, double tp) {
  return propagator_xq(b, m).eval(t, tp);
}
/// F_qx(t; t') = F_xq(t'; t).
inline double statistical_propagator_qx(const NormalModeBasis& b,
                                        const ModeAmplitudeCorrelators& m, double t, double tp) {
  return propagator_xq(b, m).eval(tp, t);
}

/// F_x in average time tau = (t+t')/2 and difference dt = t - t'.
inline double statistical_propagator_x_average_time(const NormalModeBasis& b,
                                                    const ModeAmplitudeCorrelators& m, double tau,
                                                    double dt) {
  const double c = b.cos_theta(), s = b.sin_theta();
  const double w0 = b.omegaBar0, w1 = b.omegaBar1;
  const double wMean = 0.5 * (w0 + w1), wDiff = w0 - w1;
  double f = 0.5 * c * c *
             (std::cos(w0 * dt) * (m.A0A0 + m.B0B0) + std::cos(2 * w0 * tau) * (m.A0A0 - m.B0B0) +
              std::sin(2 * w0 * tau) * m.A0B0);
  f += 0.5 * s * s *
       (std::cos(w1 * dt) * (m.A1A1 + m.B1B1) + std::cos(2 * w1 * tau) * (m.A1A1 - m.B1B1) +
        std::sin(2 * w1 * tau) * m.A1B1);
  f += 0.25 * b.sin2theta *
       (std::cos(wDiff * tau) * std::cos(wMean * dt) * (m.A0A1 + m.B0B1) +
        std::cos(2 * wMean * tau) * std::cos(wDiff * dt / 2) * (m.A0A1 - m.B0B1) +
        std::sin(wDiff * tau) * std::cos(wMean * dt) * (m.B0A1 - m.A0B1) +
        std::sin(2 * wMean * tau) * std::cos(wDiff * dt / 2) * (m.B0A1 + m.A0B1));
  return f;
}

/// A propagator and its derivatives at coinciding times.
struct EqualTimeDerivatives {
  double value = 0.0;  // F(t; t)
  double dt = 0.0;     // d/dt F(t; t') at t' = t
  double dtp = 0.0;    // d/dt' F(t; t') at t' = t
  double dtdtp = 0.0;  // d^2/dt dt' F(t; t') at t' = t
};

inline EqualTimeDerivatives equal_time(const SeparableKernel& k, double t) {
  return EqualTimeDerivatives{k.eval(t, t), k.eval(t, t, 1, 0), k.eval(t, t, 0, 1),
                              k.eval(t, t, 1, 1)};
}

/// Delta^2 = 4 [F d_t d_t' F - (d_t F)^2] at t = t'.
inline PhaseSpaceArea delta_from_propagator(const EqualTimeDerivatives& d) {
  if (!(d.value > 0.0) || !(d.dtdtp > 0.0))
    throw UnphysicalState("propagator gives non-positive equal-time moments");
  return area_from_delta_squared(4.0 * (d.value * d.dtdtp - d.dt * d.dt));
}

/// Precomputed closed-form solution for one initial condition.
class AnalyticSolution {
 public:
  AnalyticSolution(double omega0, double omega1, double lambda1, const InitialConditions10& ic)
      : basis_(diagonalize(omega0, omega1, lambda1)),
        amps_(amplitudes_from_ics(basis_, ic)),
        fx_(propagator_x(basis_, amps_)),
        fq_(propagator_q(basis_, amps_)),
        fxq_(propagator_xq(basis_, amps_)) {}

  const NormalModeBasis& basis() const { return basis_; }
  const ModeAmplitudeCorrelators& amplitudes() const { return amps_; }
  const SeparableKernel& fx() const { return fx_; }
  const SeparableKernel& fq() const { return fq_; }
  const SeparableKernel& fxq() const { return fxq_; }

  PhaseSpaceArea system_delta(double t) const { return delta_from_propagator(equal_time(fx_, t)); }
  PhaseSpaceArea environment_delta(double t) const {
    return delta_from_propagator(equal_time(fq_, t));
  }

  /// Covariance over (x, p_x, q, p_q) at time t, read off the propagators.
  Eigen::Matrix4d covariance(double t) const {
    const EqualTimeDerivatives x = equal_time(fx_, t), q = equal_time(fq_, t),
                               xq = equal_time(fxq_, t);
    InitialConditions10 c;
    c.xx = x.value;
    c.pxpx = x.dtdtp;
    c.xpx = 2.0 * x.dt;
    c.qq = q.value;
    c.pqpq = q.dtdtp;
    c.qpq = 2.0 * q.dt;
    c.xq = xq.value;
    c.xpq = xq.dt;
    c.qpx = xq.dtp;
    c.pxpq = xq.dtdtp;
    return covariance_from_ics(c);
  }

 private:
  NormalModeBasis basis_;
  ModeAmplitudeCorrelators amps_;
  SeparableKernel fx_, fq_, fxq_;
};

}  // namespace decoherence::analytic
