#pragma once

// Exact Gaussian dynamics of one system oscillator bilinearly coupled to N
// environment oscillators. The state is the full symmetrized covariance over
// (x, p_x, q_1, p_q1, ..., q_N, p_qN).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "decoherence/errors.hpp"
#include "decoherence/gaussian_core.hpp"
#include "decoherence/ode_integrator.hpp"

namespace decoherence {

struct ModelParams {
  double omega0 = 1.0;
  std::vector<double> omegas;
  std::vector<double> lambdas;

  static ModelParams uniform_coupling(double omega0, std::vector<double> omegas, double lambda) {
    ModelParams p;
    p.omega0 = omega0;
    p.lambdas.assign(omegas.size(), lambda);
    p.omegas = std::move(omegas);
    p.validate();
    return p;
  }

  std::size_t env_count() const { return omegas.size(); }
  std::size_t dim() const { return 2 * omegas.size() + 2; }

  /// (N+1)x(N+1) matrix of squared frequencies with the couplings in row and
  /// column 0.
  Eigen::MatrixXd frequency_matrix() const {
    const auto n = static_cast<Eigen::Index>(env_count());
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n + 1, n + 1);
    w(0, 0) = omega0 * omega0;
    for (Eigen::Index i = 0; i < n; ++i) {
      w(i + 1, i + 1) = omegas[i] * omegas[i];
      w(0, i + 1) = w(i + 1, 0) = lambdas[i];
    }
    return w;
  }

  void validate() const {
    if (!(omega0 > 0.0) || !std::isfinite(omega0))
      throw InvalidParameters("system frequency must be positive");
    if (lambdas.size() != omegas.size())
      throw DimensionMismatch("need one coupling per environment oscillator (" +
                              std::to_string(omegas.size()) + " frequencies, " +
                              std::to_string(lambdas.size()) + " couplings)");
    for (double w : omegas)
      if (!(w > 0.0) || !std::isfinite(w))
        throw InvalidParameters("environment frequencies must be positive");
    for (double l : lambdas)
      if (!std::isfinite(l)) throw InvalidParameters("couplings must be finite");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(frequency_matrix(), Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw InvertedOscillator("frequency matrix is not positive definite (lowest eigenvalue " +
                               std::to_string(es.eigenvalues().minCoeff()) + ")");
  }

  /// Fastest frequency in the problem, bare or normal-mode.
  double max_frequency() const {
    double m = omega0;
    for (double w : omegas) m = std::max(m, w);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(frequency_matrix(), Eigen::EigenvaluesOnly);
    return std::max(m, std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())));
  }
};

struct CorrelatorState {
  Eigen::MatrixXd cov;
  double time = 0.0;
};

namespace index {
inline constexpr Eigen::Index x = 0;
inline constexpr Eigen::Index px = 1;
/// Environment oscillator n counts from 0 here.
inline constexpr Eigen::Index q(std::size_t n) { return 2 + 2 * static_cast<Eigen::Index>(n); }
inline constexpr Eigen::Index pq(std::size_t n) { return 3 + 2 * static_cast<Eigen::Index>(n); }
}  // namespace index

/// Mode 0 is the system, mode n >= 1 environment oscillator n.
inline CorrelatorTriple mode_triple(const Eigen::MatrixXd& cov, std::size_t mode) {
  const Eigen::Index i = 2 * static_cast<Eigen::Index>(mode);
  if (i + 1 >= cov.rows()) throw DimensionMismatch("mode index out of range");
  return CorrelatorTriple{cov(i, i), cov(i + 1, i + 1), cov(i, i + 1)};
}

inline PhaseSpaceArea subsystem_delta(const CorrelatorState& s, std::size_t mode) {
  return phase_space_area(mode_triple(s.cov, mode));
}

/// Linear flow matrix of z' = A z.
inline Eigen::MatrixXd flow_matrix(const ModelParams& p) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  a(index::x, index::px) = 1.0;
  a(index::px, index::x) = -p.omega0 * p.omega0;
  for (std::size_t n = 0; n < p.env_count(); ++n) {
    a(index::px, index::q(n)) = -p.lambdas[n];
    a(index::q(n), index::pq(n)) = 1.0;
    a(index::pq(n), index::q(n)) = -p.omegas[n] * p.omegas[n];
    a(index::pq(n), index::x) = -p.lambdas[n];
  }
  return a;
}

namespace detail {

inline void check_dims(const ModelParams& p, Eigen::Index rows, Eigen::Index cols) {
  const auto d = static_cast<Eigen::Index>(p.dim());
  if (rows != d || cols != d)
    throw DimensionMismatch("covariance is " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", model needs " + std::to_string(d) + "x" + std::to_string(d));
}

// out = A cov + cov A^T using the sparsity of A. `bt` is scratch of the same
// shape and receives cov A^T, whose column i is sum_k A(i,k) cov(:,k).
template <class In, class Out>
void structured_rhs(const ModelParams& p, const In& cov, Out& out, Eigen::MatrixXd& bt) {
  const Eigen::Index d = cov.rows();
  bt.resize(d, d);
  const double w0sq = p.omega0 * p.omega0;
  bt.col(index::x) = cov.col(index::px);
  bt.col(index::px) = -w0sq * cov.col(index::x);
  for (std::size_t n = 0; n < p.env_count(); ++n) {
    const Eigen::Index qn = index::q(n), pn = index::pq(n);
    bt.col(index::px) -= p.lambdas[n] * cov.col(qn);
    bt.col(qn) = cov.col(pn);
    bt.col(pn) = -(p.omegas[n] * p.omegas[n]) * cov.col(qn) - p.lambdas[n] * cov.col(index::x);
  }
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) {
      const double v = bt(i, j) + bt(j, i);
      out(i, j) = v;
      out(j, i) = v;
    }
}

}  // namespace detail

/// d(cov)/dt through the sparse flow matrix.
inline Eigen::MatrixXd exact_rhs(const ModelParams& p, const CorrelatorState& s) {
  detail::check_dims(p, s.cov.rows(), s.cov.cols());
  Eigen::MatrixXd out(s.cov.rows(), s.cov.cols()), scratch;
  detail::structured_rhs(p, s.cov, out, scratch);
  return out;
}

/// d(cov)/dt = A cov + cov A^T with a dense A.
inline Eigen::MatrixXd exact_rhs_dense(const ModelParams& p, const CorrelatorState& s) {
  detail::check_dims(p, s.cov.rows(), s.cov.cols());
  const Eigen::MatrixXd a = flow_matrix(p);
  return a * s.cov + s.cov * a.transpose();
}

/// d(cov)/dt written out correlator by correlator, one block per equation
/// family (x-x, p-p, x-p for the system, each environment mode, system-mode
/// cross terms and mode-mode cross terms).
inline Eigen::MatrixXd exact_rhs_families(const ModelParams& p, const CorrelatorState& s) {
  detail::check_dims(p, s.cov.rows(), s.cov.cols());
  const Eigen::MatrixXd& c = s.cov;
  const std::size_t nEnv = p.env_count();
  const double w0sq = p.omega0 * p.omega0;
  using index::px;
  using index::x;
  auto q = [](std::size_t n) { return index::q(n); };
  auto pq = [](std::size_t n) { return index::pq(n); };
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(c.rows(), c.cols());
  auto set = [&d](Eigen::Index i, Eigen::Index j, double v) { d(i, j) = d(j, i) = v; };

  double sumLamPxQ = 0.0, sumLamXQ = 0.0;
  for (std::size_t n = 0; n < nEnv; ++n) {
    sumLamPxQ += p.lambdas[n] * c(px, q(n));
    sumLamXQ += p.lambdas[n] * c(x, q(n));
  }
  set(x, x, 2.0 * c(x, px));
  set(px, px, -2.0 * w0sq * c(x, px) - 2.0 * sumLamPxQ);
  set(x, px, -w0sq * c(x, x) + c(px, px) - sumLamXQ);

  for (std::size_t n = 0; n < nEnv; ++n) {
    const double wn2 = p.omegas[n] * p.omegas[n];
    const double ln = p.lambdas[n];
    set(q(n), q(n), 2.0 * c(q(n), pq(n)));
    set(pq(n), pq(n), -2.0 * wn2 * c(q(n), pq(n)) - 2.0 * ln * c(pq(n), x));
    set(q(n), pq(n), -wn2 * c(q(n), q(n)) + c(pq(n), pq(n)) - ln * c(x, q(n)));
    set(x, q(n), c(px, q(n)) + c(x, pq(n)));

    double sumLamQQ = 0.0, sumLamQP = 0.0;
    for (std::size_t i = 0; i < nEnv; ++i) {
      sumLamQQ += p.lambdas[i] * c(q(i), q(n));
      if (i != n) sumLamQP += p.lambdas[i] * c(q(i), pq(n));
    }
    set(px, q(n), c(px, pq(n)) - w0sq * c(x, q(n)) - sumLamQQ);
    set(x, pq(n), c(px, pq(n)) - wn2 * c(x, q(n)) - ln * c(x, x));
    set(px, pq(n), -w0sq * c(x, pq(n)) - wn2 * c(px, q(n)) - ln * c(x, px) -
                       ln * c(q(n), pq(n)) - sumLamQP);
  }
  for (std::size_t n = 0; n < nEnv; ++n)
    for (std::size_t m = 0; m < nEnv; ++m) {
      if (m == n) continue;
      const double wn2 = p.omegas[n] * p.omegas[n], wm2 = p.omegas[m] * p.omegas[m];
      if (m > n) {
        set(q(n), q(m), c(q(n), pq(m)) + c(q(m), pq(n)));
        set(pq(n), pq(m), -wn2 * c(q(n), pq(m)) - wm2 * c(q(m), pq(n)) -
                              p.lambdas[n] * c(x, pq(m)) - p.lambdas[m] * c(x, pq(n)));
      }
      set(q(n), pq(m), c(pq(n), pq(m)) - wm2 * c(q(n), q(m)) - p.lambdas[m] * c(x, q(n)));
    }
  return d;
}

/// System in its ground state, environment oscillator n thermal at beta, no
/// cross correlations.
inline CorrelatorState pure_thermal_ic(const ModelParams& p, double beta) {
  p.validate();
  const auto d = static_cast<Eigen::Index>(p.dim());
  CorrelatorState s;
  s.cov = Eigen::MatrixXd::Zero(d, d);
  s.cov(index::x, index::x) = 1.0 / (2.0 * p.omega0);
  s.cov(index::px, index::px) = 0.5 * p.omega0;
  for (std::size_t n = 0; n < p.env_count(); ++n) {
    const CorrelatorTriple t = thermal_correlators(ThermalSpec{beta, p.omegas[n]});
    s.cov(index::q(n), index::q(n)) = t.xx;
    s.cov(index::pq(n), index::pq(n)) = t.pp;
  }
  return s;
}

inline double energy(const ModelParams& p, const Eigen::MatrixXd& cov) {
  double e = 0.5 * cov(index::px, index::px) + 0.5 * p.omega0 * p.omega0 * cov(index::x, index::x);
  for (std::size_t n = 0; n < p.env_count(); ++n) {
    e += 0.5 * cov(index::pq(n), index::pq(n)) +
         0.5 * p.omegas[n] * p.omegas[n] * cov(index::q(n), index::q(n)) +
         p.lambdas[n] * cov(index::x, index::q(n));
  }
  return e;
}

inline double energy(const ModelParams& p, const CorrelatorState& s) {
  detail::check_dims(p, s.cov.rows(), s.cov.cols());
  return energy(p, s.cov);
}

/// Symplectic form for the (x, p) pair ordering.
inline Eigen::MatrixXd symplectic_form(Eigen::Index modes) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(2 * modes, 2 * modes);
  for (Eigen::Index k = 0; k < modes; ++k) {
    j(2 * k, 2 * k + 1) = 1.0;
    j(2 * k + 1, 2 * k) = -1.0;
  }
  return j;
}

/// Ascending symplectic eigenvalues, one per mode. Requires a positive
/// definite covariance.
inline std::vector<double> symplectic_eigenvalues(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw UnphysicalState("covariance matrix is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::MatrixXd m = l.transpose() * symplectic_form(cov.rows() / 2) * l;
  const Eigen::MatrixXd m2 = -(m * m);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m2 + m2.transpose()),
                                                    Eigen::EigenvaluesOnly);
  std::vector<double> nu;
  const auto& ev = es.eigenvalues();
  for (Eigen::Index k = 0; k + 1 < ev.size(); k += 2)
    nu.push_back(std::sqrt(std::max(0.0, 0.5 * (ev[k] + ev[k + 1]))));
  return nu;
}

inline double log_determinant(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw UnphysicalState("covariance matrix is not positive definite");
  const Eigen::MatrixXd& l = llt.matrixLLT();
  double s = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

/// True when every symplectic eigenvalue is at least 1/2 - tol.
inline bool is_physical(const Eigen::MatrixXd& cov, double tol = 1e-9) {
  try {
    for (double v : symplectic_eigenvalues(cov))
      if (v < 0.5 - tol) return false;
  } catch (const UnphysicalState&) {
    return false;
  }
  return true;
}

/// Default options: module tolerances and a step ceiling of 0.05 / omega_max.
inline ode::IntegratorOpts default_integrator_opts(const ModelParams& p,
                                                   std::vector<double> outputTimes) {
  ode::IntegratorOpts o;
  o.maxStep = 0.05 / p.max_frequency();
  o.outputTimes = std::move(outputTimes);
  return o;
}

/// Integrates the covariance and hands each output sample to
/// `observer(index, time, cov)`; returning false stops the run.
template <class Observer>
ode::IntegratorStats evolve_observed(const ModelParams& p, const CorrelatorState& s0,
                                     const ode::IntegratorOpts& opts, Observer&& observer) {
  p.validate();
  detail::check_dims(p, s0.cov.rows(), s0.cov.cols());
  if (!opts.outputTimes.empty() && opts.outputTimes.front() < s0.time)
    throw InvalidParameters("output times precede the initial state");
  const Eigen::Index d = s0.cov.rows();
  Eigen::MatrixXd scratch(d, d);
  ode::Rhs rhs = [&p, d, &scratch](double, const ode::State& y, ode::State& dy) {
    dy.resize(y.size());
    Eigen::Map<const Eigen::MatrixXd> c(y.data(), d, d);
    Eigen::Map<Eigen::MatrixXd> out(dy.data(), d, d);
    detail::structured_rhs(p, c, out, scratch);
  };
  ode::State y0 = Eigen::Map<const ode::State>(s0.cov.data(), d * d);
  return ode::integrate_observed(rhs, s0.time, y0, opts,
                                 [&](std::size_t i, double t, const ode::State& y) {
                                   Eigen::Map<const Eigen::MatrixXd> c(y.data(), d, d);
                                   return observer(i, t, c);
                                 });
}

/// Full trajectory at opts.outputTimes. Memory grows as samples x dim^2; use
/// evolve_observed for long runs with many modes.
inline std::vector<CorrelatorState> evolve(const ModelParams& p, const CorrelatorState& s0,
                                           const ode::IntegratorOpts& opts) {
  std::vector<CorrelatorState> out;
  out.reserve(opts.outputTimes.size());
  evolve_observed(p, s0, opts, [&](std::size_t, double t, const auto& c) {
    out.push_back(CorrelatorState{Eigen::MatrixXd(c), t});
    return true;
  });
  return out;
}

/// Convenience: samples at `count` evenly spaced times up to t_end.
inline std::vector<CorrelatorState> evolve(const ModelParams& p, const CorrelatorState& s0,
                                           double tEnd, std::size_t count) {
  if (tEnd < s0.time) throw InvalidParameters("t_end precedes the initial state");
  return evolve(p, s0, default_integrator_opts(p, ode::linspace(s0.time, tEnd, count)));
}

}  // namespace decoherence
