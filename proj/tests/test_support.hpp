#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <limits>
#include <random>
#include <vector>

#include "decoherence/decoherence.hpp"

namespace testing_support {

/// Physical one-mode triple with area delta.
inline decoherence::CorrelatorTriple random_triple(std::mt19937_64& rng, double maxDelta = 20.0) {
  std::uniform_real_distribution<double> xxD(0.05, 5.0), dD(1.0, maxDelta), xpD(-2.0, 2.0);
  const double xx = xxD(rng), delta = dD(rng), xp = xpD(rng);
  return decoherence::CorrelatorTriple{xx, (0.25 * delta * delta + xp * xp) / xx, xp};
}

/// Random symplectic matrix exp(J H) for a random symmetric H.
inline Eigen::MatrixXd random_symplectic(std::mt19937_64& rng, Eigen::Index modes, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd h(2 * modes, 2 * modes);
  for (Eigen::Index i = 0; i < h.rows(); ++i)
    for (Eigen::Index j = 0; j <= i; ++j) h(i, j) = h(j, i) = g(rng);
  const Eigen::MatrixXd jh = decoherence::symplectic_form(modes) * h;
  return jh.exp();
}

/// Physical covariance S diag(nu) S^T with symplectic eigenvalues nu >= 1/2.
inline Eigen::MatrixXd random_covariance(std::mt19937_64& rng, Eigen::Index modes,
                                         double scale = 0.4, double maxNu = 3.0,
                                         bool pure = false) {
  std::uniform_real_distribution<double> nuD(0.5, maxNu);
  Eigen::VectorXd d(2 * modes);
  for (Eigen::Index k = 0; k < modes; ++k) d[2 * k] = d[2 * k + 1] = pure ? 0.5 : nuD(rng);
  const Eigen::MatrixXd s = random_symplectic(rng, modes, scale);
  Eigen::MatrixXd c = s * d.asDiagonal() * s.transpose();
  return 0.5 * (c + c.transpose());
}

/// Smallest value after the series first exceeds `rise`; +inf if it never does.
inline double min_after_rise(const std::vector<double>& v, double rise) {
  double m = std::numeric_limits<double>::infinity();
  bool risen = false;
  for (double x : v) {
    risen = risen || x > rise;
    if (risen) m = std::min(m, x);
  }
  return m;
}

/// Mean over samples with t > t_end / 2.
inline double second_half_mean(const std::vector<double>& t, const std::vector<double>& v) {
  const double half = 0.5 * t.back();
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] > half) {
      sum += v[i];
      ++n;
    }
  return sum / static_cast<double>(n);
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing_support
