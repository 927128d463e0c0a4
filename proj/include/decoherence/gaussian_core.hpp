#pragma once

// Single-mode Gaussian states: coefficient/correlator maps, phase-space area,
// entropy and thermal reference states. Units: hbar = k_B = 1, rescaled
// coordinates (unit mass).

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>

#include "decoherence/errors.hpp"

namespace decoherence {

/// Equal-time second moments of one mode: <x^2>, <p^2>, <(xp+px)/2>.
struct CorrelatorTriple {
  double xx = 0.0;
  double pp = 0.0;
  double xp = 0.0;

  double determinant() const { return xx * pp - xp * xp; }
};

/// rho(x, y) = N exp(-a x^2 - conj(a) y^2 + 2 c x y).
struct GaussianCoeffs1D {
  std::complex<double> a{0.0, 0.0};
  double c = 0.0;
  double logNorm = 0.0;
};

/// Phase-space area Delta >= 1. `clamped` records that the raw value dipped
/// into the tolerated band just below 1 and was set to 1.
struct PhaseSpaceArea {
  double delta = 1.0;
  bool clamped = false;
};

namespace tolerance {
inline constexpr double kDeltaSquaredClampBand = 1e-6;
inline constexpr double kEntropyZeroBand = 1e-12;
}  // namespace tolerance

/// Inverse temperature and mode frequency. beta = +inf is zero temperature.
struct ThermalSpec {
  double beta = std::numeric_limits<double>::infinity();
  double omega = 1.0;

  static ThermalSpec zero_temperature(double omega) {
    return ThermalSpec{std::numeric_limits<double>::infinity(), omega};
  }

  bool is_zero_temperature() const { return std::isinf(beta); }

  /// coth(beta*omega/2); exactly 1 at zero temperature.
  double coth_factor() const {
    if (is_zero_temperature()) return 1.0;
    return 1.0 / std::tanh(0.5 * beta * omega);
  }

  void validate() const {
    if (!(omega > 0.0) || !std::isfinite(omega))
      throw InvalidParameters("thermal spec: omega must be positive and finite, got " +
                              std::to_string(omega));
    if (!(beta > 0.0))
      throw InvalidParameters("thermal spec: beta must be positive, got " + std::to_string(beta));
  }
};

inline double coth_factor(double beta, double omega) { return ThermalSpec{beta, omega}.coth_factor(); }

/// Applies the unphysical-area policy to a raw Delta^2.
inline PhaseSpaceArea area_from_delta_squared(double delta2) {
  if (!std::isfinite(delta2))
    throw UnphysicalState("phase-space area is not finite");
  if (delta2 >= 1.0) return PhaseSpaceArea{std::sqrt(delta2), false};
  if (delta2 >= 1.0 - tolerance::kDeltaSquaredClampBand) return PhaseSpaceArea{1.0, true};
  throw UnphysicalState("phase-space area squared " + std::to_string(delta2) +
                        " violates the uncertainty bound");
}

inline PhaseSpaceArea phase_space_area(const CorrelatorTriple& c) {
  if (!(c.xx > 0.0) || !(c.pp > 0.0))
    throw UnphysicalState("correlators need <x^2> > 0 and <p^2> > 0");
  return area_from_delta_squared(4.0 * c.determinant());
}

inline double entropy_from_delta(double delta) {
  if (delta < 1.0 + tolerance::kEntropyZeroBand) return 0.0;
  const double up = 0.5 * (delta + 1.0);
  const double dn = 0.5 * (delta - 1.0);
  return up * std::log(up) - dn * std::log(dn);
}

inline double entropy_from_delta(const PhaseSpaceArea& d) { return entropy_from_delta(d.delta); }

/// Mean occupation number of the equivalent thermal mode.
inline double particle_number(const PhaseSpaceArea& d) { return 0.5 * (d.delta - 1.0); }

inline CorrelatorTriple coeffs_to_correlators(const GaussianCoeffs1D& g) {
  const double aR = g.a.real();
  const double aI = g.a.imag();
  const double width = aR - g.c;
  if (!(width > 0.0))
    throw DegenerateCoeffs("density matrix not normalizable: Re(a) - c = " + std::to_string(width));
  CorrelatorTriple out;
  out.xx = 1.0 / (4.0 * width);
  out.xp = -aI / (2.0 * width);
  out.pp = (std::norm(g.a) - g.c * g.c) / width;
  return out;
}

/// Log of the trace normalization for Re(a) - c > 0.
inline double log_norm_1d(double aR, double c) {
  return 0.5 * std::log(2.0 * (aR - c) / std::numbers::pi);
}

inline GaussianCoeffs1D correlators_to_coeffs(const CorrelatorTriple& c) {
  const PhaseSpaceArea area = phase_space_area(c);
  const double d2 = area.delta * area.delta;
  GaussianCoeffs1D g;
  const double aR = (d2 + 1.0) / (8.0 * c.xx);
  const double aI = -c.xp / (2.0 * c.xx);
  g.a = {aR, aI};
  g.c = (d2 - 1.0) / (8.0 * c.xx);
  g.logNorm = log_norm_1d(aR, g.c);
  return g;
}

/// F(t; t') = cos(omega (t - t')) coth(beta omega / 2) / (2 omega).
inline double free_thermal_statistical_propagator(const ThermalSpec& s, double t, double tp) {
  return std::cos(s.omega * (t - tp)) * s.coth_factor() / (2.0 * s.omega);
}

inline CorrelatorTriple thermal_correlators(const ThermalSpec& s) {
  const double k = s.coth_factor();
  return CorrelatorTriple{k / (2.0 * s.omega), 0.5 * s.omega * k, 0.0};
}

inline GaussianCoeffs1D thermal_density_matrix(const ThermalSpec& s) {
  s.validate();
  return correlators_to_coeffs(thermal_correlators(s));
}

/// S_SE = S_total - S_S - S_E; negative when correlations carry entropy.
inline double correlation_entropy(double s_total, double s_sys, double s_env) {
  return s_total - s_sys - s_env;
}

}  // namespace decoherence
