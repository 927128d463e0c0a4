#pragma once

// Scenario runner: presets for every figure parameter set, trajectories by
// all applicable methods on a shared grid, decoherence rate, thermal
// baseline, breakdown detection, CSV and manifest output.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "decoherence/analytic_n1.hpp"
#include "decoherence/density_matrix_n1.hpp"
#include "decoherence/errors.hpp"
#include "decoherence/exact_evolution.hpp"
#include "decoherence/gaussian_core.hpp"
#include "decoherence/master_equation.hpp"
#include "decoherence/ode_integrator.hpp"
#include "json.hpp"

namespace decoherence::experiments {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum class IcKind { PureThermal, TimeTranslationInvariant };
enum class Method { Exact, AnalyticN1, MasterCorrelator, MasterCoeff, DensityMatrixN1 };

inline const std::array<Method, 5>& all_methods() {
  static const std::array<Method, 5> m{Method::Exact, Method::AnalyticN1, Method::MasterCorrelator,
                                       Method::MasterCoeff, Method::DensityMatrixN1};
  return m;
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Exact: return "exact";
    case Method::AnalyticN1: return "analytic-n1";
    case Method::MasterCorrelator: return "master-correlator";
    case Method::MasterCoeff: return "master-coeff";
    case Method::DensityMatrixN1: return "density-matrix-n1";
  }
  return "?";
}

inline std::string to_string(IcKind k) {
  return k == IcKind::PureThermal ? "pure-thermal" : "time-translation-invariant";
}

inline Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline IcKind parse_ic(const std::string& s) {
  if (s == "pure-thermal") return IcKind::PureThermal;
  if (s == "time-translation-invariant") return IcKind::TimeTranslationInvariant;
  throw ConfigError("unknown initial condition '" + s + "'");
}

/// Uniform draws on [lo, hi] from a 64-bit Mersenne Twister, 53 random bits
/// per draw.
inline std::vector<double> draw_uniform(double lo, double hi, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> out(count);
  for (auto& v : out) {
    const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    v = lo + (hi - lo) * u;
  }
  return out;
}

/// Environment spectrum, in units of omega0.
struct SpectrumRecipe {
  enum class Kind { Explicit, Uniform, Progression };
  Kind kind = Kind::Explicit;
  std::vector<double> ratios;  // Explicit: omega_n / omega0
  double lo = 0.0, hi = 0.0;   // Uniform interval
  double offset = 1.0, step = 0.0;  // Progression: offset + n * step, n = 1..count
  std::size_t count = 0;
  std::uint64_t seed = 0;

  std::vector<double> ratios_drawn() const {
    switch (kind) {
      case Kind::Explicit: return ratios;
      case Kind::Uniform: return draw_uniform(lo, hi, count, seed);
      case Kind::Progression: {
        std::vector<double> r(count);
        for (std::size_t n = 0; n < count; ++n) r[n] = offset + static_cast<double>(n + 1) * step;
        return r;
      }
    }
    return {};
  }

  std::size_t size() const { return kind == Kind::Explicit ? ratios.size() : count; }
  bool seeded() const { return kind == Kind::Uniform; }

  std::string describe() const {
    std::ostringstream os;
    os.precision(12);
    switch (kind) {
      case Kind::Explicit: os << "explicit"; break;
      case Kind::Uniform: os << "uniform[" << lo << "," << hi << "] count=" << count << " seed=" << seed; break;
      case Kind::Progression: os << "progression " << offset << "+n*" << step << " count=" << count; break;
    }
    return os.str();
  }
};

struct Scenario {
  std::string name;
  std::string description;
  double omega0 = 1.0;
  SpectrumRecipe spectrum;
  double coupling = 0.0;             // lambda / omega0^2 for every mode
  std::vector<double> couplings;     // optional per-mode lambda_n / omega0^2
  double betaOmega0 = std::numeric_limits<double>::infinity();
  bool betaImplied = false;          // environment temperature fixed by the initial state
  IcKind ic = IcKind::PureThermal;
  std::vector<Method> methods;
  double tEnd = 50.0;                // in units of 1/omega0
  std::size_t sampleCount = 1001;
  double rateWindow = 0.0;           // 0: one system period
  double relTol = 1e-10;
  double absTol = 1e-12;
  /// Tighter absolute tolerance for the covariance run; the smallest
  /// covariance entries otherwise limit det(cov) conservation for N=50.
  double exactAbsTol = 1e-13;
  double exactRelTol = 1e-10;

  bool has(Method m) const { return std::find(methods.begin(), methods.end(), m) != methods.end(); }

  double beta() const {
    if (betaImplied) {
      const auto r = spectrum.ratios_drawn();
      if (r.size() != 1) throw ConfigError("implied temperature needs one environment oscillator");
      return analytic::implied_environment_beta(omega0, r[0] * omega0);
    }
    return betaOmega0 / omega0;
  }

  ModelParams build_params() const {
    ModelParams p;
    p.omega0 = omega0;
    for (double r : spectrum.ratios_drawn()) p.omegas.push_back(r * omega0);
    if (!couplings.empty()) {
      if (couplings.size() != p.omegas.size())
        throw ConfigError("couplings list length does not match the number of modes");
      for (double c : couplings) p.lambdas.push_back(c * omega0 * omega0);
    } else {
      p.lambdas.assign(p.omegas.size(), coupling * omega0 * omega0);
    }
    p.validate();
    return p;
  }

  std::vector<double> times() const { return ode::linspace(0.0, tEnd / omega0, sampleCount); }

  void validate() const {
    if (methods.empty()) throw ConfigError("scenario '" + name + "' requests no methods");
    if (!(omega0 > 0.0)) throw ConfigError("omega0 must be positive");
    if (!(tEnd > 0.0)) throw ConfigError("t_end must be positive");
    if (sampleCount < 2) throw ConfigError("need at least two samples");
    if (!betaImplied && !(betaOmega0 > 0.0)) throw ConfigError("beta must be positive");
    if (spectrum.size() == 0) throw ConfigError("environment has no oscillators");
    if (spectrum.kind == SpectrumRecipe::Kind::Uniform && !(spectrum.hi >= spectrum.lo && spectrum.lo > 0.0))
      throw ConfigError("uniform spectrum needs 0 < lo <= hi");
    const bool n1 = spectrum.size() == 1;
    if ((has(Method::AnalyticN1) || has(Method::DensityMatrixN1)) && !n1)
      throw ConfigError("analytic-n1 and density-matrix-n1 need exactly one environment oscillator");
    if (ic == IcKind::TimeTranslationInvariant) {
      if (!n1) throw ConfigError("time-translation-invariant state needs one environment oscillator");
      if (has(Method::MasterCorrelator) || has(Method::MasterCoeff))
        throw EntangledInitialState(
            "master-equation methods assume an uncorrelated initial state; the "
            "time-translation-invariant state is entangled");
    }
    if (betaImplied && ic != IcKind::TimeTranslationInvariant)
      throw ConfigError("implied temperature only applies to the time-translation-invariant state");
    build_params();
  }
};

struct ThermalBaseline {
  double delta = 1.0;
  double entropy = 0.0;
};

inline ThermalBaseline thermal_baseline(double beta, double omega0) {
  ThermalSpec s{beta, omega0};
  s.validate();
  const double d = s.coth_factor();
  return ThermalBaseline{d, entropy_from_delta(d)};
}

/// Gamma = -dDelta/dt / Delta by three-point differences, then a centred
/// moving average of width `window`. `omegaMax` is the fastest normal-mode
/// frequency; sampling must give at least 20 points per 2 pi / omegaMax.
inline std::vector<double> decoherence_rate(const std::vector<double>& t,
                                            const std::vector<double>& delta, double window,
                                            double omegaMax) {
  const std::size_t n = t.size();
  if (delta.size() != n) throw DimensionMismatch("time and Delta series differ in length");
  if (n < 3) throw InsufficientSampling("need at least three samples");
  const double maxDt = 2.0 * std::numbers::pi / omegaMax / 20.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1])) throw InvalidParameters("sample times must increase");
    if (t[i] - t[i - 1] > maxDt * (1.0 + 1e-12))
      throw InsufficientSampling("sample spacing " + std::to_string(t[i] - t[i - 1]) +
                                 " exceeds 1/20 of the fastest period");
  }
  // Derivative of the quadratic through three neighbouring points at the
  // middle one (or an end one).
  auto deriv3 = [&](std::size_t a, std::size_t b, std::size_t c, std::size_t at) {
    const double x0 = t[a], x1 = t[b], x2 = t[c], x = t[at];
    const double l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
    const double l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
    const double l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    return l0 * delta[a] + l1 * delta[b] + l2 * delta[c];
  };
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d;
    if (i == 0) d = deriv3(0, 1, 2, 0);
    else if (i + 1 == n) d = deriv3(n - 3, n - 2, n - 1, n - 1);
    else d = deriv3(i - 1, i, i + 1, i);
    raw[i] = -d / delta[i];
  }
  if (!(window > 0.0)) return raw;
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + raw[i];
  std::vector<double> out(n);
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (t[lo] < t[i] - 0.5 * window) ++lo;
    while (hi < n && t[hi] <= t[i] + 0.5 * window) ++hi;
    out[i] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
  }
  return out;
}

/// First sample where Delta^2 < 1 - 1e-6 or S > S_th + max(0.5, S_th).
/// Non-finite samples count as a crossing.
inline std::optional<std::size_t> breakdown_index(const std::vector<double>& delta2,
                                                  const std::vector<double>& entropy,
                                                  double sThermal) {
  const double limit = sThermal + std::max(0.5, sThermal);
  for (std::size_t i = 0; i < delta2.size(); ++i) {
    if (!std::isfinite(delta2[i]) || delta2[i] < 1.0 - tolerance::kDeltaSquaredClampBand) return i;
    if (std::isfinite(entropy[i]) && entropy[i] > limit) return i;
  }
  return std::nullopt;
}

struct EntropyRecord {
  double t = 0.0;
  double deltaExact = kNaN, sExact = kNaN, sEnv = kNaN, sCorr = kNaN, energy = kNaN;
  double deltaAnalytic = kNaN, sAnalytic = kNaN;
  double deltaDensity = kNaN, sDensity = kNaN;
  double delta2Master = kNaN, deltaMaster = kNaN, sMaster = kNaN;
  double delta2MasterCoeff = kNaN, deltaMasterCoeff = kNaN, sMasterCoeff = kNaN;
  double gamma = kNaN;
  bool unphysical = false;       // master state outside the uncertainty bound
  bool breakdownCrossed = false;  // detector has fired at or before t
};

struct MethodStatus {
  bool completed = false;
  std::string error;  // "<Kind>: message" when the method stopped early
  std::size_t samples = 0;
  ode::IntegratorStats stats;
};

struct RunResult {
  Scenario scenario;
  ModelParams params;
  double beta = 0.0;
  std::vector<double> times;
  std::vector<EntropyRecord> records;
  std::map<Method, MethodStatus> status;
  ThermalBaseline thermal;
  std::optional<double> breakdownTime;           // master-correlator detector
  std::optional<double> breakdownTimeCoeff;      // master-coeff detector
  std::optional<double> firstUnphysicalTime;     // master-correlator
  double energyDrift = kNaN;                     // max relative |E(t) - E(0)|
  double detDrift = kNaN;                        // max relative det(cov) change at checkpoints
  double symplecticDrift = kNaN;                 // max |nu_k(t) - nu_k(0)| at checkpoints
  double minSubsystemDelta = kNaN;               // raw, before the clamp policy
  bool initialStatePhysical = true;
  std::string gammaNote;
  double wallSeconds = 0.0;
};

struct RunOptions {
  /// Number of checkpoints for det(cov) and symplectic spectra.
  std::size_t invariantCheckpoints = 25;
  /// Skip the exact method's invariant checkpoints (determinant and
  /// symplectic spectrum); energy is always tracked.
  bool skipInvariantCheckpoints = false;
};

namespace detail {

inline std::string error_text(const std::exception& e) {
  if (auto* de = dynamic_cast<const Error*>(&e)) return de->kind() + ": " + e.what();
  return std::string("Error: ") + e.what();
}

inline double raw_delta(const CorrelatorTriple& c) { return 2.0 * std::sqrt(std::max(0.0, c.determinant())); }

// Delta and entropy under the clamp policy; NaN when unphysical.
inline std::pair<double, double> policy_delta_entropy(double delta2) {
  try {
    const PhaseSpaceArea a = area_from_delta_squared(delta2);
    return {a.delta, entropy_from_delta(a)};
  } catch (const UnphysicalState&) {
    return {kNaN, kNaN};
  }
}

inline Eigen::MatrixXd initial_covariance(const Scenario& s, const ModelParams& p, double beta) {
  if (s.ic == IcKind::PureThermal) return pure_thermal_ic(p, beta).cov;
  return analytic::covariance_from_ics(
      analytic::time_translation_invariant_ic(p.omega0, p.omegas[0], p.lambdas[0]));
}

inline analytic::InitialConditions10 initial_ics(const Scenario& s, const ModelParams& p, double beta) {
  if (s.ic == IcKind::PureThermal) return analytic::pure_thermal_ics(p.omega0, p.omegas[0], beta);
  return analytic::time_translation_invariant_ic(p.omega0, p.omegas[0], p.lambdas[0]);
}

}  // namespace detail

inline RunResult run_scenario(const Scenario& s, const RunOptions& ro = {}) {
  const auto wall0 = std::chrono::steady_clock::now();
  s.validate();
  RunResult r;
  r.scenario = s;
  r.params = s.build_params();
  r.beta = s.beta();
  r.times = s.times();
  r.thermal = thermal_baseline(r.beta, r.params.omega0);
  const std::size_t n = r.times.size();
  r.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.records[i].t = r.times[i];
  const ModelParams& p = r.params;
  const Eigen::MatrixXd cov0 = detail::initial_covariance(s, p, r.beta);
  r.initialStatePhysical = is_physical(cov0);

  auto base_opts = [&](double relTol, double absTol) {
    ode::IntegratorOpts o = default_integrator_opts(p, r.times);
    o.relTol = relTol;
    o.absTol = absTol;
    return o;
  };

  if (s.has(Method::Exact)) {
    MethodStatus st;
    const std::size_t modes = p.env_count() + 1;
    const double e0 = energy(p, cov0);
    double sTotal0 = 0.0;
    for (std::size_t m = 0; m < modes; ++m)
      sTotal0 += entropy_from_delta(detail::raw_delta(mode_triple(cov0, m)));
    const std::size_t stride = std::max<std::size_t>(1, (n - 1) / std::max<std::size_t>(1, ro.invariantCheckpoints - 1));
    double logDet0 = 0.0;
    std::vector<double> nu0;
    const bool checkInv = !ro.skipInvariantCheckpoints;
    if (checkInv) {
      logDet0 = log_determinant(cov0);
      nu0 = symplectic_eigenvalues(cov0);
      r.detDrift = 0.0;
      r.symplecticDrift = 0.0;
    }
    r.energyDrift = 0.0;
    r.minSubsystemDelta = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd work;
    try {
      st.stats = evolve_observed(p, CorrelatorState{cov0, 0.0}, base_opts(s.exactRelTol, s.exactAbsTol),
                                 [&](std::size_t i, double, const auto& c) {
        EntropyRecord& rec = r.records[i];
        const double e = energy(p, c);
        rec.energy = e;
        r.energyDrift = std::max(r.energyDrift, std::abs(e - e0) / std::abs(e0));
        double sEnv = 0.0;
        for (std::size_t m = 0; m < modes; ++m) {
          const Eigen::Index k = 2 * static_cast<Eigen::Index>(m);
          const CorrelatorTriple tr{c(k, k), c(k + 1, k + 1), c(k, k + 1)};
          const double d = detail::raw_delta(tr);
          r.minSubsystemDelta = std::min(r.minSubsystemDelta, d);
          const auto [dp, sp] = detail::policy_delta_entropy(4.0 * tr.determinant());
          if (m == 0) {
            rec.deltaExact = dp;
            rec.sExact = sp;
          } else {
            sEnv += sp;
          }
        }
        rec.sEnv = sEnv;
        rec.sCorr = correlation_entropy(sTotal0, rec.sExact, rec.sEnv);
        if (checkInv && (i % stride == 0 || i + 1 == n)) {
          work = c;
          r.detDrift = std::max(r.detDrift, std::abs(std::expm1(log_determinant(work) - logDet0)));
          const auto nu = symplectic_eigenvalues(work);
          for (std::size_t k = 0; k < nu.size(); ++k)
            r.symplecticDrift = std::max(r.symplecticDrift, std::abs(nu[k] - nu0[k]));
        }
        ++st.samples;
        return true;
      });
      st.completed = true;
    } catch (const std::exception& e) {
      st.error = detail::error_text(e);
    }
    r.status[Method::Exact] = st;

    if (st.completed) {
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = r.records[i].deltaExact;
      const double window = s.rateWindow > 0.0 ? s.rateWindow / p.omega0 : 2.0 * std::numbers::pi / p.omega0;
      try {
        const auto g = decoherence_rate(r.times, d, window, p.max_frequency());
        for (std::size_t i = 0; i < n; ++i) r.records[i].gamma = g[i];
      } catch (const std::exception& e) {
        r.gammaNote = detail::error_text(e);
      }
    }
  }

  if (s.has(Method::AnalyticN1)) {
    MethodStatus st;
    try {
      const analytic::AnalyticSolution sol(p.omega0, p.omegas[0], p.lambdas[0], detail::initial_ics(s, p, r.beta));
      for (std::size_t i = 0; i < n; ++i) {
        const auto x = analytic::equal_time(sol.fx(), r.times[i]);
        const auto [dp, sp] = detail::policy_delta_entropy(4.0 * (x.value * x.dtdtp - x.dt * x.dt));
        r.records[i].deltaAnalytic = dp;
        r.records[i].sAnalytic = sp;
        ++st.samples;
      }
      st.completed = true;
    } catch (const std::exception& e) {
      st.error = detail::error_text(e);
    }
    r.status[Method::AnalyticN1] = st;
  }

  if (s.has(Method::DensityMatrixN1)) {
    MethodStatus st;
    try {
      const auto g0 = density::coeffs2d_from_covariance(Eigen::Matrix4d(cov0), s.ic == IcKind::PureThermal);
      st.stats = density::evolve_observed(p, g0, 0.0, base_opts(s.relTol, s.absTol),
                                          [&](std::size_t i, double, const density::GaussianCoeffs2D& g) {
        const auto red = density::trace_out_environment(g);
        const double den = red.a.real() - red.c;
        const auto [dp, sp] = detail::policy_delta_entropy(den > 0.0 ? (red.a.real() + red.c) / den : kNaN);
        r.records[i].deltaDensity = dp;
        r.records[i].sDensity = sp;
        ++st.samples;
        return true;
      });
      st.completed = true;
    } catch (const std::exception& e) {
      st.error = detail::error_text(e);
    }
    r.status[Method::DensityMatrixN1] = st;
  }

  const CorrelatorTriple sys0 = mode_triple(cov0, 0);
  if (s.has(Method::MasterCorrelator)) {
    MethodStatus st;
    try {
      master::require_separable(cov0);
      st.stats = master::evolve_correlators_observed(p, r.beta, sys0, 0.0, base_opts(s.relTol, s.absTol),
                                                     [&](std::size_t i, double, const CorrelatorTriple& c) {
        EntropyRecord& rec = r.records[i];
        rec.delta2Master = 4.0 * c.determinant();
        const auto [dp, sp] = detail::policy_delta_entropy(rec.delta2Master);
        rec.deltaMaster = dp;
        rec.sMaster = sp;
        ++st.samples;
        return true;
      });
      st.completed = true;
    } catch (const std::exception& e) {
      st.error = detail::error_text(e);
    }
    r.status[Method::MasterCorrelator] = st;
    std::vector<double> d2(n), sm(n);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = r.records[i].delta2Master;
      sm[i] = r.records[i].sMaster;
      if (i < st.samples && std::isfinite(d2[i]) && d2[i] < 1.0 - tolerance::kDeltaSquaredClampBand) {
        r.records[i].unphysical = true;
        if (!r.firstUnphysicalTime) r.firstUnphysicalTime = r.times[i];
      }
    }
    // Samples after an integrator failure are not data; the detector only
    // looks at delivered samples, then at the failure itself.
    d2.resize(st.samples);
    sm.resize(st.samples);
    if (auto idx = breakdown_index(d2, sm, r.thermal.entropy)) {
      r.breakdownTime = r.times[*idx];
    } else if (!st.completed && st.samples < n) {
      r.breakdownTime = r.times[st.samples];
    }
    if (r.breakdownTime)
      for (auto& rec : r.records)
        if (rec.t >= *r.breakdownTime) rec.breakdownCrossed = true;
  }

  if (s.has(Method::MasterCoeff)) {
    MethodStatus st;
    try {
      master::require_separable(cov0);
      const GaussianCoeffs1D g0 = correlators_to_coeffs(sys0);
      st.stats = master::evolve_coefficients_observed(p, r.beta, g0, 0.0, base_opts(s.relTol, s.absTol),
                                                      [&](std::size_t i, double, const GaussianCoeffs1D& g) {
        EntropyRecord& rec = r.records[i];
        const double den = g.a.real() - g.c;
        rec.delta2MasterCoeff = den > 0.0 ? (g.a.real() + g.c) / den : kNaN;
        const auto [dp, sp] = detail::policy_delta_entropy(rec.delta2MasterCoeff);
        rec.deltaMasterCoeff = dp;
        rec.sMasterCoeff = sp;
        ++st.samples;
        return true;
      });
      st.completed = true;
    } catch (const std::exception& e) {
      st.error = detail::error_text(e);
    }
    r.status[Method::MasterCoeff] = st;
    std::vector<double> d2, sm;
    for (std::size_t i = 0; i < st.samples; ++i) {
      d2.push_back(r.records[i].delta2MasterCoeff);
      sm.push_back(r.records[i].sMasterCoeff);
    }
    if (auto idx = breakdown_index(d2, sm, r.thermal.entropy)) r.breakdownTimeCoeff = r.times[*idx];
    else if (!st.completed && st.samples < n) r.breakdownTimeCoeff = r.times[st.samples];
  }

  r.wallSeconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return r;
}

// ---------------------------------------------------------------- presets

/// Seeds for the presets with randomly drawn spectra.
inline constexpr std::uint64_t kSeedFig8 = 175;
inline constexpr std::uint64_t kSeedFig11 = 0;
inline constexpr std::uint64_t kSeedFig12 = 0;
inline constexpr std::uint64_t kSeedNonresonant = 0;

namespace detail {

inline Scenario n1_scenario(std::string name, double ratio, double coupling, double betaOmega0,
                            double tEnd, std::string description) {
  Scenario s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.spectrum.kind = SpectrumRecipe::Kind::Explicit;
  s.spectrum.ratios = {ratio};
  s.coupling = coupling;
  s.betaOmega0 = betaOmega0;
  s.methods = {Method::Exact, Method::AnalyticN1, Method::DensityMatrixN1, Method::MasterCorrelator,
               Method::MasterCoeff};
  s.tEnd = tEnd;
  s.sampleCount = static_cast<std::size_t>(std::llround(tEnd / 0.05)) + 1;
  return s;
}

inline Scenario n50_scenario(std::string name, SpectrumRecipe spec, double coupling,
                             double betaOmega0, double tEnd, std::string description) {
  Scenario s;
  s.name = std::move(name);
  s.description = std::move(description);
  s.spectrum = std::move(spec);
  s.coupling = coupling;
  s.betaOmega0 = betaOmega0;
  s.methods = {Method::Exact, Method::MasterCorrelator, Method::MasterCoeff};
  s.tEnd = tEnd;
  s.sampleCount = static_cast<std::size_t>(std::llround(tEnd / 0.05)) + 1;
  return s;
}

inline SpectrumRecipe uniform_spectrum(double lo, double hi, std::size_t count, std::uint64_t seed) {
  SpectrumRecipe r;
  r.kind = SpectrumRecipe::Kind::Uniform;
  r.lo = lo;
  r.hi = hi;
  r.count = count;
  r.seed = seed;
  return r;
}

inline SpectrumRecipe progression_spectrum(double offset, double step, std::size_t count) {
  SpectrumRecipe r;
  r.kind = SpectrumRecipe::Kind::Progression;
  r.offset = offset;
  r.step = step;
  r.count = count;
  return r;
}

}  // namespace detail

inline std::vector<std::string> preset_names() {
  return {"fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11",
          "fig12", "nonresonant-n50"};
}

inline Scenario preset(const std::string& name) {
  using detail::n1_scenario;
  using detail::n50_scenario;
  if (name == "fig1")
    return n1_scenario(name, 2.0, 0.5, 2000.0, 50.0, "phase-space area, effectively zero temperature");
  if (name == "fig2")
    return n1_scenario(name, 2.0, 0.5, 0.2, 50.0, "phase-space area, high temperature");
  if (name == "fig3")
    return n1_scenario(name, 2.0, 0.5, 2000.0, 50.0, "entropy and correlation entropy, zero temperature");
  if (name == "fig4")
    return n1_scenario(name, 2.0, 0.5, 0.2, 50.0, "system, environment and correlation entropy, high temperature");
  if (name == "fig5")
    return n1_scenario(name, 2.0, 0.5, 0.2, 600.0, "long horizon, quasi-periodic recurrences");
  if (name == "fig6")
    return n1_scenario(name, 201.0 / 200.0, 0.25, 0.2, 300.0, "resonant regime, master equation breaks down");
  if (name == "fig7") {
    Scenario s = n1_scenario(name, 2.0, 0.25, 0.0, 100.0, "time-translation-invariant entangled state");
    s.ic = IcKind::TimeTranslationInvariant;
    s.betaImplied = true;
    s.methods = {Method::Exact, Method::AnalyticN1, Method::DensityMatrixN1};
    return s;
  }
  if (name == "fig8")
    return n50_scenario(name, detail::uniform_spectrum(0.9, 1.1, 50, kSeedFig8), 1.0 / 40.0, 1.0, 600.0,
                        "N=50 random spectrum around omega0, secular destabilisation");
  if (name == "fig9")
    return n50_scenario(name, detail::progression_spectrum(1.0, 1.0 / 50.0, 50), 3.0 / 40.0, 2.0, 600.0,
                        "N=50 evenly spaced spectrum above omega0");
  if (name == "fig10")
    return n50_scenario(name, detail::progression_spectrum(1.0, 1.0 / 100.0, 50), 3.0 / 40.0, 2.0, 600.0,
                        "N=50 densely spaced spectrum above omega0");
  if (name == "fig11")
    return n50_scenario(name, detail::uniform_spectrum(0.75, 1.5, 50, kSeedFig11), 1.0 / 16.0, 2.0, 600.0,
                        "N=50 broad random spectrum");
  if (name == "fig12") {
    Scenario s = n50_scenario(name, detail::uniform_spectrum(0.95, 1.05, 50, kSeedFig12), 1.0 / 10.0, 0.1,
                              600.0, "N=50 narrow random spectrum, high temperature");
    // Large thermal correlators: the relative tolerance limits det(cov) here.
    s.exactRelTol = 3e-12;
    s.exactAbsTol = 1e-14;
    return s;
  }
  if (name == "nonresonant-n50")
    return n50_scenario(name, detail::uniform_spectrum(2.0, 3.0, 50, kSeedNonresonant), 1.0 / 8.0, 2.0,
                        300.0, "N=50 random spectrum well above omega0, weak decoherence");
  throw UnknownPreset("unknown preset '" + name + "'");
}

// ------------------------------------------------------- config key/values

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "inf" || t == "infinity") return std::numeric_limits<double>::infinity();
  // Accept simple fractions such as 201/200.
  const auto slash = t.find('/');
  try {
    std::size_t pos = 0;
    if (slash != std::string::npos) {
      const double num = std::stod(t.substr(0, slash), &pos);
      if (pos != slash) throw std::invalid_argument("num");
      const std::string ds = t.substr(slash + 1);
      const double den = std::stod(ds, &pos);
      if (pos != ds.size()) throw std::invalid_argument("den");
      return num / den;
    }
    const double d = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': cannot parse number '" + v + "'");
  }
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': integer out of range");
  }
}

}  // namespace detail

/// Sets one scenario field from its config key. Frequencies are ratios to
/// omega0, couplings are lambda / omega0^2, beta is beta*omega0 and times
/// are omega0*t.
inline void set_field(Scenario& s, const std::string& key, const std::string& value) {
  using detail::parse_double;
  using detail::parse_uint;
  const std::string v = detail::trim(value);
  if (key == "name") s.name = v;
  else if (key == "description") s.description = v;
  else if (key == "omega0") s.omega0 = parse_double(key, v);
  else if (key == "spectrum") {
    if (v == "explicit") s.spectrum.kind = SpectrumRecipe::Kind::Explicit;
    else if (v == "uniform") s.spectrum.kind = SpectrumRecipe::Kind::Uniform;
    else if (v == "progression") s.spectrum.kind = SpectrumRecipe::Kind::Progression;
    else throw ConfigError("spectrum must be explicit, uniform or progression");
  } else if (key == "omega_ratios") {
    s.spectrum.ratios.clear();
    for (const auto& x : detail::split_list(v)) s.spectrum.ratios.push_back(parse_double(key, x));
  } else if (key == "uniform_lo") s.spectrum.lo = parse_double(key, v);
  else if (key == "uniform_hi") s.spectrum.hi = parse_double(key, v);
  else if (key == "progression_offset") s.spectrum.offset = parse_double(key, v);
  else if (key == "progression_step") s.spectrum.step = parse_double(key, v);
  else if (key == "count") s.spectrum.count = parse_uint(key, v);
  else if (key == "seed") s.spectrum.seed = parse_uint(key, v);
  else if (key == "coupling") s.coupling = parse_double(key, v);
  else if (key == "couplings") {
    s.couplings.clear();
    for (const auto& x : detail::split_list(v)) s.couplings.push_back(parse_double(key, x));
  } else if (key == "beta") {
    if (v == "implied") {
      s.betaImplied = true;
    } else {
      s.betaImplied = false;
      s.betaOmega0 = parse_double(key, v);
    }
  } else if (key == "ic") s.ic = parse_ic(v);
  else if (key == "methods") {
    s.methods.clear();
    for (const auto& x : detail::split_list(v)) s.methods.push_back(parse_method(x));
  } else if (key == "t_end") s.tEnd = parse_double(key, v);
  else if (key == "samples") s.sampleCount = parse_uint(key, v);
  else if (key == "rate_window") s.rateWindow = parse_double(key, v);
  else if (key == "rel_tol") s.relTol = parse_double(key, v);
  else if (key == "abs_tol") s.absTol = parse_double(key, v);
  else if (key == "exact_abs_tol") s.exactAbsTol = parse_double(key, v);
  else if (key == "exact_rel_tol") s.exactRelTol = parse_double(key, v);
  else throw ConfigError("unknown key '" + key + "'");
}

/// Parses `key = value` lines; '#' starts a comment. A `preset` key, if
/// present, must come first and seeds every other field.
inline Scenario parse_config(std::istream& in, const std::string& source = "<config>") {
  Scenario s;
  s.name = "custom";
  std::string line;
  std::size_t lineNo = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineNo) + ": expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "preset") {
        if (any) throw ConfigError("'preset' must be the first key");
        s = preset(value);
      } else {
        set_field(s, key, value);
      }
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineNo) + ": " + e.what());
    }
    any = true;
  }
  s.validate();
  return s;
}

inline Scenario load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

// ------------------------------------------------------------------ output

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

}  // namespace detail

/// Leading "# key=value" lines: scenario, parameters, seed, tolerances and
/// detector results. Wall time is left out so that files are reproducible.
inline std::string metadata_block(const RunResult& r) {
  const Scenario& s = r.scenario;
  std::ostringstream os;
  auto kv = [&os](const std::string& k, const std::string& v) { os << "# " << k << "=" << v << "\n"; };
  kv("scenario", s.name);
  if (!s.description.empty()) kv("description", s.description);
  kv("omega0", detail::fmt(r.params.omega0));
  kv("spectrum", s.spectrum.describe());
  kv("seed", s.spectrum.seeded() ? std::to_string(s.spectrum.seed) : "none");
  kv("env_count", std::to_string(r.params.env_count()));
  kv("omegas", detail::fmt_list(r.params.omegas));
  kv("lambdas", detail::fmt_list(r.params.lambdas));
  kv("beta", detail::fmt(r.beta));
  kv("ic", to_string(s.ic));
  std::string methods;
  for (std::size_t i = 0; i < s.methods.size(); ++i) methods += (i ? "," : "") + to_string(s.methods[i]);
  kv("methods", methods);
  kv("t_end", detail::fmt(s.tEnd / s.omega0));
  kv("samples", std::to_string(s.sampleCount));
  kv("rel_tol", detail::fmt(s.relTol));
  kv("abs_tol", detail::fmt(s.absTol));
  kv("exact_rel_tol", detail::fmt(s.exactRelTol));
  kv("exact_abs_tol", detail::fmt(s.exactAbsTol));
  kv("max_step", detail::fmt(0.05 / r.params.max_frequency()));
  kv("delta_thermal", detail::fmt(r.thermal.delta));
  kv("S_thermal", detail::fmt(r.thermal.entropy));
  kv("initial_state_physical", r.initialStatePhysical ? "1" : "0");
  kv("breakdown_time", r.breakdownTime ? detail::fmt(*r.breakdownTime) : "none");
  kv("breakdown_time_coeff", r.breakdownTimeCoeff ? detail::fmt(*r.breakdownTimeCoeff) : "none");
  if (!std::isnan(r.energyDrift)) kv("energy_drift", detail::fmt(r.energyDrift));
  if (!std::isnan(r.detDrift)) kv("det_drift", detail::fmt(r.detDrift));
  if (!r.gammaNote.empty()) kv("gamma_note", r.gammaNote);
  for (const auto& [m, st] : r.status)
    kv("status_" + to_string(m), st.completed ? "ok" : ("failed " + st.error));
  return os.str();
}

struct Column {
  std::string name;
  double EntropyRecord::*field;
};

inline std::vector<Column> method_columns(Method m) {
  switch (m) {
    case Method::Exact:
      return {{"delta_exact", &EntropyRecord::deltaExact}, {"S_exact", &EntropyRecord::sExact},
              {"S_env", &EntropyRecord::sEnv},             {"S_corr", &EntropyRecord::sCorr},
              {"energy", &EntropyRecord::energy},          {"gamma", &EntropyRecord::gamma}};
    case Method::AnalyticN1:
      return {{"delta_analytic", &EntropyRecord::deltaAnalytic}, {"S_analytic", &EntropyRecord::sAnalytic}};
    case Method::DensityMatrixN1:
      return {{"delta_density", &EntropyRecord::deltaDensity}, {"S_density", &EntropyRecord::sDensity}};
    case Method::MasterCorrelator:
      return {{"delta2_master", &EntropyRecord::delta2Master},
              {"delta_master", &EntropyRecord::deltaMaster},
              {"S_master", &EntropyRecord::sMaster}};
    case Method::MasterCoeff:
      return {{"delta2_master_coeff", &EntropyRecord::delta2MasterCoeff},
              {"delta_master_coeff", &EntropyRecord::deltaMasterCoeff},
              {"S_master_coeff", &EntropyRecord::sMasterCoeff}};
  }
  return {};
}

/// CSV text for the given methods (all requested ones when empty).
inline std::string csv_text(const RunResult& r, const std::vector<Method>& only = {}) {
  if (r.records.empty()) throw ConfigError("trajectory is empty");
  const std::vector<Method>& ms = only.empty() ? r.scenario.methods : only;
  if (ms.empty()) throw ConfigError("no methods to write");
  std::vector<Column> cols;
  for (Method m : all_methods())
    if (std::find(ms.begin(), ms.end(), m) != ms.end())
      for (auto& c : method_columns(m)) cols.push_back(c);
  const bool masterFlags = std::find(ms.begin(), ms.end(), Method::MasterCorrelator) != ms.end();
  std::string out = metadata_block(r);
  out += "t";
  for (const auto& c : cols) out += "," + c.name;
  if (masterFlags) out += ",unphysical,breakdown_crossed";
  out += "\n";
  for (const auto& rec : r.records) {
    out += detail::fmt(rec.t);
    for (const auto& c : cols) out += "," + detail::fmt(rec.*(c.field));
    if (masterFlags) {
      out += rec.unphysical ? ",1" : ",0";
      out += rec.breakdownCrossed ? ",1" : ",0";
    }
    out += "\n";
  }
  return out;
}

inline void emit_csv(const RunResult& r, const std::filesystem::path& path,
                     const std::vector<Method>& only = {}) {
  detail::write_atomic(path, csv_text(r, only));
}

inline std::string file_stem(Method m) {
  std::string s = to_string(m);
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

inline nlohmann::json manifest(const RunResult& r, const std::vector<std::string>& files) {
  using nlohmann::json;
  const Scenario& s = r.scenario;
  json j;
  j["scenario"] = s.name;
  j["description"] = s.description;
  j["omega0"] = r.params.omega0;
  j["omegas"] = r.params.omegas;
  j["lambdas"] = r.params.lambdas;
  j["spectrum"] = s.spectrum.describe();
  if (s.spectrum.seeded()) j["seed"] = s.spectrum.seed;
  else j["seed"] = nullptr;
  j["beta"] = std::isinf(r.beta) ? json("inf") : json(r.beta);
  j["ic"] = to_string(s.ic);
  j["t_end"] = s.tEnd / s.omega0;
  j["samples"] = s.sampleCount;
  j["tolerances"] = {{"rel", s.relTol}, {"abs", s.absTol}, {"exact_rel", s.exactRelTol}, {"exact_abs", s.exactAbsTol},
                     {"max_step", 0.05 / r.params.max_frequency()}};
  j["thermal"] = {{"delta", r.thermal.delta}, {"entropy", r.thermal.entropy}};
  j["breakdown_time"] = r.breakdownTime ? json(*r.breakdownTime) : json(nullptr);
  j["breakdown_time_coeff"] = r.breakdownTimeCoeff ? json(*r.breakdownTimeCoeff) : json(nullptr);
  j["first_unphysical_time"] = r.firstUnphysicalTime ? json(*r.firstUnphysicalTime) : json(nullptr);
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  j["invariants"] = {{"energy_drift", num(r.energyDrift)}, {"det_drift", num(r.detDrift)},
                     {"symplectic_drift", num(r.symplecticDrift)},
                     {"min_subsystem_delta", num(r.minSubsystemDelta)},
                     {"initial_state_physical", r.initialStatePhysical}};
  json st = json::object();
  for (const auto& [m, ms] : r.status)
    st[to_string(m)] = {{"completed", ms.completed}, {"error", ms.error}, {"samples", ms.samples},
                        {"steps", ms.stats.accepted}, {"rejected", ms.stats.rejected}};
  j["methods"] = st;
  j["files"] = files;
  j["wall_seconds"] = r.wallSeconds;
  return j;
}

/// Writes one CSV per method, combined.csv and manifest.json into `dir`.
inline std::vector<std::filesystem::path> write_outputs(const RunResult& r,
                                                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  std::vector<std::string> names;
  for (Method m : r.scenario.methods) {
    const auto path = dir / (file_stem(m) + ".csv");
    emit_csv(r, path, {m});
    written.push_back(path);
    names.push_back(path.filename().string());
  }
  const auto combined = dir / "combined.csv";
  emit_csv(r, combined);
  written.push_back(combined);
  names.push_back(combined.filename().string());
  const auto man = dir / "manifest.json";
  detail::write_atomic(man, manifest(r, names).dump(2) + "\n");
  written.push_back(man);
  return written;
}

}  // namespace decoherence::experiments
