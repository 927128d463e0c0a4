#pragma once

// Dormand-Prince 4(5) with embedded error control and cubic Hermite dense
// output at requested sample times.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "decoherence/errors.hpp"

namespace decoherence::ode {

using State = Eigen::VectorXd;
using Rhs = std::function<void(double t, const State& y, State& dydt)>;

struct IntegratorOpts {
  double relTol = 1e-10;
  double absTol = 1e-12;
  double maxStep = std::numeric_limits<double>::infinity();
  /// 0 selects an automatic first step.
  double initialStep = 0.0;
  std::vector<double> outputTimes;
  /// Shorten steps so that every output time is hit by an accepted step
  /// instead of being interpolated.
  bool landOnOutputTimes = false;
  /// Constant step without error control; 0 disables. Used for order studies.
  double fixedStep = 0.0;
  std::size_t maxSteps = 100'000'000;

  void validate() const {
    if (!(relTol > 0.0) || !(absTol > 0.0))
      throw InvalidParameters("integrator tolerances must be positive");
    if (!(maxStep > 0.0)) throw InvalidParameters("integrator maxStep must be positive");
    if (initialStep < 0.0 || fixedStep < 0.0)
      throw InvalidParameters("integrator step sizes must be non-negative");
    for (std::size_t i = 1; i < outputTimes.size(); ++i)
      if (outputTimes[i] < outputTimes[i - 1])
        throw InvalidParameters("integrator outputTimes must be non-decreasing");
  }
};

struct IntegratorStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhsCalls = 0;
};

/// Raised when the integration cannot continue. `time` is the last reached
/// time and `samplesDelivered` the number of output samples already emitted.
class IntegratorFailure : public Error {
 public:
  IntegratorFailure(std::string kind, const std::string& what, double time, std::size_t delivered)
      : Error(std::move(kind), what), time_(time), delivered_(delivered) {}
  IntegratorFailure(const std::string& what, double time, std::size_t delivered)
      : IntegratorFailure("IntegratorFailure", what, time, delivered) {}
  double time() const noexcept { return time_; }
  std::size_t samplesDelivered() const noexcept { return delivered_; }
  std::vector<State> partial;

 private:
  double time_;
  std::size_t delivered_;
};

class StepUnderflow : public IntegratorFailure {
 public:
  StepUnderflow(const std::string& what, double time, std::size_t delivered)
      : IntegratorFailure("StepUnderflow", what, time, delivered) {}
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - bhat
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline void hermite(double t0, double t1, const State& y0, const State& y1, const State& f0,
                    const State& f1, double t, State& out) {
  const double h = t1 - t0;
  const double s = (t - t0) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  // h00 = 1 - h01; written as an increment so a constant state stays exact.
  out.noalias() = y0 + h01 * (y1 - y0) + (h10 * h) * f0 + (h11 * h) * f1;
}

}  // namespace detail

/// Integrates from (t0, y0) and calls `observer(index, t, y)` at each output
/// time in order. The observer returns false to stop early.
template <class Observer>
IntegratorStats integrate_observed(const Rhs& rhs, double t0, const State& y0,
                                   const IntegratorOpts& opts, Observer&& observer) {
  using DP = detail::DormandPrince;
  opts.validate();
  IntegratorStats stats;
  const auto& outs = opts.outputTimes;
  if (outs.empty()) return stats;
  if (outs.front() < t0) throw InvalidParameters("output times precede the initial time");

  const double tEnd = outs.back();
  const double span = tEnd - t0;
  const std::size_t n = static_cast<std::size_t>(y0.size());

  std::size_t next = 0;
  while (next < outs.size() && outs[next] == t0) {
    if (!observer(next, t0, y0)) return stats;
    ++next;
  }
  if (next == outs.size()) return stats;

  State y = y0, ynew(n), ytmp(n), err(n), interp(n);
  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
  double t = t0;
  rhs(t, y, k1);
  ++stats.rhsCalls;

  auto error_norm = [&](const State& ya, const State& yb, const State& e) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = opts.absTol + opts.relTol * std::max(std::abs(ya[i]), std::abs(yb[i]));
      const double r = e[i] / sc;
      acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(std::max<std::size_t>(n, 1)));
  };

  double h;
  const bool fixed = opts.fixedStep > 0.0;
  if (fixed) {
    h = opts.fixedStep;
  } else if (opts.initialStep > 0.0) {
    h = opts.initialStep;
  } else {
    // Starting step from the scale of y and y'.
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double sc = opts.absTol + opts.relTol * std::abs(y[i]);
      d0 += (y[i] / sc) * (y[i] / sc);
      d1 += (k1[i] / sc) * (k1[i] / sc);
    }
    d0 = std::sqrt(d0 / std::max<double>(n, 1));
    d1 = std::sqrt(d1 / std::max<double>(n, 1));
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, 0.01 * span);
  }
  h = std::min(h, opts.maxStep);
  const double hMin = 1e-14 * std::max(span, std::abs(tEnd));

  while (next < outs.size()) {
    if (stats.accepted + stats.rejected >= opts.maxSteps)
      throw IntegratorFailure("step budget exhausted", t, next);
    double hTry = std::min(h, tEnd - t);
    bool clipped = false;
    if (opts.landOnOutputTimes && t + hTry >= outs[next]) {
      hTry = outs[next] - t;
      clipped = true;
    }
    if (!fixed && hTry < hMin) {
      throw StepUnderflow("step size " + std::to_string(hTry) + " below limit at t=" +
                              std::to_string(t),
                          t, next);
    }

    ytmp.noalias() = y + hTry * DP::a21 * k1;
    rhs(t + DP::c2 * hTry, ytmp, k2);
    ytmp.noalias() = y + hTry * (DP::a31 * k1 + DP::a32 * k2);
    rhs(t + DP::c3 * hTry, ytmp, k3);
    ytmp.noalias() = y + hTry * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3);
    rhs(t + DP::c4 * hTry, ytmp, k4);
    ytmp.noalias() = y + hTry * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4);
    rhs(t + DP::c5 * hTry, ytmp, k5);
    ytmp.noalias() =
        y + hTry * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 + DP::a64 * k4 + DP::a65 * k5);
    const double tNew = clipped ? outs[next] : t + hTry;
    rhs(t + hTry, ytmp, k6);
    ynew.noalias() =
        y + hTry * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
    rhs(tNew, ynew, k7);
    stats.rhsCalls += 6;

    double errNorm = 0.0;
    if (!fixed) {
      err.noalias() = hTry * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 +
                              DP::e6 * k6 + DP::e7 * k7);
      errNorm = error_norm(y, ynew, err);
      if (!std::isfinite(errNorm)) errNorm = std::numeric_limits<double>::infinity();
    }

    if (errNorm <= 1.0) {
      ++stats.accepted;
      // Emit every output time inside (t, tNew].
      while (next < outs.size() && outs[next] <= tNew) {
        const double ts = outs[next];
        if (ts == tNew) {
          if (!observer(next, ts, ynew)) return stats;
        } else {
          detail::hermite(t, tNew, y, ynew, k1, k7, ts, interp);
          if (!observer(next, ts, interp)) return stats;
        }
        ++next;
      }
      t = tNew;
      y.swap(ynew);
      k1.swap(k7);
      if (!fixed) {
        const double fac = errNorm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(errNorm, -0.2), 0.2, 5.0);
        // A clipped step says nothing about the controller's preferred size.
        h = clipped ? std::max(h, hTry * fac) : hTry * fac;
        h = std::min(h, opts.maxStep);
      }
    } else {
      ++stats.rejected;
      const double fac = std::isinf(errNorm) ? 0.1 : std::max(0.2, 0.9 * std::pow(errNorm, -0.2));
      h = hTry * fac;
    }
  }
  return stats;
}

/// Convenience form that collects every output sample.
inline std::vector<State> integrate(const Rhs& rhs, double t0, const State& y0,
                                    const IntegratorOpts& opts, IntegratorStats* stats = nullptr) {
  std::vector<State> samples;
  samples.reserve(opts.outputTimes.size());
  try {
    auto s = integrate_observed(rhs, t0, y0, opts, [&](std::size_t, double, const State& y) {
      samples.push_back(y);
      return true;
    });
    if (stats) *stats = s;
  } catch (IntegratorFailure& f) {
    f.partial = std::move(samples);
    throw;
  }
  return samples;
}

/// `count` evenly spaced times on [t0, t1], both ends included.
inline std::vector<double> linspace(double t0, double t1, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = t0;
    return out;
  }
  for (std::size_t i = 0; i < count; ++i)
    out[i] = (i + 1 == count) ? t1 : t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

}  // namespace decoherence::ode
