#pragma once

// Single-slider traction against the wall: the ideal friction-limited law and
// the viscoelastic stick–slip model.
//
// Internal units are SI. Trajectories carry mm and mm/s and are converted on
// entry; ContactSample stores metres.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "capsim/cam_profile.hpp"
#include "capsim/common.hpp"

namespace capsim {

/// Kelvin–Voigt wall parameters with directional relaxation times.
/// Defaults are the values identified on the prototype bench trace.
struct TissueParams {
  double k_tissue = 130.0;  // N/m
  double c_tissue = 6.0;    // N·s/m
  double mu_s_N = 0.08;     // N
  double mu_k_N = 0.14;     // N
  double tau_ret = 0.45;    // s
  double tau_adv = 0.02;    // s

  void validate() const {
    require(all_finite(k_tissue, c_tissue, mu_s_N, mu_k_N, tau_ret, tau_adv),
            "tissue parameters must be finite");
    require(k_tissue > 0.0, "k_tissue must be > 0");
    require(c_tissue > 0.0, "c_tissue must be > 0");
    require(mu_s_N > 0.0, "mu_s_N must be > 0");
    require(mu_k_N > 0.0, "mu_k_N must be > 0");
    require(tau_ret > 0.0, "tau_ret must be > 0");
    require(tau_adv > 0.0, "tau_adv must be > 0");
  }
};

struct SmoothingSpec {
  double lambda = 0.0;

  void validate() const {
    require(std::isfinite(lambda) && lambda >= 0.0 && lambda <= 1.0,
            "smoothing lambda must lie in [0, 1]");
  }
};

/// Kelvin–Voigt stick force in N from wall displacement (mm) and velocity (mm/s).
inline double stick_force(double x_wall_mm, double v_wall_mm_s, const TissueParams& params) {
  return params.k_tissue * x_wall_mm * kMPerMm + params.c_tissue * v_wall_mm_s * kMPerMm;
}

// ---------------------------------------------------------------------------
// Ideal friction-limited force

namespace detail {

/// Phase sign s(θ) = sign(−dh/dθ): +1 retract, −1 advance, 0 dwell.
inline int phase_sign(SegmentKind kind) {
  return kind == SegmentKind::fall ? 1 : (kind == SegmentKind::rise ? -1 : 0);
}

/// Integral of the phase sign from 0 to θ, θ unwrapped.
inline double phase_sign_integral(const CamProfile& profile, double theta) {
  const auto& segs = profile.segments();
  double per_cycle = 0.0;
  for (const auto& seg : segs) per_cycle += phase_sign(seg.kind) * seg.width();
  const double cycles = std::floor(theta / kTwoPi);
  double local = theta - cycles * kTwoPi;
  if (local >= kTwoPi) local = 0.0;
  double acc = cycles * per_cycle;
  for (const auto& seg : segs) {
    if (local <= seg.theta_start) break;
    acc += phase_sign(seg.kind) * (std::min(local, seg.theta_end) - seg.theta_start);
  }
  return acc;
}

inline double smoothing_width(const CamProfile& profile, const SmoothingSpec& smoothing) {
  return smoothing.lambda * kTwoPi / profile.jump_count();
}

}  // namespace detail

/// f(λ, θ)·sign(−dh/dθ): the sign signal averaged over a window of width
/// λ·2π/k centred on θ. Around an isolated reversal this is a linear ramp
/// between ±1 of that width; λ = 0 gives the bare sign (right-hand at
/// breakpoints).
inline double smoothed_phase_sign(const CamProfile& profile, const SmoothingSpec& smoothing,
                                  double theta) {
  const double w = detail::smoothing_width(profile, smoothing);
  const double t = wrap_angle(theta);
  if (w <= 0.0) {
    return detail::phase_sign(profile.segments()[profile.segment_index(t)].kind);
  }
  return (detail::phase_sign_integral(profile, t + 0.5 * w + kTwoPi) -
          detail::phase_sign_integral(profile, t - 0.5 * w + kTwoPi)) / w;
}

inline double ideal_force_at(const CamProfile& profile, double mu_N, const SmoothingSpec& smoothing,
                             double theta) {
  return mu_N * smoothed_phase_sign(profile, smoothing, theta);
}

/// Ideal slider force (N) at every trajectory sample.
inline std::vector<double> ideal_slider_force(const SliderTrajectory& traj, double mu_N,
                                              const SmoothingSpec& smoothing) {
  require(std::isfinite(mu_N) && mu_N > 0.0, "mu_N must be > 0");
  smoothing.validate();
  std::vector<double> force;
  force.reserve(traj.size());
  for (const auto& s : traj.samples())
    force.push_back(ideal_force_at(traj.profile(), mu_N, smoothing, s.theta));
  return force;
}

/// Angles in [0, 2π) where the ideal force of a slider with the given phase
/// offset is not affine in θ. Sorted, unique.
inline std::vector<double> ideal_kink_angles(const CamProfile& profile,
                                             const SmoothingSpec& smoothing, double phase_offset) {
  const double w = detail::smoothing_width(profile, smoothing);
  std::vector<double> out;
  for (double bp : profile.breakpoints()) {
    // Slider angle θ + offset hits bp at capsule angle bp − offset.
    const double base = bp - phase_offset;
    out.push_back(wrap_angle(base));
    if (w > 0.0) {
      out.push_back(wrap_angle(base - 0.5 * w));
      out.push_back(wrap_angle(base + 0.5 * w));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Weighted samples of a periodic signal. Weights are quadrature weights in
/// the unit of `period` (rad for θ series, s for time series) and sum to a
/// whole number of periods.
struct ForceSeries {
  std::vector<double> abscissa;
  std::vector<double> force;
  std::vector<double> weight;
  double period = kTwoPi;

  double span() const {
    double s = 0.0;
    for (double w : weight) s += w;
    return s;
  }
};

namespace detail {

inline constexpr std::array<double, 2> kGaussNodes = {0.5 - 0.5 / 1.7320508075688772,
                                                      0.5 + 0.5 / 1.7320508075688772};

/// Splits [0, 2π) at `events` plus a uniform grid of spacing `step` and puts
/// two Gauss–Legendre nodes (weight h/2 each) in every interval.
inline void gauss_nodes(std::vector<double> events, double step, std::vector<double>& nodes,
                        std::vector<double>& weights) {
  if (step > 0.0) {
    const auto count = static_cast<long long>(std::ceil(kTwoPi / step - 1e-9));
    for (long long i = 0; i < count; ++i) events.push_back(static_cast<double>(i) * step);
  }
  events.push_back(0.0);
  events.push_back(kTwoPi);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  nodes.clear();
  weights.clear();
  for (std::size_t i = 0; i + 1 < events.size(); ++i) {
    const double a = events[i];
    const double h = events[i + 1] - a;
    if (h <= 0.0) continue;
    for (double g : kGaussNodes) {
      nodes.push_back(a + g * h);
      weights.push_back(0.5 * h);
    }
  }
}

}  // namespace detail

/// One cycle of the ideal single-slider force on an exact quadrature grid:
/// breakpoints and smoothing-window edges split the cycle into pieces on which
/// the force is affine, so weighted means and variances are exact.
inline ForceSeries ideal_force_series(const CamProfile& profile, double mu_N,
                                      const SmoothingSpec& smoothing, double display_step = 0.0) {
  require(std::isfinite(mu_N) && mu_N > 0.0, "mu_N must be > 0");
  smoothing.validate();
  ForceSeries series;
  detail::gauss_nodes(ideal_kink_angles(profile, smoothing, 0.0), display_step, series.abscissa,
                      series.weight);
  series.force.reserve(series.abscissa.size());
  for (double th : series.abscissa)
    series.force.push_back(ideal_force_at(profile, mu_N, smoothing, th));
  series.period = kTwoPi;
  return series;
}

/// Weighted time average minus F_loss. The series must cover a whole number
/// of periods.
inline double single_slider_cycle_average(const ForceSeries& series, double F_loss) {
  require(series.force.size() == series.weight.size(), "force and weight lengths differ");
  require(!series.force.empty(), "empty force series");
  require(std::isfinite(F_loss), "F_loss must be finite");
  const double span = series.span();
  const double cycles = span / series.period;
  require(cycles >= 1.0 - 1e-9 && std::abs(cycles - std::round(cycles)) <= 1e-9 * std::max(1.0, cycles),
          "force series must span an integer number of cycles");
  double acc = 0.0;
  for (std::size_t i = 0; i < series.force.size(); ++i) acc += series.weight[i] * series.force[i];
  return acc / span - F_loss;
}

/// Closed form of the ideal λ = 0 single-slider average.
inline double ideal_cycle_average(double mu_N, const DutyFractions& duty, double F_loss) {
  duty.validate();
  return mu_N * (duty.d_ret - duty.d_adv) - F_loss;
}

// ---------------------------------------------------------------------------
// Viscoelastic stick–slip

enum class ContactMode { stick, slip };

inline const char* to_string(ContactMode mode) {
  return mode == ContactMode::stick ? "stick" : "slip";
}

struct ContactSample {
  double t = 0.0;
  ContactMode mode = ContactMode::stick;
  double x_wall = 0.0;     // m
  double v_wall = 0.0;     // m/s
  double F_wall = 0.0;     // N
  double F_slider = 0.0;   // N
  double F_elastic = 0.0;  // N
};

struct ContactTrace {
  std::vector<ContactSample> samples;
  double dt = 0.0;
  TissueParams params;
};

// Compatibility switches for the contact update. Each `literal_*`/alternate
// value reproduces the corresponding pseudo-code line word for word; the
// defaults keep the contact from chattering (see README).
enum class TauSelection { by_phase, literal_velocity_sign };
enum class SlipTarget { slider_direction, wall_velocity };
enum class BreakRule { along_motion, magnitude };
enum class RestickRule { slider_reversal, spring_exceeds_wall };

struct StickSlipOptions {
  TauSelection tau = TauSelection::by_phase;
  SlipTarget target = SlipTarget::slider_direction;
  BreakRule break_rule = BreakRule::along_motion;
  RestickRule restick = RestickRule::slider_reversal;
};

/// Time-steps the stick–slip contact along a uniformly sampled trajectory.
///
/// Sample i holds the state after the step from i−1 to i, labelled with the
/// mode that step ran in. Sample 0 is the initial state (stick, zero force).
inline ContactTrace stick_slip_simulate(const SliderTrajectory& traj, const TissueParams& params,
                                        const StickSlipOptions& options = {}) {
  params.validate();
  require(traj.uniform(), "stick-slip simulation needs a uniformly sampled trajectory");
  const auto& in = traj.samples();
  require(in.size() >= 2, "trajectory needs at least two samples");
  const double dt = in[1].t - in[0].t;
  require(std::isfinite(dt) && dt > 0.0, "trajectory time step must be > 0");
  for (std::size_t i = 0; i < in.size(); ++i) {
    require(all_finite(in[i].t, in[i].x, in[i].v), "trajectory contains NaN or Inf");
    if (i > 0)
      require(std::abs((in[i].t - in[i - 1].t) - dt) <= 1e-9 * std::max(dt, std::abs(in[i].t)),
              "stick-slip simulation needs a uniformly sampled trajectory");
  }

  const double k = params.k_tissue;
  const double c = params.c_tissue;
  const double alpha_ret = -std::expm1(-dt / params.tau_ret);
  const double alpha_adv = -std::expm1(-dt / params.tau_adv);

  // Direction of slider motion; dwell keeps the previous one.
  double dir = -1.0;
  for (std::size_t i = 1; i < in.size(); ++i) {
    const double dx = in[i].x - in[i - 1].x;
    if (dx != 0.0) {
      dir = dx > 0.0 ? 1.0 : -1.0;
      break;
    }
  }

  ContactTrace trace;
  trace.dt = dt;
  trace.params = params;
  trace.samples.reserve(in.size());
  trace.samples.push_back({in[0].t, ContactMode::stick, 0.0, 0.0, 0.0, 0.0, 0.0});

  ContactMode mode = ContactMode::stick;
  double slip_dir = 0.0;
  double x_w = 0.0;
  double v_w = 0.0;
  double F_w = 0.0;
  for (std::size_t i = 1; i < in.size(); ++i) {
    const double dx = (in[i].x - in[i - 1].x) * kMPerMm;
    const double v_s = dx / dt;
    if (dx != 0.0) dir = dx > 0.0 ? 1.0 : -1.0;
    if (mode == ContactMode::slip && options.restick == RestickRule::slider_reversal &&
        dir != slip_dir)
      mode = ContactMode::stick;

    double alpha = 0.0;
    if (options.tau == TauSelection::by_phase)
      alpha = dir < 0.0 ? alpha_ret : alpha_adv;
    else
      alpha = v_s >= 0.0 ? alpha_ret : alpha_adv;

    ContactSample out;
    out.t = in[i].t;
    out.mode = mode;
    if (mode == ContactMode::stick) {
      x_w += dx;
      v_w = v_s;
      F_w = k * x_w + c * v_w;
      out.F_slider = -F_w;
      const bool breaks = options.break_rule == BreakRule::along_motion
                              ? dir * F_w >= params.mu_s_N
                              : std::abs(F_w) >= params.mu_s_N;
      if (breaks) {
        mode = ContactMode::slip;
        slip_dir = dir;
      }
    } else {
      double target_dir = dir;
      if (options.target == SlipTarget::wall_velocity && v_w != 0.0)
        target_dir = v_w > 0.0 ? 1.0 : -1.0;
      const double target = params.mu_k_N * target_dir;
      F_w += alpha * (target - F_w);
      const double x_next = x_w + alpha * (F_w / k - x_w);
      v_w = (x_next - x_w) / dt;
      x_w = x_next;
      out.F_slider = -target;
      if (options.restick == RestickRule::spring_exceeds_wall && std::abs(F_w) < std::abs(k * x_w))
        mode = ContactMode::stick;
    }
    out.x_wall = x_w;
    out.v_wall = v_w;
    out.F_wall = F_w;
    out.F_elastic = k * x_w;
    trace.samples.push_back(out);
  }
  return trace;
}

/// Time-weighted series of F_slider over the last `cycles` whole periods.
/// Each sample after the first carries weight dt (the step that produced it).
inline ForceSeries slider_force_series(const ContactTrace& trace, double period, int cycles) {
  require(period > 0.0 && cycles >= 1, "period and cycle count must be positive");
  const double steps_per_cycle = period / trace.dt;
  const auto per = static_cast<std::size_t>(std::llround(steps_per_cycle));
  require(std::abs(steps_per_cycle - static_cast<double>(per)) <= 1e-6,
          "trace step does not divide the cam period");
  const std::size_t need = per * static_cast<std::size_t>(cycles);
  require(trace.samples.size() >= need + 1, "trace shorter than the requested cycles");
  ForceSeries series;
  series.period = period;
  const std::size_t first = trace.samples.size() - need;
  for (std::size_t i = first; i < trace.samples.size(); ++i) {
    series.abscissa.push_back(trace.samples[i].t);
    series.force.push_back(trace.samples[i].F_slider);
    series.weight.push_back(trace.dt);
  }
  // The weights sum to need·dt; snap to a whole number of periods.
  const double scale = period * cycles / series.span();
  for (double& w : series.weight) w *= scale;
  return series;
}

}  // namespace capsim
