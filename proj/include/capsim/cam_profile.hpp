#pragma once

// Periodic piecewise cam lift functions and the slider kinematics they impose.
//
// Conventions: θ in rad on [0, 2π), lift h in mm, forward-positive. A slider
// retracts while dh/dθ < 0 (segment kind `fall`) and advances while
// dh/dθ > 0 (kind `rise`).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capsim/common.hpp"

namespace capsim {

enum class SegmentKind { rise, fall, dwell };
enum class SegmentShape { linear, circular_arc };

inline const char* to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::rise: return "rise";
    case SegmentKind::fall: return "fall";
    case SegmentKind::dwell: return "dwell";
  }
  return "?";
}

inline const char* to_string(SegmentShape shape) {
  return shape == SegmentShape::linear ? "linear" : "circular-arc";
}

/// Largest normalized sagitta for which a circular arc joining opposite
/// corners of the unit box is still strictly monotone.
inline const double kMaxArcSagitta = std::sqrt(0.5) * std::tan(std::numbers::pi / 8.0);

/// One piece h_i(θ) of the lift law on [theta_start, theta_end).
///
/// Circular arcs are described in the normalized box u = (θ-θs)/(θe-θs),
/// s = (h-hs)/(he-hs) as the circle through (0,0) and (1,1) whose midpoint is
/// displaced from the chord by `arc_sagitta` (positive bulges below the chord,
/// i.e. the segment starts slowly and finishes steeply).
struct CamSegment {
  double theta_start = 0.0;
  double theta_end = 0.0;
  SegmentKind kind = SegmentKind::dwell;
  SegmentShape shape = SegmentShape::linear;
  double lift_start = 0.0;  // mm
  double lift_end = 0.0;    // mm
  double arc_sagitta = 0.0;

  double width() const { return theta_end - theta_start; }

  double lift_at(double theta) const {
    const double u = std::clamp((theta - theta_start) / width(), 0.0, 1.0);
    return lift_start + (lift_end - lift_start) * unit_shape(u).first;
  }

  /// dh/dθ in mm/rad.
  double slope_at(double theta) const {
    if (kind == SegmentKind::dwell) return 0.0;
    const double u = std::clamp((theta - theta_start) / width(), 0.0, 1.0);
    return (lift_end - lift_start) * unit_shape(u).second / width();
  }

  /// Normalized shape s(u) and ds/du on the unit box.
  std::pair<double, double> unit_shape(double u) const {
    if (shape == SegmentShape::linear || arc_sagitta == 0.0) return {u, 1.0};
    const double s = std::abs(arc_sagitta);
    const double side = arc_sagitta > 0.0 ? 1.0 : -1.0;
    const double radius = (s * s + 0.5) / (2.0 * s);
    const double inv_sqrt2 = std::sqrt(0.5);
    // Unit normal of the chord pointing to the bulge side.
    const double nx = side * inv_sqrt2;
    const double ny = -side * inv_sqrt2;
    const double cx = 0.5 - (radius - s) * nx;
    const double cy = 0.5 - (radius - s) * ny;
    const double root = std::sqrt(std::max(radius * radius - (u - cx) * (u - cx), 0.0));
    return {cy - side * root, side * (u - cx) / root};
  }
};

/// Duty fractions of one revolution spent retracting, advancing and dwelling.
struct DutyFractions {
  double d_ret = 0.0;
  double d_adv = 0.0;
  double d_dwell = 0.0;

  /// Builds the triple from (d_ret, d_adv) with the dwell as remainder.
  static DutyFractions from_ret_adv(double d_ret, double d_adv) {
    DutyFractions duty{d_ret, d_adv, 1.0 - d_ret - d_adv};
    if (std::abs(duty.d_dwell) < 1e-12) duty.d_dwell = 0.0;
    duty.validate();
    return duty;
  }

  double asymmetry() const { return d_ret - d_adv; }

  void validate() const {
    require(all_finite(d_ret, d_adv, d_dwell), "duty fractions must be finite");
    require(d_ret >= 0.0 && d_ret <= 1.0, "duty fraction d_ret must lie in [0, 1]");
    require(d_adv >= 0.0 && d_adv <= 1.0, "duty fraction d_adv must lie in [0, 1]");
    require(d_dwell >= 0.0 && d_dwell <= 1.0,
            "duty fractions violate d_ret + d_adv <= 1 (dwell fraction must lie in [0, 1])");
    require(std::abs(d_ret + d_adv + d_dwell - 1.0) <= 1e-12,
            "duty fractions must sum to 1 within 1e-12");
  }
};

/// A validated periodic lift law covering [0, 2π) exactly.
class CamProfile {
 public:
  explicit CamProfile(std::vector<CamSegment> segments) : segments_(std::move(segments)) {
    validate_and_index();
  }

  const std::vector<CamSegment>& segments() const { return segments_; }
  double stroke() const { return stroke_; }
  int jump_count() const { return jump_count_; }

  /// Index of the segment containing θ (wrapped); breakpoints belong to the
  /// segment on their right.
  std::size_t segment_index(double theta) const {
    const double w = wrap_angle(theta);
    auto it = std::upper_bound(starts_.begin(), starts_.end(), w);
    return static_cast<std::size_t>(std::distance(starts_.begin(), it)) - 1;
  }

  /// Sorted segment start angles; the breakpoints of the lift law.
  const std::vector<double>& breakpoints() const { return starts_; }

  double shortest_segment() const {
    double shortest = kTwoPi;
    for (const auto& seg : segments_) shortest = std::min(shortest, seg.width());
    return shortest;
  }

 private:
  void validate_and_index() {
    constexpr double kAngleTol = 1e-12;
    constexpr double kLiftTol = 1e-9;
    require(!segments_.empty(), "cam profile needs at least one segment");
    require(std::abs(segments_.front().theta_start) <= kAngleTol,
            "cam segments must start at theta = 0");
    segments_.front().theta_start = 0.0;
    require(std::abs(segments_.back().theta_end - kTwoPi) <= kAngleTol,
            "cam segments must end at theta = 2*pi");
    segments_.back().theta_end = kTwoPi;

    for (std::size_t i = 0; i < segments_.size(); ++i) {
      auto& seg = segments_[i];
      require(all_finite(seg.theta_start, seg.theta_end, seg.lift_start, seg.lift_end,
                         seg.arc_sagitta),
              "cam segment fields must be finite");
      if (i + 1 < segments_.size()) {
        auto& next = segments_[i + 1];
        require(std::abs(seg.theta_end - next.theta_start) <= kAngleTol,
                "cam segments must partition [0, 2*pi) without gaps or overlaps");
        next.theta_start = seg.theta_end;
        require(std::abs(seg.lift_end - next.lift_start) <= kLiftTol,
                "cam lift must be continuous across segment boundaries");
      }
      require(seg.theta_start < seg.theta_end, "cam segment needs theta_start < theta_end");
      switch (seg.kind) {
        case SegmentKind::dwell:
          require(std::abs(seg.lift_start - seg.lift_end) <= kLiftTol,
                  "dwell segments need lift_start == lift_end");
          seg.lift_end = seg.lift_start;
          break;
        case SegmentKind::rise:
          require(seg.lift_end > seg.lift_start, "rise segments need increasing lift");
          break;
        case SegmentKind::fall:
          require(seg.lift_end < seg.lift_start, "fall segments need decreasing lift");
          break;
      }
      if (seg.shape == SegmentShape::circular_arc) {
        require(std::abs(seg.arc_sagitta) < kMaxArcSagitta,
                "circular-arc sagitta too large: the arc would not be monotone");
      }
    }
    require(std::abs(segments_.back().lift_end - segments_.front().lift_start) <= kLiftTol,
            "cam lift must be continuous across the 2*pi -> 0 wrap");

    double lo = segments_.front().lift_start;
    double hi = lo;
    for (const auto& seg : segments_) {
      lo = std::min({lo, seg.lift_start, seg.lift_end});
      hi = std::max({hi, seg.lift_start, seg.lift_end});
    }
    require(std::abs(lo) <= kLiftTol, "cam lift minimum must be 0");
    require(hi > 0.0, "cam stroke must be positive");
    stroke_ = hi;

    // Rise -> fall transitions around the cycle, dwells skipped.
    std::vector<SegmentKind> moving;
    for (const auto& seg : segments_)
      if (seg.kind != SegmentKind::dwell) moving.push_back(seg.kind);
    jump_count_ = 0;
    for (std::size_t i = 0; i < moving.size(); ++i) {
      const auto next = moving[(i + 1) % moving.size()];
      if (moving[i] == SegmentKind::rise && next == SegmentKind::fall) ++jump_count_;
    }
    require(jump_count_ >= 1, "cam profile needs at least one rise and one fall");

    starts_.clear();
    for (const auto& seg : segments_) starts_.push_back(seg.theta_start);
  }

  std::vector<CamSegment> segments_;
  std::vector<double> starts_;
  double stroke_ = 0.0;
  int jump_count_ = 0;
};

/// Builds k identical advance → dwell → retract cells with linear flanks.
///
/// Each cell spans 2π/k and starts at zero lift: the advance rises to the
/// stroke over (d_adv/k)·2π, the dwell holds the stroke, and the retract falls
/// back to zero over (d_ret/k)·2π.
inline CamProfile synthesize_cam(int jumps, const DutyFractions& duty, double stroke_mm) {
  require(jumps >= 1, "jump count k must be >= 1");
  duty.validate();
  require(std::isfinite(stroke_mm) && stroke_mm > 0.0, "stroke must be > 0 mm");
  require(duty.d_ret > 0.0 && duty.d_adv > 0.0,
          "d_ret/k and d_adv/k must both be > 0 to synthesize a cam");

  const double cell = kTwoPi / jumps;
  const double advance = duty.d_adv / jumps * kTwoPi;
  const double dwell = duty.d_dwell / jumps * kTwoPi;
  std::vector<CamSegment> segments;
  segments.reserve(3 * static_cast<std::size_t>(jumps));
  for (int j = 0; j < jumps; ++j) {
    const double start = j * cell;
    const double end = (j + 1 == jumps) ? kTwoPi : (j + 1) * cell;
    const double advance_end = start + advance;
    const double dwell_end = advance_end + dwell;
    segments.push_back({start, advance_end, SegmentKind::rise, SegmentShape::linear, 0.0,
                        stroke_mm});
    if (duty.d_dwell > 0.0)
      segments.push_back({advance_end, dwell_end, SegmentKind::dwell, SegmentShape::linear,
                          stroke_mm, stroke_mm});
    segments.push_back({duty.d_dwell > 0.0 ? dwell_end : advance_end, end, SegmentKind::fall,
                        SegmentShape::linear, stroke_mm, 0.0});
  }
  return CamProfile(std::move(segments));
}

inline double lift(const CamProfile& profile, double theta) {
  const double w = wrap_angle(theta);
  return profile.segments()[profile.segment_index(w)].lift_at(w);
}

/// Cam slope at θ. On a breakpoint the right-hand derivative is returned and
/// the sample is flagged; `reversal` marks breakpoints where the motion
/// direction changes sign (dwells between opposite flanks included).
struct Slope {
  double value = 0.0;  // mm/rad
  bool at_breakpoint = false;
  bool reversal = false;
};

namespace detail {

inline int motion_sign(SegmentKind kind) {
  return kind == SegmentKind::rise ? 1 : (kind == SegmentKind::fall ? -1 : 0);
}

/// Direction of the last moving segment strictly before segment `index`.
inline int previous_motion(const CamProfile& profile, std::size_t index) {
  const auto& segs = profile.segments();
  for (std::size_t step = 1; step <= segs.size(); ++step) {
    const auto& seg = segs[(index + segs.size() - step) % segs.size()];
    if (seg.kind != SegmentKind::dwell) return motion_sign(seg.kind);
  }
  return 0;
}

}  // namespace detail

inline Slope slope(const CamProfile& profile, double theta) {
  const double w = wrap_angle(theta);
  const std::size_t index = profile.segment_index(w);
  const auto& seg = profile.segments()[index];
  Slope out;
  out.value = seg.slope_at(w);
  out.at_breakpoint = (w == seg.theta_start);
  if (out.at_breakpoint && seg.kind != SegmentKind::dwell) {
    out.reversal = detail::previous_motion(profile, index) != detail::motion_sign(seg.kind);
  }
  return out;
}

inline DutyFractions duty_fractions(const CamProfile& profile) {
  double ret = 0.0;
  double adv = 0.0;
  for (const auto& seg : profile.segments()) {
    if (seg.kind == SegmentKind::fall) ret += seg.width();
    if (seg.kind == SegmentKind::rise) adv += seg.width();
  }
  DutyFractions duty{ret / kTwoPi, adv / kTwoPi, 0.0};
  duty.d_dwell = 1.0 - duty.d_ret - duty.d_adv;
  if (std::abs(duty.d_dwell) < 1e-12) duty.d_dwell = 0.0;
  return duty;
}

// ---------------------------------------------------------------------------
// Slider kinematics

struct TrajectorySample {
  double t = 0.0;      // s
  double theta = 0.0;  // rad, wrapped
  double x = 0.0;      // mm
  double v = 0.0;      // mm/s
  bool reversal = false;
};

enum class Sampling { uniform, with_breakpoints };

/// Slider displacement and velocity series for one slider driven by a cam
/// turning at constant ω. The slider is kinematically tied to the cam, so
/// x(t) = h(θ(t)) and v(t) = ω·dh/dθ(θ(t)).
class SliderTrajectory {
 public:
  SliderTrajectory(CamProfile profile, double omega, double dt, double phase_offset,
                   std::vector<TrajectorySample> samples, bool uniform)
      : profile_(std::move(profile)),
        omega_(omega),
        dt_(dt),
        phase_offset_(phase_offset),
        samples_(std::move(samples)),
        uniform_(uniform) {}

  const CamProfile& profile() const { return profile_; }
  double omega() const { return omega_; }
  double dt() const { return dt_; }
  double phase_offset() const { return phase_offset_; }
  double period() const { return kTwoPi / omega_; }
  const std::vector<TrajectorySample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool uniform() const { return uniform_; }

 private:
  CamProfile profile_;
  double omega_;
  double dt_;
  double phase_offset_;
  std::vector<TrajectorySample> samples_;
  bool uniform_;
};

namespace detail {

inline TrajectorySample kinematic_sample(const CamProfile& profile, double omega, double t,
                                         double theta) {
  const Slope s = slope(profile, theta);
  return {t, theta, lift(profile, theta), omega * s.value, s.reversal};
}

}  // namespace detail

/// Samples n_cycles revolutions at fixed step dt starting from t = 0 (both
/// ends included). With Sampling::with_breakpoints an extra sample is placed
/// exactly on every segment breakpoint so no reversal is skipped; such a
/// trajectory is no longer uniform.
inline SliderTrajectory slider_trajectory(const CamProfile& profile, double omega, double dt,
                                          double phase_offset, int n_cycles,
                                          Sampling sampling = Sampling::with_breakpoints) {
  require(std::isfinite(omega) && omega > 0.0, "omega must be > 0");
  require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
  require(std::isfinite(phase_offset), "phase offset must be finite");
  require(n_cycles >= 1, "n_cycles must be >= 1");
  const double per_segment = profile.shortest_segment() / (omega * dt);
  require(per_segment >= 20.0 - 1e-9,
          "dt under-resolves the shortest cam segment (need >= 20 samples per segment)");

  const double duration = n_cycles * kTwoPi / omega;
  const auto steps = static_cast<long long>(std::floor(duration / dt + 1e-9));
  std::vector<TrajectorySample> samples;
  samples.reserve(static_cast<std::size_t>(steps) + 1);
  for (long long i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) * dt;
    samples.push_back(detail::kinematic_sample(profile, omega, t, wrap_angle(omega * t + phase_offset)));
  }

  if (sampling == Sampling::with_breakpoints) {
    std::vector<TrajectorySample> extra;
    const double start_angle = phase_offset;
    for (int cycle = -1; cycle <= n_cycles + 1; ++cycle) {
      for (double bp : profile.breakpoints()) {
        // Unwrapped cam angle of this breakpoint relative to the start angle.
        double rel = bp - wrap_angle(start_angle);
        rel += cycle * kTwoPi;
        const double t = rel / omega;
        if (t <= 0.0 || t > steps * dt) continue;
        const double nearest = std::round(t / dt) * dt;
        if (std::abs(nearest - t) <= 1e-9 * dt) continue;  // already on the grid
        extra.push_back(detail::kinematic_sample(profile, omega, t, bp));
      }
    }
    if (!extra.empty()) {
      samples.insert(samples.end(), extra.begin(), extra.end());
      std::sort(samples.begin(), samples.end(),
                [](const TrajectorySample& a, const TrajectorySample& b) { return a.t < b.t; });
      return SliderTrajectory(profile, omega, dt, phase_offset, std::move(samples), false);
    }
  }
  return SliderTrajectory(profile, omega, dt, phase_offset, std::move(samples), true);
}

/// Kinematic samples at caller-chosen times (non-uniform in general).
inline SliderTrajectory trajectory_at_times(const CamProfile& profile, double omega,
                                            double phase_offset, std::span<const double> times) {
  require(std::isfinite(omega) && omega > 0.0, "omega must be > 0");
  std::vector<TrajectorySample> samples;
  samples.reserve(times.size());
  for (double t : times)
    samples.push_back(detail::kinematic_sample(profile, omega, t, wrap_angle(omega * t + phase_offset)));
  const double dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  return SliderTrajectory(profile, omega, dt, phase_offset, std::move(samples), false);
}

}  // namespace capsim
