#pragma once

// Superposition of n phase-shifted sliders into capsule thrust.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "capsim/cam_profile.hpp"
#include "capsim/common.hpp"
#include "capsim/contact.hpp"

namespace capsim {

enum class ContactModel { ideal, viscoelastic };

inline const char* to_string(ContactModel model) {
  return model == ContactModel::ideal ? "ideal" : "viscoelastic";
}

struct CapsuleConfig {
  int n_sliders = 12;
  double mu_N = 0.14;   // N
  double F_loss = 0.0;  // N per slider
  SmoothingSpec smoothing;
  ContactModel model = ContactModel::ideal;
  std::optional<TissueParams> tissue;
  StickSlipOptions options;

  void validate() const {
    require(n_sliders >= 3, "capsule needs n_sliders >= 3");
    require(std::isfinite(mu_N) && mu_N > 0.0, "mu_N must be > 0");
    require(std::isfinite(F_loss) && F_loss >= 0.0, "F_loss must be >= 0");
    smoothing.validate();
    if (model == ContactModel::viscoelastic) {
      require(tissue.has_value(), "viscoelastic model needs tissue parameters");
      tissue->validate();
    }
  }

  double phase_offset(int slider) const { return kTwoPi * slider / n_sliders; }
};

struct ThrustSample {
  double theta = 0.0;   // rad, capsule cam angle
  double weight = 0.0;  // rad, quadrature weight
  double F_capsule = 0.0;
  double F_normalized = 0.0;
  int n_ret = 0;
  int n_adv = 0;
};

/// One steady-state cycle of capsule thrust. `ripple` is NaN when the mean is
/// zero; use ripple_cov() to get an error instead.
struct ThrustTrace {
  std::vector<ThrustSample> samples;
  int n_sliders = 0;
  double mu_N = 0.0;
  double mean = 0.0;
  double mean_normalized = 0.0;
  double ripple = std::numeric_limits<double>::quiet_NaN();
};

/// (n_ret, n_adv) at capsule angle θ; dwelling sliders count in neither.
inline std::pair<int, int> phase_counts(const CamProfile& profile, int n, double theta) {
  require(n >= 1, "slider count must be >= 1");
  int ret = 0;
  int adv = 0;
  for (int i = 0; i < n; ++i) {
    const double th = wrap_angle(theta + kTwoPi * i / n);
    const auto kind = profile.segments()[profile.segment_index(th)].kind;
    ret += kind == SegmentKind::fall;
    adv += kind == SegmentKind::rise;
  }
  return {ret, adv};
}

/// Per-slider forces on a common grid covering one steady-state cycle.
struct SliderForces {
  std::vector<double> theta;
  std::vector<double> weight;               // rad, sums to 2π
  std::vector<std::vector<double>> force;  // [slider][sample], N
};

/// Ideal model: exact quadrature grid in θ with display spacing ω·dt.
/// Viscoelastic model: dt is snapped so a whole number of steps fits the
/// period, every slider is simulated for n_cycles and the last cycle is kept.
inline SliderForces slider_forces(const CamProfile& profile, const CapsuleConfig& config,
                                  double omega, double dt, int n_cycles) {
  config.validate();
  require(std::isfinite(omega) && omega > 0.0, "omega must be > 0");
  require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
  require(n_cycles >= 2, "n_cycles must be >= 2 (first cycle is discarded)");
  const int n = config.n_sliders;
  SliderForces out;
  out.force.resize(static_cast<std::size_t>(n));

  if (config.model == ContactModel::ideal) {
    std::vector<double> events;
    for (int i = 0; i < n; ++i) {
      auto kinks = ideal_kink_angles(profile, config.smoothing, config.phase_offset(i));
      events.insert(events.end(), kinks.begin(), kinks.end());
    }
    detail::gauss_nodes(std::move(events), omega * dt, out.theta, out.weight);
    for (int i = 0; i < n; ++i) {
      auto& f = out.force[static_cast<std::size_t>(i)];
      f.reserve(out.theta.size());
      for (double th : out.theta)
        f.push_back(ideal_force_at(profile, config.mu_N, config.smoothing,
                                   th + config.phase_offset(i)));
    }
    return out;
  }

  const double period = kTwoPi / omega;
  const auto steps = static_cast<long long>(std::ceil(period / dt - 1e-9));
  const double step = period / static_cast<double>(steps);
  for (int i = 0; i < n; ++i) {
    const auto traj = slider_trajectory(profile, omega, step, config.phase_offset(i), n_cycles,
                                        Sampling::uniform);
    const auto trace = stick_slip_simulate(traj, *config.tissue, config.options);
    const auto series = slider_force_series(trace, period, 1);
    if (i == 0) {
      for (double t : series.abscissa) out.theta.push_back(wrap_angle(omega * t));
      out.weight.assign(series.weight.size(), omega * step);
      const double scale = kTwoPi / (omega * step * static_cast<double>(out.weight.size()));
      for (double& w : out.weight) w *= scale;
    }
    out.force[static_cast<std::size_t>(i)] = series.force;
  }
  return out;
}

namespace detail {

inline void finish_statistics(ThrustTrace& trace) {
  double span = 0.0;
  double acc = 0.0;
  for (const auto& s : trace.samples) {
    span += s.weight;
    acc += s.weight * s.F_capsule;
  }
  trace.mean = acc / span;
  trace.mean_normalized = trace.mean / (trace.n_sliders * trace.mu_N);
  if (std::abs(trace.mean) < 1e-12) {
    trace.ripple = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double var = 0.0;
  for (const auto& s : trace.samples) var += s.weight * (s.F_capsule - trace.mean) * (s.F_capsule - trace.mean);
  trace.ripple = std::sqrt(var / span) / trace.mean;
}

}  // namespace detail

inline ThrustTrace superpose(const CamProfile& profile, const CapsuleConfig& config, double omega,
                             double dt, int n_cycles) {
  const auto forces = slider_forces(profile, config, omega, dt, n_cycles);
  ThrustTrace trace;
  trace.n_sliders = config.n_sliders;
  trace.mu_N = config.mu_N;
  trace.samples.reserve(forces.theta.size());
  const double loss = config.n_sliders * config.F_loss;
  for (std::size_t j = 0; j < forces.theta.size(); ++j) {
    ThrustSample s;
    s.theta = forces.theta[j];
    s.weight = forces.weight[j];
    double sum = 0.0;
    for (const auto& f : forces.force) sum += f[j];
    s.F_capsule = sum - loss;
    s.F_normalized = s.F_capsule / (config.n_sliders * config.mu_N);
    std::tie(s.n_ret, s.n_adv) = phase_counts(profile, config.n_sliders, s.theta);
    trace.samples.push_back(s);
  }
  detail::finish_statistics(trace);
  return trace;
}

/// n·(F_ret·d_ret − F_adv·d_adv − F_loss).
inline double cycle_average_closed_form(const CapsuleConfig& config, const DutyFractions& duty,
                                        double F_ret, double F_adv) {
  duty.validate();
  return config.n_sliders * (F_ret * duty.d_ret - F_adv * duty.d_adv - config.F_loss);
}

/// Weighted population standard deviation over the cycle divided by the mean.
inline double ripple_cov(const ThrustTrace& trace) {
  require(!trace.samples.empty(), "empty thrust trace");
  if (std::abs(trace.mean) < 1e-12)
    throw ValidationError("ripple is undefined for a zero-mean thrust trace");
  return trace.ripple;
}

struct NormalizedSample {
  double theta_tilde = 0.0;
  double weight = 0.0;
  double F_tilde = 0.0;
};

struct NormalizedTrace {
  std::vector<NormalizedSample> samples;
  double mean = 0.0;
  double F_loss_tilde = 0.0;
};

/// θ̃ = θ/2π, F̃ = F/(n·μN); weights rescaled to sum to 1.
inline NormalizedTrace nondimensionalize(const ThrustTrace& trace, const CapsuleConfig& config) {
  require(std::isfinite(config.mu_N) && config.mu_N > 0.0, "mu_N must be > 0");
  const double scale = config.n_sliders * config.mu_N;
  NormalizedTrace out;
  out.F_loss_tilde = config.F_loss / config.mu_N;
  double span = 0.0;
  double acc = 0.0;
  for (const auto& s : trace.samples) {
    out.samples.push_back({s.theta / kTwoPi, s.weight / kTwoPi, s.F_capsule / scale});
    span += s.weight / kTwoPi;
    acc += (s.weight / kTwoPi) * (s.F_capsule / scale);
  }
  out.mean = acc / span;
  return out;
}

}  // namespace capsim
