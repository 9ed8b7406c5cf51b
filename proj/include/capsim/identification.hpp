#pragma once

// Identification of Kelvin–Voigt and relaxation parameters from a measured
// single-slider wall-force trace.
//
// The measured signal is the wall (tissue) force F_wall sampled on the same
// uniform clock as the slider trajectory. Every phase starts in stick; the
// contact may break once and then slips until the slider reverses.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "capsim/cam_profile.hpp"
#include "capsim/common.hpp"
#include "capsim/contact.hpp"

namespace capsim {

struct MeasuredTrace {
  std::vector<double> t;  // s
  std::vector<double> F;  // N
  double dt = 0.0;
  std::map<std::string, std::string> metadata;

  std::size_t size() const { return t.size(); }

  /// Checks lengths, finiteness, strictly increasing t and dt uniform within 1%.
  void validate() const {
    require(t.size() == F.size(), "measured trace: t and F lengths differ");
    require(t.size() >= 2, "measured trace needs at least two samples");
    for (std::size_t i = 0; i < t.size(); ++i) {
      require(all_finite(t[i], F[i]), "measured trace contains NaN or Inf");
      if (i > 0) {
        require(t[i] > t[i - 1], "measured trace time must be strictly increasing");
        require(std::abs((t[i] - t[i - 1]) - dt) <= 0.01 * dt,
                "measured trace time step is not uniform within 1%");
      }
    }
  }

  static MeasuredTrace from_contact(const ContactTrace& trace) {
    MeasuredTrace out;
    out.dt = trace.dt;
    for (const auto& s : trace.samples) {
      out.t.push_back(s.t);
      out.F.push_back(s.F_wall);
    }
    return out;
  }
};

enum class Phase { ret, adv };

inline const char* to_string(Phase phase) { return phase == Phase::ret ? "ret" : "adv"; }

struct TraceSegment {
  std::size_t begin = 0;  // first sample
  std::size_t end = 0;    // one past the last sample
  ContactMode mode = ContactMode::stick;
  Phase phase = Phase::ret;  // phase of the first sample

  std::size_t size() const { return end - begin; }
};

struct Segmentation {
  std::vector<ContactMode> mode;  // per sample
  std::vector<Phase> phase;       // per sample
  std::vector<TraceSegment> segments;
  std::vector<std::size_t> breaks;  // last stick sample before each slip run
  double noise_sigma = 0.0;         // robust estimate of the measurement noise
};

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

/// σ of white noise from the MAD of second differences (var(Δ²e) = 6σ²).
inline double noise_sigma(const std::vector<double>& F) {
  if (F.size() < 3) return 0.0;
  std::vector<double> d2;
  d2.reserve(F.size() - 2);
  for (std::size_t i = 2; i < F.size(); ++i) d2.push_back(F[i] - 2.0 * F[i - 1] + F[i - 2]);
  const double med = median(d2);
  for (double& d : d2) d = std::abs(d - med);
  return 1.4826 * median(d2) / std::sqrt(6.0);
}

/// Step directions of the slider (+1/−1), dwell keeping the previous one.
/// Entry i is the direction of the step from i−1 to i; entry 0 copies the
/// first moving step.
inline std::vector<int> step_directions(const std::vector<TrajectorySample>& s) {
  std::vector<int> dir(s.size(), -1);
  int current = 0;
  for (std::size_t i = 1; i < s.size() && current == 0; ++i)
    current = sign_of(s[i].x - s[i - 1].x);
  if (current == 0) current = -1;
  dir[0] = current;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const int d = sign_of(s[i].x - s[i - 1].x);
    if (d != 0) current = d;
    dir[i] = current;
  }
  return dir;
}

/// Backward-difference slider velocity in m/s; entry 0 is 0 (start from rest).
inline std::vector<double> fd_velocity(const std::vector<TrajectorySample>& s, double dt) {
  std::vector<double> v(s.size(), 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) v[i] = (s[i].x - s[i - 1].x) * kMPerMm / dt;
  return v;
}

using Real = long double;

/// Prefix sums of the stick model y ~ 1 + x + v for O(1) residuals on any
/// window [lo, hi) of one phase.
struct StickSums {
  // Columns: n, x, v, y, xx, xv, vv, xy, vy, yy
  std::vector<std::array<Real, 10>> acc;

  void build(const std::vector<double>& x, const std::vector<double>& v,
             const std::vector<double>& y, std::size_t b, std::size_t e) {
    const Real x0 = x[b];
    const Real v0 = v[b];
    const Real y0 = y[b];
    acc.assign(e - b + 1, {});
    for (std::size_t i = b; i < e; ++i) {
      const Real xi = (x[i] - x0) * 1e3L;
      const Real vi = (v[i] - v0) * 1e3L;
      const Real yi = y[i] - y0;
      auto s = acc[i - b];
      s[0] += 1; s[1] += xi; s[2] += vi; s[3] += yi;
      s[4] += xi * xi; s[5] += xi * vi; s[6] += vi * vi;
      s[7] += xi * yi; s[8] += vi * yi; s[9] += yi * yi;
      acc[i - b + 1] = s;
    }
  }

  Real sse(std::size_t lo, std::size_t hi) const {
    std::array<Real, 10> s;
    for (std::size_t j = 0; j < 10; ++j) s[j] = acc[hi][j] - acc[lo][j];
    const Real n = s[0];
    if (n < 1) return 0;
    const Real cxx = s[4] - s[1] * s[1] / n;
    const Real cxv = s[5] - s[1] * s[2] / n;
    const Real cvv = s[6] - s[2] * s[2] / n;
    const Real cxy = s[7] - s[1] * s[3] / n;
    const Real cvy = s[8] - s[2] * s[3] / n;
    const Real cyy = s[9] - s[3] * s[3] / n;
    Eigen::Matrix<Real, 2, 2> A;
    A << cxx, cxv, cxv, cvv;
    Eigen::Matrix<Real, 2, 1> r(cxy, cvy);
    Eigen::JacobiSVD<Eigen::Matrix<Real, 2, 2>> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    svd.setThreshold(1e-12L);
    const Eigen::Matrix<Real, 2, 1> beta = svd.solve(r);
    return std::max<Real>(cyy - beta.dot(r), 0);
  }
};

/// Residuals of y ~ T + A·exp(−rate·t) on every suffix [m, e) of a phase,
/// for one fixed rate (the model is then linear in T and A). out[m − b] is
/// the SSE of the suffix starting at m.
inline void relaxation_suffix_sse(const std::vector<double>& t, const std::vector<double>& y,
                                  std::size_t b, std::size_t e, double rate,
                                  std::vector<Real>& out) {
  out.assign(e - b + 1, 0);
  const Real y0 = y[b];
  Real n = 0, sg = 0, sy = 0, sgg = 0, sgy = 0, syy = 0;
  // Origin at the phase end keeps g >= 1; scaling g leaves the SSE unchanged.
  Real g = 1;
  double last_step = -1.0;
  Real factor = 1;
  for (std::size_t i = e; i-- > b;) {
    if (i + 1 < e) {
      const double step = t[i + 1] - t[i];
      if (std::abs(step - last_step) > 1e-9 * step) {
        last_step = step;
        factor = std::exp(static_cast<Real>(rate) * step);
      }
      g *= factor;
    }
    const Real yi = y[i] - y0;
    n += 1; sg += g; sy += yi; sgg += g * g; sgy += g * yi; syy += yi * yi;
    const Real cgg = sgg - sg * sg / n;
    const Real cgy = sgy - sg * sy / n;
    const Real cyy = syy - sy * sy / n;
    out[i - b] = cgg > 0 ? std::max<Real>(cyy - cgy * cgy / cgg, 0) : std::max<Real>(cyy, 0);
  }
}

struct PhaseSplit {
  std::size_t first_slip = 0;  // local index; == phase length when no split
  Real sse = 0;
  Real gain = 0;  // SSE reduction over the all-stick fit
};

/// Best stick → slip split of one phase [b, e).
inline PhaseSplit split_phase(const std::vector<double>& t, const std::vector<double>& x,
                              const std::vector<double>& v, const std::vector<double>& y,
                              std::size_t b, std::size_t e, double dt, std::size_t min_stick,
                              std::size_t min_slip, double tie_tolerance) {
  const std::size_t len = e - b;
  StickSums stick;
  stick.build(x, v, y, b, e);
  std::vector<Real> stick_sse(len + 1);
  for (std::size_t m = 0; m <= len; ++m) stick_sse[m] = stick.sse(0, m);

  PhaseSplit best{len, stick_sse[len], 0};
  const Real whole = stick_sse[len];
  if (len < min_stick + min_slip) return best;

  const double duration = t[e - 1] - t[b];
  // Rates whose exp() fits in long double over the whole phase.
  const double r_max = std::min(1.0 / (1.5 * dt), 11000.0 / std::max(duration, dt));
  const double r_min = 0.1 / std::max(duration, dt);
  std::vector<Real> profile;
  // The last stick sample also lies on the relaxation curve, so near-equal
  // splits are resolved towards the later one.
  const Real tie = 1e-16L * whole + static_cast<Real>(tie_tolerance);
  auto scan = [&](double rate) {
    relaxation_suffix_sse(t, y, b, e, rate, profile);
    Real low = whole;
    for (std::size_t m = min_stick; m + min_slip <= len; ++m)
      low = std::min(low, stick_sse[m] + profile[m]);
    std::size_t arg = len;
    if (low < whole)
      for (std::size_t m = min_stick; m + min_slip <= len; ++m)
        if (stick_sse[m] + profile[m] <= low + tie) arg = m;
    return std::pair<std::size_t, Real>(arg, arg == len ? whole : stick_sse[arg] + profile[arg]);
  };

  double best_rate = r_min;
  constexpr int kGrid = 40;
  for (int j = 0; j < kGrid; ++j) {
    const double rate = r_min * std::pow(r_max / r_min, static_cast<double>(j) / (kGrid - 1));
    const auto [m, total] = scan(rate);
    if (total < best.sse) {
      best.sse = total;
      best.first_slip = m;
      best_rate = rate;
    }
  }
  if (best.first_slip == len) return best;

  // Golden-section on ln(rate) with the split held fixed, then rescan.
  for (int round = 0; round < 2; ++round) {
    const std::size_t m = best.first_slip;
    auto cost = [&](double log_rate) {
      relaxation_suffix_sse(t, y, b + m, e, std::exp(log_rate), profile);
      return profile[0];
    };
    const double step = std::log(r_max / r_min) / (kGrid - 1);
    double lo = std::log(best_rate) - 1.5 * step;
    double hi = std::log(best_rate) + 1.5 * step;
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - g * (hi - lo);
    double d = lo + g * (hi - lo);
    Real fc = cost(c);
    Real fd = cost(d);
    for (int it = 0; it < 60 && hi - lo > 1e-8; ++it) {
      if (fc < fd) {
        hi = d; d = c; fd = fc;
        c = hi - g * (hi - lo); fc = cost(c);
      } else {
        lo = c; c = d; fc = fd;
        d = lo + g * (hi - lo); fd = cost(d);
      }
    }
    best_rate = std::exp(0.5 * (lo + hi));
    const auto [m2, total] = scan(best_rate);
    if (total <= best.sse) {
      best.sse = total;
      best.first_slip = m2;
    }
  }
  best.gain = whole - best.sse;
  return best;
}

}  // namespace detail

/// Labels every sample stick/slip and ret/adv.
///
/// Phases are the runs of constant slider direction. In each phase the break
/// point is the split minimising the combined residual of a Kelvin–Voigt fit
/// (F ~ 1 + x + v) on the stick part and an exponential relaxation on the slip
/// part. A phase stays all-stick unless the split lowers the residual by
/// more than 20·σ²·ln(n), σ being the robust noise estimate.
inline Segmentation segment_trace(const MeasuredTrace& measured, const SliderTrajectory& slider) {
  measured.validate();
  require(slider.uniform(), "segmentation needs a uniformly sampled slider trajectory");
  const auto& s = slider.samples();
  require(s.size() == measured.size(), "measured and slider traces must have the same length");
  require(std::abs(slider.dt() - measured.dt) <= 0.01 * slider.dt(),
          "measured and slider traces must share the time step");
  require(std::abs(s.front().t - measured.t.front()) <= 0.5 * measured.dt,
          "measured and slider traces must start at the same time");
  require(measured.t.back() - measured.t.front() >= slider.period() * (1.0 - 1e-9),
          "trace is shorter than one cam cycle");

  const std::size_t n = measured.size();
  const auto& F = measured.F;
  const auto dir = detail::step_directions(s);
  const auto v = detail::fd_velocity(s, measured.dt);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = s[i].x * kMPerMm;

  Segmentation seg;
  seg.mode.assign(n, ContactMode::stick);
  seg.phase.resize(n);
  for (std::size_t i = 0; i < n; ++i) seg.phase[i] = dir[i] < 0 ? Phase::ret : Phase::adv;

  double scale = 0.0;
  for (double f : F) scale = std::max(scale, std::abs(f));
  seg.noise_sigma = detail::noise_sigma(F);
  const double sigma = std::max(seg.noise_sigma, 1e-9 * std::max(scale, 1e-3));

  constexpr std::size_t kMinStick = 1;
  constexpr std::size_t kMinSlip = 3;
  std::size_t b = 0;
  while (b < n) {
    std::size_t e = b + 1;
    while (e < n && dir[e] == dir[b]) ++e;
    const auto split = detail::split_phase(measured.t, x, v, F, b, e, measured.dt, kMinStick, kMinSlip,
                                             sigma * sigma);
    // A split must explain clearly more than its extra parameters would pick
    // up from noise alone.
    const double threshold = 20.0 * sigma * sigma * std::log(static_cast<double>(e - b) + 1.0);
    if (split.first_slip < e - b && static_cast<double>(split.gain) > threshold)
      for (std::size_t i = b + split.first_slip; i < e; ++i) seg.mode[i] = ContactMode::slip;
    b = e;
  }

  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && seg.mode[j] == seg.mode[i]) ++j;
    seg.segments.push_back({i, j, seg.mode[i], seg.phase[i]});
    if (seg.mode[i] == ContactMode::slip && i > 0) seg.breaks.push_back(i - 1);
    i = j;
  }
  return seg;
}

// ---------------------------------------------------------------------------
// Slip relaxation

struct RelaxationSegmentFit {
  std::size_t begin = 0;
  std::size_t end = 0;
  Phase phase = Phase::ret;
  double target = 0.0;  // asymptote F_target, N
  double amplitude = 0.0;
  double tau = 0.0;  // s
  double rms = 0.0;
  bool accepted = false;
  std::string reason;
};

/// Fits F(t) = T + A·exp(−(t − t0)/τ) to one relaxation run.
///
/// `t` and `F` start with the last stick sample (t0). T starts as the mean of
/// the final 10%, a log-linear fit on |T − F| seeds (A, τ), and Gauss–Newton
/// iterations refine all three. Throws FitError when the run resolves τ with
/// fewer than three samples or does not converge monotonically.
inline RelaxationSegmentFit fit_relaxation_segment(const std::vector<double>& t,
                                                   const std::vector<double>& F, double dt,
                                                   double noise_sigma = 0.0) {
  require(t.size() == F.size(), "relaxation fit: t and F lengths differ");
  require(dt > 0.0, "relaxation fit: dt must be > 0");
  const std::size_t n = F.size();
  if (n < 4) throw FitError("slip run too short to fit a relaxation (under-resolved)");
  const double t0 = t.front();

  const std::size_t tail = std::max<std::size_t>(1, n / 10);
  double T = 0.0;
  for (std::size_t i = n - tail; i < n; ++i) T += F[i];
  T /= static_cast<double>(tail);

  const double gap0 = F.front() - T;
  const double floor = std::max(3.0 * noise_sigma, 1e-12 * std::max(std::abs(T), 1e-3));
  if (std::abs(gap0) <= floor) throw FitError("slip run shows no relaxation");
  const double sgn = gap0 > 0.0 ? 1.0 : -1.0;

  // Monotone approach: block means may not move away from the asymptote by
  // more than the noise allows.
  const std::size_t block = std::max<std::size_t>(1, std::min<std::size_t>(n / 4, n / 20 + 1));
  const double block_tol =
      5.0 * noise_sigma * std::sqrt(2.0 / static_cast<double>(block)) + 1e-12 * std::abs(gap0);
  double prev_mean = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t lo = 0; lo + block <= n; lo += block) {
    double m = 0.0;
    for (std::size_t i = lo; i < lo + block; ++i) m += F[i];
    m /= static_cast<double>(block);
    if (sgn * (m - prev_mean) > block_tol) throw FitError("slip run does not converge monotonically");
    prev_mean = m;
  }

  // Log-linear seed on the part of the run well above the asymptote noise.
  std::vector<double> lt;
  std::vector<double> ly;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = sgn * (F[i] - T);
    if (g <= std::max(0.1 * std::abs(gap0), 2.0 * floor)) break;
    lt.push_back(t[i] - t0);
    ly.push_back(std::log(g));
  }
  if (lt.size() < 3) throw FitError("relaxation under-resolved: fewer than 3 samples per tau");
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) { mt += lt[i]; my += ly[i]; }
  mt /= static_cast<double>(lt.size());
  my /= static_cast<double>(lt.size());
  double stt = 0.0, sty = 0.0;
  for (std::size_t i = 0; i < lt.size(); ++i) {
    stt += (lt[i] - mt) * (lt[i] - mt);
    sty += (lt[i] - mt) * (ly[i] - my);
  }
  double rate = -sty / stt;
  if (!(rate > 0.0) || !std::isfinite(rate)) throw FitError("relaxation seed fit failed");
  double A = sgn * std::exp(my + rate * mt);

  // Gauss–Newton with step halving on (T, A, rate).
  auto sse_of = [&](double T_, double A_, double r_) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = F[i] - (T_ + A_ * std::exp(-r_ * (t[i] - t0)));
      acc += e * e;
    }
    return acc;
  };
  double sse = sse_of(T, A, rate);
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix3d JtJ = Eigen::Matrix3d::Zero();
    Eigen::Vector3d Jtr = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const double tau_t = t[i] - t0;
      const double ex = std::exp(-rate * tau_t);
      const Eigen::Vector3d J(1.0, ex, -A * tau_t * ex);
      const double r = F[i] - (T + A * ex);
      JtJ += J * J.transpose();
      Jtr += J * r;
    }
    const Eigen::Vector3d step = JtJ.ldlt().solve(Jtr);
    if (!step.allFinite()) break;
    double lambda = 1.0;
    bool improved = false;
    for (int h = 0; h < 30; ++h) {
      const double T1 = T + lambda * step[0];
      const double A1 = A + lambda * step[1];
      const double r1 = rate + lambda * step[2];
      if (r1 > 0.0) {
        const double s1 = sse_of(T1, A1, r1);
        if (s1 <= sse) {
          improved = s1 < sse;
          T = T1;
          A = A1;
          rate = r1;
          sse = s1;
          break;
        }
      }
      lambda *= 0.5;
    }
    if (!improved || std::abs(step[2]) <= 1e-14 * rate) break;
  }

  RelaxationSegmentFit fit;
  fit.target = T;
  fit.amplitude = A;
  fit.tau = 1.0 / rate;
  fit.rms = std::sqrt(sse / static_cast<double>(n));
  if (fit.tau < 3.0 * dt) throw FitError("relaxation under-resolved: tau shorter than 3 samples");
  fit.accepted = true;
  return fit;
}

struct PhaseRelaxation {
  std::optional<double> tau;  // median over accepted runs
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

struct RelaxationFit {
  PhaseRelaxation ret;
  PhaseRelaxation adv;
  std::optional<double> mu_k_N;  // mean |T| over accepted runs
  std::vector<RelaxationSegmentFit> segments;
  std::vector<std::string> flags;

  const PhaseRelaxation& of(Phase p) const { return p == Phase::ret ? ret : adv; }
};

/// Fits every slip run of a segmentation; failed runs are kept with a reason.
/// The run that follows the start-up stick (from rest at sample 0) only
/// counts when its phase has no other accepted run: the velocity step at
/// start-up can put that break one sample early.
inline RelaxationFit fit_relaxation(const Segmentation& seg, const MeasuredTrace& measured) {
  RelaxationFit out;
  std::vector<double> taus_ret;
  std::vector<double> taus_adv;
  std::vector<double> targets;
  std::vector<RelaxationSegmentFit> startup;
  for (std::size_t si = 0; si < seg.segments.size(); ++si) {
    const auto& s = seg.segments[si];
    if (s.mode != ContactMode::slip || s.begin == 0) continue;
    std::vector<double> t(measured.t.begin() + static_cast<std::ptrdiff_t>(s.begin - 1),
                          measured.t.begin() + static_cast<std::ptrdiff_t>(s.end));
    std::vector<double> F(measured.F.begin() + static_cast<std::ptrdiff_t>(s.begin - 1),
                          measured.F.begin() + static_cast<std::ptrdiff_t>(s.end));
    RelaxationSegmentFit fit;
    try {
      fit = fit_relaxation_segment(t, F, measured.dt, seg.noise_sigma);
    } catch (const FitError& e) {
      fit.accepted = false;
      fit.reason = e.what();
    }
    fit.begin = s.begin;
    fit.end = s.end;
    fit.phase = s.phase;
    auto& phase = s.phase == Phase::ret ? out.ret : out.adv;
    const bool after_startup = si > 0 && seg.segments[si - 1].begin == 0;
    if (fit.accepted && after_startup) {
      startup.push_back(fit);
    } else if (fit.accepted) {
      ++phase.accepted;
      (s.phase == Phase::ret ? taus_ret : taus_adv).push_back(fit.tau);
      targets.push_back(std::abs(fit.target));
    } else {
      ++phase.rejected;
    }
    out.segments.push_back(fit);
  }
  for (const auto& fit : startup) {
    auto& taus = fit.phase == Phase::ret ? taus_ret : taus_adv;
    if (!taus.empty()) continue;
    ++(fit.phase == Phase::ret ? out.ret : out.adv).accepted;
    taus.push_back(fit.tau);
    targets.push_back(std::abs(fit.target));
  }
  if (!taus_ret.empty()) out.ret.tau = detail::median(taus_ret);
  if (!taus_adv.empty()) out.adv.tau = detail::median(taus_adv);
  if (!targets.empty())
    out.mu_k_N = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  if (!out.ret.tau) out.flags.push_back("tau_ret: no usable slip run in the retract phase");
  if (!out.adv.tau) out.flags.push_back("tau_adv: no usable slip run in the advance phase");
  for (const auto& f : out.segments)
    if (!f.accepted) out.flags.push_back("slip run at sample " + std::to_string(f.begin) + " rejected: " + f.reason);
  return out;
}

// ---------------------------------------------------------------------------
// Stiffness and damping

struct StiffnessOptions {
  /// Fit F ~ 1 + x + v per stick run instead of anchoring each run to the
  /// wall state carried over from the preceding slip. Cannot separate c from
  /// the intercept on constant-velocity runs.
  bool free_intercept = false;
};

struct StiffnessFit {
  double k = 0.0;  // N/m
  double c = 0.0;  // N·s/m
  double k_ci = 0.0;
  double c_ci = 0.0;  // 95% half-width; +inf when unidentifiable
  bool rank_deficient = false;
  std::size_t rows = 0;
};

/// Least squares on the stick samples of F = k·x_wall + c·v_wall, with x_wall
/// following the slider inside each stick run.
///
/// Each run is anchored: from rest at the start of the trace, to the previous
/// stick sample when the contact never slipped, or to the wall state at the
/// end of the preceding slip run. The slip state is propagated with the
/// relaxation times in `relax`.
inline StiffnessFit fit_stiffness_damping(const Segmentation& seg, const MeasuredTrace& measured,
                                          const SliderTrajectory& slider,
                                          const RelaxationFit& relax,
                                          const StiffnessOptions& options = {}) {
  const auto& s = slider.samples();
  require(s.size() == measured.size(), "measured and slider traces must have the same length");
  const double dt = measured.dt;
  const auto& F = measured.F;
  const auto v = detail::fd_velocity(s, dt);
  auto xm = [&](std::size_t i) { return s[i].x * kMPerMm; };

  std::size_t usable = 0;
  for (const auto& g : seg.segments)
    if (g.mode == ContactMode::stick && g.size() >= 10) ++usable;
  if (usable < 2) throw FitError("stiffness fit needs at least two stick runs of >= 10 samples");

  std::vector<std::array<double, 3>> rows;  // x-regressor, v-regressor, y
  std::vector<std::size_t> run_of_row;
  std::vector<std::array<double, 3>> rest_rows;
  std::size_t run_id = 0;
  std::size_t anchored_runs = 0;
  for (const auto& g : seg.segments) {
    if (g.mode != ContactMode::stick || g.size() < 10) continue;
    ++run_id;
    if (options.free_intercept) {
      for (std::size_t i = g.begin; i < g.end; ++i) {
        rows.push_back({xm(i), v[i], F[i]});
        run_of_row.push_back(run_id);
      }
      continue;
    }
    if (g.begin == 0) {
      // From rest: x_wall = 0, F = 0 at sample 0. Only a fallback, because
      // the start-up break is often too early to locate under noise.
      for (std::size_t i = 1; i < g.end; ++i) rest_rows.push_back({xm(i) - xm(0), v[i], F[i] - F[0]});
      continue;
    }
    const std::size_t a = g.begin;
    // Find the slip run [p, a) and the break sample p−1 in front of this run.
    std::size_t p = a;
    while (p > 0 && seg.mode[p - 1] == ContactMode::slip) --p;
    if (p == 0) continue;  // trace starts in slip: no anchor
    const auto& phase_fit = relax.of(seg.phase[p]);
    if (!phase_fit.tau) continue;
    const double alpha = -std::expm1(-dt / *phase_fit.tau);
    double P = 1.0;
    double S = 0.0;
    for (std::size_t j = p; j < a; ++j) {
      S = (1.0 - alpha) * S + alpha * F[j];
      P *= 1.0 - alpha;
    }
    for (std::size_t i = a; i < g.end; ++i)
      rows.push_back({xm(i) - xm(a - 1), v[i] - P * v[p - 1], F[i] - P * F[p - 1] - S});
    ++anchored_runs;
  }
  if (!options.free_intercept && anchored_runs < 2)
    rows.insert(rows.end(), rest_rows.begin(), rest_rows.end());

  StiffnessFit out;
  std::array<double, 2> raw_norm{0.0, 0.0};
  for (const auto& r : rows) {
    raw_norm[0] += r[0] * r[0];
    raw_norm[1] += r[1] * r[1];
  }
  if (options.free_intercept) {
    // Per-run intercepts absorbed by demeaning each run.
    std::map<std::size_t, std::array<double, 4>> means;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto& m = means[run_of_row[r]];
      m[0] += rows[r][0]; m[1] += rows[r][1]; m[2] += rows[r][2]; m[3] += 1.0;
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& m = means[run_of_row[r]];
      for (int j = 0; j < 3; ++j) rows[r][static_cast<std::size_t>(j)] -= m[static_cast<std::size_t>(j)] / m[3];
    }
  }
  require(rows.size() >= 3, "stiffness fit has fewer than 3 usable rows");
  out.rows = rows.size();
  Eigen::MatrixXd X(rows.size(), 2);
  Eigen::VectorXd y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    X(static_cast<Eigen::Index>(r), 0) = rows[r][0];
    X(static_cast<Eigen::Index>(r), 1) = rows[r][1];
    y(static_cast<Eigen::Index>(r)) = rows[r][2];
  }
  // Column scaling keeps the rank test meaningful for m vs m/s.
  // A column that demeaning reduced to roundoff carries no information.
  Eigen::Vector2d col_scale(X.col(0).norm(), X.col(1).norm());
  for (int j = 0; j < 2; ++j)
    if (col_scale[j] <= 1e-10 * std::sqrt(raw_norm[static_cast<std::size_t>(j)])) {
      X.col(j).setZero();
      col_scale[j] = 0.0;
    }
  for (int j = 0; j < 2; ++j)
    if (col_scale[j] > 0.0) X.col(j) /= col_scale[j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto sv = svd.singularValues();
  out.rank_deficient = col_scale[1] == 0.0 || sv[1] <= 1e-8 * sv[0];
  const Eigen::Vector2d beta = svd.solve(y);
  const Eigen::VectorXd resid = y - X * beta;
  const double dof = static_cast<double>(rows.size()) - 2.0;
  const double s2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
  out.k = col_scale[0] > 0.0 ? beta[0] / col_scale[0] : 0.0;
  if (out.rank_deficient) {
    // Fall back to the stiffness-only fit.
    out.k = X.col(0).dot(y) / X.col(0).squaredNorm() / col_scale[0];
    out.c = 0.0;
    out.c_ci = std::numeric_limits<double>::infinity();
    const double se_k = std::sqrt(s2 / X.col(0).squaredNorm()) / col_scale[0];
    out.k_ci = 1.96 * se_k;
    return out;
  }
  out.c = beta[1] / col_scale[1];
  const Eigen::Matrix2d cov = s2 * (X.transpose() * X).inverse();
  out.k_ci = 1.96 * std::sqrt(cov(0, 0)) / col_scale[0];
  out.c_ci = 1.96 * std::sqrt(cov(1, 1)) / col_scale[1];
  return out;
}

/// μ_s·N from the break samples: the largest force seen one sample before a
/// break and the smallest force on a break sample bracket the threshold.
inline std::optional<double> estimate_mu_s(const Segmentation& seg, const MeasuredTrace& measured,
                                           const SliderTrajectory& slider) {
  if (seg.breaks.empty()) return std::nullopt;
  const auto dir = detail::step_directions(slider.samples());
  double below = -std::numeric_limits<double>::infinity();
  double above = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (std::size_t b : seg.breaks) {
    const double d = dir[b];
    above = std::min(above, d * measured.F[b]);
    if (b > 0 && seg.mode[b - 1] == ContactMode::stick && dir[b - 1] == dir[b])
      below = std::max(below, d * measured.F[b - 1]);
    mean += d * measured.F[b];
  }
  mean /= static_cast<double>(seg.breaks.size());
  if (std::isfinite(below) && below < above) return 0.5 * (below + above);
  return mean;
}

// ---------------------------------------------------------------------------
// Agreement

struct Agreement {
  double rmse = 0.0;
  double nrmse = 0.0;
};

/// rmse of model − reference and rmse normalised by the reference range.
inline Agreement compare(const std::vector<double>& model, const std::vector<double>& reference) {
  require(model.size() == reference.size(), "compare: traces have different lengths");
  require(!model.empty(), "compare: empty traces");
  double acc = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double d = model[i] - reference[i];
    acc += d * d;
  }
  Agreement out;
  out.rmse = std::sqrt(acc / static_cast<double>(model.size()));
  const auto [lo, hi] = std::minmax_element(reference.begin(), reference.end());
  const double range = *hi - *lo;
  out.nrmse = range > 0.0 ? out.rmse / range : (out.rmse == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  return out;
}

struct FitReport {
  double k_tissue = 0.0;
  double k_tissue_ci = 0.0;
  double c_tissue = 0.0;
  double c_tissue_ci = 0.0;
  double tau_ret = std::numeric_limits<double>::quiet_NaN();
  double tau_adv = std::numeric_limits<double>::quiet_NaN();
  double mu_s_N = std::numeric_limits<double>::quiet_NaN();
  double mu_k_N = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double nrmse = std::numeric_limits<double>::quiet_NaN();
  bool rank_deficient = false;
  std::vector<std::string> flags;

  bool converged() const { return flags.empty(); }

  TissueParams params() const {
    return {k_tissue, c_tissue, mu_s_N, mu_k_N, tau_ret, tau_adv};
  }
};

/// segment → relaxation → stiffness → μ_s → re-simulate → compare.
/// Problems that leave a parameter undetermined are reported in `flags`
/// rather than thrown, so a partial report is still available.
inline FitReport identify(const MeasuredTrace& measured, const SliderTrajectory& slider,
                          const StiffnessOptions& options = {}) {
  FitReport report;
  const auto seg = segment_trace(measured, slider);
  const auto relax = fit_relaxation(seg, measured);
  report.flags = relax.flags;
  if (relax.ret.tau) report.tau_ret = *relax.ret.tau;
  if (relax.adv.tau) report.tau_adv = *relax.adv.tau;
  if (relax.mu_k_N) report.mu_k_N = *relax.mu_k_N;

  try {
    const auto kc = fit_stiffness_damping(seg, measured, slider, relax, options);
    report.k_tissue = kc.k;
    report.k_tissue_ci = kc.k_ci;
    report.c_tissue = kc.c;
    report.c_tissue_ci = kc.c_ci;
    report.rank_deficient = kc.rank_deficient;
    if (kc.rank_deficient) report.flags.push_back("c_tissue: regression is rank deficient");
  } catch (const Error& e) {
    report.flags.push_back(std::string("stiffness: ") + e.what());
  }

  if (auto mu_s = estimate_mu_s(seg, measured, slider)) report.mu_s_N = *mu_s;
  else report.flags.push_back("mu_s_N: no stick-to-slip transition in the trace");

  const auto p = report.params();
  if (all_finite(p.k_tissue, p.c_tissue, p.mu_s_N, p.mu_k_N, p.tau_ret, p.tau_adv) &&
      p.k_tissue > 0.0 && p.c_tissue > 0.0 && p.mu_s_N > 0.0 && p.mu_k_N > 0.0 &&
      p.tau_ret > 0.0 && p.tau_adv > 0.0) {
    const auto sim = stick_slip_simulate(slider, p);
    std::vector<double> model;
    model.reserve(sim.samples.size());
    for (const auto& smp : sim.samples) model.push_back(smp.F_wall);
    const auto agreement = compare(model, measured.F);
    report.rmse = agreement.rmse;
    report.nrmse = agreement.nrmse;
  } else {
    report.flags.push_back("re-simulation skipped: parameter set incomplete or non-positive");
  }
  return report;
}

}  // namespace capsim
