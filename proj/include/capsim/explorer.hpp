#pragma once

// Design-space sweeps over duty fractions, jump count and slider count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "capsim/cam_profile.hpp"
#include "capsim/capsule.hpp"
#include "capsim/common.hpp"

namespace capsim {

/// Prototype figures kept for documentation. None of them is simulated.
namespace reference {
inline constexpr double capsule_diameter_mm = 28.0;
inline constexpr double capsule_length_mm = 60.0;
inline constexpr double slider_stroke_mm = 10.0;
inline constexpr double capsule_mass_g = 50.0;
inline constexpr int slider_count = 12;
inline constexpr double measured_traction_N = 0.85;
inline constexpr double measured_ripple_N = 0.3;
inline constexpr double bench_fit_rmse_N = 0.0101;
inline constexpr double bench_fit_nrmse = 0.0362;
inline constexpr double locomotion_speed_mm_s = 3.08;
inline constexpr DutyFractions measured_single_jump_duty{0.911, 0.085, 0.004};
}  // namespace reference

struct GridRange {
  double lo = 0.02;
  double hi = 0.98;
  double step = 0.02;

  void validate(const char* name) const {
    const std::string n(name);
    require(all_finite(lo, hi, step), n + ": range must be finite");
    require(step > 0.0, n + ": step must be > 0");
    require(hi >= lo, n + ": hi must be >= lo");
  }

  /// lo, lo+step, ... up to hi inclusive. Values are rounded to 12 decimals
  /// so that 0.1 + 3·0.02 prints as 0.16.
  std::vector<double> values() const {
    const auto count = static_cast<long long>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i)
      out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
    return out;
  }
};

struct SweepSpec {
  GridRange d_ret;
  GridRange d_adv;
  std::vector<int> k_values{1, 2, 3};
  std::vector<int> n_values{12};
  CapsuleConfig config;  // n_sliders is replaced by each n in n_values
  double stroke_mm = 10.0;
  double omega = kTwoPi;  // rad/s
  double dt = 1e-3;       // s
  int n_cycles = 2;

  void validate() const {
    d_ret.validate("d_ret");
    d_adv.validate("d_adv");
    require(!k_values.empty(), "sweep needs at least one k value");
    require(!n_values.empty(), "sweep needs at least one n value");
    for (int k : k_values) require(k >= 1, "sweep k values must be >= 1");
    for (int n : n_values) require(n >= 3, "sweep n values must be >= 3");
    require(std::isfinite(stroke_mm) && stroke_mm > 0.0, "stroke must be > 0 mm");
    require(std::isfinite(omega) && omega > 0.0, "omega must be > 0");
    require(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
    require(n_cycles >= 2, "n_cycles must be >= 2");
    auto probe = config;
    probe.n_sliders = n_values.front();
    probe.validate();
  }
};

struct SweepRow {
  double d_ret = 0.0;
  double d_adv = 0.0;
  double delta_d = 0.0;
  int k = 0;
  int n = 0;
  double mean_thrust_N = 0.0;
  double mean_normalized = 0.0;
  double ripple_cov = 0.0;  // NaN when the mean is zero
};

struct SkippedPoint {
  double d_ret = 0.0;
  double d_adv = 0.0;
  std::string reason;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SkippedPoint> skipped;
};

namespace detail {

inline std::optional<std::string> infeasible_reason(double d_ret, double d_adv) {
  if (d_ret + d_adv > 1.0 + 1e-12) return "duty sum d_ret + d_adv > 1";
  if (d_ret <= 0.0) return "d_ret must be > 0";
  if (d_adv <= 0.0) return "d_adv must be > 0";
  return std::nullopt;
}

struct GridPoint {
  double d_ret;
  double d_adv;
  int k;
  int n;
};

inline SweepRow evaluate_point(const SweepSpec& spec, const GridPoint& p) {
  const auto duty = DutyFractions::from_ret_adv(p.d_ret, p.d_adv);
  const auto profile = synthesize_cam(p.k, duty, spec.stroke_mm);
  auto config = spec.config;
  config.n_sliders = p.n;
  const auto trace = superpose(profile, config, spec.omega, spec.dt, spec.n_cycles);
  return {p.d_ret, p.d_adv, duty.asymmetry(), p.k, p.n, trace.mean, trace.mean_normalized,
          trace.ripple};
}

}  // namespace detail

/// Rows come out ordered by (d_ret, d_adv, k, n) in spec order whatever the
/// thread count. threads == 0 uses the hardware concurrency.
inline SweepResult run_sweep(const SweepSpec& spec, unsigned threads = 1) {
  spec.validate();
  SweepResult result;
  std::vector<detail::GridPoint> points;
  for (double r : spec.d_ret.values()) {
    for (double a : spec.d_adv.values()) {
      if (auto why = detail::infeasible_reason(r, a)) {
        result.skipped.push_back({r, a, *why});
        continue;
      }
      for (int k : spec.k_values)
        for (int n : spec.n_values) points.push_back({r, a, k, n});
    }
  }
  if (points.empty()) throw ValidationError("sweep grid has no feasible point");

  result.rows.resize(points.size());
  std::vector<std::exception_ptr> errors(points.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        result.rows[i] = detail::evaluate_point(spec, points[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, points.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

inline constexpr const char* kSweepCsvHeader =
    "d_ret,d_adv,delta_d,k,n,mean_thrust_N,mean_normalized,ripple_cov";

inline std::string sweep_csv(const SweepResult& result) {
  std::string out = kSweepCsvHeader;
  out += '\n';
  for (const auto& r : result.rows) {
    out += format_number(r.d_ret) + ',' + format_number(r.d_adv) + ',' +
           format_number(r.delta_d) + ',' + std::to_string(r.k) + ',' + std::to_string(r.n) +
           ',' + format_number(r.mean_thrust_N) + ',' + format_number(r.mean_normalized) + ',' +
           format_number(r.ripple_cov) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cam family comparison

struct CamSpec {
  int jumps = 1;
  DutyFractions duty;
};

/// The three fabricated cams: a constant advance angle per jump and
/// Δd = 0.82, 0.64, 0.48.
inline std::vector<CamSpec> fabricated_cams() {
  return {{1, {0.905, 0.085, 0.010}}, {2, {0.81, 0.17, 0.02}}, {3, {0.735, 0.255, 0.010}}};
}

struct FamilyRow {
  int jumps = 0;
  DutyFractions duty;
  double delta_d = 0.0;
  double ideal_mean_N = 0.0;
  std::optional<double> viscoelastic_mean_N;
};

struct FamilyReport {
  std::vector<FamilyRow> rows;  // Δd descending
  bool ideal_monotone = true;
  bool viscoelastic_monotone = true;
  bool viscoelastic_below_ideal = true;
};

/// Ideal mean for every cam, plus the viscoelastic mean when config carries
/// tissue parameters. Monotone means strictly decreasing along the rows.
inline FamilyReport cam_family_report(const std::vector<CamSpec>& cams,
                                      const CapsuleConfig& config, double omega, double dt,
                                      int n_cycles = 2, double stroke_mm = 10.0) {
  require(!cams.empty(), "cam family needs at least one cam");
  FamilyReport report;
  for (const auto& cam : cams) {
    const auto profile = synthesize_cam(cam.jumps, cam.duty, stroke_mm);
    FamilyRow row;
    row.jumps = cam.jumps;
    row.duty = cam.duty;
    row.delta_d = cam.duty.asymmetry();
    auto ideal = config;
    ideal.model = ContactModel::ideal;
    row.ideal_mean_N = superpose(profile, ideal, omega, dt, n_cycles).mean;
    if (config.tissue) {
      auto visco = config;
      visco.model = ContactModel::viscoelastic;
      row.viscoelastic_mean_N = superpose(profile, visco, omega, dt, n_cycles).mean;
    }
    report.rows.push_back(row);
  }
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const FamilyRow& a, const FamilyRow& b) { return a.delta_d > b.delta_d; });
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    if (r.viscoelastic_mean_N && !(*r.viscoelastic_mean_N < r.ideal_mean_N))
      report.viscoelastic_below_ideal = false;
    if (i == 0) continue;
    const auto& prev = report.rows[i - 1];
    if (!(r.ideal_mean_N < prev.ideal_mean_N)) report.ideal_monotone = false;
    if (r.viscoelastic_mean_N && !(*r.viscoelastic_mean_N < *prev.viscoelastic_mean_N))
      report.viscoelastic_monotone = false;
  }
  if (!config.tissue) report.viscoelastic_monotone = report.viscoelastic_below_ideal = false;
  return report;
}

// ---------------------------------------------------------------------------
// Speed calibration

struct CalibrationOptions {
  double lo_rev_s = 0.1;
  double hi_rev_s = 10.0;
  int scan_points = 25;         // log-spaced bracket scan
  int steps_per_cycle = 4000;   // fixed so the mean is smooth in ω
  int n_cycles = 3;
  double tolerance_rev_s = 1e-6;
  int max_iterations = 80;
};

struct Calibration {
  double rev_per_s = 0.0;
  double omega = 0.0;  // rad/s
  double mean_N = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  int evaluations = 0;
};

inline double viscoelastic_mean_at(const CamProfile& profile, const CapsuleConfig& config,
                                   double rev_per_s, int steps_per_cycle, int n_cycles) {
  auto visco = config;
  visco.model = ContactModel::viscoelastic;
  const double omega = kTwoPi * rev_per_s;
  const double dt = 1.0 / (rev_per_s * steps_per_cycle);
  return superpose(profile, visco, omega, dt, n_cycles).mean;
}

/// Finds the drive speed whose viscoelastic mean thrust equals target_N. The
/// mean is not monotone in ω, so a log-spaced scan locates the first sign
/// change before bisecting.
inline Calibration calibrate_speed(const CamProfile& profile, const CapsuleConfig& config,
                                   double target_N, const CalibrationOptions& opt = {}) {
  require(config.tissue.has_value(), "speed calibration needs tissue parameters");
  require(std::isfinite(target_N), "target thrust must be finite");
  require(opt.lo_rev_s > 0.0 && opt.hi_rev_s > opt.lo_rev_s, "invalid calibration range");
  require(opt.scan_points >= 2, "calibration scan needs >= 2 points");

  Calibration cal;
  auto residual = [&](double rev) {
    ++cal.evaluations;
    return viscoelastic_mean_at(profile, config, rev, opt.steps_per_cycle, opt.n_cycles) -
           target_N;
  };

  const double ratio = std::log(opt.hi_rev_s / opt.lo_rev_s) / (opt.scan_points - 1);
  double a = opt.lo_rev_s;
  double fa = residual(a);
  std::optional<std::pair<double, double>> bracket;
  double fb = 0.0;
  for (int i = 1; i < opt.scan_points && !bracket; ++i) {
    const double b = i + 1 == opt.scan_points ? opt.hi_rev_s : opt.lo_rev_s * std::exp(ratio * i);
    fb = residual(b);
    if (fa == 0.0) bracket = {a, a};
    else if (fa * fb <= 0.0) bracket = {a, b};
    else {
      a = b;
      fa = fb;
    }
  }
  if (!bracket)
    throw ValidationError("target thrust " + format_number(target_N) +
                          " N is not reached between " + format_number(opt.lo_rev_s) + " and " +
                          format_number(opt.hi_rev_s) + " rev/s");

  auto [lo, hi] = *bracket;
  cal.bracket_lo = lo;
  cal.bracket_hi = hi;
  double flo = fa;
  for (int it = 0; it < opt.max_iterations && hi - lo > opt.tolerance_rev_s; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = residual(mid);
    if (flo * fm <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  cal.rev_per_s = 0.5 * (lo + hi);
  cal.omega = kTwoPi * cal.rev_per_s;
  cal.mean_N =
      viscoelastic_mean_at(profile, config, cal.rev_per_s, opt.steps_per_cycle, opt.n_cycles);
  return cal;
}

}  // namespace capsim
