#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "capsim/cam_profile.hpp"
#include "capsim/contact.hpp"

using namespace capsim;

namespace {

const DutyFractions kSingleJump{0.905, 0.085, 0.010};

// Hand-built trajectory x(t) sampled at a fixed step; v by the same formula.
template <typename X, typename V>
SliderTrajectory custom_trajectory(double dt, std::size_t n, X x, V v) {
  const auto dummy = synthesize_cam(1, {0.5, 0.5, 0.0}, 10.0);
  std::vector<TrajectorySample> s;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    s.push_back({t, 0.0, x(t), v(t), false});
  }
  return SliderTrajectory(dummy, kTwoPi, dt, 0.0, std::move(s), true);
}

ContactTrace single_jump_cycle(double rev_per_s, double dt, int cycles = 2) {
  const auto p = synthesize_cam(1, kSingleJump, 10.0);
  const auto traj = slider_trajectory(p, kTwoPi * rev_per_s, dt, 0.0, cycles, Sampling::uniform);
  return stick_slip_simulate(traj, TissueParams{});
}

}  // namespace

TEST(TissueParams, DefaultsAndValidation) {
  TissueParams p;
  EXPECT_NO_THROW(p.validate());
  p.mu_s_N = 0.2;  // no ordering between the friction limits is imposed
  EXPECT_NO_THROW(p.validate());
  p.k_tissue = 0.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = TissueParams{};
  p.tau_adv = -1.0;
  EXPECT_THROW(p.validate(), ValidationError);
  p = TissueParams{};
  p.c_tissue = std::nan("");
  EXPECT_THROW(p.validate(), ValidationError);
}

TEST(StickForce, DirectProducts) {
  const TissueParams p;
  EXPECT_EQ(stick_force(0.0, 0.0, p), 0.0);
  EXPECT_NEAR(stick_force(1.0, 0.0, p), 0.130, 1e-15);
  EXPECT_NEAR(stick_force(0.0, -2.0, p), -0.012, 1e-15);
}

TEST(IdealForce, SignsByPhase) {
  const auto p = synthesize_cam(1, kSingleJump, 10.0);
  const SmoothingSpec none;
  EXPECT_DOUBLE_EQ(ideal_force_at(p, 0.14, none, 0.5 * kTwoPi), 0.14);
  EXPECT_DOUBLE_EQ(ideal_force_at(p, 0.14, none, 0.04 * kTwoPi), -0.14);
  EXPECT_DOUBLE_EQ(ideal_force_at(p, 0.14, none, 0.09 * kTwoPi), 0.0);
}

TEST(IdealForce, SmoothingRampIsLinearAroundReversal) {
  const auto p = synthesize_cam(1, {0.5, 0.5, 0.0}, 10.0);
  const SmoothingSpec s{0.1};
  const double w = 0.1 * kTwoPi;
  const double c = std::numbers::pi;  // advance → retract reversal
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, c), 0.0, 1e-15);
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, c + 0.25 * w), 0.07, 1e-12);
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, c - 0.25 * w), -0.07, 1e-12);
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, c + 0.5 * w), 0.14, 1e-12);
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, c + 0.6 * w), 0.14, 1e-12);
  // Wrap-around reversal at 0 as well.
  EXPECT_NEAR(ideal_force_at(p, 0.14, s, 0.0), 0.0, 1e-15);
}

TEST(IdealForce, TrajectoryValuesTakeThreeLevels) {
  const auto p = synthesize_cam(2, {0.81, 0.17, 0.02}, 10.0);
  const auto traj = slider_trajectory(p, kTwoPi, 1e-4, 0.3, 1);
  for (double f : ideal_slider_force(traj, 0.14, {}))
    EXPECT_TRUE(f == 0.14 || f == -0.14 || f == 0.0) << f;
  EXPECT_THROW(ideal_slider_force(traj, 0.0, {}), ValidationError);
  EXPECT_THROW(ideal_slider_force(traj, 0.14, {1.5}), ValidationError);
}

TEST(CycleAverage, IdealSeriesMatchesClosedForm) {
  const auto p = synthesize_cam(1, {0.905, 0.085, 0.010}, 10.0);
  const auto series = ideal_force_series(p, 0.14, {}, 0.01);
  EXPECT_NEAR(single_slider_cycle_average(series, 0.0), 0.14 * 0.82, 1e-12);
  EXPECT_NEAR(0.14 * 0.82, 0.1148, 1e-12);
  EXPECT_NEAR(ideal_cycle_average(0.14, {0.905, 0.085, 0.010}, 0.0), 0.1148, 1e-12);

  const auto sym = synthesize_cam(1, {0.5, 0.5, 0.0}, 10.0);
  EXPECT_NEAR(single_slider_cycle_average(ideal_force_series(sym, 0.14, {}), 0.0), 0.0, 1e-15);

  const double mean = single_slider_cycle_average(series, 0.0);
  EXPECT_NEAR(single_slider_cycle_average(series, mean), 0.0, 1e-15);
}

TEST(CycleAverage, SmoothingPreservesTheMean) {
  for (int k = 1; k <= 3; ++k) {
    const auto p = synthesize_cam(k, {0.7, 0.2, 0.1}, 10.0);
    for (double lambda : {0.02, 0.05, 0.1}) {
      const auto series = ideal_force_series(p, 0.14, {lambda}, 0.01);
      EXPECT_NEAR(single_slider_cycle_average(series, 0.0), 0.14 * 0.5, 1e-12);
    }
  }
}

TEST(CycleAverage, RejectsPartialCycles) {
  ForceSeries s;
  s.force = {1.0, 2.0};
  s.weight = {1.0, 1.5};
  s.period = 1.0;
  EXPECT_THROW(single_slider_cycle_average(s, 0.0), ValidationError);
  s.weight = {1.0, 1.0};
  EXPECT_NEAR(single_slider_cycle_average(s, 0.0), 1.5, 1e-15);
}

TEST(StickSlip, StationarySliderStaysAtRest) {
  const auto traj = custom_trajectory(1e-3, 500, [](double) { return 0.0; },
                                      [](double) { return 0.0; });
  const auto trace = stick_slip_simulate(traj, TissueParams{});
  for (const auto& s : trace.samples) {
    EXPECT_EQ(s.mode, ContactMode::stick);
    EXPECT_EQ(s.F_wall, 0.0);
    EXPECT_EQ(s.x_wall, 0.0);
    EXPECT_EQ(s.F_slider, 0.0);
  }
}

TEST(StickSlip, LinearBuildUpFromRest) {
  const double v = -2.0;  // mm/s, retraction
  const double dt = 1e-3;
  const auto traj = custom_trajectory(dt, 400, [=](double t) { return v * t; },
                                      [=](double) { return v; });
  const TissueParams p;
  const auto trace = stick_slip_simulate(traj, p);
  const double v_si = v * kMPerMm;
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    const double expected = p.k_tissue * v_si * s.t + p.c_tissue * v_si;
    if (std::abs(expected) >= p.mu_s_N) break;
    ASSERT_EQ(s.mode, ContactMode::stick);
    EXPECT_NEAR(s.F_wall, expected, 1e-14);
  }
}

TEST(StickSlip, SlipGapShrinksByExpPerTau) {
  const double dt = 1e-3;
  const auto traj = custom_trajectory(dt, 3000, [](double t) { return -5.0 * t; },
                                      [](double) { return -5.0; });
  const TissueParams p;
  const auto trace = stick_slip_simulate(traj, p);
  std::size_t first = 0;
  while (trace.samples[first].mode != ContactMode::slip) ++first;
  const std::size_t tau_steps = 450;
  ASSERT_LT(first + tau_steps, trace.samples.size());
  const double target = -p.mu_k_N;
  const double gap0 = trace.samples[first].F_wall - target;
  const double gap1 = trace.samples[first + tau_steps].F_wall - target;
  EXPECT_NEAR(gap1 / gap0, std::exp(-1.0), 1e-9);
}

TEST(StickSlip, LiteralTauRuleUsesAdvanceTauWhileRetracting) {
  const double dt = 1e-4;
  const auto traj = custom_trajectory(dt, 3000, [](double t) { return -5.0 * t; },
                                      [](double) { return -5.0; });
  const TissueParams p;
  StickSlipOptions literal;
  literal.tau = TauSelection::literal_velocity_sign;
  const auto trace = stick_slip_simulate(traj, p, literal);
  std::size_t first = 0;
  while (trace.samples[first].mode != ContactMode::slip) ++first;
  const std::size_t steps = 200;  // τ_adv = 0.02 s
  const double gap0 = trace.samples[first].F_wall + p.mu_k_N;
  const double gap1 = trace.samples[first + steps].F_wall + p.mu_k_N;
  EXPECT_NEAR(gap1 / gap0, std::exp(-1.0), 1e-9);
}

TEST(StickSlip, SingleJumpCycleShape) {
  const auto trace = single_jump_cycle(0.1, 1e-3);
  const TissueParams p;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> breaks;
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    lo = std::min(lo, trace.samples[i].F_slider);
    hi = std::max(hi, trace.samples[i].F_slider);
    if (trace.samples[i].mode == ContactMode::slip &&
        trace.samples[i - 1].mode == ContactMode::stick)
      breaks.push_back(std::abs(trace.samples[i - 1].F_wall));
  }
  EXPECT_NEAR(hi, 0.14, 0.005);
  EXPECT_NEAR(lo, -0.14, 0.005);
  ASSERT_GE(breaks.size(), 2u);
  // Retraction breaks (the slow linear build-up) land on μ_s N.
  int near_mu_s = 0;
  for (double b : breaks) near_mu_s += std::abs(b - p.mu_s_N) < 0.01;
  EXPECT_GE(near_mu_s, 2);
}

TEST(StickSlip, TraceInvariants) {
  const auto trace = single_jump_cycle(0.5, 2e-4);
  const TissueParams p;
  const auto pr = synthesize_cam(1, kSingleJump, 10.0);
  const auto traj = slider_trajectory(pr, kTwoPi * 0.5, 2e-4, 0.0, 2, Sampling::uniform);
  ASSERT_EQ(trace.samples.size(), traj.size());
  for (std::size_t i = 1; i < trace.samples.size(); ++i) {
    const auto& s = trace.samples[i];
    EXPECT_EQ(s.F_elastic, p.k_tissue * s.x_wall);
    if (s.mode == ContactMode::slip) {
      EXPECT_EQ(std::abs(s.F_slider), p.mu_k_N);
    } else {
      const double dx_slider = (traj.samples()[i].x - traj.samples()[i - 1].x) * kMPerMm;
      EXPECT_NEAR(s.x_wall - trace.samples[i - 1].x_wall, dx_slider, 1e-17);
      EXPECT_EQ(s.F_slider, -s.F_wall);
    }
    if (s.mode == ContactMode::slip && trace.samples[i - 1].mode == ContactMode::stick)
      EXPECT_GE(std::abs(trace.samples[i - 1].F_wall), p.mu_s_N);
  }
}

TEST(StickSlip, Deterministic) {
  const auto a = single_jump_cycle(0.3, 5e-4);
  const auto b = single_jump_cycle(0.3, 5e-4);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].F_wall, b.samples[i].F_wall);
    EXPECT_EQ(a.samples[i].mode, b.samples[i].mode);
  }
}

TEST(StickSlip, HalvingDtBarelyMovesTheCycleAverage) {
  const double period = 10.0;
  const auto coarse = single_jump_cycle(0.1, 1e-3);
  const auto fine = single_jump_cycle(0.1, 5e-4);
  const double a = single_slider_cycle_average(slider_force_series(coarse, period, 1), 0.0);
  const double b = single_slider_cycle_average(slider_force_series(fine, period, 1), 0.0);
  EXPECT_LT(std::abs(a - b), 0.005 * std::abs(b));
}

TEST(StickSlip, RejectsNonUniformAndNaN) {
  const auto p = synthesize_cam(1, kSingleJump, 10.0);
  const auto traj = slider_trajectory(p, kTwoPi, 7e-5, 0.0, 1);
  ASSERT_FALSE(traj.uniform());
  EXPECT_THROW(stick_slip_simulate(traj, TissueParams{}), ValidationError);
  const auto bad = custom_trajectory(1e-3, 10, [](double t) { return t > 0.004 ? std::nan("") : t; },
                                     [](double) { return 1.0; });
  EXPECT_THROW(stick_slip_simulate(bad, TissueParams{}), ValidationError);
}

TEST(StickSlip, LiteralVariantsRun) {
  StickSlipOptions literal;
  literal.tau = TauSelection::literal_velocity_sign;
  literal.target = SlipTarget::wall_velocity;
  literal.break_rule = BreakRule::magnitude;
  literal.restick = RestickRule::spring_exceeds_wall;
  const auto p = synthesize_cam(1, kSingleJump, 10.0);
  const auto traj = slider_trajectory(p, kTwoPi * 0.5, 2e-4, 0.0, 2, Sampling::uniform);
  const auto trace = stick_slip_simulate(traj, TissueParams{}, literal);
  EXPECT_EQ(trace.samples.size(), traj.size());
  for (const auto& s : trace.samples) EXPECT_TRUE(std::isfinite(s.F_wall));
}

TEST(SliderForceSeries, LastCycleWeightsSumToPeriod) {
  const auto trace = single_jump_cycle(0.5, 2e-4, 3);
  const auto series = slider_force_series(trace, 2.0, 1);
  EXPECT_NEAR(series.span(), 2.0, 1e-12);
  EXPECT_EQ(series.force.size(), 10000u);
  EXPECT_THROW(slider_force_series(trace, 2.0, 4), ValidationError);
  EXPECT_THROW(slider_force_series(trace, 2.00003, 1), ValidationError);
}
