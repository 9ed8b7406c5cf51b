// Walks through the three fabricated cams: ideal and viscoelastic thrust,
// one slider's stick-slip trace, and a parameter fit on that trace.

#include <algorithm>
#include <cstdio>

#include "capsim/capsule.hpp"
#include "capsim/contact.hpp"
#include "capsim/explorer.hpp"
#include "capsim/identification.hpp"

using namespace capsim;

int main() {
  CapsuleConfig config;
  config.tissue = TissueParams{};

  const double rev_per_s = 0.567;
  const double omega = kTwoPi * rev_per_s;
  const double dt = 1.0 / (rev_per_s * 12000);

  std::printf("cam  delta_d  ideal_N  visco_N  ripple_ideal\n");
  for (const auto& cam : fabricated_cams()) {
    const auto profile = synthesize_cam(cam.jumps, cam.duty, 10.0);
    auto ideal = config;
    ideal.model = ContactModel::ideal;
    const auto a = superpose(profile, ideal, omega, dt, 2);
    auto visco = config;
    visco.model = ContactModel::viscoelastic;
    const auto b = superpose(profile, visco, omega, dt, 3);
    std::printf("k=%d  %.2f     %.4f   %.4f   %.4f\n", cam.jumps, cam.duty.asymmetry(), a.mean,
                b.mean, a.ripple);
  }

  // Quasi-static bench run of a single slider, then identify it back.
  const auto profile = synthesize_cam(1, fabricated_cams()[0].duty, 10.0);
  const auto slider = slider_trajectory(profile, kTwoPi * 0.05, 1e-3, 0.0, 2, Sampling::uniform);
  const auto trace = stick_slip_simulate(slider, *config.tissue);
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& s : trace.samples) {
    lo = std::min(lo, s.F_slider);
    hi = std::max(hi, s.F_slider);
  }
  std::printf("\nsingle slider at 0.05 rev/s: F_slider in [%.4f, %.4f] N\n", lo, hi);

  const auto fit = identify(MeasuredTrace::from_contact(trace), slider);
  std::printf("fit: k=%.3f c=%.4f tau_ret=%.4f tau_adv=%.4f mu_s=%.4f mu_k=%.4f nrmse=%.2e\n",
              fit.k_tissue, fit.c_tissue, fit.tau_ret, fit.tau_adv, fit.mu_s_N, fit.mu_k_N,
              fit.nrmse);
  return fit.converged() ? 0 : 1;
}
