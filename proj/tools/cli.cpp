#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "CLI11.hpp"

#include "capsim/cam_profile.hpp"
#include "capsim/capsule.hpp"
#include "capsim/common.hpp"
#include "capsim/contact.hpp"
#include "capsim/explorer.hpp"
#include "capsim/identification.hpp"
#include "capsim/io.hpp"

namespace capsim::cli {
namespace {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config file: INI sections [cam] [capsule] [tissue] [simulate] [fit] [sweep].
// Values seed the option variables; flags given on the command line win.

template <typename T>
void from_config(const pt::ptree& tree, const std::string& key, T& value) {
  const auto node = tree.get_optional<std::string>(key);
  if (!node) return;
  try {
    value = tree.get<T>(key);
  } catch (const pt::ptree_bad_data&) {
    throw ValidationError("config key '" + key + "' has an invalid value '" + *node + "'");
  }
}

pt::ptree load_config(const std::vector<std::string>& args) {
  pt::ptree tree;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    for (const char* flag : {"--config", "--spec"}) {
      const std::string f(flag);
      if (args[i] == f && i + 1 < args.size()) path = args[i + 1];
      else if (args[i].rfind(f + "=", 0) == 0) path = args[i].substr(f.size() + 1);
    }
    if (path.empty()) continue;
    if (!fs::exists(path)) throw IoError("config file not found: " + path);
    try {
      pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
      throw IoError(std::string("config: ") + e.what());
    }
  }
  return tree;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(std::remove_if(item.begin(), item.end(), ::isspace), item.end());
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size())
      throw ValidationError(std::string(what) + ": '" + item + "' is not an integer");
    out.push_back(v);
  }
  return out;
}

ContactModel parse_model(const std::string& name) {
  if (name == "ideal") return ContactModel::ideal;
  if (name == "viscoelastic") return ContactModel::viscoelastic;
  throw ValidationError("model must be 'ideal' or 'viscoelastic', got '" + name + "'");
}

// ---------------------------------------------------------------------------
// Shared option groups

struct CamArgs {
  int jumps = 1;
  double d_ret = 0.905;
  double d_adv = 0.085;
  double stroke_mm = reference::slider_stroke_mm;
  std::string descriptor;
  std::string table;

  void load(const pt::ptree& t) {
    from_config(t, "cam.jumps", jumps);
    from_config(t, "cam.d_ret", d_ret);
    from_config(t, "cam.d_adv", d_adv);
    from_config(t, "cam.stroke_mm", stroke_mm);
    from_config(t, "cam.descriptor", descriptor);
    from_config(t, "cam.table", table);
  }

  void add(CLI::App* app, bool files) {
    app->add_option("--jumps", jumps, "jump count k (>= 1)");
    app->add_option("--d-ret", d_ret, "retract duty fraction");
    app->add_option("--d-adv", d_adv, "advance duty fraction");
    app->add_option("--stroke-mm", stroke_mm, "slider stroke in mm");
    if (files) {
      app->add_option("--cam-descriptor", descriptor, "cam descriptor JSON written by 'cam'");
      app->add_option("--cam-table", table, "cam table CSV checked against the descriptor");
    }
  }

  DutyFractions duty() const { return DutyFractions::from_ret_adv(d_ret, d_adv); }

  CamProfile profile() const {
    if (descriptor.empty()) {
      require(table.empty(), "--cam-table needs --cam-descriptor");
      return synthesize_cam(jumps, duty(), stroke_mm);
    }
    const auto desc = io::read_file(descriptor);
    if (!table.empty()) return io::import_cam(io::read_file(table), desc, table);
    try {
      return io::cam_from_descriptor(io::json::parse(desc));
    } catch (const io::json::parse_error& e) {
      throw IoError(descriptor + ": " + e.what());
    }
  }
};

struct CapsuleArgs {
  int n_sliders = reference::slider_count;
  double mu_N = 0.14;
  double F_loss = 0.0;
  double lambda = 0.0;
  std::string model = "ideal";
  TissueParams tissue;

  void load(const pt::ptree& t) {
    from_config(t, "capsule.n_sliders", n_sliders);
    from_config(t, "capsule.mu_N", mu_N);
    from_config(t, "capsule.F_loss", F_loss);
    from_config(t, "capsule.lambda", lambda);
    from_config(t, "capsule.model", model);
    from_config(t, "tissue.k_tissue", tissue.k_tissue);
    from_config(t, "tissue.c_tissue", tissue.c_tissue);
    from_config(t, "tissue.mu_s_N", tissue.mu_s_N);
    from_config(t, "tissue.mu_k_N", tissue.mu_k_N);
    from_config(t, "tissue.tau_ret", tissue.tau_ret);
    from_config(t, "tissue.tau_adv", tissue.tau_adv);
  }

  void add(CLI::App* app) {
    app->add_option("--n", n_sliders, "number of sliders");
    app->add_option("--mu-n", mu_N, "friction force limit per slider in N");
    app->add_option("--f-loss", F_loss, "mechanical loss per slider in N");
    app->add_option("--lambda", lambda, "reversal smoothing width in [0, 1]");
    app->add_option("--model", model, "ideal | viscoelastic");
    app->add_option("--k-tissue", tissue.k_tissue, "tissue stiffness in N/m");
    app->add_option("--c-tissue", tissue.c_tissue, "tissue damping in N*s/m");
    app->add_option("--mu-s", tissue.mu_s_N, "static friction limit in N");
    app->add_option("--mu-k", tissue.mu_k_N, "kinetic friction limit in N");
    app->add_option("--tau-ret", tissue.tau_ret, "retract relaxation time in s");
    app->add_option("--tau-adv", tissue.tau_adv, "advance relaxation time in s");
  }

  CapsuleConfig config() const {
    CapsuleConfig c;
    c.n_sliders = n_sliders;
    c.mu_N = mu_N;
    c.F_loss = F_loss;
    c.smoothing.lambda = lambda;
    c.model = parse_model(model);
    c.tissue = tissue;
    c.validate();
    return c;
  }
};

std::string path_with(const std::string& prefix, const char* suffix) { return prefix + suffix; }

// ---------------------------------------------------------------------------
// Commands

int cmd_cam(const CamArgs& cam, const std::string& out_prefix, std::ostream& out) {
  const auto profile = cam.profile();
  io::write_file(path_with(out_prefix, ".csv"), io::cam_table_csv(profile));
  io::write_file(path_with(out_prefix, ".json"), io::dump(io::cam_descriptor(profile)));
  const auto d = duty_fractions(profile);
  out << "jumps=" << profile.jump_count() << " d_ret=" << format_number(d.d_ret)
      << " d_adv=" << format_number(d.d_adv) << " d_dwell=" << format_number(d.d_dwell)
      << " delta_d=" << format_number(d.asymmetry()) << '\n';
  return kOk;
}

struct SimulateArgs {
  double omega = kTwoPi;
  double dt = 1e-4;
  int cycles = 2;
  bool single_slider = false;
  int slider = 0;
  double noise = 0.0;
  unsigned seed = 12345;
  std::string out = "simulate";

  void load(const pt::ptree& t) {
    from_config(t, "simulate.omega", omega);
    from_config(t, "simulate.dt", dt);
    from_config(t, "simulate.cycles", cycles);
    from_config(t, "simulate.single_slider", single_slider);
    from_config(t, "simulate.slider", slider);
    from_config(t, "simulate.noise", noise);
    from_config(t, "simulate.seed", seed);
    from_config(t, "simulate.out", out);
  }
};

int cmd_simulate(const CamArgs& cam, const CapsuleArgs& caps, const SimulateArgs& sim,
                 std::ostream& out) {
  const auto profile = cam.profile();
  const auto config = caps.config();
  require(std::isfinite(sim.omega) && sim.omega > 0.0, "omega must be > 0");
  require(sim.cycles >= 1, "simulation duration must be at least one cycle");

  if (!sim.single_slider) {
    const auto trace = superpose(profile, config, sim.omega, sim.dt, sim.cycles);
    const auto summary = io::thrust_summary(trace, config, duty_fractions(profile), sim.omega);
    io::write_file(path_with(sim.out, ".csv"), io::thrust_trace_csv(trace));
    io::write_file(path_with(sim.out, ".json"), io::dump(summary));
    out << "model=" << to_string(config.model) << " mean_N=" << format_number(trace.mean)
        << " mean_normalized=" << format_number(trace.mean_normalized)
        << " ripple_cov=" << format_number(trace.ripple) << '\n';
    return kOk;
  }

  require(config.model == ContactModel::viscoelastic,
          "--single-slider emits a stick-slip contact trace and needs --model viscoelastic");
  require(sim.slider >= 0 && sim.slider < config.n_sliders, "--slider must lie in [0, n)");
  require(std::isfinite(sim.noise) && sim.noise >= 0.0, "--noise must be >= 0");
  const double phase = config.phase_offset(sim.slider);
  const auto traj =
      slider_trajectory(profile, sim.omega, sim.dt, phase, sim.cycles, Sampling::uniform);
  const auto trace = stick_slip_simulate(traj, *config.tissue, config.options);
  io::write_file(path_with(sim.out, ".csv"), io::contact_trace_csv(trace));

  auto measured = MeasuredTrace::from_contact(trace);
  double peak = 0.0;
  for (double f : measured.F) peak = std::max(peak, std::abs(f));
  if (sim.noise > 0.0) {
    std::mt19937 rng(sim.seed);
    std::normal_distribution<double> gauss(0.0, sim.noise * peak);
    for (double& f : measured.F) f += gauss(rng);
  }
  const auto d = duty_fractions(profile);
  measured.metadata = {{"jumps", std::to_string(profile.jump_count())},
                       {"d_ret", format_number(d.d_ret)},
                       {"d_adv", format_number(d.d_adv)},
                       {"stroke_mm", format_number(profile.stroke())},
                       {"omega_rad_s", format_number(sim.omega)},
                       {"phase_offset_rad", format_number(phase)},
                       {"noise_fraction", format_number(sim.noise)},
                       {"seed", std::to_string(sim.seed)}};
  io::write_file(path_with(sim.out, "_measured.csv"), io::measured_csv(measured));
  out << "samples=" << trace.samples.size() << " peak_F_wall_N=" << format_number(peak) << '\n';
  return kOk;
}

struct FitArgs {
  std::string input;
  std::string out = "fit.json";
  double omega = 0.0;
  double phase_offset = 0.0;
  bool free_intercept = false;

  void load(const pt::ptree& t) {
    from_config(t, "fit.input", input);
    from_config(t, "fit.out", out);
    from_config(t, "fit.omega", omega);
    from_config(t, "fit.phase_offset", phase_offset);
    from_config(t, "fit.free_intercept", free_intercept);
  }
};

double metadata_number(const MeasuredTrace& m, const std::string& key, double fallback) {
  const auto it = m.metadata.find(key);
  if (it == m.metadata.end()) return fallback;
  double v = 0.0;
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("metadata '" + key + "' is not a number: '" + s + "'");
  return v;
}

// Trace metadata fills in whatever the command line leaves unset.
int cmd_fit(CamArgs cam, FitArgs fit, const CLI::App& sub, std::ostream& out) {
  require(!fit.input.empty(), "fit needs --input");
  const auto measured = io::parse_measured_csv(io::read_file(fit.input), fit.input);
  auto unset = [&](const char* flag) { return sub.count(flag) == 0; };
  if (unset("--jumps")) cam.jumps = static_cast<int>(metadata_number(measured, "jumps", cam.jumps));
  if (unset("--d-ret")) cam.d_ret = metadata_number(measured, "d_ret", cam.d_ret);
  if (unset("--d-adv")) cam.d_adv = metadata_number(measured, "d_adv", cam.d_adv);
  if (unset("--stroke-mm")) cam.stroke_mm = metadata_number(measured, "stroke_mm", cam.stroke_mm);
  if (unset("--omega")) fit.omega = metadata_number(measured, "omega_rad_s", fit.omega);
  if (unset("--phase-offset"))
    fit.phase_offset = metadata_number(measured, "phase_offset_rad", fit.phase_offset);
  require(std::isfinite(fit.omega) && fit.omega > 0.0,
          "fit needs omega: pass --omega or add '# omega_rad_s=...' to the trace");

  const auto profile = cam.profile();
  const double span = measured.t.back() - measured.t.front();
  const int cycles = std::max(1, static_cast<int>(std::ceil(span * fit.omega / kTwoPi - 1e-9)));
  auto full = slider_trajectory(profile, fit.omega, measured.dt, fit.phase_offset, cycles,
                                Sampling::uniform);
  auto samples = full.samples();
  require(samples.size() >= measured.size(), "slider trajectory is shorter than the trace");
  samples.resize(measured.size());
  const SliderTrajectory slider(profile, fit.omega, measured.dt, fit.phase_offset,
                                std::move(samples), true);

  StiffnessOptions options;
  options.free_intercept = fit.free_intercept;
  const auto report = identify(measured, slider, options);
  io::write_file(fit.out, io::dump(io::fit_report_json(report)));
  out << "k_tissue=" << format_number(report.k_tissue)
      << " c_tissue=" << format_number(report.c_tissue)
      << " tau_ret=" << format_number(report.tau_ret)
      << " tau_adv=" << format_number(report.tau_adv)
      << " mu_s_N=" << format_number(report.mu_s_N) << " mu_k_N=" << format_number(report.mu_k_N)
      << " nrmse=" << format_number(report.nrmse) << '\n';
  for (const auto& f : report.flags) out << "flag: " << f << '\n';
  return report.converged() ? kOk : kFit;
}

struct SweepArgs {
  SweepSpec spec;
  std::string k_values = "1,2,3";
  std::string n_values = "12";
  unsigned threads = 1;
  std::string out = "sweep.csv";

  void load(const pt::ptree& t) {
    from_config(t, "sweep.d_ret_lo", spec.d_ret.lo);
    from_config(t, "sweep.d_ret_hi", spec.d_ret.hi);
    from_config(t, "sweep.d_ret_step", spec.d_ret.step);
    from_config(t, "sweep.d_adv_lo", spec.d_adv.lo);
    from_config(t, "sweep.d_adv_hi", spec.d_adv.hi);
    from_config(t, "sweep.d_adv_step", spec.d_adv.step);
    from_config(t, "sweep.k_values", k_values);
    from_config(t, "sweep.n_values", n_values);
    from_config(t, "sweep.omega", spec.omega);
    from_config(t, "sweep.dt", spec.dt);
    from_config(t, "sweep.cycles", spec.n_cycles);
    from_config(t, "sweep.threads", threads);
    from_config(t, "sweep.out", out);
  }

  void add(CLI::App* app) {
    app->add_option("--d-ret-lo", spec.d_ret.lo);
    app->add_option("--d-ret-hi", spec.d_ret.hi);
    app->add_option("--d-ret-step", spec.d_ret.step);
    app->add_option("--d-adv-lo", spec.d_adv.lo);
    app->add_option("--d-adv-hi", spec.d_adv.hi);
    app->add_option("--d-adv-step", spec.d_adv.step);
    app->add_option("--k-values", k_values, "comma-separated jump counts");
    app->add_option("--n-values", n_values, "comma-separated slider counts");
    app->add_option("--omega", spec.omega, "drive speed in rad/s");
    app->add_option("--dt", spec.dt, "time step in s");
    app->add_option("--cycles", spec.n_cycles, "simulated cycles (first is discarded)");
    app->add_option("--threads", threads, "worker threads (0 = all cores)");
    app->add_option("--out", out, "output CSV");
  }
};

int cmd_sweep(SweepArgs sweep, const CamArgs& cam, const CapsuleArgs& caps, std::ostream& out,
              std::ostream& err) {
  sweep.spec.k_values = parse_int_list(sweep.k_values, "--k-values");
  sweep.spec.n_values = parse_int_list(sweep.n_values, "--n-values");
  sweep.spec.stroke_mm = cam.stroke_mm;
  auto caps_probe = caps;
  if (!sweep.spec.n_values.empty()) caps_probe.n_sliders = sweep.spec.n_values.front();
  sweep.spec.config = caps_probe.config();
  const auto result = run_sweep(sweep.spec, sweep.threads);

  std::map<std::string, int> reasons;
  for (const auto& s : result.skipped) ++reasons[s.reason];
  for (const auto& [why, count] : reasons)
    err << "skipped " << count << " grid points: " << why << '\n';
  io::write_file(sweep.out, sweep_csv(result));
  out << "rows=" << result.rows.size() << " skipped=" << result.skipped.size() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    const auto tree = load_config(args);

    CLI::App app{"capsule sliding-friction simulator and parameter identification"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    app.add_option("--config", config_path, "INI config; command-line flags override it");

    CamArgs cam;
    cam.load(tree);
    CapsuleArgs caps;
    caps.load(tree);

    auto* cam_cmd = app.add_subcommand("cam", "synthesize a cam and write table + descriptor");
    cam.add(cam_cmd, false);
    std::string cam_out = "cam";
    from_config(tree, "cam.out", cam_out);
    cam_cmd->add_option("--out", cam_out, "output prefix (.csv and .json)");

    SimulateArgs sim;
    sim.load(tree);
    auto* sim_cmd = app.add_subcommand("simulate", "capsule thrust or single-slider contact trace");
    cam.add(sim_cmd, true);
    caps.add(sim_cmd);
    sim_cmd->add_option("--omega", sim.omega, "drive speed in rad/s");
    sim_cmd->add_option("--dt", sim.dt, "time step in s");
    sim_cmd->add_option("--cycles", sim.cycles, "simulated cam cycles");
    sim_cmd->add_flag("--single-slider", sim.single_slider, "emit one slider's contact trace");
    sim_cmd->add_option("--slider", sim.slider, "slider index for --single-slider");
    sim_cmd->add_option("--noise", sim.noise, "measurement noise as a fraction of max |F_wall|");
    sim_cmd->add_option("--seed", sim.seed, "noise seed");
    sim_cmd->add_option("--out", sim.out, "output prefix");

    FitArgs fit;
    fit.load(tree);
    auto* fit_cmd = app.add_subcommand("fit", "identify tissue parameters from a measured trace");
    cam.add(fit_cmd, true);
    fit_cmd->add_option("--input", fit.input, "measured CSV (t_s,F_N)");
    fit_cmd->add_option("--out", fit.out, "report JSON");
    fit_cmd->add_option("--omega", fit.omega, "drive speed in rad/s");
    fit_cmd->add_option("--phase-offset", fit.phase_offset, "slider phase offset in rad");
    fit_cmd->add_flag("--free-intercept", fit.free_intercept, "per-run intercept in the k/c fit");

    SweepArgs sweep;
    sweep.load(tree);
    auto* sweep_cmd = app.add_subcommand("sweep", "duty-fraction / k / n design sweep");
    sweep.add(sweep_cmd);
    caps.add(sweep_cmd);
    sweep_cmd->add_option("--stroke-mm", cam.stroke_mm, "slider stroke in mm");
    std::string spec_path;
    sweep_cmd->add_option("--spec", spec_path, "INI sweep spec (same keys as --config)");

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        app.exit(e, out, err);
        return kOk;
      }
      err << "error: " << e.what() << '\n';
      return kValidation;
    }

    if (*cam_cmd) return cmd_cam(cam, cam_out, out);
    if (*sim_cmd) return cmd_simulate(cam, caps, sim, out);
    if (*fit_cmd) return cmd_fit(cam, fit, *fit_cmd, out);
    return cmd_sweep(sweep, cam, caps, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const FitError& e) {
    err << "error: " << e.what() << '\n';
    return kFit;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
}

}  // namespace capsim::cli
