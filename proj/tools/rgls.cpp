#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "rgls/adjoint_source.hpp"
#include "rgls/errors.hpp"
#include "rgls/experiments.hpp"
#include "rgls/inversion.hpp"
#include "rgls/io.hpp"
#include "rgls/registration.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rgls;

namespace {

constexpr int kBadArguments = 2;
constexpr int kRuntimeFailure = 3;

struct Globals {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out = "rgls_out";
  bool dump_adjoint = false;
  std::string log_level = "info";
};

struct ScenarioOpts {
  std::string case_name = "H2";
  double scale = 0.25;
  double f_source = 50.0;
  double noise_sigma = 0.075;
  double vr_kernel = 10.0;
  double vr_std = 150.0;
};

struct ForwardOpts {
  std::string scenario;
  std::string model;
};

struct RegisterOpts {
  std::string case_name;
  std::string obs;
  std::string pred;
  std::string lfa = "hilbert_sum";
  double f_source = 0.0;
  std::size_t bands = 8;
  std::size_t intervals = 4;
  double penalty = 1.0;
  double alpha = 1.0;
};

struct InvertOpts {
  std::string scenario;
  std::string obs;
  std::string method = "rgls";
  std::size_t iters = 60;
  double step_cap = 50.0;
  std::string step_rule = "fixed_cap";
  double alpha = 0.1;
  std::size_t stride = 50;
  std::string lfa = "hilbert_sum";
  bool switch_to_ls = false;
  std::size_t patience = 5;
  double switch_tol = 1e-3;
  std::size_t snapshot_every = 10;
};

// Every option of the app and the chosen subcommand, as strings.
json resolved_config(const CLI::App& app, const CLI::App& sub) {
  json j;
  auto add = [](json& dst, const CLI::App& a) {
    for (const CLI::Option* o : a.get_options()) {
      if (o->get_lnames().empty()) continue;
      const std::string key = o->get_lnames().front();
      if (key == "help" || key == "config") continue;
      if (o->get_expected_min() == 0)
        dst[key] = o->count() > 0;
      else
        dst[key] = o->count() > 0 ? o->as<std::string>() : o->get_default_str();
    }
  };
  add(j["global"], app);
  add(j[sub.get_name()], sub);
  return j;
}

ScenarioSpec scenario_from(const json& manifest) {
  ScenarioSpec s;
  s.case_id = parse_case(manifest.at("case").get<std::string>());
  s.scale = manifest.at("scale").get<double>();
  s.rng_seed = manifest.at("seed").get<std::uint64_t>();
  s.f_source = manifest.at("f_source").get<double>();
  if (manifest.contains("vr_noise")) {
    s.vr_kernel_cells = manifest["vr_noise"].at("kernel_cells").get<double>();
    s.vr_field_std = manifest["vr_noise"].at("field_std").get<double>();
  }
  return s;
}

PmlConfig pml_from(const json& manifest) {
  PmlConfig p;
  p.width = manifest.at("pml").at("width").get<std::size_t>();
  p.max_damping = manifest.at("pml").at("max_damping").get<double>();
  p.profile_power = manifest.at("pml").at("profile_power").get<double>();
  return p;
}

int cmd_make_scenario(const Globals& g, const ScenarioOpts& o) {
  ScenarioSpec spec;
  spec.case_id = parse_case(o.case_name);
  spec.scale = o.scale;
  spec.rng_seed = g.seed;
  spec.f_source = o.f_source;
  spec.noise_sigma = o.noise_sigma;
  spec.vr_kernel_cells = o.vr_kernel;
  spec.vr_field_std = o.vr_std;
  spec.validate();
  const fs::path out(g.out);
  fs::create_directories(out);
  json manifest = scenario_manifest(spec);
  if (is_inversion_case(spec.case_id)) {
    io::write_model(out / "true_model.bin", build_model(spec));
    io::write_model(out / "initial_model.bin", build_initial_model(spec));
    io::write_json(out / "geometry.json", io::to_json(build_geometry(spec)));
  } else {
    const auto pair = build_registration_pair(spec);
    io::write_trace_csv(out / "d.csv", pair.d);
    io::write_trace_csv(out / "u.csv", pair.u);
    if (pair.truth) io::write_trace_csv(out / "truth.csv", Trace(*pair.truth, pair.u.dt, pair.u.t0));
    manifest["noise_sigma"] = spec.case_id == CaseId::reg2 ? spec.noise_sigma : 0.0;
  }
  io::write_json(out / "manifest.json", manifest);
  std::printf("case %s: wrote %s\n", std::string(to_string(spec.case_id)).c_str(), out.string().c_str());
  if (manifest.contains("shots")) std::printf("shots %zu\n", manifest["shots"].get<std::size_t>());
  return 0;
}

int cmd_forward(const Globals& g, const ForwardOpts& o) {
  const fs::path dir(o.scenario);
  const json manifest = io::read_json(dir / "manifest.json");
  const ScenarioSpec spec = scenario_from(manifest);
  const VelocityModel model = io::read_model(o.model.empty() ? dir / "true_model.bin" : fs::path(o.model));
  const AcquisitionGeometry geo = io::geometry_from_json(io::read_json(dir / "geometry.json"));
  SamplingPlan plan{manifest.at("dt").get<double>(), manifest.at("nt").get<std::size_t>(),
                    manifest.at("wavelet_delay").get<double>()};
  const Survey survey = make_observed_survey(model, geo, spec.f_source, plan, pml_from(manifest), g.workers);
  io::write_survey(g.out, survey);
  std::printf("forward: %zu shots, nt %zu, wrote %s\n", survey.size(), plan.nt, g.out.c_str());
  return 0;
}

Trace read_any_trace(const fs::path& p) {
  return p.extension() == ".bin" ? io::read_trace_bin(p) : io::read_trace_csv(p);
}

int cmd_register(const Globals& g, const RegisterOpts& o) {
  Trace d, u;
  std::optional<std::vector<double>> truth;
  double f_source = o.f_source;
  if (!o.case_name.empty()) {
    ScenarioSpec spec;
    spec.case_id = parse_case(o.case_name);
    spec.rng_seed = g.seed;
    auto pair = build_registration_pair(spec);
    d = std::move(pair.d);
    u = std::move(pair.u);
    truth = std::move(pair.truth);
    if (f_source <= 0.0) f_source = pair.f_source;
  } else {
    if (o.obs.empty() || o.pred.empty()) throw CLI::ValidationError("register", "need --case or both --obs and --pred");
    d = read_any_trace(o.obs);
    u = read_any_trace(o.pred);
    if (f_source <= 0.0) f_source = kRegistrationFrequency;
  }
  SweepSchedule sched = SweepSchedule::geometric(f_source, o.bands);
  sched.n_intervals = o.intervals;
  sched.penalty_weight = o.penalty;
  const LfaKind kind = parse_lfa_kind(o.lfa);
  const RegistrationResult res = register_traces(d, u, sched, kind);

  const fs::path out(g.out);
  fs::create_directories(out);
  io::write_json(out / "warps.json", io::to_json(res.warp));
  std::vector<std::vector<double>> hist;
  for (std::size_t i = 0; i < res.objective_history.size(); ++i)
    hist.push_back({static_cast<double>(i), static_cast<double>(res.objective_history[i].band),
                    sched.bands[res.objective_history[i].band].omega_max, res.objective_history[i].value});
  io::write_csv(out / "objective_history.csv", {"step", "band", "omega_max", "objective"}, hist);
  const Trace moved = apply_warp(u, res.warp, o.alpha);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < u.size(); ++i) rows.push_back({u.time(i), d.samples[i], u.samples[i], moved.samples[i]});
  io::write_csv(out / "registered.csv", {"t", "d", "u", "dtilde"}, rows);

  const double m0 = registration_misfit(d, u, WarpModel::identity(res.warp.basis));
  const double m1 = registration_misfit(d, u, res.warp);
  json report{{"converged", res.converged},
              {"failed", res.failed},
              {"fold_warning", res.fold_warning},
              {"lfa", o.lfa},
              {"initial_misfit", m0},
              {"final_misfit", m1},
              {"misfit_reduction", m1 > 0.0 ? m0 / m1 : INFINITY},
              {"lfa_initial_misfit", res.initial_misfit},
              {"lfa_final_misfit", res.final_misfit}};
  if (truth) {
    double err = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) err = std::max(err, std::abs(res.warp.eval(u.time(i)).p - (*truth)[i]));
    report["max_warp_error"] = err;
    report["dominant_period"] = 1.0 / f_source;
  }
  io::write_json(out / "report.json", report);
  std::printf("register: converged %s, misfit %.4e -> %.4e (x%.1f)\n", res.converged ? "true" : "false", m0, m1,
              m1 > 0.0 ? m0 / m1 : INFINITY);
  return 0;
}

int cmd_invert(const Globals& g, const InvertOpts& o) {
  const fs::path dir(o.scenario);
  const json manifest = io::read_json(dir / "manifest.json");
  const ScenarioSpec spec = scenario_from(manifest);
  const VelocityModel truth = io::read_model(dir / "true_model.bin");
  const VelocityModel initial = io::read_model(dir / "initial_model.bin");
  const AcquisitionGeometry geo = io::geometry_from_json(io::read_json(dir / "geometry.json"));
  const fs::path survey_dir = o.obs.empty() ? dir / "survey" : fs::path(o.obs);
  Survey obs;
  if (!o.obs.empty() || fs::exists(survey_dir / "survey.json")) {
    obs = io::read_survey(survey_dir);
  } else {
    spdlog::info("invert: no stored survey under {}, modelling it from the true model", dir.string());
    SamplingPlan plan{manifest.at("dt").get<double>(), manifest.at("nt").get<std::size_t>(),
                      manifest.at("wavelet_delay").get<double>()};
    obs = make_observed_survey(truth, geo, spec.f_source, plan, pml_from(manifest), g.workers);
  }

  InversionConfig cfg;
  cfg.max_iter = o.iters;
  cfg.step_cap = o.step_cap;
  cfg.step_rule = parse_step_rule(o.step_rule);
  cfg.pml = pml_from(manifest);
  cfg.workers = g.workers;
  cfg.switch_to_ls = o.switch_to_ls;
  cfg.switch_patience = o.patience;
  cfg.switch_rel_tol = o.switch_tol;
  if (parse_residual_mode(o.method) == ResidualMode::rgls) {
    cfg.adjoint_spec = AdjointSourceSpec::rgls_default(spec.f_source);
    cfg.adjoint_spec.alpha = o.alpha;
    cfg.adjoint_spec.stride = o.stride;
    cfg.adjoint_spec.lfa_kind = parse_lfa_kind(o.lfa);
  }

  const fs::path out(g.out);
  fs::create_directories(out / "snapshots");
  ConvergenceLog running;
  cfg.on_iteration = [&](const ConvergenceRecord& r, const VelocityModel& v) {
    running.records.push_back(r);
    running.write_csv(out / "convergence.csv");
    if (r.iter % o.snapshot_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "model_%04zu.bin", r.iter);
      io::write_model(out / "snapshots" / name, v);
      io::write_model(out / "last_good_model.bin", v);
    }
    spdlog::info("iter {:4d} {:4s} J {:.6e} rms {:.3f} step {:.3f}", r.iter, to_string(r.mode), r.J, r.model_rms,
                 r.step_size);
  };
  if (g.dump_adjoint) {
    cfg.on_adjoint = [&](const IterationDump& d) {
      char name[64];
      std::snprintf(name, sizeof name, "iter_%04zu/shot_%04zu", d.iter, d.shot);
      const fs::path p = out / "adjoint" / name;
      io::write_gather(p / "residual", *d.residual);
      if (d.rgls) {
        json w = json::array();
        for (const auto& m : d.rgls->warps) w.push_back(io::to_json(m));
        io::write_json(p / "warps.json", w);
      }
    };
  }

  InversionResult res;
  try {
    res = invert(obs, geo, initial, cfg, truth);
  } catch (const NonFiniteError& e) {
    running.stop_reason = "non_finite";
    running.write_csv(out / "convergence.csv");
    throw;
  }
  res.log.write_csv(out / "convergence.csv");
  io::write_model(out / "final_model.bin", res.model);
  io::write_model(out / "last_good_model.bin", res.model);
  const auto& last = res.log.records.back();
  json summary{{"stop_reason", res.log.stop_reason},
               {"iterations", last.iter},
               {"final_J", last.J},
               {"final_model_rms", last.model_rms},
               {"initial_model_rms", res.log.records.front().model_rms}};
  if (res.log.switch_iter) summary["switch_iter"] = *res.log.switch_iter;
  io::write_json(out / "summary.json", summary);
  std::printf("final J %.6e model_rms %.4f (initial %.4f)\n", last.J, last.model_rms,
              res.log.records.front().model_rms);
  if (res.log.switch_iter) std::printf("switched rgls -> ls at iteration %zu\n", *res.log.switch_iter);
  return 0;
}

int cmd_report(const Globals& g, const std::string& run) {
  const fs::path p = fs::path(run) / "convergence.csv";
  std::ifstream f(p);
  if (!f) throw io::IoError("cannot read " + p.string());
  std::string line;
  std::getline(f, line);
  std::vector<double> J, rms;
  std::vector<std::string> mode;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> cols;
    while (std::getline(ss, field, ',')) cols.push_back(field);
    if (cols.size() != 5) throw io::IoError("bad row in " + p.string());
    mode.push_back(cols[1]);
    J.push_back(std::stod(cols[2]));
    rms.push_back(std::stod(cols[3]));
  }
  if (J.empty()) throw io::IoError("empty log " + p.string());
  // A hump: J rises above an earlier value and later falls below the peak.
  bool hump = false;
  double lowest = J[0];
  for (std::size_t k = 1; k < J.size(); ++k) {
    if (J[k] > lowest) {
      for (std::size_t m = k + 1; m < J.size(); ++m)
        if (J[m] < J[k]) hump = true;
    }
    lowest = std::min(lowest, J[k]);
  }
  std::optional<std::size_t> switch_at;
  for (std::size_t k = 1; k < mode.size(); ++k)
    if (mode[k] != mode[k - 1]) switch_at = k;
  json r{{"records", J.size()},
         {"initial_J", J.front()},
         {"final_J", J.back()},
         {"initial_model_rms", rms.front()},
         {"final_model_rms", rms.back()},
         {"J_hump", hump}};
  if (switch_at) r["mode_switch_iter"] = *switch_at;
  const fs::path out = g.out.empty() ? fs::path(run) : fs::path(g.out);
  io::write_json(out / "report.json", r);
  std::cout << r.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Registration-guided least-squares waveform inversion"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML/INI file with option values; flags override it");
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--workers", g.workers, "Parallel shots")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--dump-adjoint", g.dump_adjoint, "Write residual gathers and warps every iteration");
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  ScenarioOpts so;
  auto* mk = app.add_subcommand("make-scenario", "Write model grids, geometry and manifest for a case");
  mk->add_option("--case", so.case_name, "H1 L1 H2 L2 R3 reg1 reg2 reg3")->required();
  mk->add_option("--scale", so.scale, "Domain scale in (0, 1]");
  mk->add_option("--f-source", so.f_source, "Ricker centre frequency (Hz)");
  mk->add_option("--noise-sigma", so.noise_sigma, "reg2 trace noise");
  mk->add_option("--vr-kernel", so.vr_kernel, "V_R smoothing kernel std (cells)");
  mk->add_option("--vr-std", so.vr_std, "V_R random field std (m/s)");

  ForwardOpts fo;
  auto* fw = app.add_subcommand("forward", "Model the survey of a scenario");
  fw->add_option("--scenario", fo.scenario, "Scenario directory")->required();
  fw->add_option("--model", fo.model, "Velocity file (default: the true model)");

  RegisterOpts ro;
  auto* rg = app.add_subcommand("register", "Register two traces");
  rg->add_option("--case", ro.case_name, "reg1 reg2 reg3 (generated pair)");
  rg->add_option("--obs", ro.obs, "Observed trace (.csv or .bin)");
  rg->add_option("--pred", ro.pred, "Predicted trace (.csv or .bin)");
  rg->add_option("--lfa", ro.lfa, "hilbert_sum|square|abs");
  rg->add_option("--f-source", ro.f_source, "Source centre frequency for the sweep (Hz)");
  rg->add_option("--bands", ro.bands, "Number of sweep bands");
  rg->add_option("--intervals", ro.intervals, "Spline intervals");
  rg->add_option("--penalty", ro.penalty, "Penalty weight lambda");
  rg->add_option("--alpha", ro.alpha, "Warp fraction for the dtilde column");

  InvertOpts io_;
  auto* iv = app.add_subcommand("invert", "Run LS or RGLS inversion on a scenario");
  iv->add_option("--scenario", io_.scenario, "Scenario directory")->required();
  iv->add_option("--obs", io_.obs, "Observed survey directory (default: <scenario>/survey, else modelled)");
  iv->add_option("--method", io_.method, "ls|rgls");
  iv->add_option("--iters", io_.iters, "Maximum iterations");
  iv->add_option("--step-cap", io_.step_cap, "Largest |dv| per iteration (m/s)");
  iv->add_option("--step-rule", io_.step_rule, "fixed_cap|backtracking");
  iv->add_option("--alpha", io_.alpha, "Warp fraction");
  iv->add_option("--stride", io_.stride, "Register every stride-th receiver");
  iv->add_option("--lfa", io_.lfa, "hilbert_sum|square|abs");
  iv->add_flag("--switch-to-ls", io_.switch_to_ls, "Switch to LS when the misfit stalls");
  iv->add_option("--patience", io_.patience, "Stall window (iterations)");
  iv->add_option("--switch-tol", io_.switch_tol, "Relative misfit change counted as a stall");
  iv->add_option("--snapshot-every", io_.snapshot_every, "Model snapshot interval")->check(CLI::PositiveNumber);

  std::string run_dir;
  auto* rp = app.add_subcommand("report", "Summarize a convergence log");
  rp->add_option("--run", run_dir, "Directory holding convergence.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kBadArguments;
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (sub != rp) {
      fs::create_directories(g.out);
      io::write_json(fs::path(g.out) / "config.json", resolved_config(app, *sub));
    }
    if (sub == mk) return cmd_make_scenario(g, so);
    if (sub == fw) return cmd_forward(g, fo);
    if (sub == rg) return cmd_register(g, ro);
    if (sub == iv) return cmd_invert(g, io_);
    return cmd_report(g, run_dir);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArguments;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadArguments;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}
