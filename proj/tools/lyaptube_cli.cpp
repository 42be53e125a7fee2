// Command-line front end: certify, simulate, nu, scenario-validate.
//
// Exit codes: 0 certified / success, 2 not certified, 3 inconclusive,
// 1 any error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lyaptube/scenario.hpp"
#include "lyaptube/sim.hpp"
#include "lyaptube/tube.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lyaptube;

namespace {

constexpr int kExitError = 1;

Scenario resolve_scenario(const std::string& arg) {
  if (fs::exists(arg)) return load_scenario(arg);
  if (auto builtin = builtin_scenario(arg)) return *builtin;
  throw ScenarioError("no scenario file or built-in named '" + arg + "'");
}

std::vector<double> parse_numbers(const std::string& text, char sep) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw ScenarioError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create '" + dir + "': " + ec.message());
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

struct ModeArg {
  CertifyMode mode = CertifyMode::kDynamic;
  double finite_time = 0.0;
};

ModeArg parse_mode(const std::string& text) {
  if (text == "dynamic") return {CertifyMode::kDynamic, 0.0};
  if (text == "static") return {CertifyMode::kStatic, 0.0};
  if (text == "setpoint" || text == "set-point") return {CertifyMode::kSetPoint, 0.0};
  if (text.rfind("finite:", 0) == 0) {
    const double t = std::stod(text.substr(7));
    if (!(t > 0.0)) throw ScenarioError("finite:T needs T > 0");
    return {CertifyMode::kFiniteTime, t};
  }
  throw ScenarioError("unknown mode '" + text + "'");
}

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::kCertified: return 0;
    case Verdict::kNotCertified: return 2;
    case Verdict::kInconclusive: return 3;
  }
  return kExitError;
}

struct CommonArgs {
  std::string scenario;
  std::string out_dir = ".";
  double c0 = -1.0;
  double step = -1.0;
  double t_end = -1.0;
};

Scenario apply_overrides(Scenario s, const CommonArgs& args) {
  if (args.c0 >= 0.0) s.gains.c0 = args.c0;
  if (args.step > 0.0) s.sim.step_s = args.step;
  if (args.t_end > 0.0) s.sim.t_end_s = args.t_end;
  s.validate();
  return s;
}

int run_certify(const CommonArgs& args, const std::string& mode_text) {
  const ModeArg mode = parse_mode(mode_text);
  const ScenarioSetup setup = build_setup(apply_overrides(resolve_scenario(args.scenario), args));
  CertifyOptions options;
  options.finite_time = mode.finite_time;
  const CertificationReport report =
      certify(mode.mode, setup.plant, setup.domain, setup.iss_ptr(), setup.controller,
              setup.scenario.gains.c0, options);

  ensure_dir(args.out_dir);
  json doc = report_to_json(report);
  doc["scenario"] = setup.scenario.name;
  write_json(fs::path(args.out_dir) / "report.json", doc);

  const TubeKind kind = mode.mode == CertifyMode::kStatic ? TubeKind::kStatic : TubeKind::kDynamic;
  const double span = report.horizon_checked > 0.0 ? report.horizon_checked : 10.0;
  const Tube tube = make_tube(kind, setup.controller, setup.scenario.gains.c0, span + 1.0);
  std::vector<double> times;
  for (int i = 0; i <= 100; ++i) times.push_back(span * i / 100.0);
  std::ofstream csv(fs::path(args.out_dir) / "tube.csv");
  write_tube_csv(csv, tube, times, 64);

  std::cout << setup.scenario.name << ": " << to_string(report.verdict) << " (" << to_string(report.mode)
            << "), margin " << report.margin << ", slack " << report.slack << '\n';
  return exit_code(report.verdict);
}

std::vector<InitialState> parse_initials(const std::string& text, const ScenarioSetup& setup) {
  const Vector eta0 = Eigen::Map<const Vector>(setup.scenario.sim.eta0.data(),
                                               static_cast<Eigen::Index>(setup.scenario.sim.eta0.size()));
  const Vector center = desired_state(setup.controller.reference, 0.0);
  std::vector<InitialState> out;
  if (text == "center") {
    out.push_back({center, eta0});
  } else if (text.rfind("boundary:", 0) == 0) {
    const int count = std::stoi(text.substr(9));
    const auto& lyap = *setup.controller.nominal.quadratic;
    const TubeSection s0{center, setup.scenario.gains.c0, lyap.P, lyap.P_inv};
    for (const auto& xi : boundary_initial_states(s0, count)) out.push_back({xi, eta0});
  } else {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
      const auto values = parse_numbers(item, ',');
      if (values.size() != static_cast<std::size_t>(setup.plant.n_xi)) {
        throw ScenarioError("explicit initial state needs n_xi values: '" + item + "'");
      }
      out.push_back({Eigen::Map<const Vector>(values.data(), setup.plant.n_xi), eta0});
    }
  }
  if (out.empty()) throw ScenarioError("no initial states");
  return out;
}

int run_simulate(const CommonArgs& args, const std::string& initials_text, double r_inf) {
  const ScenarioSetup setup = build_setup(apply_overrides(resolve_scenario(args.scenario), args));
  const auto initials = parse_initials(initials_text, setup);
  const auto runs = integrate_batch(setup.plant, setup.controller, setup.domain, setup.iss_ptr(),
                                    initials, setup.sim);

  ensure_dir(args.out_dir);
  json summary = {{"scenario", setup.scenario.name}, {"c0", setup.scenario.gains.c0},
                  {"mu", setup.scenario.gains.mu}, {"runs", json::array()}};
  const double c0 = setup.scenario.gains.c0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Trajectory& traj = runs[i];
    const fs::path file = fs::path(args.out_dir) / ("run_" + std::to_string(i) + ".csv");
    std::ofstream csv(file);
    write_trajectory_csv(csv, traj);

    const Vector xi_bar0 = initials[i].xi - desired_state(setup.controller.reference, 0.0);
    bool in_certificate = setup.controller.nominal.lyapunov(xi_bar0) <= c0 * (1.0 + 1e-12) + 1e-15;
    if (setup.iss) in_certificate = in_certificate && internal_set_contains(*setup.iss, initials[i].eta);

    json run = {{"index", i},
                {"file", file.filename().string()},
                {"xi0", std::vector<double>(initials[i].xi.data(), initials[i].xi.data() + initials[i].xi.size())},
                {"in_certificate", in_certificate},
                {"max_V_N_minus_nu", traj.peak_tube_excess},
                {"exited_domain", traj.exited},
                {"samples", traj.size()}};
    if (traj.exited) run["exit_time"] = traj.exit_time;
    if (setup.iss) {
      const InternalReport internal = monitor_internal(traj, *setup.iss);
      run["internal"] = {{"bounded", internal.bounded},
                         {"left_internal_set", internal.left_internal_set},
                         {"max_V_eta", internal.max_v_eta},
                         {"bound", internal.bound}};
    }
    if (r_inf > 0.0) {
      const auto t_inf = measure_ultimate_bound(traj, r_inf);
      run["r_inf"] = r_inf;
      run["T_inf"] = t_inf ? json(*t_inf) : json(nullptr);
    }
    summary["runs"].push_back(run);
    std::cout << "run " << i << ": max(V_N - nu) = " << traj.peak_tube_excess
              << (in_certificate ? "" : " [out-of-certificate]") << '\n';
  }
  write_json(fs::path(args.out_dir) / "summary.json", summary);
  return 0;
}

int run_nu(const CommonArgs& args, const std::string& c0_text, double mu_override) {
  Scenario s = resolve_scenario(args.scenario);
  if (mu_override >= 0.0) {
    s.gains.mu = mu_override;
    s.gains.discontinuous = mu_override == 0.0;
  }
  s = apply_overrides(s, args);
  const auto c0s = parse_numbers(c0_text, ',');
  if (c0s.empty()) throw ScenarioError("nu: empty c0 list");
  const RedesignController ctrl = build_controller(s);
  const double mu = ctrl.discontinuous ? 0.0 : ctrl.mu;
  const double t_end = s.sim.t_end_s;
  std::vector<TubeLevel> levels;
  for (const double c0 : c0s) levels.push_back(solve_nu({ctrl.nominal.bounds, mu, c0}, t_end));

  ensure_dir(args.out_dir);
  std::ofstream csv(fs::path(args.out_dir) / "nu.csv");
  csv.precision(17);
  csv << 't';
  for (const double c0 : c0s) csv << ",nu_c0=" << c0;
  csv << '\n';
  const double dt = std::max(s.sim.step_s, t_end / 2000.0);
  const auto steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));
  for (long k = 0; k <= steps; ++k) {
    const double t = k == steps ? t_end : dt * k;
    csv << t;
    for (const auto& level : levels) csv << ',' << level(t);
    csv << '\n';
  }
  std::cout << "alpha_inf(mu) = " << alpha_inf(ctrl.nominal.bounds, mu) << '\n';
  return 0;
}

int run_validate(const std::string& scenario, const std::string& emit) {
  const Scenario s = resolve_scenario(scenario);
  build_setup(s);
  const std::string text = serialise_scenario(s).dump(2);
  if (!emit.empty()) {
    std::ofstream out(emit);
    if (!out) throw std::runtime_error("cannot write " + emit);
    out << text << '\n';
  } else {
    std::cout << text << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lyapunov-redesign tracking: tube certification and closed-loop simulation"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string mode = "dynamic";
  std::string initials = "center";
  std::string c0_list;
  std::string emit;
  double r_inf = -1.0;
  double mu_override = -1.0;

  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--scenario", common.scenario, "scenario file or built-in name")->required();
    sub->add_option("--out-dir", common.out_dir, "output directory");
    sub->add_option("--step", common.step, "integration step [s]");
    sub->add_option("--t-end", common.t_end, "final time [s]");
  };

  auto* certify_cmd = app.add_subcommand("certify", "check the tube containment conditions");
  add_common(certify_cmd);
  certify_cmd->add_option("--mode", mode, "dynamic | static | setpoint | finite:T");
  certify_cmd->add_option("--c0", common.c0, "override the initial tube level");

  auto* simulate_cmd = app.add_subcommand("simulate", "integrate the perturbed closed loop");
  add_common(simulate_cmd);
  simulate_cmd->add_option("--initials", initials, "center | boundary:N | x1,x2;x1,x2");
  simulate_cmd->add_option("--r-inf", r_inf, "ultimate bound to measure");
  simulate_cmd->add_option("--c0", common.c0, "override the initial tube level");

  auto* nu_cmd = app.add_subcommand("nu", "tabulate tube levels for several c0");
  add_common(nu_cmd);
  nu_cmd->add_option("--c0", c0_list, "comma-separated initial levels")->required();
  nu_cmd->add_option("--mu", mu_override, "override mu (0 = discontinuous limit)");

  auto* validate_cmd = app.add_subcommand("scenario-validate", "parse, check and normalise a scenario");
  validate_cmd->add_option("--scenario", common.scenario, "scenario file or built-in name")->required();
  validate_cmd->add_option("--emit", emit, "write the normalised scenario here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  try {
    if (*certify_cmd) return run_certify(common, mode);
    if (*simulate_cmd) return run_simulate(common, initials, r_inf);
    if (*nu_cmd) return run_nu(common, c0_list, mu_override);
    if (*validate_cmd) return run_validate(common.scenario, emit);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
