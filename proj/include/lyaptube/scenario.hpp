#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lyaptube/controller.hpp"
#include "lyaptube/model.hpp"
#include "lyaptube/sim.hpp"
#include "lyaptube/tube.hpp"

namespace lyaptube {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SinusoidSpec {
  double amplitude = 0.5;
  double frequency_rad_per_s = 1.0;
  bool operator==(const SinusoidSpec&) const = default;
};

/// y_d = final - (slope t + offset) exp(-rate t).
struct TransitionSpec {
  double final_value = 0.95;
  double slope_per_s = 1.15;
  double offset = 1.6;
  double rate_per_s = 0.5;
  double settle_time_s = 60.0;
  bool operator==(const TransitionSpec&) const = default;
};

struct SetPointSpec {
  double value = 0.0;
  bool operator==(const SetPointSpec&) const = default;
};

struct TabulatedSpec {
  std::vector<double> times_s;
  /// [y_d, y_d', ..., y_d^(n_xi)] per time.
  std::vector<std::vector<double>> rows;
  bool operator==(const TabulatedSpec&) const = default;
};

using ReferenceSpec = std::variant<SinusoidSpec, TransitionSpec, SetPointSpec, TabulatedSpec>;

/// Batch description of one certification/simulation setup.
///
/// Plants: "example" is n_xi = 2, n_eta = 1 with a = 0, b = 1,
/// q = -eta + xi_1 and ISS certificate V_eta = eta^2 / 2, gamma(s) = s /
/// theta_eta. "double-integrator-chain" is a = 0, b = 1 with no internal
/// dynamics and any n_xi. The perturbation is
///   delta = xi_square |xi|^2 + constant + sin_amplitude sin(sin_frequency t).
struct Scenario {
  std::string name;

  struct Plant {
    std::string kind = "example";
    int n_xi = 2;
    bool operator==(const Plant&) const = default;
  } plant;

  ReferenceSpec reference = SinusoidSpec{};

  struct Gains {
    std::vector<double> k;
    double rho = 1.0;
    double mu = 1e-3;
    double c0 = 0.0;
    /// Row-major; empty means identity.
    std::vector<std::vector<double>> q;
    bool discontinuous = false;
    bool operator==(const Gains&) const = default;
  } gains;

  struct Domain {
    std::vector<double> lower;
    std::vector<double> upper;
    double r = 0.0;
    double delta = 0.0;
    bool operator==(const Domain&) const = default;
  } domain;

  struct Iss {
    double theta_eta = 0.95;
    bool operator==(const Iss&) const = default;
  } iss;

  struct Perturbation {
    double xi_square = 0.0;
    double constant = 0.0;
    double sin_amplitude = 0.0;
    double sin_frequency_rad_per_s = 0.0;
    bool operator==(const Perturbation&) const = default;
  } perturbation;

  struct Sim {
    std::string integrator = "rk4-fixed";
    double step_s = 1e-3;
    double t_end_s = 20.0;
    std::string exit_policy = "stop-and-report";
    std::vector<double> eta0;
    bool operator==(const Sim&) const = default;
  } sim;

  bool operator==(const Scenario&) const = default;

  int n_xi() const { return plant.n_xi; }
  int n_eta() const { return plant.kind == "example" ? 1 : 0; }

  /// Range checks: rho >= delta, mu > 0 (unless discontinuous),
  /// theta_eta in (0, 1), consistent dimensions, known kinds.
  void validate() const;
};

Scenario parse_scenario(const nlohmann::json& doc);
Scenario parse_scenario_text(const std::string& text);
Scenario load_scenario(const std::string& path);
nlohmann::json serialise_scenario(const Scenario& s);

/// "sinusoid", "transition", "setpoint".
std::vector<std::string> builtin_scenario_names();
std::optional<Scenario> builtin_scenario(const std::string& name);

PlantSpec build_plant(const Scenario& s);
DomainSpec build_domain(const Scenario& s);
/// Present only for plants with internal dynamics.
std::optional<IssCertificate> build_iss(const Scenario& s);
Reference build_reference(const Scenario& s);
RedesignController build_controller(const Scenario& s);
SimConfig build_sim_config(const Scenario& s);

/// Everything a run needs, built once from a scenario.
struct ScenarioSetup {
  Scenario scenario;
  PlantSpec plant;
  DomainSpec domain;
  std::optional<IssCertificate> iss;
  RedesignController controller;
  SimConfig sim;

  const IssCertificate* iss_ptr() const { return iss ? &*iss : nullptr; }
};

ScenarioSetup build_setup(const Scenario& s);

nlohmann::json report_to_json(const CertificationReport& report);

}  // namespace lyaptube
