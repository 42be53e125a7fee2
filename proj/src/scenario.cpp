#include "lyaptube/scenario.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace lyaptube {

using nlohmann::json;

namespace {

/// Reads an object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ScenarioError(where_ + ": expected an object");
  }

  ~ObjectReader() = default;

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  T required(const std::string& key) {
    if (!obj_.contains(key)) throw ScenarioError(where_ + ": missing key '" + key + "'");
    return get<T>(key);
  }

  template <typename T>
  T optional(const std::string& key, T fallback) {
    if (!obj_.contains(key)) return fallback;
    return get<T>(key);
  }

  const json& child(const std::string& key) {
    if (!obj_.contains(key)) throw ScenarioError(where_ + ": missing key '" + key + "'");
    seen_.insert(key);
    return obj_.at(key);
  }

  /// Throws on any key that was not read.
  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ScenarioError(where_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

 private:
  template <typename T>
  T get(const std::string& key) {
    seen_.insert(key);
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ScenarioError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

ReferenceSpec parse_reference(const json& doc) {
  ObjectReader r(doc, "reference");
  const auto kind = r.required<std::string>("kind");
  ReferenceSpec out;
  if (kind == "sinusoid") {
    SinusoidSpec s;
    s.amplitude = r.required<double>("amplitude");
    s.frequency_rad_per_s = r.required<double>("frequency_rad_per_s");
    out = s;
  } else if (kind == "transition") {
    TransitionSpec s;
    s.final_value = r.required<double>("final_value");
    s.slope_per_s = r.required<double>("slope_per_s");
    s.offset = r.required<double>("offset");
    s.rate_per_s = r.required<double>("rate_per_s");
    s.settle_time_s = r.optional<double>("settle_time_s", s.settle_time_s);
    out = s;
  } else if (kind == "set-point") {
    out = SetPointSpec{r.required<double>("value")};
  } else if (kind == "tabulated") {
    TabulatedSpec s;
    s.times_s = r.required<std::vector<double>>("times_s");
    s.rows = r.required<std::vector<std::vector<double>>>("rows");
    out = s;
  } else {
    throw ScenarioError("reference: unknown kind '" + kind + "'");
  }
  r.finish();
  return out;
}

json serialise_reference(const ReferenceSpec& spec) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, SinusoidSpec>) {
          return {{"kind", "sinusoid"},
                  {"amplitude", s.amplitude},
                  {"frequency_rad_per_s", s.frequency_rad_per_s}};
        } else if constexpr (std::is_same_v<T, TransitionSpec>) {
          return {{"kind", "transition"},        {"final_value", s.final_value},
                  {"slope_per_s", s.slope_per_s}, {"offset", s.offset},
                  {"rate_per_s", s.rate_per_s},   {"settle_time_s", s.settle_time_s}};
        } else if constexpr (std::is_same_v<T, SetPointSpec>) {
          return {{"kind", "set-point"}, {"value", s.value}};
        } else {
          return {{"kind", "tabulated"}, {"times_s", s.times_s}, {"rows", s.rows}};
        }
      },
      spec);
}

Scenario paper_base(const std::string& name) {
  Scenario s;
  s.name = name;
  s.plant = {"example", 2};
  s.gains.k = {1.0, 2.0};
  s.gains.rho = 1.0;
  s.gains.mu = 1e-3;
  s.domain.lower = {-1.0, -1.0};
  s.domain.upper = {1.0, 1.0};
  s.domain.r = std::sqrt(2.0);
  s.domain.delta = 1.0;
  s.iss.theta_eta = 0.95;
  s.perturbation = {0.125, 0.0, 0.75, 5.0};
  s.sim.eta0 = {1.4};
  return s;
}

}  // namespace

void Scenario::validate() const {
  if (name.empty()) throw ScenarioError("scenario: name must not be empty");
  if (plant.kind != "example" && plant.kind != "double-integrator-chain") {
    throw ScenarioError("plant: unknown kind '" + plant.kind + "'");
  }
  if (plant.kind == "example" && plant.n_xi != 2) {
    throw ScenarioError("plant: the example plant has n_xi = 2");
  }
  if (plant.n_xi < 1) throw ScenarioError("plant: n_xi must be >= 1");
  const auto n = static_cast<std::size_t>(plant.n_xi);
  if (gains.k.size() != n) throw ScenarioError("gains: k must have n_xi entries");
  if (!gains.q.empty()) {
    if (gains.q.size() != n) throw ScenarioError("gains: Q must be n_xi x n_xi");
    for (const auto& row : gains.q) {
      if (row.size() != n) throw ScenarioError("gains: Q must be n_xi x n_xi");
    }
  }
  if (domain.lower.size() != n || domain.upper.size() != n) {
    throw ScenarioError("domain: box bounds must have n_xi entries");
  }
  if (!(domain.r > 0.0)) throw ScenarioError("domain: r must be > 0");
  if (!(domain.delta >= 0.0)) throw ScenarioError("domain: delta must be >= 0");
  if (!(gains.rho >= domain.delta)) throw ScenarioError("gains: rho must be >= delta");
  if (!gains.discontinuous && !(gains.mu > 0.0)) throw ScenarioError("gains: mu must be > 0");
  if (gains.mu < 0.0) throw ScenarioError("gains: mu must be >= 0");
  if (!(gains.c0 >= 0.0)) throw ScenarioError("gains: c0 must be >= 0");
  if (!(iss.theta_eta > 0.0 && iss.theta_eta < 1.0)) {
    throw ScenarioError("iss: theta_eta must lie in (0, 1)");
  }
  if (sim.integrator != "rk4-fixed" && sim.integrator != "rk45-adaptive") {
    throw ScenarioError("sim: unknown integrator '" + sim.integrator + "'");
  }
  if (sim.exit_policy != "stop-and-report" && sim.exit_policy != "continue") {
    throw ScenarioError("sim: unknown exit policy '" + sim.exit_policy + "'");
  }
  if (!(sim.step_s > 0.0) || !(sim.t_end_s > 0.0)) {
    throw ScenarioError("sim: step and t_end must be > 0");
  }
  if (sim.eta0.size() != static_cast<std::size_t>(n_eta())) {
    throw ScenarioError("sim: eta0 must have n_eta entries");
  }
  if (const auto* tab = std::get_if<TabulatedSpec>(&reference)) {
    for (const auto& row : tab->rows) {
      if (row.size() != n + 1) throw ScenarioError("reference: rows need n_xi + 1 channels");
    }
  }
}

Scenario parse_scenario(const json& doc) {
  ObjectReader top(doc, "scenario");
  Scenario s;
  s.name = top.required<std::string>("name");
  {
    ObjectReader r(top.child("plant"), "plant");
    s.plant.kind = r.required<std::string>("kind");
    s.plant.n_xi = r.required<int>("n_xi");
    r.finish();
  }
  s.reference = parse_reference(top.child("reference"));
  {
    ObjectReader r(top.child("gains"), "gains");
    s.gains.k = r.required<std::vector<double>>("k");
    s.gains.rho = r.required<double>("rho");
    s.gains.mu = r.required<double>("mu");
    s.gains.c0 = r.required<double>("c0");
    s.gains.q = r.optional<std::vector<std::vector<double>>>("Q", {});
    s.gains.discontinuous = r.optional<bool>("discontinuous", false);
    r.finish();
  }
  {
    ObjectReader r(top.child("domain"), "domain");
    s.domain.lower = r.required<std::vector<double>>("lower");
    s.domain.upper = r.required<std::vector<double>>("upper");
    s.domain.r = r.required<double>("r");
    s.domain.delta = r.required<double>("delta");
    r.finish();
  }
  if (top.has("iss")) {
    ObjectReader r(top.child("iss"), "iss");
    s.iss.theta_eta = r.required<double>("theta_eta");
    r.finish();
  }
  if (top.has("perturbation")) {
    ObjectReader r(top.child("perturbation"), "perturbation");
    s.perturbation.xi_square = r.optional<double>("xi_square", 0.0);
    s.perturbation.constant = r.optional<double>("constant", 0.0);
    s.perturbation.sin_amplitude = r.optional<double>("sin_amplitude", 0.0);
    s.perturbation.sin_frequency_rad_per_s = r.optional<double>("sin_frequency_rad_per_s", 0.0);
    r.finish();
  }
  if (top.has("sim")) {
    ObjectReader r(top.child("sim"), "sim");
    s.sim.integrator = r.optional<std::string>("integrator", s.sim.integrator);
    s.sim.step_s = r.optional<double>("step_s", s.sim.step_s);
    s.sim.t_end_s = r.optional<double>("t_end_s", s.sim.t_end_s);
    s.sim.exit_policy = r.optional<std::string>("exit_policy", s.sim.exit_policy);
    s.sim.eta0 = r.optional<std::vector<double>>("eta0", {});
    r.finish();
  }
  top.finish();
  s.validate();
  return s;
}

Scenario parse_scenario_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(std::string("scenario: malformed JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("scenario: cannot open '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_scenario_text(buffer.str());
}

json serialise_scenario(const Scenario& s) {
  return {
      {"name", s.name},
      {"plant", {{"kind", s.plant.kind}, {"n_xi", s.plant.n_xi}}},
      {"reference", serialise_reference(s.reference)},
      {"gains",
       {{"k", s.gains.k},
        {"rho", s.gains.rho},
        {"mu", s.gains.mu},
        {"c0", s.gains.c0},
        {"Q", s.gains.q},
        {"discontinuous", s.gains.discontinuous}}},
      {"domain",
       {{"lower", s.domain.lower},
        {"upper", s.domain.upper},
        {"r", s.domain.r},
        {"delta", s.domain.delta}}},
      {"iss", {{"theta_eta", s.iss.theta_eta}}},
      {"perturbation",
       {{"xi_square", s.perturbation.xi_square},
        {"constant", s.perturbation.constant},
        {"sin_amplitude", s.perturbation.sin_amplitude},
        {"sin_frequency_rad_per_s", s.perturbation.sin_frequency_rad_per_s}}},
      {"sim",
       {{"integrator", s.sim.integrator},
        {"step_s", s.sim.step_s},
        {"t_end_s", s.sim.t_end_s},
        {"exit_policy", s.sim.exit_policy},
        {"eta0", s.sim.eta0}}},
  };
}

std::vector<std::string> builtin_scenario_names() { return {"sinusoid", "transition", "setpoint"}; }

std::optional<Scenario> builtin_scenario(const std::string& name) {
  if (name == "sinusoid") {
    Scenario s = paper_base(name);
    s.reference = SinusoidSpec{0.5, 1.0};
    s.gains.c0 = 0.08;
    return s;
  }
  if (name == "transition") {
    Scenario s = paper_base(name);
    s.reference = TransitionSpec{0.95, 1.15, 1.6, 0.5, 60.0};
    s.gains.c0 = 0.0875;
    return s;
  }
  if (name == "setpoint") {
    Scenario s = paper_base(name);
    s.reference = SetPointSpec{0.25};
    s.gains.c0 = 0.33;
    return s;
  }
  return std::nullopt;
}

PlantSpec build_plant(const Scenario& s) {
  PlantSpec p;
  p.n_xi = s.plant.n_xi;
  p.n_eta = s.n_eta();
  p.a = [](const Vector&, const Vector&) { return 0.0; };
  p.b = [](const Vector&, const Vector&) { return 1.0; };
  p.b_floor = 1.0;
  if (p.n_eta > 0) {
    p.q = [](const Vector& xi, const Vector& eta) -> Vector {
      Vector out(1);
      out[0] = -eta[0] + xi[0];
      return out;
    };
  }
  const auto pert = s.perturbation;
  p.delta = [pert](const Vector& xi, const Vector&, double t) {
    return pert.xi_square * xi.squaredNorm() + pert.constant +
           pert.sin_amplitude * std::sin(pert.sin_frequency_rad_per_s * t);
  };
  return p;
}

DomainSpec build_domain(const Scenario& s) {
  const auto n = static_cast<Eigen::Index>(s.domain.lower.size());
  const Vector lower = Eigen::Map<const Vector>(s.domain.lower.data(), n);
  const Vector upper = Eigen::Map<const Vector>(s.domain.upper.data(), n);
  return DomainSpec::box(lower, upper, s.domain.r, s.domain.delta);
}

std::optional<IssCertificate> build_iss(const Scenario& s) {
  if (s.n_eta() == 0) return std::nullopt;
  const double theta = s.iss.theta_eta;
  IssCertificate iss;
  iss.v_eta = [](const Vector& eta) { return 0.5 * eta.squaredNorm(); };
  iss.alpha1 = ClassKFunction::quadratic(0.5);
  iss.alpha2 = ClassKFunction::quadratic(0.5);
  // eta (-eta + xi_1) <= -(1 - theta) eta^2 whenever |eta| >= |xi| / theta.
  iss.alpha3 = ClassKFunction::quadratic(1.0 - theta);
  iss.gamma = ClassKFunction::linear(1.0 / theta);
  iss.c_r = iss.alpha2(iss.gamma(s.domain.r));
  return iss;
}

Reference build_reference(const Scenario& s) {
  const int n = s.plant.n_xi;
  return std::visit(
      [n](const auto& spec) -> Reference {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, SinusoidSpec>) {
          return sinusoid_reference(n, spec.amplitude, spec.frequency_rad_per_s);
        } else if constexpr (std::is_same_v<T, TransitionSpec>) {
          return transition_reference(n, spec.final_value, spec.slope_per_s, spec.offset,
                                      spec.rate_per_s, spec.settle_time_s);
        } else if constexpr (std::is_same_v<T, SetPointSpec>) {
          return set_point_reference(n, spec.value);
        } else {
          return tabulated_reference(spec.times_s, spec.rows);
        }
      },
      s.reference);
}

RedesignController build_controller(const Scenario& s) {
  const auto n = static_cast<Eigen::Index>(s.gains.k.size());
  const Vector k = Eigen::Map<const Vector>(s.gains.k.data(), n);
  Matrix q = Matrix::Identity(n, n);
  if (!s.gains.q.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) q(i, j) = s.gains.q[i][j];
    }
  }
  RedesignController ctrl;
  ctrl.nominal = NominalDesign::linear_quadratic(k, q);
  ctrl.rho = s.gains.rho;
  ctrl.mu = s.gains.mu;
  ctrl.discontinuous = s.gains.discontinuous;
  ctrl.reference = build_reference(s);
  return ctrl;
}

SimConfig build_sim_config(const Scenario& s) {
  SimConfig cfg;
  cfg.integrator = s.sim.integrator == "rk45-adaptive" ? Integrator::kRk45Adaptive
                                                       : Integrator::kRk4Fixed;
  cfg.step = s.sim.step_s;
  cfg.t_end = s.sim.t_end_s;
  cfg.exit_policy = s.sim.exit_policy == "continue" ? ExitPolicy::kContinue
                                                    : ExitPolicy::kStopAndReport;
  cfg.tube_c0 = s.gains.c0;
  return cfg;
}

ScenarioSetup build_setup(const Scenario& s) {
  s.validate();
  ScenarioSetup setup{s, build_plant(s), build_domain(s), build_iss(s), build_controller(s),
                      build_sim_config(s)};
  setup.plant.validate();
  setup.domain.validate();
  setup.controller.validate(setup.domain.delta_bound);
  return setup;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

json report_to_json(const CertificationReport& report) {
  json witness = {{"time", report.witness.time},
                  {"in_tail", report.witness.in_tail},
                  {"face", report.witness.face},
                  {"direction", vector_json(report.witness.direction)},
                  {"excess", report.witness.excess}};
  return {
      {"verdict", to_string(report.verdict)},
      {"mode", to_string(report.mode)},
      {"margin", report.margin},
      {"grid_slack", report.slack},
      {"grid_step", report.grid_step},
      {"horizon_checked", report.horizon_checked},
      {"reduction", report.reduction},
      {"c0", report.c0},
      {"mu", report.mu},
      {"alpha_inf", report.alpha_inf},
      {"worst_point", witness},
      {"admissible_initial_set",
       {{"center", vector_json(report.admissible_initial_set.center)},
        {"P", matrix_json(report.admissible_initial_set.P)},
        {"level", report.admissible_initial_set.level},
        {"c_r", report.c_r}}},
  };
}

}  // namespace lyaptube
