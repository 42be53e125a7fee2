#include "lyaptube/model.hpp"

#include <algorithm>
#include <memory>
#include <random>
#include <string>

namespace lyaptube {

// ---------------------------------------------------------------------------
// PlantSpec

void PlantSpec::validate() const {
  if (n_xi < 1) throw ModelError("plant: n_xi must be >= 1");
  if (n_eta < 0) throw ModelError("plant: n_eta must be >= 0");
  if (!a || !b || !delta) throw ModelError("plant: a, b and delta are required");
  if (n_eta > 0 && !q) throw ModelError("plant: q is required when n_eta > 0");
  if (!(b_floor > 0.0)) throw ModelError("plant: b_floor must be > 0");
}

double PlantSpec::eval_a(const Vector& xi, const Vector& eta) const {
  return a(xi, eta);
}

double PlantSpec::eval_b(const Vector& xi, const Vector& eta) const {
  const double value = b(xi, eta);
  if (!(std::abs(value) >= b_floor)) {
    throw ModelError("plant: |b| = " + std::to_string(std::abs(value)) +
                     " below floor " + std::to_string(b_floor));
  }
  return value;
}

Vector PlantSpec::eval_q(const Vector& xi, const Vector& eta) const {
  if (n_eta == 0) return Vector(0);
  Vector out = q(xi, eta);
  if (out.size() != n_eta) throw ModelError("plant: q returned wrong dimension");
  return out;
}

double PlantSpec::eval_delta(const Vector& xi, const Vector& eta,
                             double t) const {
  return delta(xi, eta, t);
}

// ---------------------------------------------------------------------------
// DomainSpec

DomainSpec DomainSpec::box(const Vector& lower, const Vector& upper,
                           double radius_r, double delta_bound) {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw ModelError("box: bound dimensions differ");
  }
  DomainSpec dom;
  dom.radius_r = radius_r;
  dom.delta_bound = delta_bound;
  const auto n = lower.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lower[i] < upper[i])) throw ModelError("box: lower must be < upper");
    Vector e = Vector::Zero(n);
    e[i] = 1.0;
    dom.halfspaces.push_back({e, upper[i]});
    dom.halfspaces.push_back({-e, -lower[i]});
  }
  return dom;
}

int DomainSpec::dimension() const {
  return halfspaces.empty() ? 0 : static_cast<int>(halfspaces.front().normal.size());
}

bool DomainSpec::contains(const Vector& xi) const {
  return std::all_of(halfspaces.begin(), halfspaces.end(), [&](const Halfspace& h) {
    return h.normal.dot(xi) < h.offset;
  });
}

bool DomainSpec::closure_contains(const Vector& xi, double tol) const {
  return std::all_of(halfspaces.begin(), halfspaces.end(), [&](const Halfspace& h) {
    return h.normal.dot(xi) <= h.offset + tol;
  });
}

double DomainSpec::signed_margin(const Vector& xi) const {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& h : halfspaces) {
    margin = std::min(margin, (h.offset - h.normal.dot(xi)) / h.normal.norm());
  }
  return margin;
}

std::vector<Vector> DomainSpec::vertices() const {
  const int n = dimension();
  const int m = static_cast<int>(halfspaces.size());
  std::vector<Vector> out;
  if (n == 0 || m < n) return out;

  std::vector<int> pick(n);
  for (int i = 0; i < n; ++i) pick[i] = i;
  while (true) {
    Matrix a(n, n);
    Vector d(n);
    for (int i = 0; i < n; ++i) {
      a.row(i) = halfspaces[pick[i]].normal.transpose();
      d[i] = halfspaces[pick[i]].offset;
    }
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.isInvertible()) {
      Vector x = lu.solve(d);
      if (closure_contains(x, 1e-9 * (1.0 + x.lpNorm<Eigen::Infinity>()))) {
        out.push_back(std::move(x));
      }
    }
    int k = n - 1;
    while (k >= 0 && pick[k] == m - n + k) --k;
    if (k < 0) break;
    ++pick[k];
    for (int j = k + 1; j < n; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

void DomainSpec::validate() const {
  const int n = dimension();
  if (n == 0) throw ModelError("domain: no halfspaces");
  if (!(radius_r > 0.0)) throw ModelError("domain: r must be > 0");
  if (!(delta_bound >= 0.0)) throw ModelError("domain: delta bound must be >= 0");
  for (const auto& h : halfspaces) {
    if (h.normal.size() != n) throw ModelError("domain: mixed dimensions");
    if (!(h.normal.norm() > 0.0)) throw ModelError("domain: zero normal");
  }

  // A polytope is bounded iff every direction is blocked by some face.
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss;
  std::vector<Vector> probes;
  for (int i = 0; i < n; ++i) {
    probes.push_back(Vector::Unit(n, i));
    probes.push_back(-Vector::Unit(n, i));
  }
  for (int k = 0; k < 64 * n; ++k) {
    Vector d(n);
    for (int i = 0; i < n; ++i) d[i] = gauss(rng);
    probes.push_back(d);
  }
  for (const auto& d : probes) {
    const bool blocked = std::any_of(halfspaces.begin(), halfspaces.end(),
                                     [&](const Halfspace& h) { return h.normal.dot(d) > 0.0; });
    if (!blocked) throw ModelError("domain: polytope is unbounded");
  }

  const auto verts = vertices();
  if (verts.empty()) throw ModelError("domain: polytope is empty");
  for (const auto& v : verts) {
    if (v.norm() > radius_r * (1.0 + 1e-12)) {
      throw ModelError("domain: vertex outside the ball of radius r");
    }
  }
}

// ---------------------------------------------------------------------------
// IssCertificate

bool IssCertificate::radius_condition_holds(double radius_r) const {
  return c_r >= alpha2(gamma(radius_r));
}

bool IssCertificate::sandwich_holds(std::span<const Vector> samples,
                                    double tol) const {
  return std::all_of(samples.begin(), samples.end(), [&](const Vector& eta) {
    const double s = eta.norm();
    const double v = v_eta(eta);
    return alpha1(s) <= v + tol && v <= alpha2(s) + tol;
  });
}

bool internal_set_contains(const IssCertificate& iss, const Vector& eta) {
  return iss.value(eta) < iss.c_r;
}

// ---------------------------------------------------------------------------
// Reference

namespace {

void check_time(const Reference& ref, double t) {
  if (!(t >= 0.0)) throw ModelError("reference: time must be >= 0");
  if (ref.derivatives.size() < 2) {
    throw ModelError("reference: needs y_d and at least one derivative");
  }
}

}  // namespace

Vector desired_state(const Reference& ref, double t) {
  check_time(ref, t);
  const int n = ref.n_xi();
  Vector out(n);
  for (int k = 0; k < n; ++k) out[k] = ref.derivatives[k](t);
  return out;
}

double top_derivative(const Reference& ref, double t) {
  check_time(ref, t);
  return ref.derivatives.back()(t);
}

Vector desired_velocity(const Reference& ref, double t) {
  check_time(ref, t);
  const int n = ref.n_xi();
  Vector out(n);
  for (int k = 0; k < n; ++k) out[k] = ref.derivatives[k + 1](t);
  return out;
}

double estimate_lipschitz(const Reference& ref, double t0, double t1,
                          int samples) {
  if (samples < 2 || !(t1 >= t0)) throw ModelError("lipschitz: bad sampling");
  double best = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double t = t0 + (t1 - t0) * i / (samples - 1);
    best = std::max(best, desired_velocity(ref, t).norm());
  }
  return best;
}

Reference sinusoid_reference(int n_xi, double amplitude, double frequency) {
  if (n_xi < 1 || !(frequency > 0.0)) throw ModelError("sinusoid: bad parameters");
  Reference ref;
  double squares = 0.0;
  for (int k = 0; k <= n_xi; ++k) {
    const double gain = amplitude * std::pow(frequency, k);
    const double phase = k * M_PI / 2.0;
    ref.derivatives.push_back([gain, frequency, phase](double t) {
      return gain * std::sin(frequency * t + phase);
    });
    if (k >= 1) squares += gain * gain;
  }
  ref.lipschitz_bound = std::sqrt(squares);
  ref.tail.kind = ReferenceTail::Kind::kPeriodic;
  ref.tail.settle_time = 0.0;
  ref.tail.period = 2.0 * M_PI / frequency;
  return ref;
}

Reference transition_reference(int n_xi, double final_value, double slope,
                               double offset, double rate, double settle_time) {
  if (n_xi < 1 || !(rate > 0.0) || !(settle_time > 0.0)) {
    throw ModelError("transition: bad parameters");
  }
  Reference ref;
  ref.derivatives.push_back([=](double t) {
    return final_value - (slope * t + offset) * std::exp(-rate * t);
  });
  // d^k/dt^k [(s t + o) e^{-r t}] = e^{-r t} ((-r)^k (s t + o) + k s (-r)^{k-1})
  for (int k = 1; k <= n_xi; ++k) {
    const double pk = std::pow(-rate, k);
    const double pk1 = std::pow(-rate, k - 1);
    ref.derivatives.push_back([=](double t) {
      return -std::exp(-rate * t) * (pk * (slope * t + offset) + k * slope * pk1);
    });
  }
  ref.lipschitz_bound = 1.05 * estimate_lipschitz(ref, 0.0, settle_time, 200001);

  Vector limit = Vector::Zero(n_xi);
  limit[0] = final_value;
  double radius = 0.0;
  const double span = settle_time + 20.0 / rate;
  for (int i = 0; i <= 10000; ++i) {
    const double t = settle_time + (span - settle_time) * i / 10000.0;
    radius = std::max(radius, (desired_state(ref, t) - limit).norm());
  }
  ref.tail.kind = ReferenceTail::Kind::kSettling;
  ref.tail.settle_time = settle_time;
  ref.tail.limit = limit;
  ref.tail.tail_radius = 2.0 * radius;
  return ref;
}

Reference set_point_reference(int n_xi, double value) {
  if (n_xi < 1) throw ModelError("set-point: n_xi must be >= 1");
  Reference ref;
  ref.derivatives.push_back([value](double) { return value; });
  for (int k = 1; k <= n_xi; ++k) ref.derivatives.push_back([](double) { return 0.0; });
  ref.lipschitz_bound = 0.0;
  ref.is_set_point = true;
  ref.tail.kind = ReferenceTail::Kind::kSettling;
  ref.tail.settle_time = 0.0;
  ref.tail.limit = Vector::Zero(n_xi);
  ref.tail.limit[0] = value;
  ref.tail.tail_radius = 0.0;
  return ref;
}

Reference tabulated_reference(std::vector<double> times,
                              std::vector<std::vector<double>> rows) {
  if (times.size() < 2 || rows.size() != times.size()) {
    throw ModelError("tabulated reference: need >= 2 rows matching times");
  }
  const std::size_t width = rows.front().size();
  if (width < 2) throw ModelError("tabulated reference: rows need >= 2 channels");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width) throw ModelError("tabulated reference: ragged rows");
    if (i > 0 && !(times[i] > times[i - 1])) {
      throw ModelError("tabulated reference: times must increase");
    }
  }
  if (times.front() != 0.0) throw ModelError("tabulated reference: must start at t = 0");

  auto shared_times = std::make_shared<const std::vector<double>>(std::move(times));
  auto shared_rows =
      std::make_shared<const std::vector<std::vector<double>>>(std::move(rows));

  Reference ref;
  for (std::size_t ch = 0; ch < width; ++ch) {
    ref.derivatives.push_back([shared_times, shared_rows, ch](double t) {
      const auto& ts = *shared_times;
      const auto& rs = *shared_rows;
      if (t <= ts.front()) return rs.front()[ch];
      if (t >= ts.back()) return rs.back()[ch];
      const auto it = std::upper_bound(ts.begin(), ts.end(), t);
      const std::size_t hi = static_cast<std::size_t>(it - ts.begin());
      const std::size_t lo = hi - 1;
      const double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
      return (1.0 - w) * rs[lo][ch] + w * rs[hi][ch];
    });
  }
  ref.horizon = shared_times->back();

  // The norm of a piecewise-linear vector path peaks at a node.
  double lipschitz = 0.0;
  for (const auto& row : *shared_rows) {
    double sq = 0.0;
    for (std::size_t ch = 1; ch < width; ++ch) sq += row[ch] * row[ch];
    lipschitz = std::max(lipschitz, std::sqrt(sq));
  }
  ref.lipschitz_bound = lipschitz;
  return ref;
}

bool reference_inside_domain(const Reference& ref, const DomainSpec& dom,
                             double t_end, int samples) {
  if (samples < 1) throw ModelError("reference check: samples must be >= 1");
  for (int i = 0; i <= samples; ++i) {
    const double t = t_end * i / samples;
    if (!dom.contains(desired_state(ref, t))) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Perturbation bound

double estimate_delta_bound(const PlantSpec& plant, const DomainSpec& dom,
                            const IssCertificate* iss,
                            std::span<const double> t_grid,
                            std::span<const StatePoint> space_grid) {
  if (t_grid.empty() || space_grid.empty()) {
    throw ModelError("delta estimate: empty grid");
  }
  if (plant.n_eta > 0 && iss == nullptr) {
    throw ModelError("delta estimate: internal certificate required");
  }
  double best = 0.0;
  for (const auto& point : space_grid) {
    if (point.xi.size() != plant.n_xi || point.eta.size() != plant.n_eta) {
      throw ModelError("delta estimate: grid point has wrong dimension");
    }
    if (!dom.closure_contains(point.xi)) {
      throw ModelError("delta estimate: grid point outside D_r");
    }
    if (plant.n_eta > 0 && !(iss->value(point.eta) <= iss->c_r)) {
      throw ModelError("delta estimate: grid point outside P_r");
    }
    for (const double t : t_grid) {
      best = std::max(best, std::abs(plant.eval_delta(point.xi, point.eta, t)));
    }
  }
  return best;
}

std::vector<Vector> box_grid(const Vector& lower, const Vector& upper,
                             int points_per_axis) {
  if (lower.size() != upper.size() || points_per_axis < 2) {
    throw ModelError("box grid: bad arguments");
  }
  const auto n = lower.size();
  std::vector<Vector> out;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  while (true) {
    Vector p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p[i] = lower[i] + (upper[i] - lower[i]) * idx[i] / (points_per_axis - 1);
    }
    out.push_back(std::move(p));
    Eigen::Index k = 0;
    while (k < n && ++idx[k] == points_per_axis) idx[k++] = 0;
    if (k == n) break;
  }
  return out;
}

}  // namespace lyaptube
