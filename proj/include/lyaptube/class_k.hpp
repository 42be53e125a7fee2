#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>

namespace lyaptube {

/// Thrown when a class-K inverse cannot be bracketed or a function value is
/// not finite.
class ClassKError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A class-K (or K-infinity) comparison function on [0, inf).
///
/// The forward map is user supplied. When no closed-form inverse is given,
/// inversion runs bisection on [0, bracket_hint] to 1e-12 absolute tolerance.
class ClassKFunction {
 public:
  using Fn = std::function<double(double)>;

  ClassKFunction() = default;
  ClassKFunction(Fn forward, std::optional<Fn> inverse, double bracket_hint);

  /// s -> c * s^2 with closed-form inverse.
  static ClassKFunction quadratic(double coefficient);
  /// s -> c * s with closed-form inverse.
  static ClassKFunction linear(double coefficient);

  double operator()(double s) const;
  double inverse(double value) const;

  bool has_closed_form_inverse() const { return inverse_.has_value(); }
  double bracket_hint() const { return bracket_hint_; }

  /// forward(0) == 0 and strictly increasing on `samples` equally spaced
  /// points of (0, upper].
  bool check_class_k(double upper, int samples = 1000) const;

 private:
  Fn forward_;
  std::optional<Fn> inverse_;
  double bracket_hint_ = 0.0;
};

/// f(g(s)).
ClassKFunction compose(const ClassKFunction& f, const ClassKFunction& g);

}  // namespace lyaptube
