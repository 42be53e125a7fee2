#include "lyaptube/class_k.hpp"

#include <cmath>
#include <utility>

namespace lyaptube {

namespace {

double checked(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw ClassKError(std::string("non-finite class-K evaluation in ") + what);
  }
  return value;
}

}  // namespace

ClassKFunction::ClassKFunction(Fn forward, std::optional<Fn> inverse,
                               double bracket_hint)
    : forward_(std::move(forward)),
      inverse_(std::move(inverse)),
      bracket_hint_(bracket_hint) {
  if (!forward_) throw ClassKError("class-K function needs a forward map");
  if (!inverse_ && !(bracket_hint_ > 0.0)) {
    throw ClassKError("numeric inversion needs a positive bracket hint");
  }
}

ClassKFunction ClassKFunction::quadratic(double coefficient) {
  if (!(coefficient > 0.0)) throw ClassKError("quadratic coefficient must be > 0");
  return ClassKFunction([c = coefficient](double s) { return c * s * s; },
                        [c = coefficient](double v) { return std::sqrt(v / c); },
                        1.0);
}

ClassKFunction ClassKFunction::linear(double coefficient) {
  if (!(coefficient > 0.0)) throw ClassKError("linear coefficient must be > 0");
  return ClassKFunction([c = coefficient](double s) { return c * s; },
                        [c = coefficient](double v) { return v / c; }, 1.0);
}

double ClassKFunction::operator()(double s) const {
  return checked(forward_(s), "forward");
}

double ClassKFunction::inverse(double value) const {
  if (value < 0.0) throw ClassKError("class-K inverse of a negative value");
  if (inverse_) return checked((*inverse_)(value), "inverse");
  if (value == 0.0) return 0.0;

  double lo = 0.0;
  double hi = bracket_hint_;
  if ((*this)(hi) < value) {
    throw ClassKError("class-K inverse: value " + std::to_string(value) +
                      " not bracketed by [0, " + std::to_string(hi) + "]");
  }
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if ((*this)(mid) < value) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

bool ClassKFunction::check_class_k(double upper, int samples) const {
  if ((*this)(0.0) != 0.0) return false;
  double previous = 0.0;
  for (int i = 1; i <= samples; ++i) {
    const double s = upper * static_cast<double>(i) / samples;
    const double v = (*this)(s);
    if (!(v > previous)) return false;
    previous = v;
  }
  return true;
}

ClassKFunction compose(const ClassKFunction& f, const ClassKFunction& g) {
  std::optional<ClassKFunction::Fn> inverse;
  if (f.has_closed_form_inverse() && g.has_closed_form_inverse()) {
    inverse = [f, g](double v) { return g.inverse(f.inverse(v)); };
  }
  // Numeric inversion brackets on g's domain.
  const double hint = g.bracket_hint() > 0.0 ? g.bracket_hint() : 1.0;
  return ClassKFunction([f, g](double s) { return f(g(s)); }, std::move(inverse),
                        hint);
}

}  // namespace lyaptube
