#pragma once

// One-input, one-output nonlinearities for the modular reservoir.

#include <cmath>
#include <concepts>
#include <sstream>
#include <string>

#include "mdfr/errors.hpp"

namespace mdfr {

enum class NonlinKind { identity, tanh_scaled, mackey_glass };

inline double identity_f(double x) { return x; }

namespace detail {

template <std::floating_point Real>
Real tanh_unchecked(Real x, Real alpha) {
  return alpha * std::tanh(x / alpha);
}

inline bool is_integer_exponent(double p) { return std::floor(p) == p; }

template <std::floating_point Real>
Real mg_unchecked(Real x, double p) {
  Real power;
  if (p == 1.0) {
    power = x;
  } else if (is_integer_exponent(p)) {
    power = std::pow(x, static_cast<Real>(p));
  } else {
    if (x < Real(0)) {
      std::ostringstream os;
      os << "mackey-glass: fractional exponent p=" << p
         << " undefined for negative argument " << static_cast<double>(x);
      throw InvalidArgument(os.str());
    }
    power = std::pow(x, static_cast<Real>(p));
  }
  const Real denom = Real(1) + power;
  if (std::abs(denom) < Real(1e-12)) {
    std::ostringstream os;
    os << "mackey-glass: pole at argument " << static_cast<double>(x)
       << " (p=" << p << ")";
    throw SingularityError(os.str());
  }
  return x / denom;
}

} // namespace detail

/// alpha * tanh(x / alpha). Odd, bounded by alpha, and close to the identity
/// when |x| << alpha.
template <std::floating_point Real>
Real tanh_f(Real x, double alpha) {
  if (!(alpha > 0.0)) {
    throw InvalidArgument("tanh_f: alpha must be positive");
  }
  return detail::tanh_unchecked(x, static_cast<Real>(alpha));
}

/// Mackey-Glass nonlinearity x / (1 + x^p). Fractional p requires x >= 0.
template <std::floating_point Real>
Real mg_f(Real x, double p) {
  if (!(p > 0.0)) {
    throw InvalidArgument("mg_f: p must be positive");
  }
  return detail::mg_unchecked(x, p);
}

/// A registered nonlinearity. Construct through the named factories; the
/// mackey-glass kind carries an outer gain so that scale_f stays closed.
struct Nonlinearity {
  NonlinKind kind = NonlinKind::identity;
  double alpha = 1.0; // tanh_scaled
  double p = 1.0;     // mackey_glass
  double gain = 1.0;  // mackey_glass: f(x) = gain * mg(x / gain)

  static Nonlinearity identity() { return {}; }

  static Nonlinearity tanh(double alpha) {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
      throw InvalidArgument("tanh nonlinearity: alpha must be positive and finite");
    }
    return {NonlinKind::tanh_scaled, alpha, 1.0, 1.0};
  }

  static Nonlinearity mackey_glass(double p) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw InvalidArgument("mackey-glass nonlinearity: p must be positive and finite");
    }
    return {NonlinKind::mackey_glass, 1.0, p, 1.0};
  }

  template <std::floating_point Real>
  Real operator()(Real x) const {
    switch (kind) {
    case NonlinKind::identity:
      return x;
    case NonlinKind::tanh_scaled:
      return detail::tanh_unchecked(x, static_cast<Real>(alpha));
    case NonlinKind::mackey_glass: {
      if (gain == 1.0) {
        return detail::mg_unchecked(x, p);
      }
      const Real g = static_cast<Real>(gain);
      return g * detail::mg_unchecked(x / g, p);
    }
    }
    return x;
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
    case NonlinKind::identity:
      os << "identity";
      break;
    case NonlinKind::tanh_scaled:
      os << "tanh(alpha=" << alpha << ")";
      break;
    case NonlinKind::mackey_glass:
      os << "mackey_glass(p=" << p;
      if (gain != 1.0) {
        os << ", gain=" << gain;
      }
      os << ")";
      break;
    }
    return os.str();
  }
};

/// f'(x) = alpha * f(x / alpha). Identity is a fixed point of the transform
/// and the tanh family is closed under it (alpha multiplies).
inline Nonlinearity scale_f(const Nonlinearity& f, double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw InvalidArgument("scale_f: alpha must be positive and finite");
  }
  Nonlinearity out = f;
  switch (f.kind) {
  case NonlinKind::identity:
    break;
  case NonlinKind::tanh_scaled:
    out.alpha = f.alpha * alpha;
    break;
  case NonlinKind::mackey_glass:
    out.gain = f.gain * alpha;
    break;
  }
  return out;
}

} // namespace mdfr
