#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mdfr/errors.hpp"

namespace mdfr {

struct Score {
  double rmse = 0.0;
  double mae = 0.0;
  double nrmse = 0.0;
  std::size_t n = 0;
};

namespace detail {

inline void check_pair(std::span<const double> d, std::span<const double> y, const char* who) {
  if (d.size() != y.size()) {
    throw InvalidArgument(std::string(who) + ": length mismatch");
  }
  if (d.empty()) {
    throw InvalidArgument(std::string(who) + ": empty input");
  }
}

} // namespace detail

/// sqrt(mean((d - y)^2))
inline double rmse(std::span<const double> d, std::span<const double> y) {
  detail::check_pair(d, y, "rmse");
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = d[i] - y[i];
    sum += e * e;
  }
  return std::sqrt(sum / static_cast<double>(d.size()));
}

/// mean(|d - y|)
inline double mae(std::span<const double> d, std::span<const double> y) {
  detail::check_pair(d, y, "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    sum += std::abs(d[i] - y[i]);
  }
  return sum / static_cast<double>(d.size());
}

/// ||y - d|| / ||y||. The denominator is the norm of the prediction, not of
/// the target; see nrmse_target for the more common variant.
inline double nrmse(std::span<const double> d, std::span<const double> y) {
  detail::check_pair(d, y, "nrmse");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = y[i] - d[i];
    num += e * e;
    den += y[i] * y[i];
  }
  if (den == 0.0) {
    throw DivisionByZero("nrmse: prediction vector has zero norm");
  }
  return std::sqrt(num) / std::sqrt(den);
}

/// ||y - d|| / ||d||
inline double nrmse_target(std::span<const double> d, std::span<const double> y) {
  detail::check_pair(d, y, "nrmse_target");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double e = y[i] - d[i];
    num += e * e;
    den += d[i] * d[i];
  }
  if (den == 0.0) {
    throw DivisionByZero("nrmse_target: target vector has zero norm");
  }
  return std::sqrt(num) / std::sqrt(den);
}

/// All three metrics. nrmse is NaN when the prediction norm is zero.
inline Score score(std::span<const double> d, std::span<const double> y) {
  Score s;
  s.rmse = rmse(d, y);
  s.mae = mae(d, y);
  try {
    s.nrmse = nrmse(d, y);
  } catch (const DivisionByZero&) {
    s.nrmse = std::nan("");
  }
  s.n = d.size();
  return s;
}

} // namespace mdfr
