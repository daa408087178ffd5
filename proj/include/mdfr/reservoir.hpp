#pragma once

// Modular delayed-feedback reservoir. Each input sample is held for one
// period, masked across N_x virtual nodes, and the nodes are updated in
// order n = 1..N_x:
//
//   x(k)_1 = B x(k-1)_{N_x} + A f(x(k-1)_1 + j(k)_1)
//   x(k)_n = B x(k)_{n-1}   + A f(x(k-1)_n + j(k)_n),   n >= 2
//
// Node indices in code are zero-based.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <span>
#include <utility>
#include <vector>

#include "mdfr/errors.hpp"
#include "mdfr/mask.hpp"
#include "mdfr/nonlin.hpp"

namespace mdfr {

struct ReservoirConfig {
  std::size_t n_nodes = 100;
  double a_coeff = 0.1;  // A, injection gain
  double b_coeff = 0.82; // B, feedback decay
  Mask mask;
  Nonlinearity f;

  void validate() const {
    if (n_nodes < 1) {
      throw InvalidArgument("reservoir: n_nodes must be >= 1");
    }
    if (!(a_coeff > 0.0) || !std::isfinite(a_coeff)) {
      throw InvalidArgument("reservoir: A must be positive and finite");
    }
    if (!(b_coeff >= 0.0 && b_coeff < 1.0)) {
      throw InvalidArgument("reservoir: B must lie in [0, 1)");
    }
    if (mask.size() != n_nodes) {
      throw InvalidArgument("reservoir: mask length differs from n_nodes");
    }
  }
};

/// Parameters of the classic delay-differential formulation. They map onto
/// the modular form through A = eta (1 - e^-theta), B = e^-theta, with gamma
/// scaling the masked input.
struct LegacyParams {
  double gamma = 1.0;
  double eta = 1.0;
  double theta = 0.2;

  double a_coeff() const { return eta * (1.0 - std::exp(-theta)); }
  double b_coeff() const { return std::exp(-theta); }
};

template <typename Real = double>
struct ReservoirState {
  std::vector<Real> nodes;
  std::size_t step_index = 0;

  static ReservoirState zero(std::size_t n_nodes) {
    return {std::vector<Real>(n_nodes, Real(0)), 0};
  }
};

/// Augmented states, one column [x(k); c] per retained time step, stored
/// column-major. The augmentation constant c is 1 unless a caller scales the
/// whole pipeline.
template <typename Real = double>
class FeatureMatrix {
public:
  FeatureMatrix() = default;

  FeatureMatrix(std::size_t n_nodes, std::size_t cols, Real bias_level = Real(1))
      : n_nodes_(n_nodes), cols_(cols), bias_level_(bias_level),
        data_((n_nodes + 1) * cols, Real(0)) {
    for (std::size_t k = 0; k < cols_; ++k) {
      data_[k * rows() + n_nodes_] = bias_level_;
    }
  }

  std::size_t n_nodes() const noexcept { return n_nodes_; }
  std::size_t rows() const noexcept { return n_nodes_ + 1; }
  std::size_t cols() const noexcept { return cols_; }
  Real bias_level() const noexcept { return bias_level_; }

  Real operator()(std::size_t row, std::size_t col) const {
    return data_[col * rows() + row];
  }
  Real& operator()(std::size_t row, std::size_t col) {
    return data_[col * rows() + row];
  }

  std::span<const Real> column(std::size_t k) const {
    return {data_.data() + k * rows(), rows()};
  }
  std::span<Real> column(std::size_t k) { return {data_.data() + k * rows(), rows()}; }

  const Real* data() const noexcept { return data_.data(); }
  Real* data() noexcept { return data_.data(); }

  /// Copy of columns [begin, end).
  FeatureMatrix columns(std::size_t begin, std::size_t end) const {
    if (begin > end || end > cols_) {
      throw InvalidArgument("FeatureMatrix::columns: range out of bounds");
    }
    FeatureMatrix out;
    out.n_nodes_ = n_nodes_;
    out.cols_ = end - begin;
    out.bias_level_ = bias_level_;
    out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * rows()),
                     data_.begin() + static_cast<std::ptrdiff_t>(end * rows()));
    return out;
  }

  /// Row n over all columns (a node trajectory, or the bias row for n = N_x).
  std::vector<Real> row(std::size_t n) const {
    std::vector<Real> r(cols_);
    for (std::size_t k = 0; k < cols_; ++k) {
      r[k] = (*this)(n, k);
    }
    return r;
  }

private:
  std::size_t n_nodes_ = 0;
  std::size_t cols_ = 0;
  Real bias_level_ = Real(1);
  std::vector<Real> data_;
};

namespace detail {

template <typename Real>
[[noreturn]] void report_overflow(std::size_t node, std::size_t step, Real value) {
  std::ostringstream os;
  os << "reservoir diverged: node " << node + 1 << " at step " << step
     << " is " << static_cast<double>(value);
  throw NumericOverflow(os.str(), node + 1, step);
}

// One period of the recurrence. `prev` and `next` must not alias.
template <typename Real>
void step_into(std::span<const Real> prev, std::span<const Real> j, const Nonlinearity& f,
               Real a, Real b, std::span<Real> next, std::size_t step) {
  const std::size_t n_nodes = prev.size();
  Real chain = prev[n_nodes - 1];
  for (std::size_t n = 0; n < n_nodes; ++n) {
    const Real value = b * chain + a * f(prev[n] + j[n]);
    if (!std::isfinite(value)) {
      report_overflow(n, step, value);
    }
    next[n] = value;
    chain = value;
  }
}

} // namespace detail

/// Advances the reservoir by one input period.
template <typename Real>
ReservoirState<Real> step(const ReservoirState<Real>& prev, std::span<const Real> j,
                          const ReservoirConfig& cfg) {
  if (prev.nodes.size() != cfg.n_nodes || j.size() != cfg.n_nodes) {
    throw InvalidArgument("step: state/input length differs from n_nodes");
  }
  ReservoirState<Real> next{std::vector<Real>(cfg.n_nodes), prev.step_index + 1};
  detail::step_into<Real>(prev.nodes, j, cfg.f, static_cast<Real>(cfg.a_coeff),
                          static_cast<Real>(cfg.b_coeff), next.nodes, next.step_index);
  return next;
}

template <typename Real>
ReservoirState<Real> step(const ReservoirState<Real>& prev, const std::vector<Real>& j,
                          const ReservoirConfig& cfg) {
  return step(prev, std::span<const Real>(j), cfg);
}

/// Drives the reservoir from `initial` over the input series and returns
/// the augmented states for steps washout+1 .. T. `input_gain` multiplies
/// the masked input before it enters f.
template <typename Real>
FeatureMatrix<Real> run_from(std::span<const Real> u, const ReservoirConfig& cfg,
                             std::size_t washout, const ReservoirState<Real>& initial,
                             Real input_gain = Real(1), Real bias_level = Real(1)) {
  cfg.validate();
  if (u.empty()) {
    throw InvalidArgument("run: empty input series");
  }
  if (washout >= u.size()) {
    throw InvalidArgument("run: washout must be smaller than the series length");
  }
  if (initial.nodes.size() != cfg.n_nodes) {
    throw InvalidArgument("run: initial state length differs from n_nodes");
  }
  const std::size_t n_nodes = cfg.n_nodes;
  const Real a = static_cast<Real>(cfg.a_coeff);
  const Real b = static_cast<Real>(cfg.b_coeff);

  FeatureMatrix<Real> out(n_nodes, u.size() - washout, bias_level);
  std::vector<Real> prev = initial.nodes;
  std::vector<Real> next(n_nodes);
  std::vector<Real> j(n_nodes);
  for (std::size_t k = 0; k < u.size(); ++k) {
    const Real drive = input_gain * u[k];
    for (std::size_t n = 0; n < n_nodes; ++n) {
      j[n] = cfg.mask[n] > 0 ? drive : -drive;
    }
    detail::step_into<Real>(prev, j, cfg.f, a, b, next, initial.step_index + k + 1);
    if (k >= washout) {
      auto col = out.column(k - washout);
      std::copy(next.begin(), next.end(), col.begin());
    }
    std::swap(prev, next);
  }
  return out;
}

/// Zero-initialised run.
template <typename Real>
FeatureMatrix<Real> run(std::span<const Real> u, const ReservoirConfig& cfg,
                        std::size_t washout = 0, Real bias_level = Real(1)) {
  return run_from<Real>(u, cfg, washout, ReservoirState<Real>::zero(cfg.n_nodes), Real(1),
                        bias_level);
}

template <typename Real>
FeatureMatrix<Real> run(const std::vector<Real>& u, const ReservoirConfig& cfg,
                        std::size_t washout = 0, Real bias_level = Real(1)) {
  return run<Real>(std::span<const Real>(u), cfg, washout, bias_level);
}

/// Classic parameterisation: (gamma, eta, theta) with nonlinearity f.
template <typename Real>
FeatureMatrix<Real> legacy_run(std::span<const Real> u, const LegacyParams& params,
                               const Nonlinearity& f, const Mask& mask,
                               std::size_t washout = 0, Real bias_level = Real(1)) {
  if (!(params.theta > 0.0) || !(params.eta > 0.0)) {
    throw InvalidArgument("legacy_run: theta and eta must be positive");
  }
  ReservoirConfig cfg;
  cfg.n_nodes = mask.size();
  cfg.a_coeff = params.a_coeff();
  cfg.b_coeff = params.b_coeff();
  cfg.mask = mask;
  cfg.f = f;
  return run_from<Real>(u, cfg, washout, ReservoirState<Real>::zero(cfg.n_nodes),
                        static_cast<Real>(params.gamma), bias_level);
}

template <typename Real>
FeatureMatrix<Real> legacy_run(const std::vector<Real>& u, const LegacyParams& params,
                               const Nonlinearity& f, const Mask& mask,
                               std::size_t washout = 0, Real bias_level = Real(1)) {
  return legacy_run<Real>(std::span<const Real>(u), params, f, mask, washout, bias_level);
}

} // namespace mdfr
