#pragma once

// Ridge-regression readout: W = D X^T (X X^T + beta I)^-1, solved by an LDL^T
// factorisation of the (N_x+1) x (N_x+1) Gram matrix.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mdfr/errors.hpp"
#include "mdfr/reservoir.hpp"

namespace mdfr {

template <typename Real = double>
struct ReadoutModel {
  std::vector<Real> weights; // last entry pairs with the augmentation row
  double beta = 0.0;

  std::size_t dim() const noexcept { return weights.size(); }
};

template <typename Real>
using EigenMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Real>
using EigenVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

namespace detail {

template <typename Real>
Eigen::Map<const EigenMatrix<Real>> as_eigen(const FeatureMatrix<Real>& x) {
  return {x.data(), static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols())};
}

} // namespace detail

/// Largest accepted relative residual of the normal equations.
inline constexpr double residual_tolerance = 1e-6;

/// Fits output weights on the columns of `features` against `targets`.
template <typename Real>
ReadoutModel<Real> ridge_fit(const FeatureMatrix<Real>& features, std::span<const Real> targets,
                             double beta) {
  if (features.cols() != targets.size()) {
    throw InvalidArgument("ridge_fit: feature column count differs from target length");
  }
  if (features.cols() == 0) {
    throw InvalidArgument("ridge_fit: no training columns");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw InvalidArgument("ridge_fit: beta must be finite and nonnegative");
  }
  const auto x = detail::as_eigen(features);
  const Eigen::Map<const EigenVector<Real>> d(targets.data(),
                                              static_cast<Eigen::Index>(targets.size()));
  const Eigen::Index dim = x.rows();

  EigenMatrix<Real> gram = EigenMatrix<Real>::Zero(dim, dim);
  gram.template selfadjointView<Eigen::Lower>().rankUpdate(x);
  gram.diagonal().array() += static_cast<Real>(beta);
  gram.template triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  const EigenVector<Real> rhs = x * d;

  const auto fail = [beta] {
    std::ostringstream os;
    os << "ridge_fit: Gram matrix is singular to working precision (beta=" << beta << ")";
    if (beta == 0.0) {
      os << "; use beta > 0";
    } else {
      os << "; increase beta";
    }
    return SingularSystem(os.str());
  };

  // Without regularisation a (near) zero pivot means there is no unique
  // solution. With beta > 0 the system is positive definite in exact
  // arithmetic; rounding can still break the factorisation at very small
  // beta, which shows up as a large normal-equation residual.
  Eigen::LDLT<EigenMatrix<Real>> ldlt(gram);
  if (ldlt.info() != Eigen::Success) {
    throw fail();
  }
  const auto pivots = ldlt.vectorD().cwiseAbs();
  const Real largest = pivots.maxCoeff();
  if (!(largest > Real(0))) {
    throw fail();
  }
  if (beta == 0.0 &&
      pivots.minCoeff() <= largest * static_cast<Real>(dim) * std::numeric_limits<Real>::epsilon()) {
    throw fail();
  }
  const EigenVector<Real> w = ldlt.solve(rhs);
  if (!w.allFinite()) {
    throw SingularSystem("ridge_fit: solution is not finite");
  }
  const Real rhs_norm = rhs.norm();
  if (rhs_norm > Real(0) && (gram * w - rhs).norm() > residual_tolerance * rhs_norm) {
    throw fail();
  }

  ReadoutModel<Real> model;
  model.beta = beta;
  model.weights.assign(w.data(), w.data() + w.size());
  return model;
}

template <typename Real>
ReadoutModel<Real> ridge_fit(const FeatureMatrix<Real>& features, const std::vector<Real>& targets,
                             double beta) {
  return ridge_fit(features, std::span<const Real>(targets), beta);
}

/// y(k) = W . x~(k) for every column.
template <typename Real>
std::vector<Real> predict(const ReadoutModel<Real>& model, const FeatureMatrix<Real>& features) {
  if (model.dim() != features.rows()) {
    throw InvalidArgument("predict: weight length differs from feature dimension");
  }
  std::vector<Real> y(features.cols());
  for (std::size_t k = 0; k < features.cols(); ++k) {
    const auto col = features.column(k);
    Real acc = 0;
    for (std::size_t i = 0; i < col.size(); ++i) {
      acc += model.weights[i] * col[i];
    }
    y[k] = acc;
  }
  return y;
}

/// Regularisation that keeps the ridge solution equivalent when the
/// features are scaled by alpha.
inline double scale_beta(double beta, double alpha) {
  if (!(alpha > 0.0)) {
    throw InvalidArgument("scale_beta: alpha must be positive");
  }
  return alpha * alpha * beta;
}

// Weight file format:
//   mdfr-readout 1
//   dim <N>
//   beta <value>
//   <w_0>
//   ...
//   <w_{N-1}>
// Values use 17 significant digits so they round-trip exactly.

inline void save_readout(const ReadoutModel<double>& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw IngestionError("cannot open " + path + " for writing");
  }
  char buf[64];
  out << "mdfr-readout 1\n";
  out << "dim " << model.dim() << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", model.beta);
  out << "beta " << buf << "\n";
  for (double w : model.weights) {
    std::snprintf(buf, sizeof buf, "%.17g", w);
    out << buf << "\n";
  }
}

inline ReadoutModel<double> load_readout(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IngestionError("cannot open " + path);
  }
  std::string magic;
  int version = 0;
  std::string key;
  std::size_t dim = 0;
  ReadoutModel<double> model;
  if (!(in >> magic >> version) || magic != "mdfr-readout" || version != 1) {
    throw IngestionError(path + ": not an mdfr-readout v1 file", 1);
  }
  if (!(in >> key >> dim) || key != "dim") {
    throw IngestionError(path + ": missing dim line", 2);
  }
  if (!(in >> key >> model.beta) || key != "beta") {
    throw IngestionError(path + ": missing beta line", 3);
  }
  model.weights.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(in >> model.weights[i])) {
      throw IngestionError(path + ": truncated weight list", 4 + i);
    }
  }
  return model;
}

} // namespace mdfr
