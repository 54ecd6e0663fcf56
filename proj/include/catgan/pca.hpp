#pragma once

#include "catgan/types.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace catgan {

struct PowerIterationOptions {
  double tolerance = 1e-9;
  int max_iterations = 1000;
};

template <typename Scalar>
struct PcaModel {
  RowVector<Scalar> mean;
  Matrix<Scalar> components;   // d x k, orthonormal columns ordered by eigenvalue
  std::vector<Scalar> eigenvalues;  // sample covariance eigenvalues (n - 1 normalization)

  Matrix<Scalar> project(const Matrix<Scalar>& x) const {
    if (x.cols() != mean.size()) throw ShapeError("pca project: feature width mismatch");
    return (x.rowwise() - mean) * components;
  }
};

namespace detail {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
void orthogonalize(DenseVector<Scalar>& v, const DenseMatrix<Scalar>& basis, Eigen::Index k) {
  for (Eigen::Index j = 0; j < k; ++j) v -= basis.col(j).dot(v) * basis.col(j);
}

/// Unit vector orthogonal to the first k basis columns, from the standard basis.
template <typename Scalar>
DenseVector<Scalar> orthogonal_fallback(const DenseMatrix<Scalar>& basis, Eigen::Index k) {
  const Eigen::Index d = basis.rows();
  DenseVector<Scalar> best = DenseVector<Scalar>::Zero(d);
  for (Eigen::Index e = 0; e < d; ++e) {
    DenseVector<Scalar> v = DenseVector<Scalar>::Unit(d, e);
    orthogonalize(v, basis, k);
    if (v.norm() > best.norm()) best = v;
  }
  return best.normalized();
}

}  // namespace detail

/// Top-k principal directions of the rows of x by power iteration with
/// deflation. Each component's largest-magnitude entry is made positive.
template <typename Scalar>
PcaModel<Scalar> fit_pca(const Matrix<Scalar>& x, Eigen::Index k, const PowerIterationOptions& opts = {}) {
  using Dense = detail::DenseMatrix<Scalar>;
  using Vec = detail::DenseVector<Scalar>;
  const Eigen::Index d = x.cols();
  if (k < 1 || k > d) throw ConfigError("fit_pca: need 1 <= k <= feature dimension");
  if (x.rows() < 2) throw ShapeError("fit_pca: need at least two rows");

  PcaModel<Scalar> model;
  model.mean = x.colwise().mean();
  const Matrix<Scalar> centered = x.rowwise() - model.mean;
  Dense cov = centered.transpose() * centered / static_cast<Scalar>(x.rows() - 1);
  const Scalar scale = cov.diagonal().cwiseAbs().maxCoeff();
  const Scalar negligible = std::max(scale, Scalar(1)) * Scalar(1e-14);

  Dense basis = Dense::Zero(d, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    // start from the covariance column of largest norm
    Eigen::Index start = 0;
    cov.colwise().norm().maxCoeff(&start);
    Vec v = cov.col(start);
    detail::orthogonalize(v, basis, c);
    if (v.norm() <= negligible) {
      v = detail::orthogonal_fallback<Scalar>(basis, c);
    } else {
      v.normalize();
    }
    for (int it = 0; it < opts.max_iterations; ++it) {
      Vec next = cov * v;
      detail::orthogonalize(next, basis, c);
      const Scalar norm = next.norm();
      if (norm <= negligible) break;  // remaining spectrum is numerically zero
      next /= norm;
      if (next.dot(v) < Scalar(0)) next = -next;
      const Scalar delta = (next - v).norm();
      v = next;
      if (delta < Scalar(opts.tolerance)) break;
    }
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < Scalar(0)) v = -v;
    const Scalar lambda = v.dot(cov * v);
    basis.col(c) = v;
    model.eigenvalues.push_back(lambda);
    cov -= lambda * v * v.transpose();
  }
  model.components = basis;
  return model;
}

/// Fits a 2-D PCA on the concatenation of all inputs and projects each one.
template <typename Scalar>
std::vector<Matrix<Scalar>> pca_project_2d(std::span<const Matrix<Scalar>> inputs,
                                           const PowerIterationOptions& opts = {}) {
  if (inputs.empty()) throw ShapeError("pca_project_2d: no inputs");
  const Eigen::Index d = inputs.front().cols();
  if (d < 2) throw ConfigError("pca_project_2d: need at least 2 features");
  Eigen::Index rows = 0;
  for (const auto& m : inputs) {
    if (m.cols() != d) throw ShapeError("pca_project_2d: inputs differ in feature width");
    rows += m.rows();
  }
  Matrix<Scalar> all(rows, d);
  Eigen::Index at = 0;
  for (const auto& m : inputs) {
    all.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  const auto model = fit_pca(all, 2, opts);
  std::vector<Matrix<Scalar>> out;
  out.reserve(inputs.size());
  for (const auto& m : inputs) out.push_back(model.project(m));
  return out;
}

}  // namespace catgan
