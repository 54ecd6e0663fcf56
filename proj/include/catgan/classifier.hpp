#pragma once

#include "catgan/types.hpp"

#include <span>
#include <string>
#include <vector>

namespace catgan {

/// Ridge least-squares on one-hot targets. The last row of `weight` is the
/// bias and is not penalized.
template <typename Scalar>
struct LinearClassifier {
  Matrix<Scalar> weight;  // (d + 1) x C

  int class_count() const { return static_cast<int>(weight.cols()); }
  Eigen::Index feature_dim() const { return weight.rows() - 1; }
};

template <typename Scalar>
struct CentroidClassifier {
  Matrix<Scalar> centroids;  // C x d
  std::vector<bool> present;
};

namespace detail {

inline void check_labels(std::span<const int> labels, Eigen::Index rows, int class_count) {
  if (class_count < 1) throw ConfigError("class count must be >= 1");
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw ShapeError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(class_count) + ")");
    }
  }
}

/// Row-wise argmax; ties go to the smaller index.
template <typename Scalar>
std::vector<int> argmax_rows(const Matrix<Scalar>& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> with_bias_column(const Matrix<Scalar>& x) {
  Matrix<Scalar> a(x.rows(), x.cols() + 1);
  a << x, Matrix<Scalar>::Ones(x.rows(), 1);
  return a;
}

}  // namespace detail

template <typename Scalar>
Matrix<Scalar> one_hot(std::span<const int> labels, int class_count) {
  detail::check_labels(labels, static_cast<Eigen::Index>(labels.size()), class_count);
  Matrix<Scalar> y = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(labels.size()), class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = Scalar(1);
  return y;
}

/// Ridge objective ||[X 1] W - Y||^2 + lambda * ||W without bias row||^2.
template <typename Scalar>
Scalar ridge_objective(const LinearClassifier<Scalar>& clf, const Matrix<Scalar>& x, std::span<const int> labels,
                       Scalar lambda) {
  const Matrix<Scalar> resid = detail::with_bias_column(x) * clf.weight - one_hot<Scalar>(labels, clf.class_count());
  return resid.squaredNorm() + lambda * clf.weight.topRows(clf.weight.rows() - 1).squaredNorm();
}

/// Solves the ridge normal equations with a Cholesky factorization.
template <typename Scalar>
LinearClassifier<Scalar> fit_least_squares(const Matrix<Scalar>& x, std::span<const int> labels, int class_count,
                                           Scalar lambda = Scalar(1e-3)) {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError("fit_least_squares: empty design matrix");
  if (!(lambda > Scalar(0))) throw ConfigError("fit_least_squares: ridge must be positive");
  detail::check_labels(labels, x.rows(), class_count);

  const Matrix<Scalar> a = detail::with_bias_column(x);
  Matrix<Scalar> gram = a.transpose() * a;
  gram.diagonal().head(x.cols()).array() += lambda;
  const Matrix<Scalar> rhs = a.transpose() * one_hot<Scalar>(labels, class_count);

  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("fit_least_squares: normal equations not positive definite");
  LinearClassifier<Scalar> clf;
  clf.weight = llt.solve(rhs);
  if (!clf.weight.allFinite()) throw NumericError("fit_least_squares: non-finite solution");
  return clf;
}

template <typename Scalar>
Matrix<Scalar> decision_scores(const LinearClassifier<Scalar>& clf, const Matrix<Scalar>& x) {
  if (x.cols() != clf.feature_dim()) {
    throw ShapeError("predict: input " + shape_of(x) + " but classifier expects " +
                     std::to_string(clf.feature_dim()) + " columns");
  }
  return detail::with_bias_column(x) * clf.weight;
}

template <typename Scalar>
std::vector<int> predict(const LinearClassifier<Scalar>& clf, const Matrix<Scalar>& x) {
  return detail::argmax_rows(decision_scores(clf, x));
}

template <typename Scalar>
CentroidClassifier<Scalar> fit_centroid(const Matrix<Scalar>& x, std::span<const int> labels, int class_count) {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError("fit_centroid: empty design matrix");
  detail::check_labels(labels, x.rows(), class_count);
  CentroidClassifier<Scalar> clf;
  clf.centroids = Matrix<Scalar>::Zero(class_count, x.cols());
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(class_count), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    clf.centroids.row(c) += x.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  clf.present.resize(static_cast<std::size_t>(class_count));
  for (int c = 0; c < class_count; ++c) {
    const auto n = counts[static_cast<std::size_t>(c)];
    clf.present[static_cast<std::size_t>(c)] = n > 0;
    if (n > 0) clf.centroids.row(c) /= static_cast<Scalar>(n);
  }
  return clf;
}

/// Nearest centroid by Euclidean distance; ties go to the smaller class index.
template <typename Scalar>
std::vector<int> predict_centroid(const CentroidClassifier<Scalar>& clf, const Matrix<Scalar>& x) {
  if (x.cols() != clf.centroids.cols()) throw ShapeError("predict_centroid: feature width mismatch");
  std::vector<int> out(static_cast<std::size_t>(x.rows()), -1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Scalar best = 0;
    for (Eigen::Index c = 0; c < clf.centroids.rows(); ++c) {
      if (!clf.present[static_cast<std::size_t>(c)]) continue;
      const Scalar dist = (x.row(i) - clf.centroids.row(c)).squaredNorm();
      auto& slot = out[static_cast<std::size_t>(i)];
      if (slot < 0 || dist < best) {
        slot = static_cast<int>(c);
        best = dist;
      }
    }
  }
  return out;
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) throw ShapeError("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

}  // namespace catgan
