#pragma once

#include "catgan/types.hpp"

namespace catgan {

/// Per-feature affine scaling fitted on training features.
template <typename Scalar>
struct Standardizer {
  static constexpr double kSdFloor = 1e-8;

  RowVector<Scalar> mean;
  RowVector<Scalar> sd;

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    check(x);
    return (x.rowwise() - mean).array().rowwise() / sd.array();
  }

  Matrix<Scalar> invert(const Matrix<Scalar>& z) const {
    check(z);
    return (z.array().rowwise() * sd.array()).matrix().rowwise() + mean;
  }

  bool operator==(const Standardizer& o) const {
    return mean.size() == o.mean.size() && sd.size() == o.sd.size() && mean == o.mean && sd == o.sd;
  }

 private:
  void check(const Matrix<Scalar>& x) const {
    if (x.cols() != mean.size()) {
      throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) + " features, got " + shape_of(x));
    }
  }
};

/// Column means and population standard deviations, floored at 1e-8.
template <typename Scalar>
Standardizer<Scalar> fit_standardizer(const Matrix<Scalar>& x) {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError("fit_standardizer: empty matrix");
  Standardizer<Scalar> s;
  s.mean = x.colwise().mean();
  const Matrix<Scalar> centered = x.rowwise() - s.mean;
  s.sd = (centered.colwise().squaredNorm() / static_cast<Scalar>(x.rows())).cwiseSqrt();
  s.sd = s.sd.cwiseMax(Scalar(Standardizer<Scalar>::kSdFloor));
  return s;
}

}  // namespace catgan
