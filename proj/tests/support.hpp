#pragma once

#include "catgan/catgan_model.hpp"
#include "catgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

namespace catgan::testing {

inline MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline std::vector<int> random_labels(Rng& rng, std::size_t n, int classes) {
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
  return out;
}

inline MatrixXd one_hot_rows(const std::vector<int>& labels, int classes) {
  MatrixXd m = MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return m;
}

/// Adds small random offsets to every bias so that checks do not run at the
/// zero-bias initialization only.
inline void jitter_biases(Mlp<double>& net, Rng& rng, double scale = 0.3) {
  for (auto& l : net.layers) {
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) += scale * rng.normal();
  }
}

/// |a - n| / max(|a|, |n|, floor). A central difference at eps = 1e-5 carries
/// roughly 1e-11 of roundoff, so gradients below the floor are compared on an
/// absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double max_rel = 0.0;
  long checked = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central differences over every weight and bias of `net`, compared with
/// `analytic`. `loss` is re-evaluated with the perturbed network in place.
template <typename Loss>
GradCheck check_gradients(Mlp<double>& net, const Gradients<double>& analytic, Loss&& loss, double eps = 1e-5) {
  GradCheck r;
  auto probe = [&](double& p, double a) {
    const double saved = p;
    p = saved + eps;
    const double up = loss();
    p = saved - eps;
    const double down = loss();
    p = saved;
    const double numeric = (up - down) / (2 * eps);
    const double rel = relative_error(a, numeric);
    if (rel > r.max_rel) {
      r.max_rel = rel;
      r.worst_analytic = a;
      r.worst_numeric = numeric;
    }
    ++r.checked;
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    auto& l = net.layers[k];
    const auto& g = analytic.layers[k];
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) probe(l.weight(i, j), g.weight(i, j));
    }
    for (Eigen::Index j = 0; j < l.bias.size(); ++j) probe(l.bias(j), g.bias(j));
  }
  return r;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("catgan_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace catgan::testing
