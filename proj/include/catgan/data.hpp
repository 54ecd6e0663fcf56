#pragma once

#include "catgan/standardizer.hpp"
#include "catgan/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace catgan {

inline constexpr int kUnlabeled = -1;

/// Feature rows with one integer label each. Label -1 marks an unlabeled row.
struct LabeledDataset {
  MatrixXd features;
  std::vector<int> labels;
  int class_count = 1;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Throws if the label vector or class range is inconsistent.
  void validate() const;

  /// Rows whose label equals `label`, in original order.
  LabeledDataset subset_of_class(int label) const;
  LabeledDataset rows(const std::vector<Eigen::Index>& idx) const;

  bool operator==(const LabeledDataset&) const = default;
};

/// CSV layout: optional `# classes=C` line, header `label,f0,...,f{d-1}`, then
/// one row per sample. Values are written with 17 significant digits.
/// When neither `expected_classes` nor the directive is present, C is
/// max(label) + 1.
LabeledDataset load_csv(const std::filesystem::path& path, std::optional<int> expected_classes = std::nullopt);
void save_csv(const LabeledDataset& ds, const std::filesystem::path& path);

/// 17 significant digits ("%.17g"); parses back to the same double.
std::string format_real(double v);

struct Shift {
  double theta = 0.0;                 // radians, applied in dims (0, 1)
  std::vector<double> translation;    // padded with zeros to d
  double scale = 1.0;
};

struct SynthTask {
  LabeledDataset source;
  LabeledDataset target_train;
  LabeledDataset target_test;
};

/// Gaussian class blobs (unit covariance) whose means sit on a radius-4 circle
/// in the first two dims. Target samples are source-law draws rotated by
/// theta, scaled, then translated. Each split uses its own derived seed.
SynthTask synth_shift_task(std::uint64_t seed, int n_per_class, int dim, int classes, const Shift& shift);

/// Class means of the source law (C x d), before any shift.
MatrixXd synth_class_means(int dim, int classes);

struct FewShotSplit {
  LabeledDataset labeled;
  LabeledDataset unlabeled;
};

/// Draws up to `per_class` rows of each class with the given seed.
FewShotSplit split_few_shot(const LabeledDataset& ds, int per_class, std::uint64_t seed);

/// Row-stacks two datasets that share feature width; C is the larger of both.
LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b);

struct ProjectionBlock {
  std::string domain;  // S, T, ST or TS
  std::vector<int> labels;
  MatrixXd points;     // n x 2
};

/// Writes `domain,label,p0,p1`.
void save_projection_csv(const std::vector<ProjectionBlock>& blocks, const std::filesystem::path& path);

}  // namespace catgan
