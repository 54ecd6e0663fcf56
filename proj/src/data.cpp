#include "catgan/data.hpp"

#include "catgan/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace catgan {

void LabeledDataset::validate() const {
  if (class_count < 1) throw ConfigError("dataset class count must be >= 1");
  if (features.rows() < 1 || features.cols() < 1) throw ShapeError("dataset must have at least one row and column");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ShapeError("dataset has " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(features.rows()) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kUnlabeled && (labels[i] < 0 || labels[i] >= class_count)) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(class_count) + ")");
    }
  }
  if (!features.allFinite()) throw NumericError("dataset contains non-finite features");
}

LabeledDataset LabeledDataset::rows(const std::vector<Eigen::Index>& idx) const {
  LabeledDataset out;
  out.class_count = class_count;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), features.cols());
  out.labels.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(idx[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(idx[i])]);
  }
  return out;
}

LabeledDataset LabeledDataset::subset_of_class(int label) const {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) idx.push_back(static_cast<Eigen::Index>(i));
  }
  return rows(idx);
}

std::string format_real(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& c : cells) {
    while (!c.empty() && (c.front() == ' ' || c.front() == '\t')) c.remove_prefix(1);
    while (!c.empty() && (c.back() == ' ' || c.back() == '\t' || c.back() == '\r')) c.remove_suffix(1);
  }
  return cells;
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, std::size_t line, const std::string& msg) {
  throw ParseError(path.string() + ":" + std::to_string(line) + ": " + msg);
}

template <typename T>
bool parse_number(std::string_view cell, T& out) {
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

}  // namespace

LabeledDataset load_csv(const std::filesystem::path& path, std::optional<int> expected_classes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());

  std::optional<int> declared;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool have_header = false;
  std::vector<double> values;
  std::vector<int> labels;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line.front() == '#') {
      const auto pos = line.find("classes=");
      if (pos != std::string::npos) {
        int c = 0;
        if (!parse_number(std::string_view(line).substr(pos + 8), c) || c < 1) {
          parse_fail(path, line_no, "bad classes directive");
        }
        declared = c;
      }
      continue;
    }
    const auto cells = split_commas(line);
    if (!have_header) {
      if (cells.size() < 2 || cells[0] != "label") parse_fail(path, line_no, "expected header label,f0,...");
      for (std::size_t j = 1; j < cells.size(); ++j) {
        if (cells[j] != "f" + std::to_string(j - 1)) {
          parse_fail(path, line_no, "header column " + std::to_string(j) + " should be f" + std::to_string(j - 1));
        }
      }
      width = cells.size() - 1;
      have_header = true;
      continue;
    }
    if (cells.size() != width + 1) {
      parse_fail(path, line_no, "expected " + std::to_string(width + 1) + " cells, got " + std::to_string(cells.size()));
    }
    int label = 0;
    if (!parse_number(cells[0], label)) parse_fail(path, line_no, "non-integer label '" + std::string(cells[0]) + "'");
    if (label < kUnlabeled) parse_fail(path, line_no, "negative label " + std::to_string(label));
    labels.push_back(label);
    for (std::size_t j = 1; j < cells.size(); ++j) {
      double v = 0;
      if (!parse_number(cells[j], v) || !std::isfinite(v)) {
        parse_fail(path, line_no, "non-numeric cell '" + std::string(cells[j]) + "' in column " + std::to_string(j));
      }
      values.push_back(v);
    }
  }
  if (!have_header) throw ParseError(path.string() + ": missing header");
  if (labels.empty()) throw ParseError(path.string() + ": no data rows");

  if (expected_classes && declared && *expected_classes != *declared) {
    throw ConfigError(path.string() + ": file declares " + std::to_string(*declared) + " classes, expected " +
                      std::to_string(*expected_classes));
  }
  LabeledDataset ds;
  const int max_label = *std::max_element(labels.begin(), labels.end());
  ds.class_count = expected_classes ? *expected_classes : declared ? *declared : std::max(max_label + 1, 1);
  ds.features = Eigen::Map<MatrixXd>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                     static_cast<Eigen::Index>(width));
  ds.labels = std::move(labels);
  ds.validate();
  return ds;
}

void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ostringstream out;
  out << "# classes=" << ds.class_count << '\n' << "label";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
  out << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out << ds.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ',' << format_real(ds.features(i, j));
    out << '\n';
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file << out.str();
  if (!file) throw std::runtime_error("write failed for " + path.string());
}

MatrixXd synth_class_means(int dim, int classes) {
  MatrixXd means = MatrixXd::Zero(classes, dim);
  for (int c = 0; c < classes; ++c) {
    const double a = 2.0 * std::numbers::pi * c / classes;
    means(c, 0) = 4.0 * std::cos(a);
    means(c, 1) = 4.0 * std::sin(a);
  }
  return means;
}

namespace {

LabeledDataset draw_blobs(std::uint64_t seed, int n_per_class, const MatrixXd& means) {
  Rng rng(seed);
  const auto classes = static_cast<int>(means.rows());
  const Eigen::Index dim = means.cols();
  LabeledDataset ds;
  ds.class_count = classes;
  ds.features.resize(static_cast<Eigen::Index>(n_per_class) * classes, dim);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < n_per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < dim; ++j) ds.features(row, j) = means(c, j) + rng.normal();
      ds.labels.push_back(c);
    }
  }
  return ds;
}

void push_through(LabeledDataset& ds, const Shift& shift) {
  const double co = std::cos(shift.theta);
  const double si = std::sin(shift.theta);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const double x0 = ds.features(i, 0);
    const double x1 = ds.features(i, 1);
    ds.features(i, 0) = co * x0 - si * x1;
    ds.features(i, 1) = si * x0 + co * x1;
    ds.features.row(i) *= shift.scale;
    for (std::size_t j = 0; j < shift.translation.size(); ++j) {
      ds.features(i, static_cast<Eigen::Index>(j)) += shift.translation[j];
    }
  }
}

}  // namespace

SynthTask synth_shift_task(std::uint64_t seed, int n_per_class, int dim, int classes, const Shift& shift) {
  if (dim < 2) throw ConfigError("synth: dimension must be >= 2");
  if (classes < 1) throw ConfigError("synth: class count must be >= 1");
  if (n_per_class < 1) throw ConfigError("synth: samples per class must be >= 1");
  if (!std::isfinite(shift.theta)) throw ConfigError("synth: rotation angle must be finite");
  if (!(shift.scale > 0.0) || !std::isfinite(shift.scale)) throw ConfigError("synth: scale must be positive");
  if (static_cast<int>(shift.translation.size()) > dim) throw ConfigError("synth: translation longer than dimension");
  for (double t : shift.translation) {
    if (!std::isfinite(t)) throw ConfigError("synth: translation must be finite");
  }

  const MatrixXd means = synth_class_means(dim, classes);
  SynthTask task;
  task.source = draw_blobs(derive_seed(seed, 0), n_per_class, means);
  task.target_train = draw_blobs(derive_seed(seed, 1), n_per_class, means);
  task.target_test = draw_blobs(derive_seed(seed, 2), n_per_class, means);
  push_through(task.target_train, shift);
  push_through(task.target_test, shift);
  return task;
}

FewShotSplit split_few_shot(const LabeledDataset& ds, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw ConfigError("labeled target samples per class must be >= 1");
  Rng rng(seed);
  std::vector<bool> take(static_cast<std::size_t>(ds.size()), false);
  for (int c = 0; c < ds.class_count; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
      if (ds.labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    }
    rng.shuffle(std::span<Eigen::Index>(idx));
    const auto n = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(per_class));
    for (std::size_t k = 0; k < n; ++k) take[static_cast<std::size_t>(idx[k])] = true;
  }
  std::vector<Eigen::Index> labeled, unlabeled;
  for (std::size_t i = 0; i < take.size(); ++i) {
    (take[i] ? labeled : unlabeled).push_back(static_cast<Eigen::Index>(i));
  }
  return {ds.rows(labeled), ds.rows(unlabeled)};
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.dim() != b.dim()) throw ShapeError("concat: feature widths differ");
  LabeledDataset out;
  out.class_count = std::max(a.class_count, b.class_count);
  out.features.resize(a.size() + b.size(), a.dim());
  out.features << a.features, b.features;
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  return out;
}

void save_projection_csv(const std::vector<ProjectionBlock>& blocks, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "domain,label,p0,p1\n";
  for (const auto& b : blocks) {
    if (b.points.cols() != 2 || static_cast<Eigen::Index>(b.labels.size()) != b.points.rows()) {
      throw ShapeError("projection block " + b.domain + " is malformed");
    }
    for (Eigen::Index i = 0; i < b.points.rows(); ++i) {
      out << b.domain << ',' << b.labels[static_cast<std::size_t>(i)] << ',' << format_real(b.points(i, 0)) << ','
          << format_real(b.points(i, 1)) << '\n';
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw std::runtime_error("cannot write " + path.string());
  file << out.str();
}

}  // namespace catgan
