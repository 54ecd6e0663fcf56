#pragma once

#include "catgan/catgan_model.hpp"
#include "catgan/data.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace catgan {

enum class Variant { Plain, ClassWise, Conditional };
enum class ClassifierKind { LeastSquares, Centroid };

std::string to_string(Variant v);
std::string to_string(ClassifierKind k);
Variant parse_variant(const std::string& s);
ClassifierKind parse_classifier(const std::string& s);

struct TrainConfig {
  Variant variant = Variant::Plain;
  int epochs = 200;
  int batch_size = 64;
  double lr_g = 0.01;
  double lr_d = 0.05;
  double momentum = 0.9;
  int d_steps_per_g_step = 2;
  Eigen::Index generator_hidden = 0;       // 0: feature dim
  Eigen::Index discriminator_hidden1 = 0;  // 0: max(d, 4)
  Eigen::Index discriminator_hidden2 = 0;  // 0: max(ceil(d/2), 4)
  std::uint64_t seed = 0;
  int labeled_target_per_class = 10;
  bool raw_norm = false;
  bool unwrapped = false;
  bool sigmoid_generator_output = false;
  /// Diagonal generator start; false draws Glorot-uniform weights.
  bool diagonal_init = true;
  double diagonal_gain = kDiagonalInitGain;
  /// Upper bound on concurrent class-wise trainings; 0 reads CATGAN_THREADS.
  int threads = 0;

  void validate() const;
  LossOptions loss_options() const { return {raw_norm, unwrapped}; }
  NetworkShape network_shape(Eigen::Index feature_dim, Eigen::Index condition_dim) const;
};

/// Loss trace of one coupled training run, evaluated on the full training
/// sets after each epoch.
struct TrainReport {
  Variant variant = Variant::Plain;
  std::uint64_t seed = 0;
  TrainConfig config;
  std::vector<LossBreakdown<double>> trace;
  /// Class-wise runs: one trace per class; `trace` is their per-epoch mean.
  std::vector<std::vector<LossBreakdown<double>>> class_traces;
  double wall_seconds = 0.0;
};

struct TrainedModel {
  Variant variant = Variant::Plain;
  int class_count = 1;
  Eigen::Index feature_dim = 0;
  /// One quartet for plain and conditional models, one per class otherwise.
  std::vector<CatganNets<double>> nets;
  std::optional<Standardizer<double>> standardizer;

  /// Maps rows into the co-target (st) or co-source (ts) space. Labels select
  /// the class network or condition; plain models ignore them.
  MatrixXd generate(const MatrixXd& x, const std::vector<int>& labels, bool source_to_target) const;

  bool operator==(const TrainedModel&) const = default;
};

struct TrainResult {
  TrainedModel model;
  TrainReport report;
};

/// Alternating optimization of one coupled model. Batches carry per-row
/// co-centers and optional conditions; a source epoch drives the iteration
/// count and target batches are drawn independently.
struct CoupledRun {
  CatganNets<double> nets;
  std::vector<LossBreakdown<double>> trace;
};
CoupledRun train_coupled(const DomainBatch<double>& source, const DomainBatch<double>& target,
                         const NetworkShape& shape, const TrainConfig& cfg, std::uint64_t seed);

TrainResult train_plain(const LabeledDataset& source, const MatrixXd& target_train, const TrainConfig& cfg);
TrainResult train_classwise(const LabeledDataset& source, const LabeledDataset& target_few, const TrainConfig& cfg);
TrainResult train_conditional(const LabeledDataset& source, const LabeledDataset& target_few,
                              const TrainConfig& cfg);

struct AccuracyReport {
  ClassifierKind classifier = ClassifierKind::LeastSquares;
  double catgan = 0.0;    // trained on [X_ST ; X_T labeled]
  double baseline = 0.0;  // trained on [X_S ; X_T labeled]
};

AccuracyReport evaluate(const TrainedModel& model, const LabeledDataset& source, const LabeledDataset& target_few,
                        const LabeledDataset& target_test, ClassifierKind kind);

/// Fits a classifier of the given kind and scores it on a test set.
double fit_and_score(const LabeledDataset& train, const LabeledDataset& test, ClassifierKind kind);

/// Standardize, split, train the configured variant and evaluate. All three
/// datasets are in raw feature space; the returned model carries the scaler.
struct Experiment {
  TrainedModel model;
  TrainReport report;
  std::optional<AccuracyReport> accuracy;
};
Experiment run_experiment(const LabeledDataset& source, const LabeledDataset& target_train,
                          const LabeledDataset* target_test, const TrainConfig& cfg, ClassifierKind kind);

/// Applies the shared scaler to all domains; fitted on source and target-train
/// features together.
struct StandardizedDomains {
  Standardizer<double> scaler;
  LabeledDataset source;
  LabeledDataset target_train;
};
StandardizedDomains standardize_domains(const LabeledDataset& source, const LabeledDataset& target_train);

}  // namespace catgan
