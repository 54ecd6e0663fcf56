#include "catgan/trainer.hpp"

#include "catgan/classifier.hpp"
#include "catgan/random.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

namespace catgan {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::ClassWise: return "classwise";
    case Variant::Conditional: return "conditional";
  }
  return "?";
}

std::string to_string(ClassifierKind k) { return k == ClassifierKind::LeastSquares ? "lsq" : "centroid"; }

Variant parse_variant(const std::string& s) {
  if (s == "plain") return Variant::Plain;
  if (s == "classwise") return Variant::ClassWise;
  if (s == "conditional") return Variant::Conditional;
  throw ConfigError("unknown variant '" + s + "' (plain|classwise|conditional)");
}

ClassifierKind parse_classifier(const std::string& s) {
  if (s == "lsq") return ClassifierKind::LeastSquares;
  if (s == "centroid") return ClassifierKind::Centroid;
  throw ConfigError("unknown classifier '" + s + "' (lsq|centroid)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (d_steps_per_g_step < 1) throw ConfigError("discriminator steps per generator step must be >= 1");
  if (labeled_target_per_class < 1) throw ConfigError("labeled target samples per class must be >= 1");
  if (generator_hidden < 0 || discriminator_hidden1 < 0 || discriminator_hidden2 < 0) {
    throw ConfigError("hidden sizes must be >= 0 (0 selects the default)");
  }
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (!(diagonal_gain > 0.0)) throw ConfigError("diagonal init gain must be positive");
}

NetworkShape TrainConfig::network_shape(Eigen::Index feature_dim, Eigen::Index condition_dim) const {
  NetworkShape s;
  s.feature_dim = feature_dim;
  s.condition_dim = condition_dim;
  s.generator_hidden = generator_hidden;
  s.discriminator_hidden1 = discriminator_hidden1;
  s.discriminator_hidden2 = discriminator_hidden2;
  s.generator_output = sigmoid_generator_output ? Activation::Sigmoid : Activation::Linear;
  s.diagonal_generators = diagonal_init;
  s.diagonal_gain = diagonal_gain;
  return s;
}

namespace {

DomainBatch<double> gather(const DomainBatch<double>& all, const std::vector<Eigen::Index>& idx) {
  DomainBatch<double> b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.x.resize(n, all.x.cols());
  b.cond.resize(n, all.cond.cols());
  b.co_center.resize(n, all.co_center.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = idx[static_cast<std::size_t>(i)];
    b.x.row(i) = all.x.row(r);
    if (all.cond.cols() > 0) b.cond.row(i) = all.cond.row(r);
    b.co_center.row(i) = all.co_center.row(r);
  }
  return b;
}

void check_finite(const LossBreakdown<double>& l, int epoch) {
  const std::pair<const char*, double> terms[] = {
      {"gan_t", l.gan_t},       {"gan_s", l.gan_s},           {"domain_t", l.domain_t},
      {"domain_s", l.domain_s}, {"content_sts", l.content_sts}, {"content_tst", l.content_tst},
      {"d_t_loss", l.d_t_loss}, {"d_s_loss", l.d_s_loss}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) + ": " + name + " is non-finite");
    }
  }
}

void check_batch(const DomainBatch<double>& b, const char* what) {
  if (b.x.rows() < 1) throw ShapeError(std::string(what) + " set is empty");
  if (b.co_center.rows() != b.x.rows() || b.cond.rows() != b.x.rows()) {
    throw ShapeError(std::string(what) + " batch rows are inconsistent");
  }
}

int resolve_threads(const TrainConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  if (const char* env = std::getenv("CATGAN_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

std::vector<MatrixXd> class_centers(const LabeledDataset& ds) {
  std::vector<MatrixXd> centers;
  for (int c = 0; c < ds.class_count; ++c) centers.push_back(domain_center<double>(ds.subset_of_class(c).features).center);
  return centers;
}

void require_classes(const LabeledDataset& ds, int class_count, const std::string& what) {
  std::vector<bool> seen(static_cast<std::size_t>(class_count), false);
  for (int l : ds.labels) {
    if (l < 0 || l >= class_count) {
      throw ConfigError(what + " has label " + std::to_string(l) + " outside [0, " + std::to_string(class_count) + ")");
    }
    seen[static_cast<std::size_t>(l)] = true;
  }
  for (int c = 0; c < class_count; ++c) {
    if (!seen[static_cast<std::size_t>(c)]) throw ConfigError("class " + std::to_string(c) + " is missing from " + what);
  }
}

}  // namespace

CoupledRun train_coupled(const DomainBatch<double>& source, const DomainBatch<double>& target,
                         const NetworkShape& shape, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_batch(source, "source");
  check_batch(target, "target");
  if (source.x.cols() != shape.feature_dim || target.x.cols() != shape.feature_dim) {
    throw ShapeError("source and target feature widths must equal the network feature dimension");
  }
  const LossOptions opts = cfg.loss_options();
  CoupledRun run{make_nets<double>(shape, seed), {}};
  auto& nets = run.nets;
  auto v_gst = Velocity<double>::zeros_like(nets.g_st);
  auto v_gts = Velocity<double>::zeros_like(nets.g_ts);
  auto v_dt = Velocity<double>::zeros_like(nets.d_t);
  auto v_ds = Velocity<double>::zeros_like(nets.d_s);

  Rng rng(derive_seed(seed, 100));
  const Eigen::Index ns = source.rows();
  const Eigen::Index nt = target.rows();
  std::vector<Eigen::Index> src_order(static_cast<std::size_t>(ns));
  std::vector<Eigen::Index> tgt_order(static_cast<std::size_t>(nt));
  std::iota(src_order.begin(), src_order.end(), Eigen::Index{0});
  std::iota(tgt_order.begin(), tgt_order.end(), Eigen::Index{0});
  std::size_t tgt_cursor = tgt_order.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  run.trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(src_order));
    for (std::size_t start = 0; start < src_order.size(); start += bs) {
      const std::vector<Eigen::Index> s_idx(src_order.begin() + static_cast<std::ptrdiff_t>(start),
                                            src_order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, src_order.size())));
      std::vector<Eigen::Index> t_idx;
      const std::size_t m = std::min(bs, tgt_order.size());
      for (std::size_t k = 0; k < m; ++k) {
        if (tgt_cursor == tgt_order.size()) {
          rng.shuffle(std::span<Eigen::Index>(tgt_order));
          tgt_cursor = 0;
        }
        t_idx.push_back(tgt_order[tgt_cursor++]);
      }
      const auto sb = gather(source, s_idx);
      const auto tb = gather(target, t_idx);

      try {
        for (int k = 0; k < cfg.d_steps_per_g_step; ++k) {
          const auto dp = discriminator_gradients(nets, sb, tb);
          sgd_step(nets.d_t, dp.d_t, cfg.lr_d, cfg.momentum, v_dt);
          sgd_step(nets.d_s, dp.d_s, cfg.lr_d, cfg.momentum, v_ds);
        }
        const auto gp = generator_gradients(nets, sb, tb, opts);
        sgd_step(nets.g_st, gp.g_st, cfg.lr_g, cfg.momentum, v_gst);
        sgd_step(nets.g_ts, gp.g_ts, cfg.lr_g, cfg.momentum, v_gts);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) + ": " + e.what());
      }
    }
    const auto losses = total_losses(nets, source, target, opts);
    check_finite(losses, epoch);
    run.trace.push_back(losses);
  }
  return run;
}

TrainResult train_plain(const LabeledDataset& source, const MatrixXd& target_train, const TrainConfig& cfg) {
  cfg.validate();
  source.validate();
  if (target_train.rows() < 1) throw ShapeError("target training set is empty");
  if (source.dim() != target_train.cols()) {
    throw ShapeError("source has " + std::to_string(source.dim()) + " features, target has " +
                     std::to_string(target_train.cols()));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto src_center = domain_center<double>(source.features);
  const auto tgt_center = domain_center<double>(target_train);
  const auto run = train_coupled(make_batch<double>(source.features, tgt_center),
                                 make_batch<double>(target_train, src_center),
                                 cfg.network_shape(source.dim(), 0), cfg, cfg.seed);

  TrainResult out;
  out.model.variant = Variant::Plain;
  out.model.class_count = source.class_count;
  out.model.feature_dim = source.dim();
  out.model.nets = {run.nets};
  out.report.variant = Variant::Plain;
  out.report.seed = cfg.seed;
  out.report.config = cfg;
  out.report.trace = run.trace;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

TrainResult train_classwise(const LabeledDataset& source, const LabeledDataset& target_few, const TrainConfig& cfg) {
  cfg.validate();
  source.validate();
  target_few.validate();
  const int classes = std::max(source.class_count, target_few.class_count);
  require_classes(source, classes, "the source set");
  require_classes(target_few, classes, "the labeled target set");
  if (source.dim() != target_few.dim()) throw ShapeError("source and target feature widths differ");

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<TrainResult> per_class(static_cast<std::size_t>(classes));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(classes));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int c = next++; c < classes; c = next++) {
      try {
        per_class[static_cast<std::size_t>(c)] =
            train_plain(source.subset_of_class(c), target_few.subset_of_class(c).features, cfg);
      } catch (...) {
        errors[static_cast<std::size_t>(c)] = std::current_exception();
      }
    }
  };
  const int n_threads = std::min(resolve_threads(cfg), classes);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back([&] { worker(); });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TrainResult out;
  out.model.variant = Variant::ClassWise;
  out.model.class_count = classes;
  out.model.feature_dim = source.dim();
  out.report.variant = Variant::ClassWise;
  out.report.seed = cfg.seed;
  out.report.config = cfg;
  out.report.trace.assign(static_cast<std::size_t>(cfg.epochs), LossBreakdown<double>{});
  for (auto& r : per_class) {
    out.model.nets.push_back(std::move(r.model.nets.front()));
    for (std::size_t e = 0; e < r.report.trace.size(); ++e) {
      auto& acc = out.report.trace[e];
      const auto& l = r.report.trace[e];
      const double w = 1.0 / classes;
      acc.gan_t += w * l.gan_t;
      acc.gan_s += w * l.gan_s;
      acc.domain_t += w * l.domain_t;
      acc.domain_s += w * l.domain_s;
      acc.content_sts += w * l.content_sts;
      acc.content_tst += w * l.content_tst;
      acc.d_t_loss += w * l.d_t_loss;
      acc.d_s_loss += w * l.d_s_loss;
    }
    out.report.class_traces.push_back(std::move(r.report.trace));
  }
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

TrainResult train_conditional(const LabeledDataset& source, const LabeledDataset& target_few,
                              const TrainConfig& cfg) {
  cfg.validate();
  source.validate();
  target_few.validate();
  const int classes = std::max(source.class_count, target_few.class_count);
  require_classes(source, classes, "the source set");
  require_classes(target_few, classes, "the labeled target set");
  if (source.dim() != target_few.dim()) throw ShapeError("source and target feature widths differ");

  const auto t0 = std::chrono::steady_clock::now();
  LabeledDataset src = source, tgt = target_few;
  src.class_count = tgt.class_count = classes;
  const auto src_centers = class_centers(src);
  const auto tgt_centers = class_centers(tgt);

  // each row is pulled toward the opposite domain's center of its own class
  DomainBatch<double> sb, tb;
  sb.x = src.features;
  sb.cond = one_hot<double>(src.labels, classes);
  sb.co_center.resize(src.size(), src.dim());
  for (Eigen::Index i = 0; i < src.size(); ++i) sb.co_center.row(i) = tgt_centers[static_cast<std::size_t>(src.labels[static_cast<std::size_t>(i)])];
  tb.x = tgt.features;
  tb.cond = one_hot<double>(tgt.labels, classes);
  tb.co_center.resize(tgt.size(), tgt.dim());
  for (Eigen::Index i = 0; i < tgt.size(); ++i) tb.co_center.row(i) = src_centers[static_cast<std::size_t>(tgt.labels[static_cast<std::size_t>(i)])];

  const auto run = train_coupled(sb, tb, cfg.network_shape(src.dim(), classes), cfg, cfg.seed);
  TrainResult out;
  out.model.variant = Variant::Conditional;
  out.model.class_count = classes;
  out.model.feature_dim = src.dim();
  out.model.nets = {run.nets};
  out.report.variant = Variant::Conditional;
  out.report.seed = cfg.seed;
  out.report.config = cfg;
  out.report.trace = run.trace;
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

MatrixXd TrainedModel::generate(const MatrixXd& x, const std::vector<int>& labels, bool source_to_target) const {
  if (nets.empty()) throw ConfigError("model has no networks");
  if (x.cols() != feature_dim) {
    throw ShapeError("model expects " + std::to_string(feature_dim) + " features, got " + shape_of(x));
  }
  const auto pick = [&](const CatganNets<double>& n) -> const Mlp<double>& {
    return source_to_target ? n.g_st : n.g_ts;
  };
  if (variant == Variant::Plain) return apply(pick(nets.front()), x);

  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw ShapeError("generate: one label per row is required");
  for (int l : labels) {
    if (l < 0 || l >= class_count) {
      throw ConfigError("generate: label " + std::to_string(l) + " outside [0, " + std::to_string(class_count) + ")");
    }
  }
  if (variant == Variant::Conditional) {
    return apply(pick(nets.front()), detail::with_condition<double>(x, one_hot<double>(labels, class_count)));
  }
  MatrixXd out(x.rows(), x.cols());
  for (int c = 0; c < class_count; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    }
    if (idx.empty()) continue;
    MatrixXd block(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) block.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
    const MatrixXd gen = apply(pick(nets[static_cast<std::size_t>(c)]), block);
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(idx[k]) = gen.row(static_cast<Eigen::Index>(k));
  }
  return out;
}

double fit_and_score(const LabeledDataset& train, const LabeledDataset& test, ClassifierKind kind) {
  const int classes = std::max(train.class_count, test.class_count);
  std::vector<int> predicted;
  if (kind == ClassifierKind::LeastSquares) {
    predicted = predict(fit_least_squares<double>(train.features, train.labels, classes), test.features);
  } else {
    predicted = predict_centroid(fit_centroid<double>(train.features, train.labels, classes), test.features);
  }
  return accuracy(predicted, test.labels);
}

AccuracyReport evaluate(const TrainedModel& model, const LabeledDataset& source, const LabeledDataset& target_few,
                        const LabeledDataset& target_test, ClassifierKind kind) {
  const int classes = std::max({model.class_count, source.class_count, target_few.class_count});
  LabeledDataset generated;
  generated.features = model.generate(source.features, source.labels, true);
  generated.labels = source.labels;
  generated.class_count = classes;
  LabeledDataset augmented = concat(generated, target_few);
  augmented.class_count = classes;
  require_classes(augmented, classes, "the augmented training set");
  LabeledDataset baseline = concat(source, target_few);
  baseline.class_count = classes;

  AccuracyReport r;
  r.classifier = kind;
  r.catgan = fit_and_score(augmented, target_test, kind);
  r.baseline = fit_and_score(baseline, target_test, kind);
  return r;
}

StandardizedDomains standardize_domains(const LabeledDataset& source, const LabeledDataset& target_train) {
  source.validate();
  target_train.validate();
  if (source.dim() != target_train.dim()) throw ShapeError("source and target feature widths differ");
  StandardizedDomains out;
  MatrixXd both(source.size() + target_train.size(), source.dim());
  both << source.features, target_train.features;
  out.scaler = fit_standardizer(both);
  out.source = source;
  out.source.features = out.scaler.apply(source.features);
  out.target_train = target_train;
  out.target_train.features = out.scaler.apply(target_train.features);
  return out;
}

Experiment run_experiment(const LabeledDataset& source, const LabeledDataset& target_train,
                          const LabeledDataset* target_test, const TrainConfig& cfg, ClassifierKind kind) {
  cfg.validate();
  auto domains = standardize_domains(source, target_train);
  const int classes = std::max(source.class_count, target_train.class_count);
  domains.source.class_count = domains.target_train.class_count = classes;
  const auto split = split_few_shot(domains.target_train, cfg.labeled_target_per_class, derive_seed(cfg.seed, 7));

  TrainResult trained;
  switch (cfg.variant) {
    case Variant::Plain: {
      const MatrixXd& unlabeled =
          split.unlabeled.size() > 0 ? split.unlabeled.features : domains.target_train.features;
      trained = train_plain(domains.source, unlabeled, cfg);
      break;
    }
    case Variant::ClassWise: trained = train_classwise(domains.source, split.labeled, cfg); break;
    case Variant::Conditional: trained = train_conditional(domains.source, split.labeled, cfg); break;
  }
  Experiment ex{std::move(trained.model), std::move(trained.report), std::nullopt};
  ex.model.standardizer = domains.scaler;
  if (target_test) {
    LabeledDataset test = *target_test;
    test.features = domains.scaler.apply(target_test->features);
    ex.accuracy = evaluate(ex.model, domains.source, split.labeled, test, kind);
  }
  return ex;
}

}  // namespace catgan
