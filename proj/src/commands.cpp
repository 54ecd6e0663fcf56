#include "catgan/commands.hpp"

#include "catgan/pca.hpp"
#include "catgan/serialize.hpp"
#include "catgan/trainer.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <optional>

namespace catgan {

Shift default_synth_shift() {
  Shift s;
  s.theta = std::numbers::pi / 4.0;
  s.translation = {4.0, 0.0};
  s.scale = 1.0;
  return s;
}

namespace {

namespace fs = std::filesystem;

/// Removes every file it registered unless commit() is called.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : paths_) fs::remove(p, ec);
  }

  void write(const fs::path& path, const std::string& text) {
    paths_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    out.close();
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }

  template <typename Fn>
  void produce(const fs::path& path, Fn&& fn) {
    paths_.push_back(path);
    fn(path);
  }

  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> paths_;
  bool committed_ = false;
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

bool parse_generator_init(const std::string& v) {
  if (v == "diagonal") return true;
  if (v == "glorot") return false;
  throw ConfigError("generator init must be diagonal or glorot, got '" + v + "'");
}

/// Flags that map onto TrainConfig; unset ones leave lower-precedence values.
struct ConfigFlags {
  std::optional<std::string> variant, generator_init;
  std::optional<int> epochs, batch_size, d_steps, labeled_per_class, threads;
  std::optional<double> lr_g, lr_d, momentum;
  std::optional<Eigen::Index> gen_hidden, disc_hidden1, disc_hidden2;
  std::optional<std::uint64_t> seed;
  bool raw_norm = false, unwrapped = false, sigmoid_output = false;

  void add_to(CLI::App& app) {
    app.add_option("--variant", variant, "plain|classwise|conditional");
    app.add_option("--generator-init", generator_init, "diagonal|glorot (diagonal)");
    app.add_option("--epochs", epochs, "training epochs (200)");
    app.add_option("--batch-size", batch_size, "minibatch size (64)");
    app.add_option("--lr-g", lr_g, "generator learning rate (0.01)");
    app.add_option("--lr-d", lr_d, "discriminator learning rate (0.05)");
    app.add_option("--momentum", momentum, "SGD momentum (0.9)");
    app.add_option("--d-steps", d_steps, "discriminator steps per generator step (2)");
    app.add_option("--gen-hidden", gen_hidden, "generator hidden width (feature dim)");
    app.add_option("--disc-hidden1", disc_hidden1, "discriminator first hidden width");
    app.add_option("--disc-hidden2", disc_hidden2, "discriminator second hidden width");
    app.add_option("--seed", seed, "run seed (0)");
    app.add_option("--labeled-per-class", labeled_per_class, "labeled target samples per class (10)");
    app.add_option("--threads", threads, "class-wise parallelism (CATGAN_THREADS)");
    app.add_flag("--raw-norm", raw_norm, "sum squared deviations instead of averaging");
    app.add_flag("--unwrapped", unwrapped, "use plain MSE for domain and content losses");
    app.add_flag("--sigmoid-output", sigmoid_output, "sigmoid generator output layer");
  }

  void apply(TrainConfig& c) const {
    if (variant) c.variant = parse_variant(*variant);
    if (generator_init) c.diagonal_init = parse_generator_init(*generator_init);
    if (epochs) c.epochs = *epochs;
    if (batch_size) c.batch_size = *batch_size;
    if (lr_g) c.lr_g = *lr_g;
    if (lr_d) c.lr_d = *lr_d;
    if (momentum) c.momentum = *momentum;
    if (d_steps) c.d_steps_per_g_step = *d_steps;
    if (gen_hidden) c.generator_hidden = *gen_hidden;
    if (disc_hidden1) c.discriminator_hidden1 = *disc_hidden1;
    if (disc_hidden2) c.discriminator_hidden2 = *disc_hidden2;
    if (seed) c.seed = *seed;
    if (labeled_per_class) c.labeled_target_per_class = *labeled_per_class;
    if (threads) c.threads = *threads;
    if (raw_norm) c.raw_norm = true;
    if (unwrapped) c.unwrapped = true;
    if (sigmoid_output) c.sigmoid_generator_output = true;
  }
};

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ConfigError("config key " + key + ": expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// key=value lines; '#' starts a comment. Keys use flag names without dashes.
void apply_config_file(const fs::path& path, TrainConfig& c, std::optional<std::string>& classifier) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    try {
      if (key == "variant") c.variant = parse_variant(value);
      else if (key == "epochs") c.epochs = std::stoi(value);
      else if (key == "batch-size") c.batch_size = std::stoi(value);
      else if (key == "lr-g") c.lr_g = std::stod(value);
      else if (key == "lr-d") c.lr_d = std::stod(value);
      else if (key == "momentum") c.momentum = std::stod(value);
      else if (key == "d-steps") c.d_steps_per_g_step = std::stoi(value);
      else if (key == "gen-hidden") c.generator_hidden = std::stol(value);
      else if (key == "disc-hidden1") c.discriminator_hidden1 = std::stol(value);
      else if (key == "disc-hidden2") c.discriminator_hidden2 = std::stol(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "labeled-per-class") c.labeled_target_per_class = std::stoi(value);
      else if (key == "threads") c.threads = std::stoi(value);
      else if (key == "raw-norm") c.raw_norm = parse_bool(value, key);
      else if (key == "unwrapped") c.unwrapped = parse_bool(value, key);
      else if (key == "sigmoid-output") c.sigmoid_generator_output = parse_bool(value, key);
      else if (key == "generator-init") c.diagonal_init = parse_generator_init(value);
      else if (key == "classifier") classifier = value;
      else throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": bad value for " + key);
    }
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ConfigError("bad number '" + item + "' in list");
    }
  }
  return out;
}

LabeledDataset standardized(const LabeledDataset& ds, const TrainedModel& model) {
  LabeledDataset out = ds;
  if (model.standardizer) out.features = model.standardizer->apply(ds.features);
  return out;
}

MatrixXd unstandardized(const MatrixXd& z, const TrainedModel& model) {
  return model.standardizer ? model.standardizer->invert(z) : z;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coupled adversarial domain generation with shallow perceptrons"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic shifted-domain task as CSV");
  std::uint64_t synth_seed = 0;
  int synth_n = 200, synth_dim = 2, synth_classes = 2;
  double theta_deg = 45.0, scale = 1.0;
  std::string translate = "4,0";
  std::string synth_out;
  synth->add_option("--seed", synth_seed, "data seed");
  synth->add_option("--n", synth_n, "samples per class per split");
  synth->add_option("--dim", synth_dim, "feature dimension (>= 2)");
  synth->add_option("--classes", synth_classes, "class count (>= 1)");
  synth->add_option("--theta-deg", theta_deg, "rotation of the target in dims 0,1 (degrees)");
  synth->add_option("--translate", translate, "comma-separated translation of the target");
  synth->add_option("--scale", scale, "scaling of the target");
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model and write model.json and report.json");
  std::string source_path, target_train_path, target_test_path, train_out, config_path;
  std::optional<std::string> classifier_flag;
  bool timing = false;
  ConfigFlags flags;
  train->add_option("--source", source_path, "labeled source CSV")->required();
  train->add_option("--target-train", target_train_path, "target training CSV")->required();
  train->add_option("--target-test", target_test_path, "labeled target test CSV (adds accuracy to the report)");
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--config", config_path, "key=value config file (flags take precedence)");
  train->add_option("--classifier", classifier_flag, "lsq|centroid");
  train->add_flag("--timing", timing, "record wall-clock seconds in the report");
  flags.add_to(*train);

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy of CatGAN augmentation vs the baseline");
  std::string eval_model, eval_source, eval_target_train, eval_target_test, eval_out;
  std::string eval_classifier = "lsq";
  eval->add_option("--model", eval_model, "model.json")->required();
  eval->add_option("--source", eval_source, "labeled source CSV")->required();
  eval->add_option("--target-train", eval_target_train, "target training CSV")->required();
  eval->add_option("--target-test", eval_target_test, "labeled target test CSV")->required();
  eval->add_option("--classifier", eval_classifier, "lsq|centroid");
  eval->add_option("--out", eval_out, "write the accuracy report JSON here");

  // generate
  auto* gen = app.add_subcommand("generate", "map features through the generators");
  std::string gen_model, gen_input, gen_out, direction;
  gen->add_option("--model", gen_model, "model.json")->required();
  gen->add_option("--input", gen_input, "input CSV")->required();
  gen->add_option("--direction", direction, "st|ts|sts|tst")->required();
  gen->add_option("--out", gen_out, "output CSV")->required();

  // project
  auto* proj = app.add_subcommand("project", "2-D PCA projection of S, T, ST and TS");
  std::string proj_model, proj_source, proj_target, proj_out;
  proj->add_option("--model", proj_model, "model.json")->required();
  proj->add_option("--source", proj_source, "source CSV")->required();
  proj->add_option("--target", proj_target, "target CSV")->required();
  proj->add_option("--out", proj_out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (synth->parsed()) {
      Shift shift;
      shift.theta = theta_deg * std::numbers::pi / 180.0;
      shift.translation = parse_list(translate);
      shift.scale = scale;
      const auto task = synth_shift_task(synth_seed, synth_n, synth_dim, synth_classes, shift);
      const fs::path dir(synth_out);
      ensure_dir(dir);
      OutputGuard guard;
      guard.produce(dir / "source.csv", [&](const fs::path& p) { save_csv(task.source, p); });
      guard.produce(dir / "target_train.csv", [&](const fs::path& p) { save_csv(task.target_train, p); });
      guard.produce(dir / "target_test.csv", [&](const fs::path& p) { save_csv(task.target_test, p); });
      guard.commit();
      out << "wrote " << task.source.size() << " source, " << task.target_train.size() << " target-train, "
          << task.target_test.size() << " target-test rows to " << dir.string() << "\n";
      return 0;
    }

    if (train->parsed()) {
      TrainConfig cfg;
      std::optional<std::string> classifier;
      if (!config_path.empty()) apply_config_file(config_path, cfg, classifier);
      flags.apply(cfg);
      if (classifier_flag) classifier = classifier_flag;
      cfg.validate();
      const auto kind = parse_classifier(classifier.value_or("lsq"));

      require_file(source_path, "source CSV");
      require_file(target_train_path, "target-train CSV");
      const auto source = load_csv(source_path);
      const auto target_train = load_csv(target_train_path);
      std::optional<LabeledDataset> target_test;
      if (!target_test_path.empty()) {
        require_file(target_test_path, "target-test CSV");
        target_test = load_csv(target_test_path);
      }
      const auto ex = run_experiment(source, target_train, target_test ? &*target_test : nullptr, cfg, kind);

      const fs::path dir(train_out);
      ensure_dir(dir);
      OutputGuard guard;
      guard.write(dir / "model.json", model_to_json({ex.model, cfg.seed, cfg.labeled_target_per_class}));
      guard.write(dir / "report.json", report_to_json(ex.report, ex.accuracy, timing));
      guard.commit();
      if (!ex.report.trace.empty()) {
        const auto& last = ex.report.trace.back();
        out << "final L_G " << last.generator_total() << "  L_D " << last.discriminator_total() << "\n";
      }
      if (ex.accuracy) {
        out << "catgan accuracy " << ex.accuracy->catgan << "  baseline " << ex.accuracy->baseline << "\n";
      }
      return 0;
    }

    if (eval->parsed()) {
      const auto kind = parse_classifier(eval_classifier);
      require_file(eval_model, "model");
      const auto file = load_model(eval_model);
      const auto& model = file.model;
      const auto source = standardized(load_csv(eval_source), model);
      const auto target_train = standardized(load_csv(eval_target_train), model);
      const auto target_test = standardized(load_csv(eval_target_test), model);
      const auto split = split_few_shot(target_train, file.labeled_target_per_class, derive_seed(file.seed, 7));
      const auto acc = evaluate(model, source, split.labeled, target_test, kind);
      OutputGuard guard;
      if (!eval_out.empty()) guard.write(eval_out, accuracy_to_json(acc));
      guard.commit();
      out << "classifier " << to_string(kind) << "\n"
          << "catgan accuracy " << acc.catgan << "\n"
          << "baseline accuracy " << acc.baseline << "\n";
      return 0;
    }

    if (gen->parsed()) {
      if (direction != "st" && direction != "ts" && direction != "sts" && direction != "tst") {
        throw ConfigError("direction must be one of st, ts, sts, tst");
      }
      require_file(gen_model, "model");
      const auto model = load_model(gen_model).model;
      const auto input = load_csv(gen_input);
      MatrixXd z = standardized(input, model).features;
      bool st = direction.front() == 's';
      for (std::size_t hop = 0; hop + 1 < direction.size(); ++hop, st = !st) {
        z = model.generate(z, input.labels, st);
      }
      LabeledDataset result = input;
      result.features = unstandardized(z, model);
      OutputGuard guard;
      guard.produce(gen_out, [&](const fs::path& p) { save_csv(result, p); });
      guard.commit();
      out << "wrote " << result.size() << " rows (" << direction << ") to " << gen_out << "\n";
      return 0;
    }

    if (proj->parsed()) {
      require_file(proj_model, "model");
      const auto model = load_model(proj_model).model;
      const auto source = standardized(load_csv(proj_source), model);
      const auto target = standardized(load_csv(proj_target), model);
      const std::vector<MatrixXd> sets = {source.features, target.features,
                                          model.generate(source.features, source.labels, true),
                                          model.generate(target.features, target.labels, false)};
      const auto projected = pca_project_2d<double>(sets);
      const std::vector<ProjectionBlock> blocks = {{"S", source.labels, projected[0]},
                                                   {"T", target.labels, projected[1]},
                                                   {"ST", source.labels, projected[2]},
                                                   {"TS", target.labels, projected[3]}};
      OutputGuard guard;
      guard.produce(proj_out, [&](const fs::path& p) { save_projection_csv(blocks, p); });
      guard.commit();
      out << "wrote projection of " << source.size() + target.size() << " rows x2 to " << proj_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("catgan");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace catgan
