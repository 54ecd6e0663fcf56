#include "catgan/serialize.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace catgan {

using nlohmann::json;

namespace {

std::string to_string(Activation a) { return a == Activation::Sigmoid ? "sigmoid" : "linear"; }

Activation parse_activation(const std::string& s) {
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "linear") return Activation::Linear;
  throw ParseError("unknown activation '" + s + "'");
}

json row_major(const MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
  }
  return a;
}

json vec(const RowVectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

RowVectorXd read_vec(const json& a, Eigen::Index n, const char* what) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n) {
    throw ParseError(std::string(what) + ": expected " + std::to_string(n) + " values");
  }
  RowVectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = a.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

json mlp_json(const Mlp<double>& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    layers.push_back({{"in", l.in_dim()},
                      {"out", l.out_dim()},
                      {"activation", to_string(l.activation)},
                      {"weight", row_major(l.weight)},
                      {"bias", vec(l.bias)}});
  }
  return {{"kind", net.kind == NetKind::Generator ? "generator" : "discriminator"}, {"layers", layers}};
}

Mlp<double> mlp_from(const json& j) {
  Mlp<double> net;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "generator") {
    net.kind = NetKind::Generator;
  } else if (kind == "discriminator") {
    net.kind = NetKind::Discriminator;
  } else {
    throw ParseError("unknown network kind '" + kind + "'");
  }
  for (const auto& lj : j.at("layers")) {
    Layer<double> l;
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    if (in < 1 || out < 1) throw ParseError("layer dimensions must be positive");
    if (!net.layers.empty() && net.layers.back().out_dim() != in) throw ParseError("consecutive layers do not chain");
    const auto w = read_vec(lj.at("weight"), in * out, "weight");
    l.weight = Eigen::Map<const MatrixXd>(w.data(), in, out);
    l.bias = read_vec(lj.at("bias"), out, "bias");
    l.activation = parse_activation(lj.at("activation").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  const std::size_t want = net.kind == NetKind::Generator ? 2 : 3;
  if (net.layers.size() != want) throw ParseError(kind + " must have " + std::to_string(want) + " layers");
  return net;
}

json breakdown_json(const LossBreakdown<double>& l, std::size_t epoch) {
  return {{"epoch", epoch},
          {"gan_t", l.gan_t},
          {"gan_s", l.gan_s},
          {"domain_t", l.domain_t},
          {"domain_s", l.domain_s},
          {"content_sts", l.content_sts},
          {"content_tst", l.content_tst},
          {"d_t_loss", l.d_t_loss},
          {"d_s_loss", l.d_s_loss},
          {"L_G", l.generator_total()},
          {"L_D", l.discriminator_total()}};
}

json trace_json(const std::vector<LossBreakdown<double>>& trace) {
  json a = json::array();
  for (std::size_t e = 0; e < trace.size(); ++e) a.push_back(breakdown_json(trace[e], e + 1));
  return a;
}

json config_json(const TrainConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr_g", c.lr_g},
          {"lr_d", c.lr_d},
          {"momentum", c.momentum},
          {"d_steps_per_g_step", c.d_steps_per_g_step},
          {"generator_hidden", c.generator_hidden},
          {"discriminator_hidden1", c.discriminator_hidden1},
          {"discriminator_hidden2", c.discriminator_hidden2},
          {"seed", c.seed},
          {"labeled_target_per_class", c.labeled_target_per_class},
          {"raw_norm", c.raw_norm},
          {"unwrapped", c.unwrapped},
          {"sigmoid_generator_output", c.sigmoid_generator_output},
          {"generator_init", c.diagonal_init ? "diagonal" : "glorot"}, {"diagonal_gain", c.diagonal_gain}};
}

json accuracy_obj(const AccuracyReport& a) {
  return {{"classifier", to_string(a.classifier)}, {"catgan", a.catgan}, {"baseline", a.baseline}};
}

}  // namespace

std::string model_to_json(const ModelFile& file) {
  const auto& m = file.model;
  json nets = json::array();
  for (std::size_t i = 0; i < m.nets.size(); ++i) {
    json entry = {{"g_st", mlp_json(m.nets[i].g_st)},
                  {"g_ts", mlp_json(m.nets[i].g_ts)},
                  {"d_t", mlp_json(m.nets[i].d_t)},
                  {"d_s", mlp_json(m.nets[i].d_s)}};
    entry["class"] = m.variant == Variant::ClassWise ? json(i) : json(nullptr);
    nets.push_back(std::move(entry));
  }
  json doc = {{"format", "catgan-model"},
              {"version", kModelFormatVersion},
              {"variant", to_string(m.variant)},
              {"class_count", m.class_count},
              {"feature_dim", m.feature_dim},
              {"training", {{"seed", file.seed}, {"labeled_target_per_class", file.labeled_target_per_class}}},
              {"networks", nets}};
  doc["standardizer"] =
      m.standardizer ? json{{"mean", vec(m.standardizer->mean)}, {"sd", vec(m.standardizer->sd)}} : json(nullptr);
  return doc.dump(1) + "\n";
}

ModelFile model_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
  try {
    if (doc.at("format") != "catgan-model") throw ParseError("not a catgan model file");
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw ParseError("unsupported model version " + doc.at("version").dump());
    }
    ModelFile f;
    auto& m = f.model;
    m.variant = parse_variant(doc.at("variant").get<std::string>());
    m.class_count = doc.at("class_count").get<int>();
    m.feature_dim = doc.at("feature_dim").get<Eigen::Index>();
    f.seed = doc.at("training").at("seed").get<std::uint64_t>();
    f.labeled_target_per_class = doc.at("training").at("labeled_target_per_class").get<int>();
    for (const auto& n : doc.at("networks")) {
      m.nets.push_back({mlp_from(n.at("g_st")), mlp_from(n.at("g_ts")), mlp_from(n.at("d_t")), mlp_from(n.at("d_s"))});
    }
    const std::size_t want = m.variant == Variant::ClassWise ? static_cast<std::size_t>(m.class_count) : 1;
    if (m.nets.size() != want) throw ParseError("expected " + std::to_string(want) + " network quartets");
    const auto& s = doc.at("standardizer");
    if (!s.is_null()) {
      Standardizer<double> st;
      st.mean = read_vec(s.at("mean"), m.feature_dim, "standardizer mean");
      st.sd = read_vec(s.at("sd"), m.feature_dim, "standardizer sd");
      m.standardizer = st;
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("model: ") + e.what());
  }
}

void save_model(const ModelFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model_to_json(file);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::string report_to_json(const TrainReport& report, const std::optional<AccuracyReport>& accuracy,
                           bool include_timing) {
  json doc = {{"schema", "catgan-report"},
              {"version", kReportSchemaVersion},
              {"variant", to_string(report.variant)},
              {"seed", report.seed},
              {"config", config_json(report.config)},
              {"epochs", report.trace.size()},
              {"trace", trace_json(report.trace)}};
  if (!report.class_traces.empty()) {
    json per_class = json::array();
    for (const auto& t : report.class_traces) per_class.push_back(trace_json(t));
    doc["class_traces"] = per_class;
  }
  if (!report.trace.empty()) doc["final"] = breakdown_json(report.trace.back(), report.trace.size());
  if (accuracy) doc["accuracy"] = accuracy_obj(*accuracy);
  if (include_timing) doc["wall_seconds"] = report.wall_seconds;
  return doc.dump(2) + "\n";
}

std::string accuracy_to_json(const AccuracyReport& accuracy) {
  json doc = {{"schema", "catgan-eval"}, {"version", kReportSchemaVersion}, {"accuracy", accuracy_obj(accuracy)}};
  return doc.dump(2) + "\n";
}

}  // namespace catgan
