#pragma once

#include "catgan/neural_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

namespace catgan {

/// Log arguments are clamped to at least this value.
inline constexpr double kLogFloor = 1e-12;

struct LossOptions {
  /// Sum squared deviations instead of averaging them over all entries.
  bool raw_norm = false;
  /// Drop the sigmoid wrap on the domain and content losses.
  bool unwrapped = false;
};

/// Per-feature mean of one domain's training features.
template <typename Scalar>
struct DomainCenter {
  RowVector<Scalar> center;
};

template <typename Scalar>
DomainCenter<Scalar> domain_center(const Matrix<Scalar>& x) {
  if (x.rows() < 1 || x.cols() < 1) throw ShapeError("domain_center: empty matrix");
  return {x.colwise().mean()};
}

template <typename Scalar>
struct LossBreakdown {
  Scalar gan_t = 0, gan_s = 0;
  Scalar domain_t = 0, domain_s = 0;
  Scalar content_sts = 0, content_tst = 0;
  Scalar d_t_loss = 0, d_s_loss = 0;

  Scalar way1() const { return gan_t + domain_t + content_sts; }
  Scalar way2() const { return gan_s + domain_s + content_tst; }
  Scalar generator_total() const { return way1() + way2(); }
  Scalar discriminator_total() const { return d_t_loss + d_s_loss; }

  bool all_finite() const {
    for (Scalar v : {gan_t, gan_s, domain_t, domain_s, content_sts, content_tst, d_t_loss, d_s_loss}) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

/// The coupled quartet. Each network exists once; the same g_st instance
/// produces X_ST in way 1 and closes the T->S->T cycle in way 2 (likewise g_ts).
template <typename Scalar>
struct CatganNets {
  Mlp<Scalar> g_st;
  Mlp<Scalar> g_ts;
  Mlp<Scalar> d_t;
  Mlp<Scalar> d_s;

  /// Relabels the model as if source and target had been exchanged.
  CatganNets swapped() const { return {g_ts, g_st, d_s, d_t}; }

  bool operator==(const CatganNets&) const = default;
};

/// Hidden-layer gain of the diagonal generator start. Output j begins as
/// x_j -> (4/gain) * (sigmoid(gain * x_j) - 1/2): unit slope at the origin,
/// increasing in its own feature and independent of the others.
inline constexpr double kDiagonalInitGain = 3.0;

struct NetworkShape {
  Eigen::Index feature_dim = 2;
  /// One-hot width appended to every generator and discriminator input; 0 for
  /// unconditioned models.
  Eigen::Index condition_dim = 0;
  /// 0 selects the default: feature_dim for the generator, max(d, 4) and
  /// max(ceil(d/2), 4) for the discriminator.
  Eigen::Index generator_hidden = 0;
  Eigen::Index discriminator_hidden1 = 0;
  Eigen::Index discriminator_hidden2 = 0;
  Activation generator_output = Activation::Linear;
  /// Start both generators at the diagonal map (linear output only); false
  /// keeps the Glorot-uniform draw.
  bool diagonal_generators = true;
  double diagonal_gain = kDiagonalInitGain;

  Eigen::Index gen_hidden() const { return generator_hidden > 0 ? generator_hidden : feature_dim; }
  Eigen::Index disc_hidden1() const {
    return discriminator_hidden1 > 0 ? discriminator_hidden1 : std::max<Eigen::Index>(feature_dim, 4);
  }
  Eigen::Index disc_hidden2() const {
    return discriminator_hidden2 > 0 ? discriminator_hidden2
                                     : std::max<Eigen::Index>((feature_dim + 1) / 2, 4);
  }
};


/// Overwrites a 2-layer generator with the diagonal start. Condition inputs
/// keep their random weights; extra hidden units start disconnected from the
/// output.
template <typename Scalar>
void set_diagonal_init(Mlp<Scalar>& gen, Eigen::Index feature_dim, double gain_value = kDiagonalInitGain) {
  if (gen.layers.size() != 2) throw ConfigError("diagonal init needs a 2-layer generator");
  auto& hidden = gen.layers[0];
  auto& output = gen.layers[1];
  if (hidden.out_dim() < feature_dim || output.out_dim() != feature_dim || hidden.in_dim() < feature_dim) {
    throw ConfigError("diagonal init needs generator hidden width >= feature dimension");
  }
  if (hidden.activation != Activation::Sigmoid || output.activation != Activation::Linear) {
    throw ConfigError("diagonal init needs a sigmoid hidden layer and linear output");
  }
  if (!(gain_value > 0.0)) throw ConfigError("diagonal init gain must be positive");
  const Scalar gain(gain_value);
  hidden.weight.leftCols(feature_dim).setZero();
  hidden.bias.setZero();
  output.weight.setZero();
  for (Eigen::Index j = 0; j < feature_dim; ++j) {
    hidden.weight(j, j) = gain;
    output.weight(j, j) = Scalar(4) / gain;
  }
  output.bias.setConstant(Scalar(-2) / gain);
}

template <typename Scalar = double>
CatganNets<Scalar> make_nets(const NetworkShape& shape, std::uint64_t seed) {
  if (shape.feature_dim < 1) throw ConfigError("feature dimension must be >= 1");
  if (shape.condition_dim < 0) throw ConfigError("condition dimension must be >= 0");
  const Eigen::Index in = shape.feature_dim + shape.condition_dim;
  const Eigen::Index d = shape.feature_dim;
  const auto gen = [&](std::uint64_t stream) {
    auto g = init_mlp<Scalar>({in, shape.gen_hidden(), d}, NetKind::Generator, derive_seed(seed, stream),
                              shape.generator_output);
    if (shape.diagonal_generators && shape.generator_output == Activation::Linear) {
      set_diagonal_init(g, d, shape.diagonal_gain);
    }
    return g;
  };
  const auto disc = [&](std::uint64_t stream) {
    return init_mlp<Scalar>({in, shape.disc_hidden1(), shape.disc_hidden2(), 1},
                            NetKind::Discriminator, derive_seed(seed, stream));
  };
  return {gen(0), gen(1), disc(2), disc(3)};
}

namespace detail {

template <typename Scalar>
void check_probabilities(const Matrix<Scalar>& p, const char* what) {
  if (p.cols() != 1 || p.rows() < 1) {
    throw ShapeError(std::string(what) + ": expected a non-empty column, got " + shape_of(p));
  }
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Scalar v = p(i, 0);
    if (!(v >= Scalar(0) && v <= Scalar(1))) {
      throw NumericError(std::string(what) + ": probability out of range at row " + std::to_string(i));
    }
  }
}

template <typename Scalar>
Scalar safe_log(Scalar p) {
  return std::log(std::max(p, Scalar(kLogFloor)));
}

/// d/dp of safe_log(p).
template <typename Scalar>
Scalar safe_log_grad(Scalar p) {
  return p > Scalar(kLogFloor) ? Scalar(1) / p : Scalar(0);
}

template <typename Scalar>
Scalar deviation_energy(const Matrix<Scalar>& diff, const LossOptions& opts) {
  const Scalar sq = diff.squaredNorm();
  return opts.raw_norm ? sq : sq / static_cast<Scalar>(diff.size());
}

/// Derivative of deviation_energy w.r.t. each entry of diff.
template <typename Scalar>
Matrix<Scalar> deviation_energy_grad(const Matrix<Scalar>& diff, const LossOptions& opts) {
  const Scalar k = opts.raw_norm ? Scalar(2) : Scalar(2) / static_cast<Scalar>(diff.size());
  return k * diff;
}

template <typename Scalar>
Scalar wrap(Scalar m, const LossOptions& opts) {
  return opts.unwrapped ? m : sigmoid(m);
}

template <typename Scalar>
Scalar wrap_grad(Scalar m, const LossOptions& opts) {
  if (opts.unwrapped) return Scalar(1);
  const Scalar s = sigmoid(m);
  return s * (Scalar(1) - s);
}

template <typename Scalar>
Matrix<Scalar> with_condition(const Matrix<Scalar>& x, const Matrix<Scalar>& cond) {
  if (cond.cols() == 0) return x;
  if (cond.rows() != x.rows()) {
    throw ShapeError("condition rows " + std::to_string(cond.rows()) + " != feature rows " +
                     std::to_string(x.rows()));
  }
  Matrix<Scalar> out(x.rows(), x.cols() + cond.cols());
  out << x, cond;
  return out;
}

}  // namespace detail

/// -mean(log real) - mean(log(1 - fake)). Serves both discriminators.
template <typename Scalar>
Scalar discriminator_loss(const Matrix<Scalar>& real_out, const Matrix<Scalar>& fake_out) {
  detail::check_probabilities(real_out, "discriminator_loss(real)");
  detail::check_probabilities(fake_out, "discriminator_loss(fake)");
  Scalar real_term = 0, fake_term = 0;
  for (Eigen::Index i = 0; i < real_out.rows(); ++i) real_term += detail::safe_log(real_out(i, 0));
  for (Eigen::Index i = 0; i < fake_out.rows(); ++i) fake_term += detail::safe_log(Scalar(1) - fake_out(i, 0));
  return -real_term / static_cast<Scalar>(real_out.rows()) - fake_term / static_cast<Scalar>(fake_out.rows());
}

/// -mean(log fake). Serves both generator adversarial terms.
template <typename Scalar>
Scalar generator_gan_loss(const Matrix<Scalar>& fake_out) {
  detail::check_probabilities(fake_out, "generator_gan_loss");
  Scalar s = 0;
  for (Eigen::Index i = 0; i < fake_out.rows(); ++i) s += detail::safe_log(fake_out(i, 0));
  return -s / static_cast<Scalar>(fake_out.rows());
}

/// sigmoid(mean squared deviation of every generated row from the domain
/// center). `center_rows` may hold a single row (broadcast) or one row per
/// sample.
template <typename Scalar>
Scalar domain_loss(const Matrix<Scalar>& generated, const Matrix<Scalar>& center_rows,
                   const LossOptions& opts = {}) {
  if (generated.cols() != center_rows.cols()) {
    throw ShapeError("domain_loss: generated " + shape_of(generated) + " vs center " + shape_of(center_rows));
  }
  if (generated.rows() < 1) throw ShapeError("domain_loss: empty batch");
  Matrix<Scalar> diff;
  if (center_rows.rows() == 1) {
    diff = generated.rowwise() - center_rows.row(0);
  } else if (center_rows.rows() == generated.rows()) {
    diff = generated - center_rows;
  } else {
    throw ShapeError("domain_loss: center rows must be 1 or match the batch");
  }
  return detail::wrap(detail::deviation_energy(diff, opts), opts);
}

template <typename Scalar>
Scalar domain_loss(const Matrix<Scalar>& generated, const DomainCenter<Scalar>& center,
                   const LossOptions& opts = {}) {
  return domain_loss(generated, Matrix<Scalar>(center.center), opts);
}

/// sigmoid(mean squared reconstruction error of a cycle).
template <typename Scalar>
Scalar content_loss(const Matrix<Scalar>& cycled, const Matrix<Scalar>& original,
                    const LossOptions& opts = {}) {
  if (cycled.rows() != original.rows() || cycled.cols() != original.cols()) {
    throw ShapeError("content_loss: " + shape_of(cycled) + " vs " + shape_of(original));
  }
  if (cycled.size() == 0) throw ShapeError("content_loss: empty batch");
  return detail::wrap(detail::deviation_energy<Scalar>(cycled - original, opts), opts);
}

/// One side of a training step: domain features, optional one-hot condition,
/// and for each row the center of the opposite domain that its generated
/// counterpart is pulled toward.
template <typename Scalar>
struct DomainBatch {
  Matrix<Scalar> x;
  Matrix<Scalar> cond;
  Matrix<Scalar> co_center;

  Eigen::Index rows() const { return x.rows(); }
};

template <typename Scalar>
DomainBatch<Scalar> make_batch(const Matrix<Scalar>& x, const DomainCenter<Scalar>& co_center) {
  if (x.cols() != co_center.center.size()) {
    throw ShapeError("make_batch: features " + shape_of(x) + " vs center length " +
                     std::to_string(co_center.center.size()));
  }
  DomainBatch<Scalar> b;
  b.x = x;
  b.cond.resize(x.rows(), 0);
  b.co_center = co_center.center.replicate(x.rows(), 1);
  return b;
}

/// Components of one way's generator objective.
template <typename Scalar>
struct WayObjective {
  Scalar gan = 0;
  Scalar domain = 0;
  Scalar content = 0;
  Scalar total() const { return gan + domain + content; }
};

namespace detail {

/// Forward-only evaluation of one way: generate with `forward_gen`, score with
/// `disc`, pull toward the batch's co-centers, and close the cycle through
/// `backward_gen`.
template <typename Scalar>
WayObjective<Scalar> way_objective(const Mlp<Scalar>& forward_gen, const Mlp<Scalar>& backward_gen,
                                   const Mlp<Scalar>& disc, const DomainBatch<Scalar>& batch,
                                   const LossOptions& opts) {
  const Matrix<Scalar> generated = apply(forward_gen, with_condition(batch.x, batch.cond));
  const Matrix<Scalar> cycled = apply(backward_gen, with_condition(generated, batch.cond));
  WayObjective<Scalar> w;
  w.gan = generator_gan_loss(apply(disc, with_condition(generated, batch.cond)));
  w.domain = domain_loss(generated, batch.co_center, opts);
  w.content = content_loss(cycled, batch.x, opts);
  return w;
}

template <typename Scalar>
Scalar discriminator_objective(const Mlp<Scalar>& gen, const Mlp<Scalar>& disc,
                               const DomainBatch<Scalar>& real, const DomainBatch<Scalar>& from) {
  const Matrix<Scalar> fake = apply(gen, with_condition(from.x, from.cond));
  return discriminator_loss(apply(disc, with_condition(real.x, real.cond)),
                            apply(disc, with_condition(fake, from.cond)));
}

}  // namespace detail

/// L_G_ST = L_GANT + L_CON_DomainT + L_CON_STS for the source batch.
template <typename Scalar>
WayObjective<Scalar> generator_objective_way1(const CatganNets<Scalar>& nets, const DomainBatch<Scalar>& source,
                                              const LossOptions& opts = {}) {
  return detail::way_objective(nets.g_st, nets.g_ts, nets.d_t, source, opts);
}

template <typename Scalar>
WayObjective<Scalar> generator_objective_way1(const CatganNets<Scalar>& nets, const Matrix<Scalar>& x_s,
                                              const DomainCenter<Scalar>& target_center,
                                              const LossOptions& opts = {}) {
  return generator_objective_way1(nets, make_batch(x_s, target_center), opts);
}

/// L_G_TS = L_GANS + L_CON_DomainS + L_CON_TST for the target batch.
template <typename Scalar>
WayObjective<Scalar> generator_objective_way2(const CatganNets<Scalar>& nets, const DomainBatch<Scalar>& target,
                                              const LossOptions& opts = {}) {
  return detail::way_objective(nets.g_ts, nets.g_st, nets.d_s, target, opts);
}

template <typename Scalar>
WayObjective<Scalar> generator_objective_way2(const CatganNets<Scalar>& nets, const Matrix<Scalar>& x_t,
                                              const DomainCenter<Scalar>& source_center,
                                              const LossOptions& opts = {}) {
  return generator_objective_way2(nets, make_batch(x_t, source_center), opts);
}

/// Every term of the complete model on one pair of batches.
template <typename Scalar>
LossBreakdown<Scalar> total_losses(const CatganNets<Scalar>& nets, const DomainBatch<Scalar>& source,
                                   const DomainBatch<Scalar>& target, const LossOptions& opts = {}) {
  const auto w1 = generator_objective_way1(nets, source, opts);
  const auto w2 = generator_objective_way2(nets, target, opts);
  LossBreakdown<Scalar> out;
  out.gan_t = w1.gan;
  out.domain_t = w1.domain;
  out.content_sts = w1.content;
  out.gan_s = w2.gan;
  out.domain_s = w2.domain;
  out.content_tst = w2.content;
  out.d_t_loss = detail::discriminator_objective(nets.g_st, nets.d_t, target, source);
  out.d_s_loss = detail::discriminator_objective(nets.g_ts, nets.d_s, source, target);
  return out;
}

/// Centers are those of the full training sets, passed in by the caller.
template <typename Scalar>
LossBreakdown<Scalar> total_losses(const CatganNets<Scalar>& nets, const Matrix<Scalar>& x_s,
                                   const Matrix<Scalar>& x_t, const DomainCenter<Scalar>& source_center,
                                   const DomainCenter<Scalar>& target_center, const LossOptions& opts = {}) {
  return total_losses(nets, make_batch(x_s, target_center), make_batch(x_t, source_center), opts);
}

/// Pure forward pass of one generator.
template <typename Scalar>
Matrix<Scalar> generate(const Mlp<Scalar>& net, const Matrix<Scalar>& x) {
  return apply(net, x);
}

// ---------------------------------------------------------------------------
// Gradients

/// Multipliers on the six generator terms; 0 removes a term from the step.
template <typename Scalar>
struct TermWeights {
  Scalar gan_t = 1, domain_t = 1, content_sts = 1;
  Scalar gan_s = 1, domain_s = 1, content_tst = 1;
};

template <typename Scalar>
struct GeneratorPass {
  LossBreakdown<Scalar> losses;  // generator terms only
  Gradients<Scalar> g_st;
  Gradients<Scalar> g_ts;
};

template <typename Scalar>
struct DiscriminatorPass {
  Scalar d_t_loss = 0;
  Scalar d_s_loss = 0;
  Gradients<Scalar> d_t;
  Gradients<Scalar> d_s;
};

namespace detail {

/// Runs one way forward and back. Gradients for the forward generator land in
/// `fwd_grads`, those for the cycle generator in `cyc_grads`.
template <typename Scalar>
WayObjective<Scalar> way_backprop(const Mlp<Scalar>& forward_gen, const Mlp<Scalar>& backward_gen,
                                  const Mlp<Scalar>& disc, const DomainBatch<Scalar>& batch,
                                  const LossOptions& opts, Scalar w_gan, Scalar w_domain, Scalar w_content,
                                  Gradients<Scalar>& fwd_grads, Gradients<Scalar>& cyc_grads) {
  const Eigen::Index n = batch.rows();
  const Eigen::Index d = batch.x.cols();
  if (batch.co_center.rows() != n || batch.co_center.cols() != forward_gen.out_dim()) {
    throw ShapeError("way_backprop: co_center " + shape_of(batch.co_center) + " does not match batch");
  }
  WayObjective<Scalar> out;

  auto [generated, gen_cache] = forward(forward_gen, with_condition(batch.x, batch.cond));
  Matrix<Scalar> d_generated = Matrix<Scalar>::Zero(generated.rows(), generated.cols());

  // adversarial term
  auto [p, disc_cache] = forward(disc, with_condition(generated, batch.cond));
  out.gan = generator_gan_loss(p);
  if (w_gan != Scalar(0)) {
    Matrix<Scalar> dp(p.rows(), 1);
    for (Eigen::Index i = 0; i < p.rows(); ++i) dp(i, 0) = -w_gan * safe_log_grad(p(i, 0)) / static_cast<Scalar>(n);
    auto [unused, d_in] = backward(disc, disc_cache, dp);
    d_generated += d_in.leftCols(generated.cols());
  }

  // domain term
  const Matrix<Scalar> dev = generated - batch.co_center;
  const Scalar m_dom = deviation_energy(dev, opts);
  out.domain = wrap(m_dom, opts);
  if (w_domain != Scalar(0)) {
    d_generated += (w_domain * wrap_grad(m_dom, opts)) * deviation_energy_grad(dev, opts);
  }

  // content term through the cycle generator
  auto [cycled, cyc_cache] = forward(backward_gen, with_condition(generated, batch.cond));
  if (cycled.cols() != d) throw ShapeError("way_backprop: cycle output width mismatch");
  const Matrix<Scalar> rec = cycled - batch.x;
  const Scalar m_con = deviation_energy(rec, opts);
  out.content = wrap(m_con, opts);
  if (w_content != Scalar(0)) {
    const Matrix<Scalar> d_cycled = (w_content * wrap_grad(m_con, opts)) * deviation_energy_grad(rec, opts);
    auto [g_cyc, d_in] = backward(backward_gen, cyc_cache, d_cycled);
    cyc_grads += g_cyc;
    d_generated += d_in.leftCols(generated.cols());
  }

  auto [g_fwd, unused_dx] = backward(forward_gen, gen_cache, d_generated);
  fwd_grads += g_fwd;
  return out;
}

template <typename Scalar>
Scalar discriminator_backprop(const Mlp<Scalar>& gen, const Mlp<Scalar>& disc, const DomainBatch<Scalar>& real,
                              const DomainBatch<Scalar>& from, Gradients<Scalar>& grads) {
  // generated batch is detached: no gradient reaches `gen`
  const Matrix<Scalar> fake = apply(gen, with_condition(from.x, from.cond));
  auto [p_real, cache_real] = forward(disc, with_condition(real.x, real.cond));
  auto [p_fake, cache_fake] = forward(disc, with_condition(fake, from.cond));
  const Scalar loss = discriminator_loss(p_real, p_fake);

  const auto nr = static_cast<Scalar>(p_real.rows());
  const auto nf = static_cast<Scalar>(p_fake.rows());
  Matrix<Scalar> d_real(p_real.rows(), 1), d_fake(p_fake.rows(), 1);
  for (Eigen::Index i = 0; i < p_real.rows(); ++i) d_real(i, 0) = -safe_log_grad(p_real(i, 0)) / nr;
  for (Eigen::Index i = 0; i < p_fake.rows(); ++i) d_fake(i, 0) = safe_log_grad(Scalar(1) - p_fake(i, 0)) / nf;
  grads += backward(disc, cache_real, d_real).first;
  grads += backward(disc, cache_fake, d_fake).first;
  return loss;
}

}  // namespace detail

/// Gradient of the weighted generator objective L_G w.r.t. both generators.
/// Content terms differentiate through both generators of the cycle.
template <typename Scalar>
GeneratorPass<Scalar> generator_gradients(const CatganNets<Scalar>& nets, const DomainBatch<Scalar>& source,
                                          const DomainBatch<Scalar>& target, const LossOptions& opts = {},
                                          const TermWeights<Scalar>& w = {}) {
  GeneratorPass<Scalar> pass;
  pass.g_st = Gradients<Scalar>::zeros_like(nets.g_st);
  pass.g_ts = Gradients<Scalar>::zeros_like(nets.g_ts);
  const auto w1 = detail::way_backprop(nets.g_st, nets.g_ts, nets.d_t, source, opts, w.gan_t, w.domain_t,
                                       w.content_sts, pass.g_st, pass.g_ts);
  const auto w2 = detail::way_backprop(nets.g_ts, nets.g_st, nets.d_s, target, opts, w.gan_s, w.domain_s,
                                       w.content_tst, pass.g_ts, pass.g_st);
  pass.losses.gan_t = w1.gan;
  pass.losses.domain_t = w1.domain;
  pass.losses.content_sts = w1.content;
  pass.losses.gan_s = w2.gan;
  pass.losses.domain_s = w2.domain;
  pass.losses.content_tst = w2.content;
  return pass;
}

/// Gradient of L_D = L_D_T + L_D_S w.r.t. both discriminators, with generated
/// batches detached.
template <typename Scalar>
DiscriminatorPass<Scalar> discriminator_gradients(const CatganNets<Scalar>& nets,
                                                  const DomainBatch<Scalar>& source,
                                                  const DomainBatch<Scalar>& target) {
  DiscriminatorPass<Scalar> pass;
  pass.d_t = Gradients<Scalar>::zeros_like(nets.d_t);
  pass.d_s = Gradients<Scalar>::zeros_like(nets.d_s);
  pass.d_t_loss = detail::discriminator_backprop(nets.g_st, nets.d_t, target, source, pass.d_t);
  pass.d_s_loss = detail::discriminator_backprop(nets.g_ts, nets.d_s, source, target, pass.d_s);
  return pass;
}

}  // namespace catgan
