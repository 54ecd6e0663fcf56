#pragma once

#include "catgan/random.hpp"
#include "catgan/types.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace catgan {

enum class Activation { Sigmoid, Linear };
enum class NetKind { Generator, Discriminator };

template <typename Scalar>
struct Layer {
  Matrix<Scalar> weight;  // d_in x d_out
  RowVector<Scalar> bias;
  Activation activation = Activation::Linear;

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }

  bool operator==(const Layer& o) const {
    return activation == o.activation && weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           bias.size() == o.bias.size() && weight == o.weight && bias == o.bias;
  }
};

template <typename Scalar>
struct Mlp {
  std::vector<Layer<Scalar>> layers;
  NetKind kind = NetKind::Generator;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool operator==(const Mlp&) const = default;
};

template <typename Scalar>
struct LayerGradient {
  Matrix<Scalar> weight;
  RowVector<Scalar> bias;
};

template <typename Scalar>
struct Gradients {
  std::vector<LayerGradient<Scalar>> layers;

  static Gradients zeros_like(const Mlp<Scalar>& net) {
    Gradients g;
    g.layers.reserve(net.layers.size());
    for (const auto& l : net.layers) {
      g.layers.push_back({Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()),
                          RowVector<Scalar>::Zero(l.bias.size())});
    }
    return g;
  }

  Gradients& operator+=(const Gradients& other) {
    if (other.layers.size() != layers.size()) throw ShapeError("gradient layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += other.layers[i].weight;
      layers[i].bias += other.layers[i].bias;
    }
    return *this;
  }
};

/// Activations recorded by forward(): post[i] is the output of layer i.
template <typename Scalar>
struct ForwardCache {
  Matrix<Scalar> input;
  std::vector<Matrix<Scalar>> pre;
  std::vector<Matrix<Scalar>> post;
};

/// Logistic function with the exponent clamped to [-500, 500]. Results are
/// kept strictly inside (0, 1).
template <typename Scalar>
  requires std::floating_point<Scalar>
Scalar sigmoid(Scalar x) {
  const Scalar lim(500);
  x = std::clamp(x, -lim, lim);
  Scalar y;
  if (x >= Scalar(0)) {
    y = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    y = e / (Scalar(1) + e);
  }
  const Scalar top = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / Scalar(2);
  return std::clamp(y, std::numeric_limits<Scalar>::denorm_min(), top);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return sigmoid(v); });
}

namespace detail {

inline void check_dims(std::span<const Eigen::Index> dims, NetKind kind) {
  const std::size_t want = kind == NetKind::Generator ? 3 : 4;
  if (dims.size() != want) {
    throw ConfigError(std::string(kind == NetKind::Generator ? "generator" : "discriminator") +
                      " needs " + std::to_string(want) + " layer sizes, got " +
                      std::to_string(dims.size()));
  }
  for (auto d : dims) {
    if (d < 1) throw ConfigError("layer sizes must be >= 1");
  }
  if (kind == NetKind::Discriminator && dims.back() != 1) {
    throw ConfigError("discriminator output width must be 1");
  }
}

}  // namespace detail

/// Builds a generator (in, hidden, out) or discriminator (in, h1, h2, 1).
/// Weights are Glorot-uniform, biases zero. Hidden layers are sigmoid; the
/// discriminator output is sigmoid and the generator output uses
/// `generator_output`.
template <typename Scalar = double>
Mlp<Scalar> init_mlp(std::span<const Eigen::Index> dims, NetKind kind, std::uint64_t seed,
                     Activation generator_output = Activation::Linear) {
  detail::check_dims(dims, kind);
  Rng rng(seed);
  Mlp<Scalar> net;
  net.kind = kind;
  const std::size_t n_layers = dims.size() - 1;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const Eigen::Index din = dims[i];
    const Eigen::Index dout = dims[i + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(din + dout));
    Layer<Scalar> layer;
    layer.weight.resize(din, dout);
    for (Eigen::Index r = 0; r < din; ++r) {
      for (Eigen::Index c = 0; c < dout; ++c) layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-a, a));
    }
    layer.bias = RowVector<Scalar>::Zero(dout);
    const bool last = i + 1 == n_layers;
    if (!last) {
      layer.activation = Activation::Sigmoid;
    } else {
      layer.activation = kind == NetKind::Discriminator ? Activation::Sigmoid : generator_output;
    }
    net.layers.push_back(std::move(layer));
  }
  return net;
}

template <typename Scalar = double>
Mlp<Scalar> init_mlp(std::initializer_list<Eigen::Index> dims, NetKind kind, std::uint64_t seed,
                     Activation generator_output = Activation::Linear) {
  return init_mlp<Scalar>(std::span<const Eigen::Index>(dims.begin(), dims.size()), kind, seed,
                          generator_output);
}

template <typename Scalar>
std::pair<Matrix<Scalar>, ForwardCache<Scalar>> forward(const Mlp<Scalar>& net,
                                                        const Matrix<Scalar>& x) {
  if (net.layers.empty()) throw ShapeError("forward: network has no layers");
  if (x.cols() != net.in_dim()) {
    throw ShapeError("forward: input " + shape_of(x) + " but network expects " +
                     std::to_string(net.in_dim()) + " columns");
  }
  ForwardCache<Scalar> cache;
  cache.input = x;
  cache.pre.reserve(net.layers.size());
  cache.post.reserve(net.layers.size());
  const Matrix<Scalar>* in = &cache.input;
  for (const auto& layer : net.layers) {
    Matrix<Scalar> z = (*in) * layer.weight;
    z.rowwise() += layer.bias;
    cache.pre.push_back(std::move(z));
    if (layer.activation == Activation::Sigmoid) {
      cache.post.push_back(sigmoid(cache.pre.back()));
    } else {
      cache.post.push_back(cache.pre.back());
    }
    in = &cache.post.back();
  }
  return {cache.post.back(), std::move(cache)};
}

/// Forward pass without keeping the cache.
template <typename Scalar>
Matrix<Scalar> apply(const Mlp<Scalar>& net, const Matrix<Scalar>& x) {
  if (net.layers.empty()) throw ShapeError("apply: network has no layers");
  if (x.cols() != net.in_dim()) {
    throw ShapeError("apply: input " + shape_of(x) + " but network expects " +
                     std::to_string(net.in_dim()) + " columns");
  }
  Matrix<Scalar> h = x;
  for (const auto& layer : net.layers) {
    Matrix<Scalar> z = h * layer.weight;
    z.rowwise() += layer.bias;
    if (layer.activation == Activation::Sigmoid) {
      h = sigmoid(z);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

/// Reverse pass for a scalar loss whose derivative w.r.t. the network output
/// is `d_out`. Returns parameter gradients and the gradient w.r.t. the input.
template <typename Scalar>
std::pair<Gradients<Scalar>, Matrix<Scalar>> backward(const Mlp<Scalar>& net,
                                                      const ForwardCache<Scalar>& cache,
                                                      const Matrix<Scalar>& d_out) {
  const std::size_t n = net.layers.size();
  if (cache.post.size() != n || cache.pre.size() != n) {
    throw ShapeError("backward: cache has " + std::to_string(cache.post.size()) +
                     " layers, network has " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cache.post[i].cols() != net.layers[i].out_dim()) {
      throw ShapeError("backward: cache does not match layer " + std::to_string(i));
    }
  }
  if (cache.input.cols() != net.in_dim()) throw ShapeError("backward: cache input width mismatch");
  if (d_out.rows() != cache.post.back().rows() || d_out.cols() != cache.post.back().cols()) {
    throw ShapeError("backward: output gradient " + shape_of(d_out) + " but output is " +
                     shape_of(cache.post.back()));
  }

  Gradients<Scalar> grads;
  grads.layers.resize(n);
  Matrix<Scalar> delta = d_out;
  for (std::size_t k = n; k-- > 0;) {
    const auto& layer = net.layers[k];
    if (layer.activation == Activation::Sigmoid) {
      const auto& y = cache.post[k];
      delta = delta.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
    }
    const Matrix<Scalar>& in = k == 0 ? cache.input : cache.post[k - 1];
    grads.layers[k].weight = in.transpose() * delta;
    grads.layers[k].bias = delta.colwise().sum();
    delta = delta * layer.weight.transpose();
  }
  return {std::move(grads), std::move(delta)};
}

/// Momentum buffers, one per parameter, shaped like the network.
template <typename Scalar>
struct Velocity {
  Gradients<Scalar> buffers;

  static Velocity zeros_like(const Mlp<Scalar>& net) { return {Gradients<Scalar>::zeros_like(net)}; }
};

/// Heavy-ball SGD: v <- momentum*v - lr*g; p <- p + v. With momentum 0 this is
/// plain p <- p - lr*g. Nothing is modified if any gradient is non-finite.
template <typename Scalar>
void sgd_step(Mlp<Scalar>& net, const Gradients<Scalar>& grads, Scalar lr, Scalar momentum,
              Velocity<Scalar>& velocity) {
  if (!(lr > Scalar(0))) throw ConfigError("sgd_step: learning rate must be positive");
  if (!(momentum >= Scalar(0) && momentum < Scalar(1))) {
    throw ConfigError("sgd_step: momentum must lie in [0, 1)");
  }
  if (grads.layers.size() != net.layers.size()) throw ShapeError("sgd_step: gradient/network mismatch");
  if (velocity.buffers.layers.size() != net.layers.size()) {
    velocity = Velocity<Scalar>::zeros_like(net);
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& g = grads.layers[i];
    if (g.weight.rows() != net.layers[i].weight.rows() || g.weight.cols() != net.layers[i].weight.cols() ||
        g.bias.size() != net.layers[i].bias.size()) {
      throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(i));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw NumericError("sgd_step: non-finite gradient in layer " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& v = velocity.buffers.layers[i];
    v.weight = momentum * v.weight - lr * grads.layers[i].weight;
    v.bias = momentum * v.bias - lr * grads.layers[i].bias;
    net.layers[i].weight += v.weight;
    net.layers[i].bias += v.bias;
  }
}

template <typename Scalar>
void sgd_step(Mlp<Scalar>& net, const Gradients<Scalar>& grads, Scalar lr) {
  auto v = Velocity<Scalar>::zeros_like(net);
  sgd_step(net, grads, lr, Scalar(0), v);
}

}  // namespace catgan
