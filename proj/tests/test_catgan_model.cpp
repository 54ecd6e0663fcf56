#include "catgan/catgan_model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace catgan;
using catgan::testing::check_gradients;
using catgan::testing::random_matrix;

namespace {

MatrixXd col(std::initializer_list<double> v) {
  MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Independent evaluations of each term with plain loops.
double oracle_disc(const MatrixXd& real, const MatrixXd& fake) {
  double a = 0, b = 0;
  for (Eigen::Index i = 0; i < real.rows(); ++i) a += std::log(real(i, 0));
  for (Eigen::Index i = 0; i < fake.rows(); ++i) b += std::log(1.0 - fake(i, 0));
  return -a / static_cast<double>(real.rows()) - b / static_cast<double>(fake.rows());
}

double oracle_gan(const MatrixXd& fake) {
  double a = 0;
  for (Eigen::Index i = 0; i < fake.rows(); ++i) a += std::log(fake(i, 0));
  return -a / static_cast<double>(fake.rows());
}

double oracle_mean_sq(const MatrixXd& x, const RowVectorXd& c) {
  double s = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) s += (x(i, j) - c(j)) * (x(i, j) - c(j));
  }
  return s / static_cast<double>(x.size());
}

double oracle_mse(const MatrixXd& a, const MatrixXd& b) {
  double s = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  }
  return s / static_cast<double>(a.size());
}

NetworkShape small_shape(Eigen::Index d, Eigen::Index cond = 0) {
  NetworkShape s;
  s.feature_dim = d;
  s.condition_dim = cond;
  s.diagonal_generators = false;
  return s;
}

CatganNets<double> random_nets(Rng& rng, Eigen::Index d, std::uint64_t seed, Eigen::Index cond = 0,
                               Activation out = Activation::Linear) {
  auto shape = small_shape(d, cond);
  shape.generator_output = out;
  shape.generator_hidden = 1 + static_cast<Eigen::Index>(rng.below(8));
  shape.discriminator_hidden1 = 1 + static_cast<Eigen::Index>(rng.below(8));
  shape.discriminator_hidden2 = 1 + static_cast<Eigen::Index>(rng.below(8));
  auto nets = make_nets<double>(shape, seed);
  for (auto* net : {&nets.g_st, &nets.g_ts, &nets.d_t, &nets.d_s}) catgan::testing::jitter_biases(*net, rng);
  return nets;
}

Mlp<double> linear_identity_generator(Eigen::Index d) {
  Mlp<double> g;
  g.kind = NetKind::Generator;
  for (int k = 0; k < 2; ++k) {
    Layer<double> l;
    l.weight = MatrixXd::Identity(d, d);
    l.bias = RowVectorXd::Zero(d);
    l.activation = Activation::Linear;
    g.layers.push_back(l);
  }
  return g;
}

void silence(Mlp<double>& disc) {
  disc.layers.back().weight.setZero();
  disc.layers.back().bias.setZero();
}

}  // namespace

TEST_CASE("domain_center is the column mean") {
  MatrixXd x(2, 2);
  x << 1, 3, 3, 5;
  const auto c = domain_center(x);
  CHECK(c.center(0) == 2.0);
  CHECK(c.center(1) == 4.0);

  MatrixXd one(1, 3);
  one << -1, 0.5, 7;
  CHECK(domain_center(one).center == one.row(0));

  Rng rng(3);
  const MatrixXd big = random_matrix(rng, 100, 5);
  const auto got = domain_center(big).center;
  for (Eigen::Index j = 0; j < 5; ++j) {
    double s = 0;
    for (Eigen::Index i = 0; i < 100; ++i) s += big(i, j);
    CHECK(got(j) == doctest::Approx(s / 100).epsilon(1e-14));
  }
  CHECK_THROWS_AS(domain_center(MatrixXd(0, 2)), ShapeError);
}

TEST_CASE("discriminator_loss examples") {
  CHECK(discriminator_loss(col({0.5, 0.5}), col({0.5, 0.5, 0.5})) ==
        doctest::Approx(2 * std::numbers::ln2).epsilon(1e-15));
  CHECK(discriminator_loss(col({1 - 1e-15}), col({1e-15})) < 1e-12);
  const MatrixXd real = col({0.9, 0.8}), fake = col({0.1, 0.3});
  const double hand = -(std::log(0.9) + std::log(0.8)) / 2 - (std::log(0.9) + std::log(0.7)) / 2;
  CHECK(discriminator_loss(real, fake) == doctest::Approx(hand).epsilon(1e-15));
  CHECK_THROWS_AS(discriminator_loss(col({1.2}), col({0.5})), NumericError);
  CHECK_THROWS_AS(discriminator_loss(col({0.5}), col({-0.1})), NumericError);
  CHECK_THROWS_AS(discriminator_loss(col({std::nan("")}), col({0.5})), NumericError);
}

TEST_CASE("generator_gan_loss examples") {
  CHECK(generator_gan_loss(col({1.0, 1.0})) == 0.0);
  CHECK(generator_gan_loss(col({0.5, 0.5})) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(generator_gan_loss(col({0.25, 0.75})) == doctest::Approx(0.8370).epsilon(1e-4));
  CHECK(generator_gan_loss(col({0.25, 0.75})) ==
        doctest::Approx(-(std::log(0.25) + std::log(0.75)) / 2).epsilon(1e-15));
  CHECK_THROWS_AS(generator_gan_loss(col({1.5})), NumericError);
  // the log floor keeps a zero probability finite
  CHECK(std::isfinite(generator_gan_loss(col({0.0}))));
}

TEST_CASE("domain_loss examples") {
  MatrixXd at_center(3, 2);
  at_center << 2, 4, 2, 4, 2, 4;
  DomainCenter<double> c{RowVectorXd(2)};
  c.center << 2, 4;
  CHECK(domain_loss(at_center, c) == 0.5);

  MatrixXd far = at_center.array() + 1e4;
  CHECK(domain_loss(far, c) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(domain_loss(far, c) < 1.0);

  MatrixXd x(2, 2);
  x << 2, 4, 0, 4;
  CHECK(domain_loss(x, c) == doctest::Approx(logistic(1.0)).epsilon(1e-15));
  CHECK(domain_loss(x, c) == doctest::Approx(0.7311).epsilon(1e-4));

  // raw_norm sums (4), unwrapped drops the sigmoid (1)
  CHECK(domain_loss(x, c, {true, false}) == doctest::Approx(logistic(4.0)).epsilon(1e-15));
  CHECK(domain_loss(x, c, {false, true}) == doctest::Approx(1.0).epsilon(1e-15));

  // per-row centers
  MatrixXd rows(2, 2);
  rows << 2, 4, 0, 4;
  CHECK(domain_loss(x, rows) == 0.5);
  CHECK_THROWS_AS(domain_loss(x, MatrixXd(MatrixXd::Zero(1, 3))), ShapeError);
  CHECK_THROWS_AS(domain_loss(x, MatrixXd(MatrixXd::Zero(3, 2))), ShapeError);
}

TEST_CASE("content_loss examples") {
  Rng rng(8);
  const MatrixXd x = random_matrix(rng, 4, 3);
  CHECK(content_loss(x, x) == 0.5);
  CHECK(content_loss(MatrixXd(x.array() + 1000.0), x) == doctest::Approx(1.0).epsilon(1e-15));
  MatrixXd shifted = x;
  shifted.col(0).array() += std::sqrt(3.0);  // MSE = 3 / 3 = 1
  CHECK(content_loss(shifted, x) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK_THROWS_AS(content_loss(x, MatrixXd(x.topRows(2))), ShapeError);
}

TEST_CASE("way objectives sum their three parts") {
  const WayObjective<double> a{0.6931, 0.5, 0.5};
  CHECK(a.total() == doctest::Approx(1.6931).epsilon(1e-15));
  const WayObjective<double> b{0.2, 0.5, 0.9};
  CHECK(b.total() == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("identity generators on samples at the target center") {
  Rng rng(1);
  auto nets = random_nets(rng, 3, 5);
  nets.g_st = linear_identity_generator(3);
  nets.g_ts = linear_identity_generator(3);
  DomainCenter<double> tc{RowVectorXd(3)};
  tc.center << 1, -2, 0.5;
  const MatrixXd x_s = tc.center.replicate(6, 1);
  const auto w = generator_objective_way1(nets, x_s, tc);
  CHECK(w.domain == 0.5);
  CHECK(w.content == 0.5);
  CHECK(w.total() == doctest::Approx(1.0 + generator_gan_loss(apply(nets.d_t, x_s))).epsilon(1e-15));
}

TEST_CASE("total_losses with silent discriminators") {
  Rng rng(2);
  auto nets = random_nets(rng, 2, 6);
  silence(nets.d_t);
  silence(nets.d_s);
  const MatrixXd x_s = random_matrix(rng, 5, 2), x_t = random_matrix(rng, 7, 2);
  const auto l = total_losses(nets, x_s, x_t, domain_center(x_s), domain_center(x_t));
  CHECK(l.discriminator_total() == doctest::Approx(4 * std::numbers::ln2).epsilon(1e-15));
  CHECK(l.gan_t == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(l.gan_s == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("total_losses matches a term-by-term oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(5));
    auto nets = random_nets(rng, d, 300 + trial);
    const MatrixXd x_s = random_matrix(rng, 2 + static_cast<Eigen::Index>(rng.below(6)), d);
    const MatrixXd x_t = random_matrix(rng, 2 + static_cast<Eigen::Index>(rng.below(6)), d, 2.0);
    const RowVectorXd cs = x_s.colwise().mean(), ct = x_t.colwise().mean();
    const auto l = total_losses(nets, x_s, x_t, DomainCenter<double>{cs}, DomainCenter<double>{ct});

    const MatrixXd x_st = apply(nets.g_st, x_s), x_ts = apply(nets.g_ts, x_t);
    const MatrixXd x_sts = apply(nets.g_ts, x_st), x_tst = apply(nets.g_st, x_ts);
    CHECK(l.gan_t == doctest::Approx(oracle_gan(apply(nets.d_t, x_st))).epsilon(1e-13));
    CHECK(l.gan_s == doctest::Approx(oracle_gan(apply(nets.d_s, x_ts))).epsilon(1e-13));
    CHECK(l.domain_t == doctest::Approx(logistic(oracle_mean_sq(x_st, ct))).epsilon(1e-13));
    CHECK(l.domain_s == doctest::Approx(logistic(oracle_mean_sq(x_ts, cs))).epsilon(1e-13));
    CHECK(l.content_sts == doctest::Approx(logistic(oracle_mse(x_sts, x_s))).epsilon(1e-13));
    CHECK(l.content_tst == doctest::Approx(logistic(oracle_mse(x_tst, x_t))).epsilon(1e-13));
    CHECK(l.d_t_loss == doctest::Approx(oracle_disc(apply(nets.d_t, x_t), apply(nets.d_t, x_st))).epsilon(1e-13));
    CHECK(l.d_s_loss == doctest::Approx(oracle_disc(apply(nets.d_s, x_s), apply(nets.d_s, x_ts))).epsilon(1e-13));

    const double lg = l.gan_t + l.domain_t + l.content_sts + l.gan_s + l.domain_s + l.content_tst;
    CHECK(std::abs(l.generator_total() - lg) <= 1e-12);
    CHECK(std::abs(l.discriminator_total() - (l.d_t_loss + l.d_s_loss)) <= 1e-12);

    const auto w1 = generator_objective_way1(nets, x_s, DomainCenter<double>{ct});
    const auto w2 = generator_objective_way2(nets, x_t, DomainCenter<double>{cs});
    CHECK(w1.total() == l.way1());
    CHECK(w2.total() == l.way2());
  }
}

TEST_CASE("swapping domains and networks swaps the breakdown") {
  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    auto nets = random_nets(rng, d, 40 + trial);
    const MatrixXd x_s = random_matrix(rng, 4, d), x_t = random_matrix(rng, 6, d, 1.5);
    const auto cs = domain_center(x_s), ct = domain_center(x_t);
    const auto a = total_losses(nets, x_s, x_t, cs, ct);
    const auto b = total_losses(nets.swapped(), x_t, x_s, ct, cs);
    CHECK(a.gan_t == b.gan_s);
    CHECK(a.gan_s == b.gan_t);
    CHECK(a.domain_t == b.domain_s);
    CHECK(a.domain_s == b.domain_t);
    CHECK(a.content_sts == b.content_tst);
    CHECK(a.content_tst == b.content_sts);
    CHECK(a.d_t_loss == b.d_s_loss);
    CHECK(a.d_s_loss == b.d_t_loss);
    CHECK(generator_objective_way2(nets.swapped(), x_s, ct).total() ==
          generator_objective_way1(nets, x_s, ct).total());
  }
}

TEST_CASE("make_nets shapes and conditioning widths") {
  NetworkShape s;
  s.feature_dim = 10;
  s.condition_dim = 4;
  const auto nets = make_nets<double>(s, 1);
  CHECK(nets.g_st.in_dim() == 14);
  CHECK(nets.g_ts.in_dim() == 14);
  CHECK(nets.g_st.out_dim() == 10);
  CHECK(nets.d_t.in_dim() == 14);
  CHECK(nets.d_t.layers[0].out_dim() == 10);
  CHECK(nets.d_t.layers[1].out_dim() == 5);
  CHECK(nets.d_t.out_dim() == 1);

  NetworkShape tiny;
  tiny.feature_dim = 2;
  const auto t = make_nets<double>(tiny, 1);
  CHECK(t.g_st.layers[0].out_dim() == 2);
  CHECK(t.d_s.layers[0].out_dim() == 4);
  CHECK(t.d_s.layers[1].out_dim() == 4);
  CHECK(make_nets<double>(tiny, 1) == t);
  CHECK_FALSE(make_nets<double>(tiny, 2) == t);
}

TEST_CASE("diagonal start is increasing per feature with unit slope at zero") {
  NetworkShape s;
  s.feature_dim = 3;
  const auto nets = make_nets<double>(s, 5);
  MatrixXd x = MatrixXd::Zero(1, 3);
  CHECK(apply(nets.g_st, x).cwiseAbs().maxCoeff() < 1e-15);
  for (Eigen::Index j = 0; j < 3; ++j) {
    MatrixXd up = x, down = x;
    up(0, j) = 1e-6;
    down(0, j) = -1e-6;
    const RowVectorXd slope = (apply(nets.g_st, up) - apply(nets.g_st, down)).row(0) / 2e-6;
    for (Eigen::Index k = 0; k < 3; ++k) CHECK(slope(k) == doctest::Approx(j == k ? 1.0 : 0.0).epsilon(1e-6));
  }
  MatrixXd ramp(5, 3);
  ramp << -2, 0, 0, -1, 0, 0, 0, 0, 0, 1, 0, 0, 2, 0, 0;
  const MatrixXd y = apply(nets.g_ts, ramp);
  for (Eigen::Index i = 1; i < 5; ++i) CHECK(y(i, 0) > y(i - 1, 0));

  s.diagonal_generators = false;
  CHECK_FALSE(make_nets<double>(s, 5).g_st == nets.g_st);
  CHECK(make_nets<double>(s, 5).d_t == nets.d_t);
}

TEST_CASE("the same generator instance serves both ways") {
  Rng rng(21);
  auto nets = random_nets(rng, 2, 9);
  const MatrixXd x_s = random_matrix(rng, 5, 2), x_t = random_matrix(rng, 5, 2);
  const auto cs = domain_center(x_s), ct = domain_center(x_t);
  const auto before = total_losses(nets, x_s, x_t, cs, ct);

  // one way-1 style update of g_st only
  auto w = TermWeights<double>{};
  w.gan_s = w.domain_s = w.content_tst = 0.0;
  const auto pass = generator_gradients(nets, make_batch(x_s, ct), make_batch(x_t, cs), {}, w);
  sgd_step(nets.g_st, pass.g_st, 0.5);
  const auto after = total_losses(nets, x_s, x_t, cs, ct);
  CHECK(after.content_tst != before.content_tst);
  CHECK(after.gan_s == before.gan_s);
  CHECK(after.domain_s == before.domain_s);
}

namespace {

using TermFn = double (*)(const LossBreakdown<double>&);

struct Term {
  const char* name;
  TermFn value;
  void (*select)(TermWeights<double>&);
};

const Term kTerms[] = {
    {"gan_t", [](const LossBreakdown<double>& l) { return l.gan_t; }, [](TermWeights<double>& w) { w.gan_t = 1; }},
    {"domain_t", [](const LossBreakdown<double>& l) { return l.domain_t; },
     [](TermWeights<double>& w) { w.domain_t = 1; }},
    {"content_sts", [](const LossBreakdown<double>& l) { return l.content_sts; },
     [](TermWeights<double>& w) { w.content_sts = 1; }},
    {"gan_s", [](const LossBreakdown<double>& l) { return l.gan_s; }, [](TermWeights<double>& w) { w.gan_s = 1; }},
    {"domain_s", [](const LossBreakdown<double>& l) { return l.domain_s; },
     [](TermWeights<double>& w) { w.domain_s = 1; }},
    {"content_tst", [](const LossBreakdown<double>& l) { return l.content_tst; },
     [](TermWeights<double>& w) { w.content_tst = 1; }},
};

DomainBatch<double> conditioned_batch(Rng& rng, Eigen::Index n, Eigen::Index d, int classes) {
  DomainBatch<double> b;
  b.x = random_matrix(rng, n, d);
  const auto labels = catgan::testing::random_labels(rng, static_cast<std::size_t>(n), classes);
  b.cond = catgan::testing::one_hot_rows(labels, classes);
  const MatrixXd centers = random_matrix(rng, classes, d);
  b.co_center.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) b.co_center.row(i) = centers.row(labels[static_cast<std::size_t>(i)]);
  return b;
}

}  // namespace

TEST_CASE("generator gradients of every term match central differences") {
  Rng rng(4242);
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const int classes = trial % 3 == 2 ? 3 : 0;
    const auto out = trial % 4 == 3 ? Activation::Sigmoid : Activation::Linear;
    auto nets = random_nets(rng, d, 900 + trial, classes, out);
    const LossOptions opts{trial % 5 == 1, trial % 5 == 4};
    DomainBatch<double> src, tgt;
    if (classes > 0) {
      src = conditioned_batch(rng, 5, d, classes);
      tgt = conditioned_batch(rng, 4, d, classes);
    } else {
      const MatrixXd x_s = random_matrix(rng, 5, d, 0.7), x_t = random_matrix(rng, 4, d, 0.7);
      src = make_batch(x_s, domain_center(x_t));
      tgt = make_batch(x_t, domain_center(x_s));
    }
    for (const auto& term : kTerms) {
      TermWeights<double> w{0, 0, 0, 0, 0, 0};
      term.select(w);
      const auto pass = generator_gradients(nets, src, tgt, opts, w);
      const auto loss = [&] { return term.value(total_losses(nets, src, tgt, opts)); };
      const auto a = check_gradients(nets.g_st, pass.g_st, loss);
      const auto b = check_gradients(nets.g_ts, pass.g_ts, loss);
      CAPTURE(trial);
      CAPTURE(std::string(term.name));
      CAPTURE(a.worst_analytic);
      CAPTURE(a.worst_numeric);
      CHECK(a.max_rel < 1e-4);
      CHECK(b.max_rel < 1e-4);
    }
    // all six at once with uneven weights
    const TermWeights<double> mixed{0.3, 1.7, 0.9, 1.1, 0.4, 2.0};
    const auto pass = generator_gradients(nets, src, tgt, opts, mixed);
    const auto weighted = [&] {
      const auto l = total_losses(nets, src, tgt, opts);
      return 0.3 * l.gan_t + 1.7 * l.domain_t + 0.9 * l.content_sts + 1.1 * l.gan_s + 0.4 * l.domain_s +
             2.0 * l.content_tst;
    };
    CHECK(check_gradients(nets.g_st, pass.g_st, weighted).max_rel < 1e-4);
    CHECK(check_gradients(nets.g_ts, pass.g_ts, weighted).max_rel < 1e-4);
  }
}

TEST_CASE("content terms reach both generators") {
  Rng rng(5);
  auto nets = random_nets(rng, 2, 17);
  const MatrixXd x_s = random_matrix(rng, 5, 2), x_t = random_matrix(rng, 5, 2);
  TermWeights<double> w{0, 0, 1, 0, 0, 0};
  const auto pass = generator_gradients(nets, make_batch(x_s, domain_center(x_t)), make_batch(x_t, domain_center(x_s)), {}, w);
  CHECK(pass.g_st.layers[0].weight.norm() > 0.0);
  CHECK(pass.g_ts.layers[0].weight.norm() > 0.0);

  TermWeights<double> only_gan{1, 0, 0, 0, 0, 0};
  const auto gan = generator_gradients(nets, make_batch(x_s, domain_center(x_t)), make_batch(x_t, domain_center(x_s)), {}, only_gan);
  CHECK(gan.g_ts.layers[0].weight.isZero(0.0));
}

TEST_CASE("discriminator gradients match central differences") {
  Rng rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    const int classes = trial % 2 == 1 ? 2 : 0;
    auto nets = random_nets(rng, d, 60 + trial, classes);
    DomainBatch<double> src, tgt;
    if (classes > 0) {
      src = conditioned_batch(rng, 6, d, classes);
      tgt = conditioned_batch(rng, 3, d, classes);
    } else {
      const MatrixXd x_s = random_matrix(rng, 6, d), x_t = random_matrix(rng, 3, d);
      src = make_batch(x_s, domain_center(x_t));
      tgt = make_batch(x_t, domain_center(x_s));
    }
    const auto pass = discriminator_gradients(nets, src, tgt);
    const auto l = total_losses(nets, src, tgt);
    CHECK(pass.d_t_loss == l.d_t_loss);
    CHECK(pass.d_s_loss == l.d_s_loss);
    CAPTURE(trial);
    CHECK(check_gradients(nets.d_t, pass.d_t, [&] { return total_losses(nets, src, tgt).d_t_loss; }).max_rel <
          1e-4);
    CHECK(check_gradients(nets.d_s, pass.d_s, [&] { return total_losses(nets, src, tgt).d_s_loss; }).max_rel <
          1e-4);
  }
}

TEST_CASE("loss ranges hold on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.below(4));
    auto nets = random_nets(rng, d, 7000 + trial);
    const double scale = std::pow(10.0, rng.uniform(-3, 2));
    const MatrixXd x_s = random_matrix(rng, 3, d, scale), x_t = random_matrix(rng, 3, d, scale);
    const auto l = total_losses(nets, x_s, x_t, domain_center(x_s), domain_center(x_t));
    REQUIRE(l.all_finite());
    for (double v : {l.domain_t, l.domain_s, l.content_sts, l.content_tst}) {
      CHECK(v >= 0.5);
      CHECK(v < 1.0);
    }
    for (double v : {l.gan_t, l.gan_s, l.d_t_loss, l.d_s_loss}) CHECK(v >= 0.0);
  }
}
