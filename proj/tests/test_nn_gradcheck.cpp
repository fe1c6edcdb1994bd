#include <doctest.h>

#include <memory>
#include <random>

#include "macgaze/nn.hpp"

using namespace macgaze;
using namespace macgaze::nn;

namespace {

MatX random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatX m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

/// Checks d(sum(c .* layer(x)))/d(params) and /d(x) against central
/// differences. Returns the worst relative error seen.
double check_layer(Layer& layer, const MatX& x, std::mt19937_64& rng) {
  MatX y = layer.forward(x, false);
  const MatX c = random_matrix(y.rows(), y.cols(), rng);

  std::vector<Param*> params;
  layer.collect_params(params);
  for (auto* p : params) p->zero_grad();

  layer.forward(x, false);
  const MatX dx_analytic = layer.backward(c);

  double worst = 0.0;
  for (auto* p : params) {
    const MatX analytic = p->grad;
    const MatX numeric = numeric_gradient(
        *p, [&] { return layer.forward(x, false).cwiseProduct(c).sum(); });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  // input gradient via a wrapper parameter
  Param px("x", x.rows(), x.cols());
  px.value = x;
  const MatX dx_numeric = numeric_gradient(
      px, [&] { return layer.forward(px.value, false).cwiseProduct(c).sum(); });
  worst = std::max(worst, relative_error(dx_analytic, dx_numeric));
  return worst;
}

}  // namespace

TEST_CASE("Conv1d gradients (stride and dilation variants)") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 4; ++rep) {
    const int c_in = 2 + rep % 2, c_out = 3, k = 3 + 2 * (rep % 2);
    const int dil = 1 + rep, stride = 1 + rep % 2;
    Conv1d conv("conv", c_in, c_out, ConvSpec{k, stride, dil, dil * (k - 1) / 2});
    conv.init_params(rng);
    const MatX x = random_matrix(c_in, 16, rng);
    CHECK(check_layer(conv, x, rng) < 1e-4);
  }
}

TEST_CASE("ConvTranspose1d gradients") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 4; ++rep) {
    const int k = 3 + 2 * (rep % 2), dil = 1 + rep % 3;
    ConvSpec spec = ConvSpec::same(k, dil, 2);
    for (int out_pad : {0, 1}) {
      ConvTranspose1d tconv("tconv", 3, 2, spec, out_pad);
      tconv.init_params(rng);
      const MatX x = random_matrix(3, 8, rng);
      CHECK(check_layer(tconv, x, rng) < 1e-4);
    }
  }
}

TEST_CASE("Dense gradients") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 3; ++rep) {
    Dense dense("fc", 5, 4);
    dense.init_params(rng);
    const MatX x = random_matrix(5, 1 + rep, rng);
    CHECK(check_layer(dense, x, rng) < 1e-4);
  }
}

TEST_CASE("SEGate gradients") {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 3; ++rep) {
    SEGate se("se", 8, 4);
    se.init_params(rng);
    const MatX x = random_matrix(8, 6, rng);
    CHECK(check_layer(se, x, rng) < 1e-4);
  }
}

TEST_CASE("SelfAttention gradients") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 3; ++rep) {
    SelfAttention attn("attn", 6, 4 + rep);
    attn.init_params(rng);
    const MatX x = random_matrix(6, 5, rng);
    CHECK(check_layer(attn, x, rng) < 1e-4);
  }
}

TEST_CASE("SelfAttention maps a zero sequence to zeros") {
  std::mt19937_64 rng(6);
  SelfAttention attn("attn", 4, 4);
  attn.init_params(rng);  // biases stay zero
  const MatX y = attn.forward(MatX::Zero(4, 7), false);
  CHECK(y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ResidualBlock gradients (eval mode)") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 3; ++rep) {
    ResidualBlock blk("blk", 3, 5, 3, 1 + rep, 1 + rep % 2, 0.1);
    blk.init_params(rng);
    const MatX x = random_matrix(3, 12, rng);
    CHECK(check_layer(blk, x, rng) < 1e-4);
  }
}

TEST_CASE("Dropout backward uses the forward mask") {
  std::mt19937_64 rng(8);
  Dropout drop(0.4);
  MatX mask(3, 4);
  std::bernoulli_distribution keep(0.6);
  for (Eigen::Index i = 0; i < 3; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) mask(i, j) = keep(rng) ? 1.0 / 0.6 : 0.0;
  drop.set_fixed_mask(mask);
  const MatX x = random_matrix(3, 4, rng);
  const MatX c = random_matrix(3, 4, rng);
  drop.forward(x, true);
  const MatX dx = drop.backward(c);

  Param px("x", 3, 4);
  px.value = x;
  const MatX dx_num = numeric_gradient(
      px, [&] { return drop.forward(px.value, true).cwiseProduct(c).sum(); });
  CHECK(relative_error(dx, dx_num) < 1e-4);
  // eval mode is the identity
  CHECK((drop.forward(x, false) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax stays on the simplex for arbitrary finite logits") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  for (int rep = 0; rep < 200; ++rep) {
    VecX logits(5);
    for (int i = 0; i < 5; ++i) logits[i] = u(rng);
    const VecX p = softmax(logits);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("cross_entropy gradient equals softmax minus one-hot") {
  std::mt19937_64 rng(10);
  VecX logits = random_matrix(4, 1, rng);
  VecX grad;
  cross_entropy(logits, 2, &grad);
  Param pl("logits", 4, 1);
  pl.value = logits;
  const MatX num = numeric_gradient(pl, [&] { return cross_entropy(pl.value.col(0), 2); });
  CHECK(relative_error(grad, num) < 1e-6);
  CHECK_THROWS_AS(cross_entropy(logits, 7), std::invalid_argument);
}

TEST_CASE("Adam descends a convex quadratic") {
  Param p("p", 2, 1);
  p.value << 5.0, -3.0;
  Adam adam({&p}, 0.05);
  for (int i = 0; i < 2000; ++i) {
    adam.zero_grad();
    p.grad = 2.0 * p.value;
    adam.step();
  }
  CHECK(p.value.cwiseAbs().maxCoeff() < 1e-2);
}
