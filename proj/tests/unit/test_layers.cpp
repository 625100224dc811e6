#include <doctest.h>

#include <cmath>
#include <functional>

#include "support/finite_diff.hpp"
#include "support/naive_conv.hpp"
#include "xlat/layers.hpp"
#include "xlat/rng.hpp"

using namespace xlat;
using namespace xlat::nn;

namespace {

void randomize(Tensor<double>& t, SeededRng& rng, double scale = 1.0) {
  rng.fill_uniform(t, -scale, scale);
}

Tensor<double> random_probe(const Tensor<double>& like, SeededRng& rng) {
  Tensor<double> r(like.shape());
  rng.fill_uniform(r, -1, 1);
  return r;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d forward matches the naive oracle") {
  SeededRng rng(11);
  for (auto [cin, cout, size, k, s, p] :
       {std::array<int64_t, 6>{2, 3, 8, 4, 2, 1}, {1, 2, 6, 3, 1, 1},
        {3, 1, 5, 3, 2, 0}, {2, 2, 4, 4, 2, 1}}) {
    Conv2dT<double> conv(cin, cout, k, s, p);
    randomize(conv.weight, rng);
    randomize(conv.bias, rng);
    Tensor<double> x({2, cin, size, size});
    randomize(x, rng);
    auto got = conv.forward(x);
    auto want = oracle::conv2d_naive(x, conv.weight, conv.bias, s, p);
    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.numel(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-11));
  }
}

TEST_CASE("conv_transpose2d forward matches the naive oracle") {
  SeededRng rng(12);
  for (auto [cin, cout, size, k, s, p] :
       {std::array<int64_t, 6>{3, 2, 4, 4, 2, 1}, {2, 1, 3, 3, 2, 0},
        {1, 3, 5, 4, 2, 1}, {2, 2, 4, 3, 1, 1}}) {
    ConvTranspose2dT<double> deconv(cin, cout, k, s, p);
    randomize(deconv.weight, rng);
    randomize(deconv.bias, rng);
    Tensor<double> x({2, cin, size, size});
    randomize(x, rng);
    auto got = deconv.forward(x);
    auto want = oracle::conv_transpose2d_naive(x, deconv.weight, deconv.bias, s, p);
    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.numel(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-11));
  }
}

TEST_CASE("conv_transpose2d output size doubles with stride 2, kernel 4, pad 1") {
  ConvTranspose2dT<double> up(1, 1, 4, 2, 1);
  CHECK(up.out_size(4) == 8);
  CHECK(up.out_size(16) == 32);
  Conv2dT<double> down(1, 1, 4, 2, 1);
  CHECK(down.out_size(32) == 16);
  CHECK(down.out_size(8) == 4);
}

// Gradient checks: probe functional phi = <r, layer(x)>; backward(r) must
// match central differences for input and every parameter.

TEST_CASE("dense gradients match finite differences") {
  SeededRng rng(13);
  double worst = 0.0;
  int cases = 0;
  for (int it = 0; it < 30; ++it, ++cases) {
    const int64_t in = 1 + rng.uniform_int(4), out = 1 + rng.uniform_int(4);
    const int64_t batch = 1 + rng.uniform_int(2);
    DenseT<double> layer(in, out);
    randomize(layer.weight, rng);
    randomize(layer.bias, rng);
    Tensor<double> x({batch, in});
    randomize(x, rng);
    Tensor<double> r = random_probe(layer.forward(x), rng);

    auto phi = [&] { return dot(layer.forward(x), r); };
    layer.forward(x);
    layer.zero_grad();
    Tensor<double> dx = layer.backward(r);
    worst = std::max(worst, oracle::check_gradient(x, dx, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.weight, layer.grad_weight, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.bias, layer.grad_bias, phi).max_rel_err);
  }
  CHECK(worst <= 1e-3);
  CHECK(cases >= 30);
}

TEST_CASE("conv2d gradients match finite differences") {
  SeededRng rng(14);
  double worst = 0.0;
  for (int it = 0; it < 12; ++it) {
    const int64_t cin = 1 + rng.uniform_int(2), cout = 1 + rng.uniform_int(2);
    Conv2dT<double> layer(cin, cout, 3, 2, 1);
    randomize(layer.weight, rng);
    randomize(layer.bias, rng);
    Tensor<double> x({1 + rng.uniform_int(2), cin, 5, 5});
    randomize(x, rng);
    Tensor<double> r = random_probe(layer.forward(x), rng);

    auto phi = [&] { return dot(layer.forward(x), r); };
    layer.forward(x);
    layer.zero_grad();
    Tensor<double> dx = layer.backward(r);
    worst = std::max(worst, oracle::check_gradient(x, dx, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.weight, layer.grad_weight, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.bias, layer.grad_bias, phi).max_rel_err);
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
  SeededRng rng(15);
  double worst = 0.0;
  for (int it = 0; it < 12; ++it) {
    const int64_t cin = 1 + rng.uniform_int(2), cout = 1 + rng.uniform_int(2);
    ConvTranspose2dT<double> layer(cin, cout, 4, 2, 1);
    randomize(layer.weight, rng);
    randomize(layer.bias, rng);
    Tensor<double> x({1 + rng.uniform_int(2), cin, 3, 3});
    randomize(x, rng);
    Tensor<double> r = random_probe(layer.forward(x), rng);

    auto phi = [&] { return dot(layer.forward(x), r); };
    layer.forward(x);
    layer.zero_grad();
    Tensor<double> dx = layer.backward(r);
    worst = std::max(worst, oracle::check_gradient(x, dx, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.weight, layer.grad_weight, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.bias, layer.grad_bias, phi).max_rel_err);
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("batchnorm train-mode gradients match finite differences") {
  SeededRng rng(16);
  double worst = 0.0;
  for (int it = 0; it < 10; ++it) {
    const int64_t c = 1 + rng.uniform_int(2);
    BatchNorm2dT<double> layer(c);
    randomize(layer.gamma, rng);
    randomize(layer.beta, rng);
    Tensor<double> x({2, c, 2, 2});
    randomize(x, rng, 2.0);
    Tensor<double> r = random_probe(layer.forward(x), rng);

    auto phi = [&] { return dot(layer.forward(x), r); };
    layer.forward(x);
    layer.zero_grad();
    Tensor<double> dx = layer.backward(r);
    worst = std::max(worst, oracle::check_gradient(x, dx, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.gamma, layer.grad_gamma, phi).max_rel_err);
    worst = std::max(worst, oracle::check_gradient(layer.beta, layer.grad_beta, phi).max_rel_err);
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("activation gradients match finite differences") {
  SeededRng rng(17);
  double worst = 0.0;
  for (int it = 0; it < 20; ++it) {
    Tensor<double> x({2, 4});
    randomize(x, rng, 2.0);
    // keep away from the relu kink where the derivative jumps
    for (int64_t i = 0; i < x.numel(); ++i)
      if (std::fabs(x[i]) < 1e-2) x[i] = 0.1;

    {
      ReLUT<double> relu;
      Tensor<double> r = random_probe(relu.forward(x), rng);
      auto phi = [&] { return dot(relu.forward(x), r); };
      relu.forward(x);
      worst = std::max(worst, oracle::check_gradient(x, relu.backward(r), phi).max_rel_err);
    }
    {
      LeakyReLUT<double> lrelu(0.2);
      Tensor<double> r = random_probe(lrelu.forward(x), rng);
      auto phi = [&] { return dot(lrelu.forward(x), r); };
      lrelu.forward(x);
      worst = std::max(worst, oracle::check_gradient(x, lrelu.backward(r), phi).max_rel_err);
    }
    {
      TanhT<double> th;
      Tensor<double> r = random_probe(th.forward(x), rng);
      auto phi = [&] { return dot(th.forward(x), r); };
      th.forward(x);
      worst = std::max(worst, oracle::check_gradient(x, th.backward(r), phi).max_rel_err);
    }
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("embedding forward gathers rows and backward scatter-adds") {
  EmbeddingT<double> emb(3, 2);
  for (int64_t i = 0; i < 6; ++i) emb.table[i] = static_cast<double>(i);
  auto out = emb.forward({2, 0, 2});
  CHECK(out.at2(0, 0) == 4.0);
  CHECK(out.at2(0, 1) == 5.0);
  CHECK(out.at2(1, 0) == 0.0);
  CHECK(out.at2(2, 1) == 5.0);

  Tensor<double> g({3, 2});
  g.fill(1.0);
  emb.zero_grad();
  emb.backward(g);
  CHECK(emb.grad_table.at2(0, 0) == 1.0);
  CHECK(emb.grad_table.at2(1, 0) == 0.0);
  CHECK(emb.grad_table.at2(2, 0) == 2.0);  // two rows hit id 2

  CHECK_THROWS_AS((void)emb.forward({3}), DomainError);
  CHECK_THROWS_AS((void)emb.forward({-1}), DomainError);
}

TEST_CASE("tanh output is strictly inside (-1, 1) even at saturation") {
  TanhT<float> th;
  Tensor<float> x({4});
  x[0] = 100.0f;
  x[1] = -100.0f;
  x[2] = 0.0f;
  x[3] = 25.0f;
  auto y = th.forward(x);
  for (int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] > -1.0f);
    CHECK(y[i] < 1.0f);
  }
  CHECK(y[2] == 0.0f);
}

TEST_CASE("batchnorm inference mode is an affine map of running stats") {
  BatchNorm2dT<double> bn(1);
  bn.running_mean[0] = 2.0;
  bn.running_var[0] = 4.0;
  bn.gamma[0] = 3.0;
  bn.beta[0] = 1.0;
  bn.training = false;
  Tensor<double> x({1, 1, 1, 2});
  x[0] = 2.0;
  x[1] = 4.0;
  auto y = bn.forward(x);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(1.0 + 3.0 * 2.0 / std::sqrt(4.0 + 1e-5)).epsilon(1e-9));
  CHECK_THROWS_AS((void)bn.backward(y), ContractError);
}

TEST_CASE("batchnorm running stats blend with momentum 0.9") {
  BatchNorm2dT<double> bn(1);
  Tensor<double> x({2, 1, 1, 1});
  x[0] = 1.0;
  x[1] = 3.0;  // batch mean 2, biased var 1
  bn.forward(x);
  CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0).epsilon(1e-12));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0).epsilon(1e-12));
}
