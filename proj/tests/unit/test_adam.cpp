#include <doctest.h>

#include <cmath>

#include "xlat/adam.hpp"
#include "xlat/tensor.hpp"

using namespace xlat;
using xlat::train::AdamHyper;
using xlat::train::AdamStateT;
using xlat::train::adam_step;

namespace {

// Hand-evaluated Adam recurrence in long double, from zeroed moments.
long double hand_adam(long double p0, long double g, int steps, long double lr,
                      long double b1, long double b2, long double eps) {
  long double m = 0, v = 0, p = p0;
  for (int t = 1; t <= steps; ++t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const long double mhat = m / (1 - powl(b1, t));
    const long double vhat = v / (1 - powl(b2, t));
    p -= lr * mhat / (sqrtl(vhat) + eps);
  }
  return p;
}

}  // namespace

TEST_CASE("adam first and second steps match the closed-form recurrence") {
  const AdamHyper hp{0.0002, 0.5, 0.999, 1e-8};

  Tensor<double> p({1}), g({1});
  p[0] = 0.0;
  g[0] = 2.0;
  AdamStateT<double> st;

  adam_step(p, g, st, hp);
  CHECK(st.t == 1);
  const double want1 = static_cast<double>(hand_adam(0.0L, 2.0L, 1, 0.0002L, 0.5L, 0.999L, 1e-8L));
  CHECK(std::fabs(p[0] - want1) < 1e-12);
  // First step moves by about -lr * sign(g).
  CHECK(p[0] == doctest::Approx(-0.0002).epsilon(1e-6));

  adam_step(p, g, st, hp);
  CHECK(st.t == 2);
  const double want2 = static_cast<double>(hand_adam(0.0L, 2.0L, 2, 0.0002L, 0.5L, 0.999L, 1e-8L));
  CHECK(std::fabs(p[0] - want2) < 1e-12);
}

TEST_CASE("zero gradient with fresh state leaves parameters unchanged") {
  const AdamHyper hp{0.0002, 0.5, 0.999, 1e-8};
  Tensor<double> p({3}), g({3});
  p[0] = 1.0;
  p[1] = -2.0;
  p[2] = 0.5;
  AdamStateT<double> st;
  adam_step(p, g, st, hp);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 0.5);
  CHECK(st.t == 1);
}

TEST_CASE("non-finite gradient rejects the step and leaves state untouched") {
  const AdamHyper hp{0.0002, 0.5, 0.999, 1e-8};
  Tensor<float> p({2}), g({2});
  p[0] = 1.0f;
  p[1] = 2.0f;
  g[0] = 0.5f;
  std::vector<nn::ParamRef<float>> refs{{"p", &p, &g}};
  auto st = AdamStateT<float>::init_like(refs);

  adam_step(refs, st, hp);
  const float p0 = p[0], p1 = p[1];
  const float m0 = st.m[0][0];
  CHECK(st.t == 1);

  g[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(refs, st, hp), NumericError);
  CHECK(st.t == 1);
  CHECK(p[0] == p0);
  CHECK(p[1] == p1);
  CHECK(st.m[0][0] == m0);

  g[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(adam_step(refs, st, hp), NumericError);
  CHECK(st.t == 1);
}

TEST_CASE("state must mirror the parameter list") {
  const AdamHyper hp;
  Tensor<float> p({2}), g({2});
  std::vector<nn::ParamRef<float>> refs{{"p", &p, &g}};
  AdamStateT<float> st;  // empty
  CHECK_THROWS_AS(adam_step(refs, st, hp), ContractError);

  st = AdamStateT<float>::init_like(refs);
  Tensor<float> bad_grad({3});
  refs[0].grad = &bad_grad;
  CHECK_THROWS_AS(adam_step(refs, st, hp), ContractError);
}

TEST_CASE("constant gradient drives the parameter toward -lr per step asymptotically") {
  const AdamHyper hp{0.01, 0.5, 0.999, 1e-8};
  Tensor<double> p({1}), g({1});
  g[0] = -3.0;
  AdamStateT<double> st;
  double prev = p[0];
  for (int i = 0; i < 50; ++i) {
    adam_step(p, g, st, hp);
    CHECK(p[0] > prev);  // negative gradient: parameter increases
    prev = p[0];
  }
  const double want = static_cast<double>(hand_adam(0.0L, -3.0L, 50, 0.01L, 0.5L, 0.999L, 1e-8L));
  CHECK(std::fabs(p[0] - want) < 1e-10);
}
