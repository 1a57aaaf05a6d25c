// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "dmla/ops.hpp"
#include "dmla/tape.hpp"
#include "dmla/text.hpp"
#include "support.hpp"

using namespace dmla;
using namespace dmla::testing;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LstmGate scalar_gate(double w, double u, double b) {
  return LstmGate{Tensor(Shape{1, 1}, w), Tensor(Shape{1, 1}, u), Tensor(Shape{1}, b)};
}

LstmParams zero_lstm(std::size_t e, std::size_t h) {
  LstmGate g{Tensor::zeros({e, h}), Tensor::zeros({h, h}), Tensor::zeros({h})};
  return LstmParams{g, g, g, g};
}

}  // namespace

TEST_CASE("embed looks up rows and keeps row 0 at zero") {
  Rng rng(1);
  const EmbeddingMatrix E = EmbeddingMatrix::random(5, 3, false, rng);
  for (std::size_t j = 0; j < 3; ++j) CHECK(E.values.at(0, j) == 0.0);
  const std::vector<std::size_t> ids{4, 0, 2, 4};
  const Tensor X = embed(ids, E);
  CHECK(X.shape() == Shape{4, 3});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(X.at(i, j) == E.values.at(ids[i], j));

  const EmbeddingMatrix F = EmbeddingMatrix::from_values(Tensor::ones({3, 2}), true);
  CHECK(F.values.at(0, 1) == 0.0);
  CHECK(F.values.at(1, 1) == 1.0);
  CHECK(F.values.requires_grad());
}

TEST_CASE("embed reports the position of a bad id") {
  Rng rng(2);
  const EmbeddingMatrix E = EmbeddingMatrix::random(4, 2, false, rng);
  const std::vector<std::size_t> ids{1, 2, 9};
  try {
    (void)embed(ids, E);
    FAIL("expected out_of_range");
  } catch (const std::out_of_range& e) {
    const std::string msg = e.what();
    CHECK(msg.find('2') != std::string::npos);
    CHECK(msg.find('9') != std::string::npos);
  }
  CHECK_THROWS_AS(embed(std::vector<std::size_t>{}, E), std::invalid_argument);
}

TEST_CASE("lstm with zero parameters stays at zero") {
  Rng rng(3);
  const Tensor H = lstm_forward(random_tensor({5, 3}, rng), zero_lstm(3, 4));
  CHECK(H.shape() == Shape{5, 4});
  CHECK(total(H.data()) == 0.0);
}

TEST_CASE("lstm candidate bias only") {
  LstmParams p = zero_lstm(1, 1);
  p.candidate.bias = Tensor(Shape{1}, 0.8);
  const Tensor H = lstm_forward(Tensor::zeros({2, 1}), p);
  const double g = std::tanh(0.8);
  const double c1 = 0.5 * g, c2 = 0.5 * c1 + 0.5 * g;
  CHECK(H.at(0, 0) == doctest::Approx(0.5 * std::tanh(c1)).epsilon(1e-15));
  CHECK(H.at(1, 0) == doctest::Approx(0.5 * std::tanh(c2)).epsilon(1e-15));
}

TEST_CASE("lstm matches a scalar recurrence") {
  LstmParams p;
  p.in_gate = scalar_gate(0.3, -0.2, 0.1);
  p.forget_gate = scalar_gate(-0.4, 0.5, 1.0);
  p.out_gate = scalar_gate(0.7, 0.2, -0.3);
  p.candidate = scalar_gate(1.1, -0.6, 0.05);
  const std::vector<double> x{0.9, -1.3, 0.4};
  const Tensor H = lstm_forward(Tensor(Shape{3, 1}, x), p);
  double h = 0.0, c = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double i = sig(0.3 * x[t] - 0.2 * h + 0.1);
    const double f = sig(-0.4 * x[t] + 0.5 * h + 1.0);
    const double o = sig(0.7 * x[t] + 0.2 * h - 0.3);
    const double g = std::tanh(1.1 * x[t] - 0.6 * h + 0.05);
    c = f * c + i * g;
    h = o * std::tanh(c);
    CHECK(H.at(t, 0) == doctest::Approx(h).epsilon(1e-14));
  }
}

TEST_CASE("lstm states are bounded and causal") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t S = 1 + rng.below(10), e = 1 + rng.below(5), h = 1 + rng.below(6);
    const LstmParams p = LstmParams::init(e, h, rng);
    const Tensor X = random_tensor({S, e}, rng, -3, 3);
    const Tensor H = lstm_forward(X, p);
    CHECK(H.shape() == Shape{S, h});
    for (double v : H.data()) CHECK(std::abs(v) < 1.0);

    // Changing the last input leaves every earlier state bit-identical.
    std::vector<double> y(X.data().begin(), X.data().end());
    for (std::size_t j = 0; j < e; ++j) y[(S - 1) * e + j] += 1.0;
    const Tensor H2 = lstm_forward(Tensor(Shape{S, e}, y), p);
    for (std::size_t i = 0; i < (S - 1) * h; ++i) CHECK(H2.data()[i] == H.data()[i]);
  }
}

TEST_CASE("lstm init draws forget bias 1") {
  Rng rng(5);
  const LstmParams p = LstmParams::init(3, 4, rng);
  for (double v : p.forget_gate.bias.data()) CHECK(v == 1.0);
  for (double v : p.in_gate.bias.data()) CHECK(v == 0.0);
  CHECK(p.input_width() == 3);
  CHECK(p.hidden_width() == 4);
  CHECK_THROWS_AS(lstm_forward(Tensor::zeros({2, 5}), p), std::invalid_argument);
}

TEST_CASE("lstm gradient check") {
  Rng rng(6);
  LstmParams p = LstmParams::init(3, 2, rng);
  EmbeddingMatrix E = EmbeddingMatrix::random(6, 3, true, rng);
  const std::vector<std::size_t> ids{3, 1, 5, 0, 2};
  const Tensor w = random_tensor({5, 2}, rng);
  std::vector<NamedTensor> params{{"E", E.values}};
  for (const auto& [name, g] : {std::pair{"i", &p.in_gate}, {"f", &p.forget_gate}, {"o", &p.out_gate},
                                {"g", &p.candidate}}) {
    params.push_back({std::string(name) + ".W", g->input});
    params.push_back({std::string(name) + ".U", g->recurrent});
    params.push_back({std::string(name) + ".b", g->bias});
  }
  const auto r = grad_check(params, [&] { return sum(mul(lstm_forward(embed(ids, E), p), w)); });
  INFO(r.where);
  CHECK(r.worst < 1e-6);
}
