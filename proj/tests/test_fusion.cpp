// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "dmla/fusion.hpp"
#include "dmla/model.hpp"
#include "dmla/ops.hpp"
#include "support.hpp"

using namespace dmla;
using namespace dmla::testing;

namespace {

std::vector<double> softmax_ref(const std::vector<double>& x) {
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> e;
  double z = 0.0;
  for (double v : x) z += std::exp(v - m);
  for (double v : x) e.push_back(std::exp(v - m) / z);
  return e;
}

std::vector<double> col_mean(const Tensor& r) {
  std::vector<double> m(r.dim(1), 0.0);
  for (std::size_t i = 0; i < r.dim(0); ++i)
    for (std::size_t j = 0; j < r.dim(1); ++j) m[j] += r.at(i, j) / static_cast<double>(r.dim(0));
  return m;
}

std::vector<double> project(const std::vector<double>& x, const Tensor& P) {
  std::vector<double> y(P.dim(1), 0.0);
  for (std::size_t i = 0; i < P.dim(0); ++i)
    for (std::size_t j = 0; j < P.dim(1); ++j) y[j] += x[i] * P.at(i, j);
  return y;
}

ModelConfig small_config(Ablation ab = Ablation::none) {
  ModelConfig c;
  c.channels = 2;
  c.reduction = 1;
  c.embed_width = 3;
  c.hidden_width = 2;
  c.joint_width = 3;
  c.classes = 3;
  c.vocab_size = 6;
  c.ablation = ab;
  return c;
}

}  // namespace

TEST_CASE("semantic attention matches a direct evaluation") {
  Rng rng(1);
  const auto p = SemanticAttentionParams::init(4, 3, rng);
  const Tensor regions = random_tensor({5, 4}, rng);
  const Tensor words = random_tensor({6, 3}, rng);
  const SemanticAttention got = semantic_attention(regions, words, p);
  const auto q = project(col_mean(regions), p.visual_projection);
  std::vector<double> m;
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += p.score.at(j, 0) * q[j] * words.at(i, j);
    m.push_back(std::tanh(s));
  }
  const auto alpha = softmax_ref(m);
  CHECK(max_abs_diff(got.alpha.data(), alpha) < 1e-15);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 6; ++i) s += alpha[i] * words.at(i, j);
    CHECK(got.attended[j] == doctest::Approx(s).epsilon(1e-14));
  }
}

TEST_CASE("semantic attention is uniform for zero scores and identical words") {
  Rng rng(2);
  auto p = SemanticAttentionParams::init(4, 3, rng);
  const Tensor regions = random_tensor({5, 4}, rng);
  std::vector<double> rep;
  for (int i = 0; i < 4; ++i) rep.insert(rep.end(), {0.2, -0.7, 0.4});
  const SemanticAttention same = semantic_attention(regions, Tensor(Shape{4, 3}, rep), p);
  for (double a : same.alpha.data()) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));

  for (double& v : p.score.mutable_data()) v = 0.0;
  const Tensor words = random_tensor({4, 3}, rng);
  const SemanticAttention zero = semantic_attention(regions, words, p);
  const std::vector<double> mean = col_mean(words);
  for (double a : zero.alpha.data()) CHECK(a == 0.25);
  CHECK(max_abs_diff(zero.attended.data(), mean) < 1e-15);
  CHECK_THROWS_AS(semantic_attention(regions, random_tensor({4, 2}, rng), p), std::invalid_argument);
  CHECK_THROWS_AS(semantic_attention(random_tensor({5, 3}, rng), words, p), std::invalid_argument);
}

TEST_CASE("semantic attention: word permutation equivariance and convexity") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = SemanticAttentionParams::init(3, 4, rng);
    const Tensor regions = random_tensor({4, 3}, rng, 0, 2);
    const std::size_t S = 1 + rng.below(7);
    const Tensor words = random_tensor({S, 4}, rng);
    const SemanticAttention a = semantic_attention(regions, words, p);

    std::vector<std::size_t> perm(S);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<double> pw;
    for (std::size_t i : perm)
      for (std::size_t j = 0; j < 4; ++j) pw.push_back(words.at(i, j));
    const SemanticAttention b = semantic_attention(regions, Tensor(Shape{S, 4}, pw), p);
    for (std::size_t i = 0; i < S; ++i) CHECK(b.alpha[i] == a.alpha[perm[i]]);
    CHECK(max_abs_diff(a.attended.data(), b.attended.data()) < 1e-14);

    CHECK(total(a.alpha.data()) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = 1e300, hi = -1e300;
      for (std::size_t i = 0; i < S; ++i) {
        lo = std::min(lo, words.at(i, j));
        hi = std::max(hi, words.at(i, j));
      }
      CHECK(a.attended[j] >= lo - 1e-12);
      CHECK(a.attended[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("self-attention fusion matches a direct evaluation") {
  Rng rng(4);
  auto p = SelfAttentionParams::init(3, 4, 5, rng);
  p.bias.mutable_data()[0] = 0.2;
  const Tensor text = random_tensor({3}, rng);
  const Tensor regions = random_tensor({6, 4}, rng);
  const ModalityFusion got = self_attention_fuse(text, regions, p);
  const auto jt = project({text[0], text[1], text[2]}, p.text_projection);
  const auto jv = project(col_mean(regions), p.visual_projection);
  auto score = [&](const std::vector<double>& j) {
    double s = 0.2;
    for (std::size_t k = 0; k < 5; ++k) s += p.score.at(k, 0) * j[k];
    return std::tanh(s);
  };
  const auto u = softmax_ref({score(jt), score(jv)});
  CHECK(max_abs_diff(got.weights.data(), u) < 1e-15);
  CHECK(max_abs_diff(got.text_joint.data(), jt) < 1e-15);
  CHECK(max_abs_diff(got.visual_joint.data(), jv) < 1e-15);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(got.fused[k] == doctest::Approx(u[0] * jt[k] + u[1] * jv[k]).epsilon(1e-14));
    CHECK(got.fused[k] >= std::min(jt[k], jv[k]) - 1e-12);
    CHECK(got.fused[k] <= std::max(jt[k], jv[k]) + 1e-12);
  }
}

TEST_CASE("self-attention weights are even for zero scores or equal projections") {
  Rng rng(5);
  auto p = SelfAttentionParams::init(2, 2, 3, rng);
  p.visual_projection = p.text_projection.clone();
  const Tensor regions(Shape{2, 2}, {0.3, -0.5, 0.3, -0.5});
  const ModalityFusion same = self_attention_fuse(Tensor::vector({0.3, -0.5}), regions, p);
  CHECK(same.weights[0] == same.weights[1]);

  for (double& v : p.score.mutable_data()) v = 0.0;
  p.bias.mutable_data()[0] = 1.5;
  const ModalityFusion zero = self_attention_fuse(random_tensor({2}, rng), random_tensor({3, 2}, rng), p);
  CHECK(zero.weights[0] == 0.5);
  CHECK(zero.weights[1] == 0.5);
}

TEST_CASE("classifier examples") {
  ClassifierParams p{Tensor::zeros({4, 3}), Tensor::zeros({3})};
  Rng rng(6);
  const Tensor uniform = classify(random_tensor({4}, rng), p);
  for (double v : uniform.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  ClassifierParams two{Tensor::zeros({1, 2}), Tensor::vector({0.0, std::log(3.0)})};
  const Tensor probs = classify(Tensor::vector({0.7}), two);
  CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(probs[1] == doctest::Approx(0.75).epsilon(1e-15));

  ClassifierParams q = ClassifierParams::init(4, 3, rng);
  const Tensor x = random_tensor({4}, rng);
  const Tensor base = classify(x, q);
  for (double& b : q.bias.mutable_data()) b += 7.0;
  CHECK(max_abs_diff(classify(x, q).data(), base.data()) < 1e-15);
  CHECK_THROWS_AS(classify(random_tensor({5}, rng), q), std::invalid_argument);
}

TEST_CASE("ablation names") {
  for (Ablation a : ablation_table_order()) CHECK(parse_ablation(to_string(a)) == a);
  CHECK(ablation_table_order().back() == Ablation::none);
  CHECK(ablation_table_order().front() == Ablation::no_sa_ca);
  CHECK_THROWS_AS(parse_ablation("no_lstm"), std::invalid_argument);
}

TEST_CASE("forward produces probability vectors and attention records") {
  Rng rng(7);
  for (Ablation ab : ablation_table_order()) {
    const Model m = Model::init(small_config(ab), 11);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t H = 1 + rng.below(4), W = 1 + rng.below(4), S = 1 + rng.below(6);
      std::vector<std::size_t> tokens(S);
      for (auto& t : tokens) t = rng.below(6);
      const Prediction p = m.forward_map(random_tensor({H, W, 2}, rng, 0, 1), tokens);
      CHECK(p.probs.shape() == Shape{3});
      CHECK(total(p.probs.data()) == doctest::Approx(1.0).epsilon(1e-12));
      for (double v : p.probs.data()) CHECK(v >= 0.0);
      CHECK(p.attention.spatial.defined() == (ab != Ablation::no_sa_ca));
      CHECK(p.attention.words.defined() == (ab != Ablation::no_smatt));
      CHECK(p.attention.modality.defined() == (ab != Ablation::no_satt));
      if (p.attention.spatial.defined()) CHECK(p.attention.spatial.shape() == Shape{H, W, 1});
      if (p.attention.words.defined()) CHECK(p.attention.words.shape() == Shape{S});
    }
  }
}

TEST_CASE("ablation wiring widths and trainable sets") {
  const Model full = Model::init(small_config(), 3);
  const Model no_satt = Model::init(small_config(Ablation::no_satt), 3);
  CHECK(full.classifier_width() == 3);
  CHECK(no_satt.classifier_width() == 6);
  CHECK(no_satt.params().classifier.weights.shape() == Shape{6, 3});

  auto names = [](const Model& m) {
    std::vector<std::string> n;
    for (const auto& t : m.trainable_parameters()) n.push_back(t.name);
    return n;
  };
  auto has = [](const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
  };
  const auto nf = names(full);
  CHECK(has(nf, "channel.w0"));
  CHECK(has(nf, "semantic.score"));
  CHECK(has(nf, "self_attention.score"));
  CHECK_FALSE(has(nf, "embedding"));
  CHECK(has(nf, "backbone.0.kernel"));
  CHECK_FALSE(has(names(Model::init(small_config(Ablation::no_sa_ca), 3)), "spatial.kernel"));
  CHECK_FALSE(has(names(Model::init(small_config(Ablation::no_smatt), 3)), "semantic.visual_projection"));
  const auto ns = names(no_satt);
  CHECK_FALSE(has(ns, "self_attention.score"));
  CHECK(has(ns, "self_attention.text_projection"));

  ModelConfig frozen = small_config();
  frozen.backbone_trainable = false;
  frozen.embeddings_trainable = true;
  const auto nz = names(Model::init(frozen, 3));
  CHECK_FALSE(has(nz, "backbone.0.kernel"));
  CHECK(has(nz, "embedding"));

  // The no-SA/CA variant reads every location as a region.
  const Model raw = Model::init(small_config(Ablation::no_sa_ca), 3);
  Rng rng(8);
  const Tensor map = random_tensor({3, 2, 2}, rng);
  const std::vector<std::size_t> tok{1, 2};
  const Prediction p = raw.forward_map(map, tok);
  const Tensor words = lstm_forward(embed(tok, raw.params().embedding), raw.params().lstm);
  const SemanticAttention sem = semantic_attention(reshape(map, Shape{6, 2}), words, raw.params().semantic);
  CHECK(max_abs_diff(p.attention.words.data(), sem.alpha.data()) == 0.0);
}

TEST_CASE("dropout 0 in training mode equals evaluation, zero parameters give uniform output") {
  Rng rng(9);
  Model m = Model::init(small_config(), 5);
  const Tensor map = random_tensor({2, 2, 2}, rng, 0, 1);
  const std::vector<std::size_t> tok{3, 4, 1};
  const Prediction eval = m.forward_map(map, tok);
  const Prediction train0 = m.forward_map(map, tok, true, 0.0, 99);
  CHECK(max_abs_diff(eval.probs.data(), train0.probs.data()) == 0.0);
  const Prediction dropped = m.forward_map(map, tok, true, 0.5, 99);
  CHECK(max_abs_diff(eval.probs.data(), dropped.probs.data()) > 0.0);
  CHECK(max_abs_diff(dropped.probs.data(), m.forward_map(map, tok, true, 0.5, 99).probs.data()) == 0.0);

  for (const NamedTensor& t : m.all_parameters()) {
    Tensor x = t.tensor;
    for (double& v : x.mutable_data()) v = 0.0;
  }
  const Prediction zero = m.forward_map(map, tok);
  for (double v : zero.probs.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("visual region order does not change the fused prediction when attention is removed") {
  Rng rng(10);
  const Model m = Model::init(small_config(Ablation::no_sa_ca), 21);
  const Tensor map = random_tensor({2, 3, 2}, rng);
  std::vector<double> swapped(map.data().begin(), map.data().end());
  std::swap_ranges(swapped.begin(), swapped.begin() + 2, swapped.begin() + 8);
  const std::vector<std::size_t> tok{5, 2};
  const Tensor a = m.forward_map(map, tok).probs;
  const Tensor b = m.forward_map(Tensor(Shape{2, 3, 2}, swapped), tok).probs;
  CHECK(max_abs_diff(a.data(), b.data()) < 1e-15);
}

TEST_CASE("full pipeline gradient check") {
  Rng rng(11);
  for (Ablation ab : ablation_table_order()) {
    ModelConfig cfg = small_config(ab);
    cfg.embeddings_trainable = true;
    Model m = Model::init(cfg, 13);
    m.params().spatial.bias.mutable_data()[0] = 0.5;
    Tensor map = random_tensor({2, 2, 2}, rng, 0.2, 1.0, true);
    const std::vector<std::size_t> tok{2, 5, 1};
    std::vector<NamedTensor> params;
    for (const auto& t : m.trainable_parameters()) {
      if (t.name.rfind("backbone.", 0) != 0) params.push_back(t);
    }
    params.push_back({"map", map});
    const auto r = grad_check(params, [&] { return neg_log_prob(m.forward_map(map, tok).probs, 1); });
    INFO(to_string(ab), " ", r.where);
    CHECK(r.worst < 1e-6);
  }
}
