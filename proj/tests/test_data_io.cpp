// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "dmla/data_io.hpp"
#include "dmla/training.hpp"
#include "support.hpp"

using namespace dmla;
using namespace dmla::testing;

namespace {

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

// Two-class manifest with precomputed 2x2x3 maps written next to it.
DatasetManifest fixture(const TempDir& dir, std::size_t n) {
  Rng rng(5);
  write_file(dir / "vocab.txt", "<pad>\nfoo\nbar\nbaz\n");
  DatasetManifest m;
  m.classes = 2;
  m.class_names = {"negative", "positive"};
  m.vocabulary = "vocab.txt";
  for (std::size_t i = 0; i < n; ++i) {
    SampleRecord r;
    r.id = "r" + std::to_string(i);
    r.features = "f" + std::to_string(i) + ".dmlt";
    write_tensor(dir / r.features, random_tensor({2, 2, 3}, rng));
    r.tokens = {1 + i % 3, 2};
    r.label = i % 2;
    m.samples.push_back(r);
  }
  return m;
}

TrainConfig small_train_config() {
  TrainConfig c;
  c.channels = 4;
  c.reduction = 2;
  c.embed_width = 8;
  c.hidden_width = 4;
  c.joint_width = 6;
  return c;
}

}  // namespace

TEST_CASE("tensor container layout") {
  const Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
  const std::string bytes = encode_tensor(t);
  CHECK(bytes.size() == 52);
  CHECK(bytes.substr(0, 4) == "DMLT");
  CHECK(static_cast<unsigned char>(bytes[4]) == kTensorFormatVersion);
  CHECK(static_cast<unsigned char>(bytes[8]) == 2);
  CHECK(static_cast<unsigned char>(bytes[12]) == 2);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 20, 8);
  CHECK(first == 1.0);
}

TEST_CASE("tensor container round trips bit-exactly") {
  Rng rng(1);
  TempDir dir("tensor");
  for (int trial = 0; trial < 50; ++trial) {
    Shape shape;
    for (std::size_t r = 0, rank = 1 + rng.below(4); r < rank; ++r) shape.push_back(1 + rng.below(5));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(40)) - 20.0);
    const Tensor t(shape, v);
    const Tensor back = decode_tensor(encode_tensor(t));
    CHECK(back.shape() == t.shape());
    CHECK(std::memcmp(back.data().data(), t.data().data(), 8 * t.numel()) == 0);
    write_tensor(dir / "t.dmlt", t);
    CHECK(std::memcmp(read_tensor(dir / "t.dmlt").data().data(), t.data().data(), 8 * t.numel()) == 0);
  }
  CHECK_THROWS_AS(encode_tensor(Tensor::vector({1.0, std::nan("")})), std::invalid_argument);
}

TEST_CASE("tensor container errors carry byte offsets") {
  const std::string good = encode_tensor(Tensor::matrix({{1, 2}, {3, 4}}));
  auto offset_of = [](const std::string& bytes) -> long {
    try {
      (void)decode_tensor(bytes);
    } catch (const FormatError& e) {
      return static_cast<long>(e.offset());
    }
    return -1;
  };
  std::string bad = good;
  bad[0] = 'X';
  CHECK(offset_of(bad) == 0);
  bad = good;
  bad[4] = 9;
  CHECK(offset_of(bad) == 4);
  CHECK(offset_of(good.substr(0, 40)) == 40);
  CHECK(offset_of(good.substr(0, 14)) == 14);
  CHECK(offset_of(good + "x") == 52);
  CHECK(error_of([&] { (void)decode_tensor(good.substr(0, 40)); }).find("byte offset 40") != std::string::npos);

  TempDir dir("badtensor");
  write_file(dir / "cut.dmlt", good.substr(0, 30));
  CHECK_THROWS_AS(read_tensor(dir / "cut.dmlt"), FormatError);
  CHECK_THROWS(read_tensor(dir / "missing.dmlt"));
}

TEST_CASE("manifest round trip and loading") {
  TempDir dir("manifest");
  DatasetManifest m = fixture(dir, 6);
  m.samples[3].label.reset();
  m.samples[3].text_label = 0;
  m.samples[3].image_label = 0;
  write_manifest(dir / "manifest.json", m);
  CHECK(read_manifest(dir / "manifest.json") == m);

  const Dataset d = load_dataset(dir / "manifest.json");
  REQUIRE(d.size() == 6);
  CHECK(d.classes == 2);
  CHECK(d.vocabulary.size() == 4);
  CHECK(d.samples[2].id == "r2");
  CHECK(d.samples[2].visual.precomputed);
  CHECK(d.samples[2].visual.values.shape() == Shape{2, 2, 3});
  CHECK(d.samples[4].tokens == std::vector<std::size_t>{2, 2});
  CHECK(d.samples[3].label == 0);
  CHECK_FALSE(d.embeddings.has_value());
}

TEST_CASE("manifest errors") {
  TempDir dir("manifest_err");
  DatasetManifest m = fixture(dir, 4);
  DatasetManifest empty = m;
  empty.samples.clear();
  write_manifest(dir / "empty.json", empty);
  CHECK(error_of([&] { (void)load_dataset(dir / "empty.json"); }).find("empty dataset") != std::string::npos);

  DatasetManifest bad = m;
  bad.samples[2].label = 2;
  write_manifest(dir / "bad.json", bad);
  const std::string msg = error_of([&] { (void)load_dataset(dir / "bad.json"); });
  INFO(msg);
  CHECK(msg.find("r2") != std::string::npos);
  // Header lines, then one sample per line.
  CHECK(msg.find("bad.json:9:") != std::string::npos);

  bad = m;
  bad.samples[1].tokens = {1, 7};
  write_manifest(dir / "tok.json", bad);
  CHECK(error_of([&] { (void)load_dataset(dir / "tok.json"); }).find("r1") != std::string::npos);

  bad = m;
  bad.samples[0].features = "nowhere.dmlt";
  write_manifest(dir / "file.json", bad);
  CHECK(error_of([&] { (void)load_dataset(dir / "file.json"); }).find("nowhere.dmlt") != std::string::npos);

  write_file(dir / "syntax.json", "{\n  \"classes\": 2,\n  \"samples\": [\n  oops\n");
  CHECK(error_of([&] { (void)read_manifest(dir / "syntax.json"); }).find("syntax.json:4") != std::string::npos);
  CHECK(error_of([&] { (void)read_manifest(dir / "absent.json"); }).find("absent.json") != std::string::npos);
}

TEST_CASE("label conflict resolution") {
  const std::vector<std::string> names{"negative", "neutral", "positive"};
  CHECK(resolve_label_conflict(2, 2, names) == 2u);
  CHECK(resolve_label_conflict(1, 2, names) == 2u);
  CHECK(resolve_label_conflict(0, 1, names) == 0u);
  CHECK_FALSE(resolve_label_conflict(0, 2, names).has_value());

  TempDir dir("conflict");
  DatasetManifest m = fixture(dir, 4);
  m.classes = 3;
  m.class_names = names;
  m.samples[1].label.reset();
  m.samples[1].text_label = 0;
  m.samples[1].image_label = 2;
  m.samples[2].label.reset();
  m.samples[2].text_label = 1;
  m.samples[2].image_label = 2;
  write_manifest(dir / "m.json", m);
  std::size_t dropped = 0;
  const Dataset d = load_dataset(dir / "m.json", LoadOptions{true}, &dropped);
  CHECK(dropped == 1);
  CHECK(d.size() == 3);
  CHECK(d.samples[1].id == "r2");
  CHECK(d.samples[1].label == 2);
}

TEST_CASE("embedding file loading") {
  TempDir dir("emb");
  const std::vector<std::string> vocab{"<pad>", "cat", "dog", "owl", "yak"};
  write_file(dir / "e.txt", "dog 0.5 -1 2\ncat 1 2 3\nowl -0.25 0 1e-3\n");
  const EmbeddingLoad e = load_embeddings(dir / "e.txt", vocab);
  CHECK(e.values.shape() == Shape{5, 3});
  CHECK(e.missing == 1);
  const std::vector<double> want{0, 0, 0, 1, 2, 3, 0.5, -1, 2, -0.25, 0, 1e-3, 0, 0, 0};
  CHECK(max_abs_diff(e.values.data(), want) == 0.0);

  write_file(dir / "w.txt", "cat 1 2 3\ndog 1 2\n");
  const std::string msg = error_of([&] { (void)load_embeddings(dir / "w.txt", vocab); });
  CHECK(msg.find("w.txt:2") != std::string::npos);
  write_file(dir / "p.txt", "<pad> 9 9 9\ncat 1 2 3\n");
  CHECK(load_embeddings(dir / "p.txt", vocab).values.at(0, 0) == 0.0);
}

TEST_CASE("synthetic data is deterministic and balanced") {
  TempDir a("synth_a"), b("synth_b");
  const SynthSpec spec{3, 20, 11, 8};
  synth_generate(spec, a.path());
  synth_generate(spec, b.path());
  const auto ta = tree_contents(a.path()), tb = tree_contents(b.path());
  CHECK(ta.size() == 60 + 4);
  CHECK(ta == tb);

  const Dataset d = load_dataset(a / "manifest.json");
  const Dataset mem = synth_dataset(spec);
  REQUIRE(d.size() == mem.size());
  std::vector<std::size_t> counts(3);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ++counts[d.samples[i].label];
    CHECK(d.samples[i].tokens == mem.samples[i].tokens);
    CHECK(d.samples[i].label == mem.samples[i].label);
    CHECK(d.samples[i].visual.values.shape() == Shape{32, 32, 3});
    CHECK(max_abs_diff(d.samples[i].visual.values.data(), mem.samples[i].visual.values.data()) == 0.0);
    CHECK(d.samples[i].tokens.size() >= 5);
    CHECK(d.samples[i].tokens.size() <= 12);
  }
  CHECK(counts == std::vector<std::size_t>{20, 20, 20});
  CHECK(d.embeddings.has_value());
  CHECK(d.embeddings->dim(1) == 8);
}

TEST_CASE("synthetic data needs both modalities") {
  const Dataset d = synth_dataset(SynthSpec{});
  const SynthSelfTest t = synth_self_test(d);
  CHECK(t.majority_accuracy <= 1.0 / 3.0 + 0.02);
  CHECK(t.text_probe_accuracy < 0.7);
  CHECK(t.image_probe_accuracy < 0.7);
  CHECK(t.test_size == 90);
  const SynthSelfTest two = synth_self_test(synth_dataset(SynthSpec{2, 100, 3, 8}));
  CHECK(two.majority_accuracy <= 0.5 + 0.02);
  CHECK_THROWS_AS(synth_dataset(SynthSpec{5, 10, 1, 8}), std::invalid_argument);
}

TEST_CASE("attention export") {
  const Dataset d = synth_dataset(SynthSpec{3, 4, 2, 8});
  const Model m = Model::init(model_config_for(small_train_config(), d), 3, d.embeddings);
  const std::vector<AttentionDump> dumps = collect_attention(m, d);
  REQUIRE(dumps.size() == d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const AttentionDump& a = dumps[i];
    CHECK(a.id == d.samples[i].id);
    CHECK(a.truth == d.samples[i].label);
    CHECK(a.words.size() == d.samples[i].tokens.size());
    CHECK(a.word_weights.size() == a.words.size());
    CHECK(a.words[0] == d.vocabulary[d.samples[i].tokens[0]]);
    CHECK(std::abs(total(a.word_weights) - 1.0) < 1e-9);
    CHECK(std::abs(total(a.modality_weights) - 1.0) < 1e-9);
    CHECK(a.spatial_raw.size() == a.height * a.width);
    const double mx = *std::max_element(a.spatial_raw.begin(), a.spatial_raw.end());
    for (std::size_t k = 0; k < a.spatial_raw.size(); ++k) {
      CHECK(a.spatial_normalized[k] >= 0.0);
      CHECK(a.spatial_normalized[k] <= 1.0);
      if (mx > 0) CHECK(a.spatial_normalized[k] == a.spatial_raw[k] / mx);
    }
  }
  TempDir dir("attn");
  write_attention_jsonl(dir / "a.jsonl", dumps);
  const std::vector<AttentionDump> back = read_attention_jsonl(dir / "a.jsonl");
  REQUIRE(back.size() == dumps.size());
  for (std::size_t i = 0; i < dumps.size(); ++i) {
    CHECK(back[i].id == dumps[i].id);
    CHECK(back[i].words == dumps[i].words);
    CHECK(back[i].predicted == dumps[i].predicted);
    CHECK(max_abs_diff(back[i].word_weights, dumps[i].word_weights) < 1e-12);
    CHECK(max_abs_diff(back[i].modality_weights, dumps[i].modality_weights) < 1e-12);
    CHECK(max_abs_diff(back[i].spatial_raw, dumps[i].spatial_raw) < 1e-12);
  }
  write_file(dir / "bad.jsonl", slurp(dir / "a.jsonl") + "{not json}\n");
  CHECK(error_of([&] { (void)read_attention_jsonl(dir / "bad.jsonl"); }).find(":13") != std::string::npos);

  TrainConfig ab = small_train_config();
  ab.ablation = Ablation::no_smatt;
  const Model mab = Model::init(model_config_for(ab, d), 3, d.embeddings);
  const AttentionDump none = collect_attention(mab, d).front();
  CHECK(none.word_weights.empty());
  CHECK(none.words.size() == d.samples[0].tokens.size());
}

TEST_CASE("checkpoint round trip") {
  const Dataset d = synth_dataset(SynthSpec{3, 2, 4, 8});
  TrainConfig c = small_train_config();
  c.ablation = Ablation::no_satt;
  c.backbone_trainable = false;
  const Model m = Model::init(model_config_for(c, d), 9, d.embeddings);
  TempDir dir("ckpt");
  save_checkpoint(dir.path(), m);
  const Model back = load_checkpoint(dir.path());
  CHECK(to_json(back.config()) == to_json(m.config()));
  const auto pa = m.all_parameters(), pb = back.all_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(pa[i].tensor.requires_grad() == pb[i].tensor.requires_grad());
    CHECK(std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(), 8 * pa[i].tensor.numel()) == 0);
  }
  const Prediction p1 = m.forward(d.samples[0].visual, d.samples[0].tokens);
  const Prediction p2 = back.forward(d.samples[0].visual, d.samples[0].tokens);
  CHECK(max_abs_diff(p1.probs.data(), p2.probs.data()) == 0.0);

  write_tensor(dir / "classifier.bias.dmlt", Tensor::zeros({7}));
  CHECK_THROWS(load_checkpoint(dir.path()));
}
