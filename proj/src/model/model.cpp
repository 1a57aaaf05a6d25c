// SPDX-License-Identifier: Apache-2.0
#include "dmla/model.hpp"

#include <stdexcept>

#include "dmla/ops.hpp"

namespace dmla {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_sa_ca: return "no_sa_ca";
    case Ablation::no_smatt: return "no_smatt";
    case Ablation::no_satt: return "no_satt";
  }
  return "none";
}

Ablation parse_ablation(const std::string& name) {
  for (Ablation a : {Ablation::none, Ablation::no_sa_ca, Ablation::no_smatt, Ablation::no_satt}) {
    if (to_string(a) == name) return a;
  }
  throw std::invalid_argument("unknown ablation '" + name + "' (expected none, no_sa_ca, no_smatt, no_satt)");
}

const std::vector<Ablation>& ablation_table_order() {
  static const std::vector<Ablation> order{Ablation::no_sa_ca, Ablation::no_smatt, Ablation::no_satt, Ablation::none};
  return order;
}

Model::Model(ModelConfig config, ModelParams params) : config_(config), params_(std::move(params)) {}

std::size_t Model::classifier_width() const {
  return config_.ablation == Ablation::no_satt ? 2 * config_.joint_width : config_.joint_width;
}

Model Model::init(const ModelConfig& config, std::uint64_t seed, const std::optional<Tensor>& embeddings) {
  if (config.classes < 2) throw std::invalid_argument("model needs at least 2 classes");
  Rng rng(seed);
  ModelParams p;
  // Draw order is fixed so a seed always yields the same weights.
  p.backbone = BackboneParams::init(config.channels, config.backbone_trainable, rng);
  p.channel = ChannelAttentionParams::init(config.channels, config.reduction, rng);
  p.spatial = SpatialAttentionParams::init(rng);
  if (embeddings) {
    if (embeddings->rank() != 2 || embeddings->dim(1) != config.embed_width ||
        embeddings->dim(0) != config.vocab_size) {
      throw std::invalid_argument("embedding table " + shape_str(embeddings->shape()) + " does not match vocab " +
                                  std::to_string(config.vocab_size) + " x width " + std::to_string(config.embed_width));
    }
    p.embedding = EmbeddingMatrix::from_values(embeddings->clone(), config.embeddings_trainable);
  } else {
    p.embedding = EmbeddingMatrix::random(config.vocab_size, config.embed_width, config.embeddings_trainable, rng);
  }
  p.lstm = LstmParams::init(config.embed_width, config.hidden_width, rng);
  p.semantic = SemanticAttentionParams::init(config.channels, config.hidden_width, rng);
  p.self_attention = SelfAttentionParams::init(config.hidden_width, config.channels, config.joint_width, rng);
  Model m(config, std::move(p));
  m.params_.classifier = ClassifierParams::init(m.classifier_width(), config.classes, rng);
  return m;
}

std::vector<NamedTensor> Model::all_parameters() const {
  const ModelParams& p = params_;
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < p.backbone.layers.size(); ++i) {
    out.push_back({"backbone." + std::to_string(i) + ".kernel", p.backbone.layers[i].kernel});
    out.push_back({"backbone." + std::to_string(i) + ".bias", p.backbone.layers[i].bias});
  }
  out.push_back({"channel.w0", p.channel.w0});
  out.push_back({"channel.w1", p.channel.w1});
  out.push_back({"spatial.kernel", p.spatial.kernel});
  out.push_back({"spatial.bias", p.spatial.bias});
  out.push_back({"embedding", p.embedding.values});
  auto gate = [&](const std::string& name, const LstmGate& g) {
    out.push_back({"lstm." + name + ".input", g.input});
    out.push_back({"lstm." + name + ".recurrent", g.recurrent});
    out.push_back({"lstm." + name + ".bias", g.bias});
  };
  gate("in", p.lstm.in_gate);
  gate("forget", p.lstm.forget_gate);
  gate("out", p.lstm.out_gate);
  gate("candidate", p.lstm.candidate);
  out.push_back({"semantic.visual_projection", p.semantic.visual_projection});
  out.push_back({"semantic.score", p.semantic.score});
  out.push_back({"self_attention.text_projection", p.self_attention.text_projection});
  out.push_back({"self_attention.visual_projection", p.self_attention.visual_projection});
  out.push_back({"self_attention.score", p.self_attention.score});
  out.push_back({"self_attention.bias", p.self_attention.bias});
  out.push_back({"classifier.weights", p.classifier.weights});
  out.push_back({"classifier.bias", p.classifier.bias});
  return out;
}

std::vector<NamedTensor> Model::trainable_parameters() const {
  const Ablation ab = config_.ablation;
  std::vector<NamedTensor> out;
  for (NamedTensor& nt : all_parameters()) {
    if (!nt.tensor.requires_grad()) continue;
    const std::string& n = nt.name;
    if (ab == Ablation::no_sa_ca && (n.rfind("channel.", 0) == 0 || n.rfind("spatial.", 0) == 0)) continue;
    if (ab == Ablation::no_smatt && n.rfind("semantic.", 0) == 0) continue;
    if (ab == Ablation::no_satt && (n == "self_attention.score" || n == "self_attention.bias")) continue;
    out.push_back(std::move(nt));
  }
  return out;
}

Tensor Model::feature_map(const VisualInput& visual) const { return backbone_features(visual, params_.backbone); }

Prediction Model::forward_map(const Tensor& map, std::span<const std::size_t> tokens, bool training,
                              double dropout_rate, std::uint64_t dropout_seed) const {
  const ModelParams& p = params_;
  Prediction out;

  Tensor regions;
  if (config_.ablation == Ablation::no_sa_ca) {
    regions = map_to_regions(map);
  } else {
    BiAttentive vis = bi_attentive_features(map, p.channel, p.spatial);
    regions = vis.regions;
    out.attention.spatial = vis.spatial_gate;
  }

  Tensor words = lstm_forward(embed(tokens, p.embedding), p.lstm);
  Tensor text;
  if (config_.ablation == Ablation::no_smatt) {
    text = select_row(words, words.dim(0) - 1);
  } else {
    SemanticAttention sem = semantic_attention(regions, words, p.semantic);
    text = sem.attended;
    out.attention.words = sem.alpha;
  }

  Tensor joint;
  if (config_.ablation == Ablation::no_satt) {
    joint = concat_last(vecmat(text, p.self_attention.text_projection),
                        vecmat(mean_rows(regions), p.self_attention.visual_projection));
  } else {
    ModalityFusion fusion = self_attention_fuse(text, regions, p.self_attention);
    joint = fusion.fused;
    out.attention.modality = fusion.weights;
  }
  if (training && dropout_rate > 0.0) joint = dropout(joint, dropout_rate, dropout_seed);
  out.probs = classify(joint, p.classifier);
  return out;
}

Prediction Model::forward(const VisualInput& visual, std::span<const std::size_t> tokens, bool training,
                          double dropout_rate, std::uint64_t dropout_seed) const {
  return forward_map(feature_map(visual), tokens, training, dropout_rate, dropout_seed);
}

}  // namespace dmla
