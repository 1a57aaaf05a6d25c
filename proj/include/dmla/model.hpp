// SPDX-License-Identifier: Apache-2.0
// Full image-text pipeline and its ablated wirings.
//
//   backbone -> channel/spatial attention -> v_f
//   embed -> LSTM -> t_f
//   (v_f, t_f) -> semantic attention -> s_f
//   (s_f, v_f) -> self-attention fusion -> dropout -> softmax classifier
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmla/fusion.hpp"
#include "dmla/text.hpp"
#include "dmla/vision.hpp"

namespace dmla {

enum class Ablation { none, no_sa_ca, no_smatt, no_satt };

std::string to_string(Ablation a);
// Throws std::invalid_argument for unknown names.
Ablation parse_ablation(const std::string& name);
// Reporting order: no_sa_ca, no_smatt, no_satt, then the full model.
const std::vector<Ablation>& ablation_table_order();

struct ModelConfig {
  std::size_t channels = 32;         // C of the visual feature map
  std::size_t reduction = 8;         // channel MLP ratio
  std::size_t embed_width = 50;      // e
  std::size_t hidden_width = 64;     // h
  std::size_t joint_width = 128;     // p
  std::size_t classes = 3;           // K
  std::size_t vocab_size = 1;        // V
  bool backbone_trainable = true;
  bool embeddings_trainable = false;
  Ablation ablation = Ablation::none;
};

struct ModelParams {
  BackboneParams backbone;
  ChannelAttentionParams channel;
  SpatialAttentionParams spatial;
  EmbeddingMatrix embedding;
  LstmParams lstm;
  SemanticAttentionParams semantic;
  SelfAttentionParams self_attention;
  ClassifierParams classifier;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Attention weights behind one prediction. Fields are undefined when the
// active ablation removes the block that produces them.
struct AttentionRecord {
  Tensor spatial;   // A_s [H x W x 1]
  Tensor words;     // alpha [S]
  Tensor modality;  // u [2] = (text, visual)
};

struct Prediction {
  Tensor probs;  // [K]
  AttentionRecord attention;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, ModelParams params);

  // Glorot init from seed. A supplied embedding table replaces the random one.
  static Model init(const ModelConfig& config, std::uint64_t seed,
                    const std::optional<Tensor>& embeddings = std::nullopt);

  const ModelConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // Tensors the optimizer updates, in a fixed order. Parameters of blocks
  // removed by the ablation and frozen tensors are excluded.
  std::vector<NamedTensor> trainable_parameters() const;
  // Every tensor needed to restore the model (checkpoint order).
  std::vector<NamedTensor> all_parameters() const;

  // Visual feature map for an input (backbone or passthrough).
  Tensor feature_map(const VisualInput& visual) const;

  // Full forward from a feature map. Dropout applies only when training and rate > 0.
  Prediction forward_map(const Tensor& map, std::span<const std::size_t> tokens, bool training = false,
                         double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) const;
  Prediction forward(const VisualInput& visual, std::span<const std::size_t> tokens, bool training = false,
                     double dropout_rate = 0.0, std::uint64_t dropout_seed = 0) const;

  // Width of the classifier input under the active wiring.
  std::size_t classifier_width() const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

}  // namespace dmla
