// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "dmla/ops.hpp"
#include "dmla/training.hpp"

namespace dmla {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("invalid config: " + msg); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be a finite value >= 0");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (folds == 0) fail("folds must be >= 1");
  if (split[0] + split[1] + split[2] != 100) fail("split ratios must sum to 100");
  if (split[0] == 0 || split[2] == 0) fail("split needs nonzero train and test shares");
  if (channels == 0 || reduction == 0 || embed_width == 0 || hidden_width == 0 || joint_width == 0) {
    fail("widths must be positive");
  }
  if (classes == 1) fail("classes must be >= 2 (or 0 to follow the dataset)");
  if (max_tokens == 0) fail("max_tokens must be positive");
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"dropout", c.dropout},
              {"seed", c.seed},
              {"folds", c.folds},
              {"split", c.split},
              {"ablation", to_string(c.ablation)},
              {"channels", c.channels},
              {"reduction", c.reduction},
              {"embed_width", c.embed_width},
              {"hidden_width", c.hidden_width},
              {"joint_width", c.joint_width},
              {"classes", c.classes},
              {"max_tokens", c.max_tokens},
              {"embeddings_trainable", c.embeddings_trainable},
              {"backbone_trainable", c.backbone_trainable}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "folds") c.folds = value.get<std::size_t>();
      else if (key == "split") c.split = value.get<std::array<std::size_t, 3>>();
      else if (key == "ablation") c.ablation = parse_ablation(value.get<std::string>());
      else if (key == "channels") c.channels = value.get<std::size_t>();
      else if (key == "reduction") c.reduction = value.get<std::size_t>();
      else if (key == "embed_width") c.embed_width = value.get<std::size_t>();
      else if (key == "hidden_width") c.hidden_width = value.get<std::size_t>();
      else if (key == "joint_width") c.joint_width = value.get<std::size_t>();
      else if (key == "classes") c.classes = value.get<std::size_t>();
      else if (key == "max_tokens") c.max_tokens = value.get<std::size_t>();
      else if (key == "embeddings_trainable") c.embeddings_trainable = value.get<bool>();
      else if (key == "backbone_trainable") c.backbone_trainable = value.get<bool>();
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data) {
  if (cfg.classes != 0 && cfg.classes != data.classes) {
    throw std::invalid_argument("config asks for " + std::to_string(cfg.classes) + " classes but the dataset has " +
                                std::to_string(data.classes));
  }
  if (data.embeddings && data.embeddings->dim(1) != cfg.embed_width) {
    throw std::invalid_argument("embedding file width " + std::to_string(data.embeddings->dim(1)) +
                                " differs from embed_width " + std::to_string(cfg.embed_width));
  }
  for (const Sample& s : data.samples) {
    if (s.tokens.size() > cfg.max_tokens) {
      throw std::invalid_argument("record '" + s.id + "' has " + std::to_string(s.tokens.size()) +
                                  " tokens, above max_tokens " + std::to_string(cfg.max_tokens));
    }
  }
  ModelConfig m;
  m.channels = cfg.channels;
  m.reduction = cfg.reduction;
  m.embed_width = cfg.embed_width;
  m.hidden_width = cfg.hidden_width;
  m.joint_width = cfg.joint_width;
  m.classes = data.classes;
  m.vocab_size = data.vocabulary.size();
  m.backbone_trainable = cfg.backbone_trainable;
  m.embeddings_trainable = cfg.embeddings_trainable;
  m.ablation = cfg.ablation;
  return m;
}

Tensor cross_entropy(const Tensor& probs, std::size_t label) { return neg_log_prob(probs, label, 1e-12); }

}  // namespace dmla
