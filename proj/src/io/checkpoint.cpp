// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "dmla/data_io.hpp"

namespace dmla {

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"channels", c.channels},
              {"reduction", c.reduction},
              {"embed_width", c.embed_width},
              {"hidden_width", c.hidden_width},
              {"joint_width", c.joint_width},
              {"classes", c.classes},
              {"vocab_size", c.vocab_size},
              {"backbone_trainable", c.backbone_trainable},
              {"embeddings_trainable", c.embeddings_trainable},
              {"ablation", to_string(c.ablation)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.channels = j.at("channels").get<std::size_t>();
  c.reduction = j.at("reduction").get<std::size_t>();
  c.embed_width = j.at("embed_width").get<std::size_t>();
  c.hidden_width = j.at("hidden_width").get<std::size_t>();
  c.joint_width = j.at("joint_width").get<std::size_t>();
  c.classes = j.at("classes").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.backbone_trainable = j.at("backbone_trainable").get<bool>();
  c.embeddings_trainable = j.at("embeddings_trainable").get<bool>();
  c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  return c;
}

void save_checkpoint(const fs::path& dir, const Model& model) {
  fs::create_directories(dir);
  write_file(dir / "model.json", to_json(model.config()).dump(2) + "\n");
  for (const NamedTensor& nt : model.all_parameters()) write_tensor(dir / (nt.name + ".dmlt"), nt.tensor);
}

Model load_checkpoint(const fs::path& dir) {
  const fs::path cfg_path = dir / "model.json";
  if (!fs::exists(cfg_path)) throw std::runtime_error("checkpoint config not found: " + cfg_path.string());
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(json::parse(read_file(cfg_path)));
  } catch (const json::exception& e) {
    throw std::runtime_error(cfg_path.string() + ": " + e.what());
  }
  // Build the structure, then overwrite every tensor in place.
  Model model = Model::init(cfg, 0);
  for (NamedTensor& nt : model.all_parameters()) {
    const fs::path p = dir / (nt.name + ".dmlt");
    if (!fs::exists(p)) throw std::runtime_error("checkpoint tensor not found: " + p.string());
    const Tensor stored = read_tensor(p);
    if (stored.shape() != nt.tensor.shape()) {
      throw std::runtime_error(p.string() + ": shape " + shape_str(stored.shape()) + " does not match expected " +
                               shape_str(nt.tensor.shape()));
    }
    std::copy(stored.data().begin(), stored.data().end(), nt.tensor.mutable_data().begin());
  }
  return model;
}

}  // namespace dmla
