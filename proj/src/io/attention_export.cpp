// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>

#include "dmla/data_io.hpp"
#include "dmla/metrics.hpp"
#include "dmla/tape.hpp"

namespace dmla {

using nlohmann::json;

namespace {

std::vector<double> values_of(const Tensor& t) {
  if (!t.defined()) return {};
  return {t.data().begin(), t.data().end()};
}

}  // namespace

std::vector<AttentionDump> collect_attention(const Model& model, const Dataset& data) {
  NoTapeScope no_tape;
  std::vector<AttentionDump> out;
  out.reserve(data.size());
  for (const Sample& s : data.samples) {
    const Tensor map = model.feature_map(s.visual);
    const Prediction pred = model.forward_map(map, s.tokens);
    AttentionDump d;
    d.id = s.id;
    d.height = map.dim(0);
    d.width = map.dim(1);
    d.spatial_raw = values_of(pred.attention.spatial);
    if (!d.spatial_raw.empty()) {
      const double top = *std::max_element(d.spatial_raw.begin(), d.spatial_raw.end());
      d.spatial_normalized = d.spatial_raw;
      // An all-zero gate stays all zero.
      if (top > 0.0) {
        for (double& v : d.spatial_normalized) v /= top;
      }
    }
    for (std::size_t t : s.tokens) d.words.push_back(t < data.vocabulary.size() ? data.vocabulary[t] : "<unk>");
    d.word_weights = values_of(pred.attention.words);
    d.modality_weights = values_of(pred.attention.modality);
    d.predicted = argmax(pred.probs.data());
    d.truth = s.label;
    out.push_back(std::move(d));
  }
  return out;
}

json to_json(const AttentionDump& d) {
  return json{{"id", d.id},
              {"height", d.height},
              {"width", d.width},
              {"spatial_raw", d.spatial_raw},
              {"spatial_normalized", d.spatial_normalized},
              {"words", d.words},
              {"word_weights", d.word_weights},
              {"modality_weights", d.modality_weights},
              {"predicted", d.predicted},
              {"truth", d.truth}};
}

AttentionDump attention_from_json(const json& j) {
  AttentionDump d;
  d.id = j.at("id").get<std::string>();
  d.height = j.at("height").get<std::size_t>();
  d.width = j.at("width").get<std::size_t>();
  d.spatial_raw = j.at("spatial_raw").get<std::vector<double>>();
  d.spatial_normalized = j.at("spatial_normalized").get<std::vector<double>>();
  d.words = j.at("words").get<std::vector<std::string>>();
  d.word_weights = j.at("word_weights").get<std::vector<double>>();
  d.modality_weights = j.at("modality_weights").get<std::vector<double>>();
  d.predicted = j.at("predicted").get<std::size_t>();
  d.truth = j.at("truth").get<std::size_t>();
  return d;
}

void write_attention_jsonl(const fs::path& path, const std::vector<AttentionDump>& dumps) {
  std::string text;
  for (const AttentionDump& d : dumps) text += to_json(d).dump() + "\n";
  write_file(path, text);
}

std::vector<AttentionDump> read_attention_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<AttentionDump> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(attention_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dmla
