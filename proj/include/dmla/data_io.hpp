// SPDX-License-Identifier: Apache-2.0
// On-disk formats and datasets.
//
// Tensor container ("DMLT", little-endian):
//   offset 0   magic "DMLT"
//   offset 4   u32 format version (1)
//   offset 8   u32 rank
//   offset 12  u32 extent per axis
//   then       row-major IEEE-754 binary64 values
//
// Manifests are JSON, attention dumps JSON lines, embeddings whitespace text
// ("word v1 ... ve" per line). Relative paths in a manifest resolve against
// the manifest's directory.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmla/model.hpp"
#include "dmla/tensor.hpp"
#include "json.hpp"

namespace dmla {

namespace fs = std::filesystem;

// Malformed container; offset is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at byte offset " + std::to_string(offset)), detail_(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes);
void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct SampleRecord {
  std::string id;
  std::string image;     // raw [H0 x W0 x 3] grid, or
  std::string features;  // precomputed [H x W x C] map; exactly one is set
  std::vector<std::size_t> tokens;
  std::optional<std::size_t> label;
  // Per-modality annotations; resolved into label by resolve_label_conflicts.
  std::optional<std::size_t> text_label;
  std::optional<std::size_t> image_label;

  bool operator==(const SampleRecord&) const = default;
};

struct DatasetManifest {
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  std::string vocabulary;  // one word per line, line index = token id, line 0 reserved
  std::string embeddings;  // optional embedding text file
  std::vector<SampleRecord> samples;

  bool operator==(const DatasetManifest&) const = default;
};

struct Sample {
  std::string id;
  VisualInput visual;
  std::vector<std::size_t> tokens;
  std::size_t label = 0;
};

struct Dataset {
  std::size_t classes = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> vocabulary;
  std::optional<Tensor> embeddings;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

// Throws with the manifest line of the first malformed record.
DatasetManifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const DatasetManifest& m);

struct LoadOptions {
  // Apply the per-modality label rules: positive/negative conflicts are
  // dropped, neutral defers to the polar label.
  bool resolve_label_conflicts = false;
};

// Reads, validates, and loads every sample. Counts in equal counts out
// except for records dropped by conflict resolution, which are reported in dropped.
Dataset load_dataset(const fs::path& manifest_path, const LoadOptions& options = {}, std::size_t* dropped = nullptr);

// Label from per-modality annotations, or nullopt for a polar conflict.
std::optional<std::size_t> resolve_label_conflict(std::size_t text_label, std::size_t image_label,
                                                  const std::vector<std::string>& class_names);

std::vector<std::string> read_vocabulary(const fs::path& path);

struct EmbeddingLoad {
  Tensor values;  // [V x e]
  std::size_t missing = 0;
};

// Vocabulary words absent from the file get zero rows; row 0 is always zero.
EmbeddingLoad load_embeddings(const fs::path& path, const std::vector<std::string>& vocabulary);

// ---------------------------------------------------------------------------
// Synthetic cross-modal data
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t classes = 3;
  std::size_t per_class = 300;
  std::uint64_t seed = 7;
  std::size_t embed_width = 50;
};

struct SynthSelfTest {
  double text_probe_accuracy = 0.0;
  double image_probe_accuracy = 0.0;
  double majority_accuracy = 0.0;
  std::size_t test_size = 0;
};

// In-memory synthetic dataset, seed-deterministic.
Dataset synth_dataset(const SynthSpec& spec);
// Linear probes on each modality alone and a majority-class predictor,
// trained on a stratified 80% and scored on the stratified last 10%.
SynthSelfTest synth_self_test(const Dataset& data);
// Writes manifest.json, vocab.txt, embeddings.txt, images/, synth_report.json.
SynthSelfTest synth_generate(const SynthSpec& spec, const fs::path& out_dir);

// ---------------------------------------------------------------------------
// Attention export
// ---------------------------------------------------------------------------

struct AttentionDump {
  std::string id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> spatial_raw;         // A_s, row-major, empty if ablated
  std::vector<double> spatial_normalized;  // A_s / max(A_s)
  std::vector<std::string> words;
  std::vector<double> word_weights;      // alpha, empty if ablated
  std::vector<double> modality_weights;  // u = (text, visual), empty if ablated
  std::size_t predicted = 0;
  std::size_t truth = 0;
};

std::vector<AttentionDump> collect_attention(const Model& model, const Dataset& data);
nlohmann::json to_json(const AttentionDump& d);
AttentionDump attention_from_json(const nlohmann::json& j);
void write_attention_jsonl(const fs::path& path, const std::vector<AttentionDump>& dumps);
std::vector<AttentionDump> read_attention_jsonl(const fs::path& path);

// ---------------------------------------------------------------------------
// Checkpoints: a directory with model.json and one container per tensor.
// ---------------------------------------------------------------------------

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
void save_checkpoint(const fs::path& dir, const Model& model);
Model load_checkpoint(const fs::path& dir);

// Whole-file read/write helpers.
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& bytes);

}  // namespace dmla
