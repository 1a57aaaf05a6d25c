// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dmla/data_io.hpp"

namespace dmla {

namespace {

using nlohmann::json;

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of the n-th sample object: the n-th occurrence of an "id" key after "samples".
std::size_t line_of_record(const std::string& text, std::size_t index) {
  std::size_t pos = text.find("\"samples\"");
  if (pos == std::string::npos) return 0;
  for (std::size_t i = 0; i <= index; ++i) {
    pos = text.find("\"id\"", pos + 1);
    if (pos == std::string::npos) return 0;
  }
  return line_of_offset(text, pos);
}

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::optional<std::size_t> optional_label(const json& rec, const char* key) {
  if (!rec.contains(key)) return std::nullopt;
  const json& v = rec.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ManifestError(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

SampleRecord parse_record(const json& rec, std::size_t classes) {
  if (!rec.is_object()) throw ManifestError("sample is not an object");
  SampleRecord r;
  if (!rec.contains("id") || !rec["id"].is_string() || rec["id"].get<std::string>().empty()) {
    throw ManifestError("sample without a string id");
  }
  r.id = rec["id"].get<std::string>();
  auto where = " in record '" + r.id + "'";
  if (rec.contains("image")) r.image = rec["image"].get<std::string>();
  if (rec.contains("features")) r.features = rec["features"].get<std::string>();
  if (r.image.empty() == r.features.empty()) {
    throw ManifestError("exactly one of 'image' or 'features' is required" + where);
  }
  if (!rec.contains("tokens") || !rec["tokens"].is_array() || rec["tokens"].empty()) {
    throw ManifestError("non-empty 'tokens' array required" + where);
  }
  for (const json& t : rec["tokens"]) {
    if (!t.is_number_integer() || t.get<long long>() < 0) throw ManifestError("token ids must be non-negative integers" + where);
    r.tokens.push_back(t.get<std::size_t>());
  }
  try {
    r.label = optional_label(rec, "label");
    r.text_label = optional_label(rec, "text_label");
    r.image_label = optional_label(rec, "image_label");
  } catch (const ManifestError& e) {
    throw ManifestError(e.what() + where);
  }
  if (!r.label && !(r.text_label && r.image_label)) {
    throw ManifestError("'label' (or both 'text_label' and 'image_label') required" + where);
  }
  for (const auto& l : {r.label, r.text_label, r.image_label}) {
    if (l && *l >= classes) {
      throw ManifestError("label " + std::to_string(*l) + " out of range for " + std::to_string(classes) +
                          " classes" + where);
    }
  }
  return r;
}

json record_json(const SampleRecord& r) {
  json j;
  j["id"] = r.id;
  if (!r.image.empty()) j["image"] = r.image;
  if (!r.features.empty()) j["features"] = r.features;
  j["tokens"] = r.tokens;
  if (r.label) j["label"] = *r.label;
  if (r.text_label) j["text_label"] = *r.text_label;
  if (r.image_label) j["image_label"] = *r.image_label;
  return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

DatasetManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("manifest not found: " + path.string());
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line_of_offset(text, e.byte)) +
                             ": malformed JSON: " + e.what());
  }
  auto fail = [&](std::size_t line, const std::string& msg) -> std::runtime_error {
    return std::runtime_error(path.string() + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  };
  DatasetManifest m;
  try {
    m.classes = j.at("classes").get<std::size_t>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.vocabulary = j.at("vocabulary").get<std::string>();
    m.embeddings = j.value("embeddings", std::string());
  } catch (const json::exception& e) {
    throw fail(0, std::string("malformed manifest header: ") + e.what());
  }
  if (m.classes < 2) throw fail(0, "manifest needs at least 2 classes");
  if (m.class_names.size() != m.classes) throw fail(0, "class_names length differs from classes");
  if (!j.contains("samples") || !j["samples"].is_array()) throw fail(0, "missing 'samples' array");
  if (j["samples"].empty()) throw fail(0, "empty dataset");
  const json& samples = j["samples"];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      m.samples.push_back(parse_record(samples[i], m.classes));
    } catch (const ManifestError& e) {
      throw fail(line_of_record(text, i), e.what());
    } catch (const json::exception& e) {
      throw fail(line_of_record(text, i), std::string("malformed record: ") + e.what());
    }
  }
  return m;
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  // One record per line so errors can be reported by line.
  std::ostringstream os;
  os << "{\n";
  os << "  \"format\": \"dmla-manifest\",\n";
  os << "  \"classes\": " << m.classes << ",\n";
  os << "  \"class_names\": " << json(m.class_names).dump() << ",\n";
  os << "  \"vocabulary\": " << json(m.vocabulary).dump() << ",\n";
  if (!m.embeddings.empty()) os << "  \"embeddings\": " << json(m.embeddings).dump() << ",\n";
  os << "  \"samples\": [\n";
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    os << "    " << record_json(m.samples[i]).dump() << (i + 1 < m.samples.size() ? ",\n" : "\n");
  }
  os << "  ]\n}\n";
  write_file(path, os.str());
}

std::optional<std::size_t> resolve_label_conflict(std::size_t text_label, std::size_t image_label,
                                                  const std::vector<std::string>& class_names) {
  if (text_label == image_label) return text_label;
  auto name = [&](std::size_t l) { return l < class_names.size() ? class_names[l] : std::string(); };
  const bool text_neutral = name(text_label) == "neutral", image_neutral = name(image_label) == "neutral";
  if (text_neutral && !image_neutral) return image_label;
  if (image_neutral && !text_neutral) return text_label;
  return std::nullopt;
}

std::vector<std::string> read_vocabulary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("vocabulary file not found: " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    words.push_back(line);
  }
  if (words.empty()) throw std::runtime_error("empty vocabulary: " + path.string());
  return words;
}

Dataset load_dataset(const fs::path& manifest_path, const LoadOptions& options, std::size_t* dropped) {
  DatasetManifest m = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset d;
  d.classes = m.classes;
  d.class_names = m.class_names;
  d.vocabulary = read_vocabulary(resolve(base, m.vocabulary));
  if (!m.embeddings.empty()) {
    EmbeddingLoad e = load_embeddings(resolve(base, m.embeddings), d.vocabulary);
    if (e.missing > 0) {
      std::clog << "note: " << e.missing << " vocabulary words have no embedding; using zero rows\n";
    }
    d.embeddings = e.values;
  }
  std::size_t skipped = 0;
  for (const SampleRecord& r : m.samples) {
    Sample s;
    s.id = r.id;
    if (r.label && !options.resolve_label_conflicts) {
      s.label = *r.label;
    } else if (r.text_label && r.image_label) {
      auto resolved = resolve_label_conflict(*r.text_label, *r.image_label, m.class_names);
      if (!resolved) {
        ++skipped;
        continue;
      }
      s.label = *resolved;
    } else {
      s.label = *r.label;
    }
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
      if (r.tokens[i] >= d.vocabulary.size()) {
        throw std::runtime_error("record '" + r.id + "': token id " + std::to_string(r.tokens[i]) + " at position " +
                                 std::to_string(i) + " outside vocabulary of " + std::to_string(d.vocabulary.size()));
      }
    }
    s.tokens = r.tokens;
    const bool precomputed = r.image.empty();
    const fs::path vpath = resolve(base, precomputed ? r.features : r.image);
    if (!fs::exists(vpath)) throw std::runtime_error("record '" + r.id + "': missing file " + vpath.string());
    s.visual = VisualInput{read_tensor(vpath), precomputed};
    if (s.visual.values.rank() != 3) {
      throw std::runtime_error("record '" + r.id + "': visual tensor must be [H x W x C], got " +
                               shape_str(s.visual.values.shape()));
    }
    d.samples.push_back(std::move(s));
  }
  if (skipped > 0) std::clog << "note: dropped " << skipped << " records with conflicting polar labels\n";
  if (dropped) *dropped = skipped;
  if (d.samples.empty()) throw std::runtime_error("empty dataset after label resolution");
  return d;
}

}  // namespace dmla
