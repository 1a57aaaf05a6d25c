// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "dmla/data_io.hpp"

namespace dmla {

EmbeddingLoad load_embeddings(const fs::path& path, const std::vector<std::string>& vocabulary) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("embedding file not found: " + path.string());

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 1; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], i);

  std::size_t width = 0;
  std::vector<std::vector<double>> rows(vocabulary.size());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> values;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + tok + "'");
      }
    }
    if (values.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": no vector values");
    if (width == 0) width = values.size();
    if (values.size() != width) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": width " +
                               std::to_string(values.size()) + " differs from " + std::to_string(width));
    }
    auto it = index.find(word);
    if (it != index.end()) rows[it->second] = std::move(values);
  }
  if (width == 0) throw std::runtime_error("embedding file has no vectors: " + path.string());

  EmbeddingLoad out;
  std::vector<double> data(vocabulary.size() * width, 0.0);
  for (std::size_t i = 1; i < vocabulary.size(); ++i) {
    if (rows[i].empty()) {
      ++out.missing;
      continue;
    }
    std::copy(rows[i].begin(), rows[i].end(), data.begin() + static_cast<std::ptrdiff_t>(i * width));
  }
  out.values = Tensor(Shape{vocabulary.size(), width}, std::move(data));
  return out;
}

}  // namespace dmla
