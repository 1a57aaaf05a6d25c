// SPDX-License-Identifier: Apache-2.0
//
// Synthetic image-text sentiment data. Each sample carries one visual cue
// (which quadrant holds a bright blob) and one textual cue (the polarity of a
// single planted keyword). The label needs both cues:
//
//   K = 3: both positive -> positive, both negative -> negative, else neutral
//   K = 2: both positive -> positive, else negative
//
// so either modality alone caps accuracy at 2/3 for K = 3.
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dmla/data_io.hpp"
#include "dmla/random.hpp"

namespace dmla {

namespace {

constexpr std::size_t kImageSize = 32;

const std::vector<std::string> kPositiveWords{"good", "great", "happy", "love", "beautiful", "wonderful"};
const std::vector<std::string> kNegativeWords{"bad", "sad", "awful", "hate", "ugly", "terrible"};
const std::vector<std::string> kFillerWords{
    "the",    "a",     "photo",  "of",    "my",    "friend", "today",  "with",  "at",     "in",
    "street", "city",  "day",    "walk",  "car",   "dog",    "house",  "park",  "people", "after",
    "before", "this",  "that",   "we",    "they",  "morning", "night", "road",  "shop",   "train",
    "light",  "water", "window", "table", "group", "picture", "view",  "trip",  "corner", "sky"};

// Quadrant index: 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
// Positive imagery sits on the main diagonal.
constexpr std::array<std::size_t, 2> kPositiveQuadrants{0, 3};
constexpr std::array<std::size_t, 2> kNegativeQuadrants{1, 2};

struct Cues {
  bool visual_positive;
  bool text_positive;
};

std::vector<std::string> class_names_for(std::size_t classes) {
  if (classes == 3) return {"negative", "neutral", "positive"};
  return {"negative", "positive"};
}

// Cue pair for the n-th sample of a class; cycles evenly through the
// combinations that produce that class.
Cues cues_for(std::size_t classes, std::size_t label, std::size_t n) {
  if (classes == 3) {
    if (label == 2) return {true, true};
    if (label == 0) return {false, false};
    return n % 2 == 0 ? Cues{true, false} : Cues{false, true};
  }
  if (label == 1) return {true, true};
  static constexpr std::array<Cues, 3> negatives{Cues{true, false}, Cues{false, true}, Cues{false, false}};
  return negatives[n % 3];
}

Tensor render_image(bool positive, Rng& rng) {
  const std::size_t S = kImageSize;
  std::vector<double> px(S * S * 3);
  for (double& v : px) v = 0.05 * rng.normal();

  auto stamp = [&](double cy, double cx, double sigma, std::array<double, 3> color) {
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double g = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
        for (std::size_t c = 0; c < 3; ++c) px[(y * S + x) * 3 + c] += g * color[c];
      }
    }
  };

  // Dim distractor anywhere in the frame.
  {
    const double cy = rng.uniform(2.0, 30.0), cx = rng.uniform(2.0, 30.0);
    const double level = rng.uniform(0.15, 0.3);
    stamp(cy, cx, 1.5, {level, level, level});
  }
  const auto& quadrants = positive ? kPositiveQuadrants : kNegativeQuadrants;
  const std::size_t q = quadrants[rng.below(2)];
  const double cy = (q / 2 == 0 ? 8.0 : 24.0) + rng.uniform(-2.5, 2.5);
  const double cx = (q % 2 == 0 ? 8.0 : 24.0) + rng.uniform(-2.5, 2.5);
  std::array<double, 3> color{};
  for (double& c : color) c = rng.uniform(0.7, 1.0);
  stamp(cy, cx, rng.uniform(2.5, 3.5), color);
  return Tensor(Shape{S, S, 3}, std::move(px));
}

std::vector<std::size_t> compose_sentence(bool positive, Rng& rng) {
  // Vocabulary layout: 0 pad, then positive, negative, filler words.
  const std::size_t pos0 = 1, neg0 = pos0 + kPositiveWords.size(), fill0 = neg0 + kNegativeWords.size();
  const std::size_t length = 5 + static_cast<std::size_t>(rng.below(8));
  std::vector<std::size_t> ids(length);
  for (auto& id : ids) id = fill0 + static_cast<std::size_t>(rng.below(kFillerWords.size()));
  const std::size_t slot = static_cast<std::size_t>(rng.below(length));
  ids[slot] = positive ? pos0 + static_cast<std::size_t>(rng.below(kPositiveWords.size()))
                       : neg0 + static_cast<std::size_t>(rng.below(kNegativeWords.size()));
  return ids;
}

std::vector<std::string> synth_vocabulary() {
  std::vector<std::string> v{"<pad>"};
  v.insert(v.end(), kPositiveWords.begin(), kPositiveWords.end());
  v.insert(v.end(), kNegativeWords.begin(), kNegativeWords.end());
  v.insert(v.end(), kFillerWords.begin(), kFillerWords.end());
  return v;
}

// Six decimals: the text file is the source of truth, so in-memory values use
// the same rounding.
double six_decimals(double x) { return std::round(x * 1e6) / 1e6; }

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Stratified 80/10/10 over per-class order; validation is unused here.
Split stratified_split(const Dataset& data) {
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.samples[i].label].push_back(i);
  Split s;
  for (const auto& idx : by_class) {
    const std::size_t n = idx.size(), n_train = n * 8 / 10, n_test = n / 10;
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), idx.end() - static_cast<std::ptrdiff_t>(n_test), idx.end());
  }
  return s;
}

// Multinomial logistic regression by full-batch gradient descent on
// standardized features.
double linear_probe_accuracy(const std::vector<std::vector<double>>& features, const Dataset& data, const Split& split) {
  const std::size_t D = features.front().size(), K = data.classes;
  std::vector<double> mean(D, 0.0), sd(D, 0.0);
  for (std::size_t i : split.train) {
    for (std::size_t d = 0; d < D; ++d) mean[d] += features[i][d];
  }
  for (double& m : mean) m /= static_cast<double>(split.train.size());
  for (std::size_t i : split.train) {
    for (std::size_t d = 0; d < D; ++d) sd[d] += (features[i][d] - mean[d]) * (features[i][d] - mean[d]);
  }
  for (double& s : sd) s = std::sqrt(s / static_cast<double>(split.train.size())) + 1e-8;
  auto x = [&](std::size_t i, std::size_t d) { return (features[i][d] - mean[d]) / sd[d]; };

  std::vector<double> w(D * K, 0.0), b(K, 0.0), gw(D * K), gb(K), logits(K);
  auto predict = [&](std::size_t i) {
    for (std::size_t k = 0; k < K; ++k) {
      double z = b[k];
      for (std::size_t d = 0; d < D; ++d) z += x(i, d) * w[d * K + k];
      logits[k] = z;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double& z : logits) total += (z = std::exp(z - top));
    for (double& z : logits) z /= total;
  };
  const double lr = 0.5;
  for (int iter = 0; iter < 300; ++iter) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    for (std::size_t i : split.train) {
      predict(i);
      for (std::size_t k = 0; k < K; ++k) {
        const double g = logits[k] - (data.samples[i].label == k ? 1.0 : 0.0);
        gb[k] += g;
        for (std::size_t d = 0; d < D; ++d) gw[d * K + k] += g * x(i, d);
      }
    }
    const double scale = lr / static_cast<double>(split.train.size());
    for (std::size_t n = 0; n < w.size(); ++n) w[n] -= scale * gw[n];
    for (std::size_t k = 0; k < K; ++k) b[k] -= scale * gb[k];
  }
  std::size_t correct = 0;
  for (std::size_t i : split.test) {
    predict(i);
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    correct += best == data.samples[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(split.test.size());
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
  if (spec.classes != 2 && spec.classes != 3) throw std::invalid_argument("synthetic data supports 2 or 3 classes");
  if (spec.per_class == 0) throw std::invalid_argument("synthetic data needs at least one sample per class");
  if (spec.embed_width == 0) throw std::invalid_argument("embedding width must be positive");

  Dataset d;
  d.classes = spec.classes;
  d.class_names = class_names_for(spec.classes);
  d.vocabulary = synth_vocabulary();

  Rng emb_rng(derive_seed(spec.seed, 1));
  std::vector<double> emb(d.vocabulary.size() * spec.embed_width, 0.0);
  for (std::size_t i = spec.embed_width; i < emb.size(); ++i) emb[i] = six_decimals(0.5 * emb_rng.normal());
  d.embeddings = Tensor(Shape{d.vocabulary.size(), spec.embed_width}, std::move(emb));

  Rng rng(derive_seed(spec.seed, 2));
  // Classes interleave so any per-class prefix is stratified.
  for (std::size_t n = 0; n < spec.per_class; ++n) {
    for (std::size_t label = 0; label < spec.classes; ++label) {
      const Cues cues = cues_for(spec.classes, label, n);
      Sample s;
      char id[32];
      std::snprintf(id, sizeof id, "s%05zu", d.samples.size());
      s.id = id;
      s.label = label;
      s.visual = VisualInput{render_image(cues.visual_positive, rng), false};
      s.tokens = compose_sentence(cues.text_positive, rng);
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

SynthSelfTest synth_self_test(const Dataset& data) {
  const Split split = stratified_split(data);
  SynthSelfTest out;
  out.test_size = split.test.size();

  // Bag-of-words text features.
  std::vector<std::vector<double>> text(data.size(), std::vector<double>(data.vocabulary.size(), 0.0));
  // 8x8x3 average-pooled pixels.
  std::vector<std::vector<double>> image(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t t : data.samples[i].tokens) text[i][t] += 1.0;
    const Tensor& img = data.samples[i].visual.values;
    const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2), cell_h = H / 8, cell_w = W / 8;
    std::vector<double> f(8 * 8 * C, 0.0);
    for (std::size_t y = 0; y < cell_h * 8; ++y) {
      for (std::size_t x = 0; x < cell_w * 8; ++x) {
        for (std::size_t c = 0; c < C; ++c) f[((y / cell_h) * 8 + x / cell_w) * C + c] += img.at(y, x, c);
      }
    }
    image[i] = std::move(f);
  }
  out.text_probe_accuracy = linear_probe_accuracy(text, data, split);
  out.image_probe_accuracy = linear_probe_accuracy(image, data, split);

  std::vector<std::size_t> counts(data.classes, 0);
  for (std::size_t i : split.train) ++counts[data.samples[i].label];
  const auto majority = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  std::size_t hits = 0;
  for (std::size_t i : split.test) hits += data.samples[i].label == majority ? 1 : 0;
  out.majority_accuracy = static_cast<double>(hits) / static_cast<double>(split.test.size());
  return out;
}

SynthSelfTest synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  Dataset d = synth_dataset(spec);
  fs::create_directories(out_dir / "images");

  {
    std::ostringstream os;
    for (const auto& w : d.vocabulary) os << w << '\n';
    write_file(out_dir / "vocab.txt", os.str());
  }
  {
    std::ostringstream os;
    const Tensor& e = *d.embeddings;
    char buf[32];
    for (std::size_t i = 1; i < d.vocabulary.size(); ++i) {
      os << d.vocabulary[i];
      for (std::size_t j = 0; j < e.dim(1); ++j) {
        std::snprintf(buf, sizeof buf, " %.6f", e.at(i, j));
        os << buf;
      }
      os << '\n';
    }
    write_file(out_dir / "embeddings.txt", os.str());
  }

  DatasetManifest m;
  m.classes = d.classes;
  m.class_names = d.class_names;
  m.vocabulary = "vocab.txt";
  m.embeddings = "embeddings.txt";
  for (const Sample& s : d.samples) {
    const std::string rel = "images/" + s.id + ".dmlt";
    write_tensor(out_dir / rel, s.visual.values);
    SampleRecord r;
    r.id = s.id;
    r.image = rel;
    r.tokens = s.tokens;
    r.label = s.label;
    m.samples.push_back(std::move(r));
  }
  write_manifest(out_dir / "manifest.json", m);

  SynthSelfTest st = synth_self_test(d);
  nlohmann::json report{{"classes", spec.classes},
                        {"per_class", spec.per_class},
                        {"seed", spec.seed},
                        {"samples", d.size()},
                        {"text_probe_accuracy", st.text_probe_accuracy},
                        {"image_probe_accuracy", st.image_probe_accuracy},
                        {"majority_accuracy", st.majority_accuracy},
                        {"self_test_split", "stratified 80/10/10, scored on the last 10% per class"},
                        {"test_size", st.test_size}};
  write_file(out_dir / "synth_report.json", report.dump(2) + "\n");
  return st;
}

}  // namespace dmla
