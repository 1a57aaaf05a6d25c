// SPDX-License-Identifier: Apache-2.0
// Cross-entropy training with Adam, the rotating fold protocol, best-on-
// validation selection, and the ablation sweep.
#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dmla/data_io.hpp"
#include "dmla/metrics.hpp"
#include "dmla/model.hpp"
#include "json.hpp"

namespace dmla {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 256;  // clipped to the training-set size
  std::size_t epochs = 50;
  double dropout = 0.5;
  std::uint64_t seed = 1;
  std::size_t folds = 5;
  std::array<std::size_t, 3> split{80, 10, 10};  // train : validation : test, percent
  Ablation ablation = Ablation::none;
  std::size_t channels = 32;
  std::size_t reduction = 8;
  std::size_t embed_width = 50;
  std::size_t hidden_width = 64;
  std::size_t joint_width = 128;
  std::size_t classes = 0;  // 0 takes K from the dataset
  std::size_t max_tokens = 64;
  bool embeddings_trainable = false;
  bool backbone_trainable = true;

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Flat keys override fields of base; unknown keys are an error.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// Model shape for a dataset; checks K and the embedding width against it.
ModelConfig model_config_for(const TrainConfig& cfg, const Dataset& data);

// -log(probs[label] + 1e-12); throws std::out_of_range for label >= K.
Tensor cross_entropy(const Tensor& probs, std::size_t label);

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;

  static AdamState for_parameters(const std::vector<NamedTensor>& params);
};

// One bias-corrected update, in parameter order. grads[i] matches params[i].
void adam_step(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr);

struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct FoldPlan {
  std::vector<FoldSplit> folds;
  bool operator==(const FoldPlan& o) const;
};

// Seeded permutation; fold k tests on the k-th slice of round(n * test%)
// positions, validates on the next round(n * val%) positions (cyclically),
// and trains on the rest.
FoldPlan make_folds(std::size_t n, std::size_t folds, const std::array<std::size_t, 3>& split, std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;  // 0 is the initial model
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct FoldResult {
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
  double initial_loss = 0.0;  // mean training-set loss before any update
  MetricsReport test;
  std::vector<EpochStats> curve;
  Model model;  // parameters of the best epoch
};

struct TrainResult {
  FoldPlan plan;
  std::vector<FoldResult> folds;
  MetricsReport average;
  std::size_t best_fold = 0;  // highest validation accuracy, earliest on ties
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<double>> probs;
};

// Eval-mode pass over a subset. maps, when given, replaces the backbone.
Evaluation evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                    const std::vector<Tensor>* maps = nullptr);

// Full protocol. log, when non-null, receives one progress line per epoch.
TrainResult train(const Dataset& data, const TrainConfig& cfg, std::ostream* log = nullptr);

// Trains one fold of a plan; exposed for tests and the ablation sweep.
FoldResult train_fold(const Dataset& data, const TrainConfig& cfg, const FoldSplit& split, std::size_t fold,
                      std::ostream* log = nullptr);

std::string curve_csv(const std::vector<EpochStats>& curve);

struct AblationRow {
  Ablation variant = Ablation::none;
  std::vector<double> accuracy;  // per seed, mean over folds
  std::vector<double> macro_f1;
  double mean_accuracy = 0.0;
  double mean_macro_f1 = 0.0;
};

// Every variant in table order, sharing seeds and therefore fold plans.
std::vector<AblationRow> run_ablation(const Dataset& data, const TrainConfig& base,
                                      const std::vector<std::uint64_t>& seeds, std::ostream* log = nullptr);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace dmla
