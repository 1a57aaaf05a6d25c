// SPDX-License-Identifier: Apache-2.0
// Classification metrics: confusion matrix, precision/recall/F1,
// ROC/AUC and precision-recall curves.
//
// Ratios with a zero denominator are reported as 0 and flagged. Multiclass
// ROC and PRC are one-vs-rest; macro values are unweighted class means.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace dmla {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {}

  // Rows are true classes, columns predicted classes.
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
  void add(std::size_t truth, std::size_t predicted) { ++counts_[truth * classes_ + predicted]; }
  std::size_t classes() const { return classes_; }
  std::size_t total() const;
  std::size_t trace() const;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrfSummary {
  ConfusionMatrix confusion{2};
  std::vector<ClassScores> per_class;
  ClassScores macro;
  double accuracy = 0.0;
  // Set when any ratio hit a zero denominator and was defined as 0.
  bool zero_denominator = false;
};

PrfSummary confusion_and_prf(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                             std::size_t classes);

struct CurvePoint {
  double threshold;  // +inf for the ROC origin
  double x;
  double y;
};
using CurvePoints = std::vector<CurvePoint>;

struct RocResult {
  CurvePoints curve;  // (threshold, FPR, TPR), starting at (inf, 0, 0)
  double auc = 0.0;
};

struct PrResult {
  CurvePoints curve;  // (threshold, recall, precision)
  double average_precision = 0.0;
};

// Thresholds at every distinct score; trapezoid area. Needs both label kinds.
RocResult roc_auc(std::span<const double> scores, std::span<const bool> positive);
// Step-wise average precision sum (R_i - R_{i-1}) P_i. Needs a positive.
PrResult pr_curve(std::span<const double> scores, std::span<const bool> positive);

struct MetricsReport {
  std::size_t samples = 0;
  double accuracy = 0.0;
  std::vector<ClassScores> per_class;
  ClassScores macro;
  std::vector<double> auc;  // per class, one-vs-rest
  double macro_auc = 0.0;
  std::vector<double> average_precision;
  double macro_average_precision = 0.0;
  bool zero_denominator = false;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<CurvePoints> roc;  // per class
  std::vector<CurvePoints> prc;  // per class
  // Classes lacking positives or negatives in this split (AUC/AP not defined, reported as 0).
  std::vector<std::size_t> undefined_curves;
};

// Full report from labels and per-sample class probabilities.
MetricsReport evaluate_predictions(std::span<const std::size_t> truth, const std::vector<std::vector<double>>& probs,
                                   std::size_t classes);
// Mean of every scalar field; curves and confusion counts are summed/omitted as documented in the JSON.
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

// Index of the largest probability, lowest index on ties.
std::size_t argmax(std::span<const double> probs);

nlohmann::json to_json(const MetricsReport& r, bool with_curves = true);
MetricsReport metrics_from_json(const nlohmann::json& j);
// CSV "threshold,x,y" rows for external plotting.
std::string curve_csv(const CurvePoints& curve);

}  // namespace dmla
