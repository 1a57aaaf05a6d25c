// SPDX-License-Identifier: Apache-2.0
#include "dmla/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace dmla {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t c = 0; c < classes_; ++c) t += at(c, c);
  return t;
}

std::size_t argmax(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

PrfSummary confusion_and_prf(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                             std::size_t classes) {
  if (truth.empty()) throw std::invalid_argument("confusion_and_prf: empty input");
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_and_prf: label lists differ in length");
  PrfSummary out;
  out.confusion = ConfusionMatrix(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= classes || predicted[i] >= classes) {
      throw std::out_of_range("confusion_and_prf: label outside [0, " + std::to_string(classes) + ") at index " +
                              std::to_string(i));
    }
    out.confusion.add(truth[i], predicted[i]);
  }
  const ConfusionMatrix& cm = out.confusion;
  auto ratio = [&](double num, double den) {
    if (den == 0.0) {
      out.zero_denominator = true;
      return 0.0;
    }
    return num / den;
  };
  for (std::size_t c = 0; c < classes; ++c) {
    double tp = static_cast<double>(cm.at(c, c)), fp = 0.0, fn = 0.0;
    for (std::size_t o = 0; o < classes; ++o) {
      if (o == c) continue;
      fp += static_cast<double>(cm.at(o, c));
      fn += static_cast<double>(cm.at(c, o));
    }
    ClassScores s;
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
    out.per_class.push_back(s);
    out.macro.precision += s.precision;
    out.macro.recall += s.recall;
    out.macro.f1 += s.f1;
  }
  const auto k = static_cast<double>(classes);
  out.macro.precision /= k;
  out.macro.recall /= k;
  out.macro.f1 /= k;
  out.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  return out;
}

namespace {

struct Ranked {
  std::vector<std::size_t> order;  // indices by descending score
  std::size_t positives = 0;
};

Ranked rank(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("scores and labels differ in length");
  Ranked r;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  for (bool p : positive) r.positives += p ? 1 : 0;
  return r;
}

}  // namespace

RocResult roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  Ranked r = rank(scores, positive);
  const std::size_t negatives = scores.size() - r.positives;
  if (r.positives == 0 || negatives == 0) throw std::invalid_argument("roc_auc: need both positive and negative labels");
  const auto P = static_cast<double>(r.positives), N = static_cast<double>(negatives);

  RocResult out;
  out.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < r.order.size();) {
    const double threshold = scores[r.order[i]];
    while (i < r.order.size() && scores[r.order[i]] == threshold) {
      (positive[r.order[i]] ? tp : fp) += 1;
      ++i;
    }
    const CurvePoint prev = out.curve.back();
    const CurvePoint next{threshold, static_cast<double>(fp) / N, static_cast<double>(tp) / P};
    out.auc += (next.x - prev.x) * (next.y + prev.y) * 0.5;
    out.curve.push_back(next);
  }
  return out;
}

PrResult pr_curve(std::span<const double> scores, std::span<const bool> positive) {
  Ranked r = rank(scores, positive);
  if (r.positives == 0) throw std::invalid_argument("pr_curve: no positive labels");
  const auto P = static_cast<double>(r.positives);

  PrResult out;
  std::size_t tp = 0, seen = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < r.order.size();) {
    const double threshold = scores[r.order[i]];
    while (i < r.order.size() && scores[r.order[i]] == threshold) {
      tp += positive[r.order[i]] ? 1 : 0;
      ++seen;
      ++i;
    }
    const double recall = static_cast<double>(tp) / P;
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    out.average_precision += (recall - prev_recall) * precision;
    prev_recall = recall;
    out.curve.push_back({threshold, recall, precision});
  }
  return out;
}

MetricsReport evaluate_predictions(std::span<const std::size_t> truth, const std::vector<std::vector<double>>& probs,
                                   std::size_t classes) {
  if (probs.size() != truth.size()) throw std::invalid_argument("evaluate_predictions: probs/labels length mismatch");
  std::vector<std::size_t> predicted;
  predicted.reserve(probs.size());
  for (const auto& p : probs) {
    if (p.size() != classes) throw std::invalid_argument("evaluate_predictions: probability vector width mismatch");
    predicted.push_back(argmax(p));
  }
  PrfSummary prf = confusion_and_prf(truth, predicted, classes);

  MetricsReport r;
  r.samples = truth.size();
  r.accuracy = prf.accuracy;
  r.per_class = prf.per_class;
  r.macro = prf.macro;
  r.zero_denominator = prf.zero_denominator;
  r.confusion.assign(classes, std::vector<std::size_t>(classes));
  for (std::size_t t = 0; t < classes; ++t) {
    for (std::size_t p = 0; p < classes; ++p) r.confusion[t][p] = prf.confusion.at(t, p);
  }

  std::vector<double> scores(truth.size());
  auto flags = std::make_unique<bool[]>(truth.size());
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probs[i][c];
      flags[i] = truth[i] == c;
      pos += flags[i] ? 1 : 0;
    }
    std::span<const bool> labels(flags.get(), truth.size());
    if (pos == 0 || pos == truth.size()) {
      r.undefined_curves.push_back(c);
      r.auc.push_back(0.0);
      r.average_precision.push_back(0.0);
      r.roc.emplace_back();
      r.prc.emplace_back();
      continue;
    }
    RocResult roc = roc_auc(scores, labels);
    PrResult prc = pr_curve(scores, labels);
    r.auc.push_back(roc.auc);
    r.average_precision.push_back(prc.average_precision);
    r.roc.push_back(std::move(roc.curve));
    r.prc.push_back(std::move(prc.curve));
  }
  r.macro_auc = std::accumulate(r.auc.begin(), r.auc.end(), 0.0) / static_cast<double>(classes);
  r.macro_average_precision =
      std::accumulate(r.average_precision.begin(), r.average_precision.end(), 0.0) / static_cast<double>(classes);
  return r;
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
  const std::size_t K = reports.front().per_class.size();
  MetricsReport avg;
  avg.per_class.assign(K, ClassScores{});
  avg.auc.assign(K, 0.0);
  avg.average_precision.assign(K, 0.0);
  avg.confusion.assign(K, std::vector<std::size_t>(K, 0));
  for (const MetricsReport& r : reports) {
    avg.samples += r.samples;
    avg.accuracy += r.accuracy;
    avg.macro.precision += r.macro.precision;
    avg.macro.recall += r.macro.recall;
    avg.macro.f1 += r.macro.f1;
    avg.macro_auc += r.macro_auc;
    avg.macro_average_precision += r.macro_average_precision;
    avg.zero_denominator = avg.zero_denominator || r.zero_denominator;
    for (std::size_t c = 0; c < K; ++c) {
      avg.per_class[c].precision += r.per_class[c].precision;
      avg.per_class[c].recall += r.per_class[c].recall;
      avg.per_class[c].f1 += r.per_class[c].f1;
      avg.auc[c] += r.auc[c];
      avg.average_precision[c] += r.average_precision[c];
      for (std::size_t p = 0; p < K; ++p) avg.confusion[c][p] += r.confusion[c][p];
    }
  }
  const auto n = static_cast<double>(reports.size());
  avg.accuracy /= n;
  avg.macro.precision /= n;
  avg.macro.recall /= n;
  avg.macro.f1 /= n;
  avg.macro_auc /= n;
  avg.macro_average_precision /= n;
  for (std::size_t c = 0; c < K; ++c) {
    avg.per_class[c].precision /= n;
    avg.per_class[c].recall /= n;
    avg.per_class[c].f1 /= n;
    avg.auc[c] /= n;
    avg.average_precision[c] /= n;
  }
  return avg;
}

namespace {

nlohmann::json curve_json(const CurvePoints& curve) {
  nlohmann::json arr = nlohmann::json::array();
  for (const CurvePoint& p : curve) {
    nlohmann::json t = std::isinf(p.threshold) ? nlohmann::json(nullptr) : nlohmann::json(p.threshold);
    arr.push_back({t, p.x, p.y});
  }
  return arr;
}

CurvePoints curve_from_json(const nlohmann::json& arr) {
  CurvePoints out;
  for (const auto& p : arr) {
    const double t = p[0].is_null() ? std::numeric_limits<double>::infinity() : p[0].get<double>();
    out.push_back({t, p[1].get<double>(), p[2].get<double>()});
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r, bool with_curves) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["accuracy"] = r.accuracy;
  j["macro"] = {{"precision", r.macro.precision}, {"recall", r.macro.recall}, {"f1", r.macro.f1}};
  nlohmann::json per = nlohmann::json::array();
  for (const ClassScores& s : r.per_class) per.push_back({{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
  j["per_class"] = per;
  j["auc"] = r.auc;
  j["macro_auc"] = r.macro_auc;
  j["average_precision"] = r.average_precision;
  j["macro_average_precision"] = r.macro_average_precision;
  j["zero_denominator"] = r.zero_denominator;
  j["confusion"] = r.confusion;
  j["undefined_curves"] = r.undefined_curves;
  if (with_curves) {
    nlohmann::json roc = nlohmann::json::array(), prc = nlohmann::json::array();
    for (const auto& c : r.roc) roc.push_back(curve_json(c));
    for (const auto& c : r.prc) prc.push_back(curve_json(c));
    j["roc"] = roc;
    j["prc"] = prc;
  }
  return j;
}

MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.samples = j.at("samples").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.macro = {j.at("macro").at("precision").get<double>(), j.at("macro").at("recall").get<double>(),
             j.at("macro").at("f1").get<double>()};
  for (const auto& s : j.at("per_class")) {
    r.per_class.push_back({s.at("precision").get<double>(), s.at("recall").get<double>(), s.at("f1").get<double>()});
  }
  r.auc = j.at("auc").get<std::vector<double>>();
  r.macro_auc = j.at("macro_auc").get<double>();
  r.average_precision = j.at("average_precision").get<std::vector<double>>();
  r.macro_average_precision = j.at("macro_average_precision").get<double>();
  r.zero_denominator = j.at("zero_denominator").get<bool>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.undefined_curves = j.value("undefined_curves", std::vector<std::size_t>{});
  if (j.contains("roc")) {
    for (const auto& c : j["roc"]) r.roc.push_back(curve_from_json(c));
    for (const auto& c : j["prc"]) r.prc.push_back(curve_from_json(c));
  }
  return r;
}

std::string curve_csv(const CurvePoints& curve) {
  std::ostringstream os;
  os << "threshold,x,y\n";
  char buf[96];
  for (const CurvePoint& p : curve) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.x, p.y);
    os << buf;
  }
  return os.str();
}

}  // namespace dmla
