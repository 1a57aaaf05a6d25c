// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <stdexcept>

#include "dmla/random.hpp"
#include "dmla/tape.hpp"
#include "dmla/training.hpp"

namespace dmla {

namespace {

// Samples whose gradients are held at once before the ordered reduction.
constexpr std::size_t kGradientChunk = 32;

struct SampleStep {
  double loss = 0.0;
  bool correct = false;
  std::vector<std::vector<double>> grads;
};

SampleStep sample_step(const Model& model, const std::vector<NamedTensor>& params, const Sample& s, const Tensor* map,
                       double dropout_rate, std::uint64_t dropout_seed) {
  Tape tape;
  TapeScope scope(tape);
  const Tensor m = map ? *map : model.feature_map(s.visual);
  const Prediction pred = model.forward_map(m, s.tokens, true, dropout_rate, dropout_seed);
  const Tensor loss = cross_entropy(pred.probs, s.label);
  SampleStep out;
  out.loss = loss.item();
  out.correct = argmax(pred.probs.data()) == s.label;
  const Gradients g = tape.gradients(loss);
  out.grads.reserve(params.size());
  for (const NamedTensor& p : params) {
    std::span<const double> gp = g.of(p.tensor);
    if (gp.empty()) {
      out.grads.emplace_back(p.tensor.numel(), 0.0);
    } else {
      out.grads.emplace_back(gp.begin(), gp.end());
    }
  }
  return out;
}

[[noreturn]] void overflow(const std::vector<NamedTensor>& params, const SampleStep& step, const Sample& s,
                           std::size_t fold, std::size_t epoch) {
  std::string culprit = "loss";
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double v : step.grads[i]) {
      if (!std::isfinite(v)) {
        culprit = params[i].name;
        break;
      }
    }
    if (culprit != "loss") break;
  }
  throw std::runtime_error("non-finite loss in fold " + std::to_string(fold) + ", epoch " + std::to_string(epoch) +
                           " at sample '" + s.id + "': gradient of parameter group '" + culprit + "' overflowed");
}

bool cacheable_maps(const Dataset& data, const ModelConfig& mcfg) {
  if (!mcfg.backbone_trainable) return true;
  for (const Sample& s : data.samples) {
    if (!s.visual.precomputed) return false;
  }
  return true;
}

std::vector<std::vector<double>> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  for (const NamedTensor& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

Evaluation evaluate(const Model& model, const Dataset& data, const std::vector<std::size_t>& indices,
                    const std::vector<Tensor>* maps) {
  Evaluation ev;
  if (indices.empty()) return ev;
  ev.probs.resize(indices.size());
  std::vector<std::exception_ptr> errors(indices.size());
  const auto n = static_cast<std::ptrdiff_t>(indices.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      NoTapeScope no_tape;
      const Sample& s = data.samples[indices[static_cast<std::size_t>(i)]];
      const Tensor map = maps ? (*maps)[indices[static_cast<std::size_t>(i)]] : model.feature_map(s.visual);
      const Prediction p = model.forward_map(map, s.tokens);
      ev.probs[static_cast<std::size_t>(i)].assign(p.probs.data().begin(), p.probs.data().end());
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t label = data.samples[indices[i]].label;
    ev.loss += -std::log(ev.probs[i][label] + 1e-12);
    correct += argmax(ev.probs[i]) == label ? 1 : 0;
  }
  ev.loss /= static_cast<double>(indices.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return ev;
}

FoldResult train_fold(const Dataset& data, const TrainConfig& cfg, const FoldSplit& split, std::size_t fold,
                      std::ostream* log) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("fold " + std::to_string(fold) + " has no training samples");
  const ModelConfig mcfg = model_config_for(cfg, data);
  Model model = Model::init(mcfg, derive_seed(cfg.seed, 1, fold), data.embeddings);

  // A frozen backbone yields the same map every epoch; compute it once.
  std::vector<Tensor> map_cache;
  const std::vector<Tensor>* maps = nullptr;
  if (cacheable_maps(data, mcfg)) {
    NoTapeScope no_tape;
    map_cache.resize(data.size());
    for (const auto* list : {&split.train, &split.validation, &split.test}) {
      for (std::size_t i : *list) map_cache[i] = model.feature_map(data.samples[i].visual);
    }
    maps = &map_cache;
  }

  const std::vector<NamedTensor> params = model.trainable_parameters();
  AdamState adam = AdamState::for_parameters(params);
  const std::size_t batch = std::min(cfg.batch_size, split.train.size());
  if (batch < cfg.batch_size && log && fold == 0) {
    *log << "note: batch size " << cfg.batch_size << " clipped to training-set size " << batch << "\n";
  }

  FoldResult result;
  {
    const Evaluation tr = evaluate(model, data, split.train, maps);
    const Evaluation va = evaluate(model, data, split.validation, maps);
    result.curve.push_back({0, tr.loss, va.loss, tr.accuracy, va.accuracy});
    result.initial_loss = tr.loss;
  }
  result.best_epoch = 0;
  result.best_val_acc = result.curve.back().val_acc;
  std::vector<std::vector<double>> best = snapshot(params);

  const std::uint64_t dropout_base = derive_seed(cfg.seed, 3, fold);
  std::vector<SampleStep> steps(kGradientChunk);
  std::vector<std::exception_ptr> errors(kGradientChunk);
  std::vector<std::vector<double>> total(params.size());

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng shuffle_rng(derive_seed(cfg.seed, 2, fold, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += batch) {
      const std::size_t b1 = std::min(order.size(), b0 + batch);
      for (std::size_t i = 0; i < params.size(); ++i) total[i].assign(params[i].tensor.numel(), 0.0);

      for (std::size_t c0 = b0; c0 < b1; c0 += kGradientChunk) {
        const auto c1 = static_cast<std::ptrdiff_t>(std::min(b1, c0 + kGradientChunk));
        const auto start = static_cast<std::ptrdiff_t>(c0);
#pragma omp parallel for schedule(dynamic, 1)
        for (std::ptrdiff_t j = start; j < c1; ++j) {
          const std::size_t slot = static_cast<std::size_t>(j - start);
          const std::size_t idx = order[static_cast<std::size_t>(j)];
          try {
            errors[slot] = nullptr;
            steps[slot] = sample_step(model, params, data.samples[idx], maps ? &(*maps)[idx] : nullptr, cfg.dropout,
                                      derive_seed(dropout_base, epoch, idx));
          } catch (...) {
            errors[slot] = std::current_exception();
          }
        }
        // Reduce in sample order so the sum is independent of thread count.
        for (std::ptrdiff_t j = start; j < c1; ++j) {
          const std::size_t slot = static_cast<std::size_t>(j - start);
          if (errors[slot]) std::rethrow_exception(errors[slot]);
          const SampleStep& st = steps[slot];
          const Sample& s = data.samples[order[static_cast<std::size_t>(j)]];
          if (!std::isfinite(st.loss)) overflow(params, st, s, fold, epoch);
          for (std::size_t i = 0; i < params.size(); ++i) {
            for (std::size_t k = 0; k < total[i].size(); ++k) total[i][k] += st.grads[i][k];
          }
          loss_sum += st.loss;
          correct += st.correct ? 1 : 0;
        }
      }
      const double inv = 1.0 / static_cast<double>(b1 - b0);
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (double& g : total[i]) {
          g *= inv;
          if (!std::isfinite(g)) {
            throw std::runtime_error("non-finite gradient in fold " + std::to_string(fold) + ", epoch " +
                                     std::to_string(epoch) + ": parameter group '" + params[i].name + "' overflowed");
          }
        }
      }
      adam_step(params, total, adam, cfg.learning_rate);
    }

    const Evaluation va = evaluate(model, data, split.validation, maps);
    const double n_train = static_cast<double>(order.size());
    result.curve.push_back({epoch, loss_sum / n_train, va.loss, static_cast<double>(correct) / n_train, va.accuracy});
    if (va.accuracy > result.best_val_acc) {
      result.best_val_acc = va.accuracy;
      result.best_epoch = epoch;
      best = snapshot(params);
    }
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "fold %zu epoch %zu train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f\n",
                    fold, epoch, loss_sum / n_train, static_cast<double>(correct) / n_train, va.loss, va.accuracy);
      *log << line << std::flush;
    }
  }

  restore(params, best);
  const Evaluation te = evaluate(model, data, split.test, maps);
  std::vector<std::size_t> truth;
  for (std::size_t i : split.test) truth.push_back(data.samples[i].label);
  result.test = evaluate_predictions(truth, te.probs, data.classes);
  result.model = std::move(model);
  return result;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("empty dataset");
  TrainResult r;
  r.plan = make_folds(data.size(), cfg.folds, cfg.split, cfg.seed);
  std::vector<MetricsReport> reports;
  for (std::size_t k = 0; k < r.plan.folds.size(); ++k) {
    r.folds.push_back(train_fold(data, cfg, r.plan.folds[k], k, log));
    reports.push_back(r.folds.back().test);
    if (log) {
      char line[160];
      std::snprintf(line, sizeof line, "fold %zu best epoch %zu val_acc %.4f test_acc %.4f\n", k,
                    r.folds.back().best_epoch, r.folds.back().best_val_acc, r.folds.back().test.accuracy);
      *log << line << std::flush;
    }
    if (r.folds[k].best_val_acc > r.folds[r.best_fold].best_val_acc) r.best_fold = k;
  }
  r.average = average_reports(reports);
  return r;
}

std::string curve_csv(const std::vector<EpochStats>& curve) {
  std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
  char line[160];
  for (const EpochStats& e : curve) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss, e.train_acc,
                  e.val_acc);
    out += line;
  }
  return out;
}

std::vector<AblationRow> run_ablation(const Dataset& data, const TrainConfig& base,
                                      const std::vector<std::uint64_t>& seeds, std::ostream* log) {
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  std::vector<AblationRow> rows;
  for (Ablation variant : ablation_table_order()) {
    AblationRow row;
    row.variant = variant;
    for (std::uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.ablation = variant;
      cfg.seed = seed;
      const TrainResult r = train(data, cfg, nullptr);
      row.accuracy.push_back(r.average.accuracy);
      row.macro_f1.push_back(r.average.macro.f1);
      if (log) {
        char line[160];
        std::snprintf(line, sizeof line, "ablation %s seed %llu accuracy %.4f macro_f1 %.4f\n",
                      to_string(variant).c_str(), static_cast<unsigned long long>(seed), r.average.accuracy,
                      r.average.macro.f1);
        *log << line << std::flush;
      }
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      row.mean_accuracy += row.accuracy[i] / static_cast<double>(seeds.size());
      row.mean_macro_f1 += row.macro_f1[i] / static_cast<double>(seeds.size());
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  double full = 0.0;
  for (const AblationRow& r : rows) {
    if (r.variant == Ablation::none) full = r.mean_accuracy;
  }
  std::string out = "variant,accuracy,macro_f1,accuracy_drop\n";
  char line[160];
  for (const AblationRow& r : rows) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f\n", to_string(r.variant).c_str(), r.mean_accuracy,
                  r.mean_macro_f1, full - r.mean_accuracy);
    out += line;
  }
  return out;
}

}  // namespace dmla
