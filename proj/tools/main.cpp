// SPDX-License-Identifier: Apache-2.0
//
// dmlanet synth | train | eval | ablate | export-attention
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dmla/data_io.hpp"
#include "dmla/training.hpp"

using namespace dmla;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Run-level keys accepted in a config file next to the TrainConfig keys.
struct RunKeys {
  std::optional<std::string> data;
  std::optional<bool> resolve_labels;
  std::optional<std::vector<std::uint64_t>> seeds;
};

struct Overrides {
  std::optional<double> lr;
  std::optional<std::size_t> batch_size, epochs, folds, channels, reduction, embed_width, hidden_width, joint_width,
      classes, max_tokens;
  std::optional<double> dropout;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<std::vector<std::size_t>> split;
  std::optional<bool> embeddings_trainable, backbone_trainable;
};

void add_train_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--batch-size", o.batch_size, "minibatch size (clipped to the training set)");
  cmd->add_option("--epochs", o.epochs, "epochs per fold");
  cmd->add_option("--dropout", o.dropout, "dropout rate on the fused vector");
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--folds", o.folds, "number of folds");
  cmd->add_option("--split", o.split, "train val test percentages")->expected(3);
  cmd->add_option("--ablation", o.ablation, "none | no_sa_ca | no_smatt | no_satt");
  cmd->add_option("--channels", o.channels, "feature-map channels C");
  cmd->add_option("--reduction", o.reduction, "channel MLP reduction ratio");
  cmd->add_option("--embed-width", o.embed_width, "embedding width e");
  cmd->add_option("--hidden-width", o.hidden_width, "LSTM width h");
  cmd->add_option("--joint-width", o.joint_width, "joint width p");
  cmd->add_option("--classes", o.classes, "class count (0 follows the dataset)");
  cmd->add_option("--max-tokens", o.max_tokens, "longest accepted sentence");
  cmd->add_option("--train-embeddings", o.embeddings_trainable, "fine-tune the embedding table (true/false)");
  cmd->add_option("--train-backbone", o.backbone_trainable, "train the backbone (true/false)");
}

void apply(const Overrides& o, TrainConfig& c) {
  if (o.lr) c.learning_rate = *o.lr;
  if (o.batch_size) c.batch_size = *o.batch_size;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.dropout) c.dropout = *o.dropout;
  if (o.seed) c.seed = *o.seed;
  if (o.folds) c.folds = *o.folds;
  if (o.split) c.split = {(*o.split)[0], (*o.split)[1], (*o.split)[2]};
  if (o.ablation) c.ablation = parse_ablation(*o.ablation);
  if (o.channels) c.channels = *o.channels;
  if (o.reduction) c.reduction = *o.reduction;
  if (o.embed_width) c.embed_width = *o.embed_width;
  if (o.hidden_width) c.hidden_width = *o.hidden_width;
  if (o.joint_width) c.joint_width = *o.joint_width;
  if (o.classes) c.classes = *o.classes;
  if (o.max_tokens) c.max_tokens = *o.max_tokens;
  if (o.embeddings_trainable) c.embeddings_trainable = *o.embeddings_trainable;
  if (o.backbone_trainable) c.backbone_trainable = *o.backbone_trainable;
}

// Config file, then flags. Returns the run keys found in the file.
RunKeys load_config(const std::string& path, TrainConfig& cfg) {
  RunKeys keys;
  if (path.empty()) return keys;
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must be a JSON object");
  try {
    if (j.contains("data")) keys.data = j["data"].get<std::string>();
    if (j.contains("resolve_labels")) keys.resolve_labels = j["resolve_labels"].get<bool>();
    if (j.contains("seeds")) keys.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  for (const char* k : {"data", "resolve_labels", "seeds"}) j.erase(k);
  try {
    cfg = train_config_from_json(j, cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  return keys;
}

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!force) throw UsageError("output directory " + out.string() + " exists (use --force to overwrite)");
    fs::remove_all(out);
  }
  fs::create_directories(out);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_report_curves(const fs::path& out, const MetricsReport& r, const std::string& suffix) {
  for (std::size_t c = 0; c < r.roc.size(); ++c) {
    if (!r.roc[c].empty()) write_file(out / ("roc" + suffix + "_class" + std::to_string(c) + ".csv"), curve_csv(r.roc[c]));
    if (!r.prc[c].empty()) write_file(out / ("prc" + suffix + "_class" + std::to_string(c) + ".csv"), curve_csv(r.prc[c]));
  }
}

void print_summary(std::ostream& os, const MetricsReport& r) {
  os << "accuracy " << fmt(r.accuracy) << "  macro P " << fmt(r.macro.precision) << "  R " << fmt(r.macro.recall)
     << "  F1 " << fmt(r.macro.f1) << "  macro AUC " << fmt(r.macro_auc) << "\n";
}

Dataset load(const std::string& manifest, bool resolve_labels) {
  if (manifest.empty()) throw UsageError("a dataset manifest is required (--data)");
  LoadOptions opts;
  opts.resolve_label_conflicts = resolve_labels;
  return load_dataset(manifest, opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DMLANet image-text sentiment: synthetic data, training, evaluation, ablation, attention export"};
  app.require_subcommand(1);

  // synth
  SynthSpec synth;
  std::string synth_out;
  bool force = false;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic cross-modal dataset");
  c_synth->add_option("--classes", synth.classes, "2 or 3")->capture_default_str();
  c_synth->add_option("--per-class", synth.per_class, "samples per class")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  c_synth->add_option("--embed-width", synth.embed_width, "embedding width")->capture_default_str();
  c_synth->add_option("--out", synth_out, "output directory")->required();
  c_synth->add_flag("--force", force, "replace an existing output directory");

  // train / ablate share the training flags
  std::string config_path, data_path, out_dir;
  bool resolve_labels = false, quiet = false;
  Overrides over;
  std::vector<std::uint64_t> seeds;

  auto* c_train = app.add_subcommand("train", "five-fold training with best-on-validation selection");
  auto* c_ablate = app.add_subcommand("ablate", "train every ablation variant on shared folds and seeds");
  for (CLI::App* cmd : {c_train, c_ablate}) {
    cmd->add_option("--config", config_path, "JSON config with flat TrainConfig keys");
    cmd->add_option("--data", data_path, "dataset manifest");
    cmd->add_option("--out", out_dir, "run directory")->required();
    cmd->add_flag("--force", force, "replace an existing run directory");
    cmd->add_flag("--resolve-labels", resolve_labels, "apply per-modality label conflict rules");
    cmd->add_flag("--quiet", quiet, "no progress lines");
    add_train_flags(cmd, over);
  }
  c_ablate->add_option("--seeds", seeds, "seeds to average over (default 1 2 3)");

  std::string checkpoint;
  auto* c_eval = app.add_subcommand("eval", "metrics of a checkpoint on a manifest");
  auto* c_export = app.add_subcommand("export-attention", "dump learned attention weights as JSON lines");
  for (CLI::App* cmd : {c_eval, c_export}) {
    cmd->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    cmd->add_option("--data", data_path, "dataset manifest")->required();
    cmd->add_option("--out", out_dir, "output directory")->required();
    cmd->add_flag("--force", force, "replace an existing output directory");
    cmd->add_flag("--resolve-labels", resolve_labels, "apply per-modality label conflict rules");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (c_synth->parsed()) {
      if (synth.classes != 2 && synth.classes != 3) throw UsageError("--classes must be 2 or 3");
      if (synth.per_class == 0) throw UsageError("--per-class must be positive");
      prepare_out_dir(synth_out, force);
      const SynthSelfTest st = synth_generate(synth, synth_out);
      std::cout << "wrote " << synth.classes * synth.per_class << " samples to " << synth_out << "\n"
                << "self-test: text probe " << fmt(st.text_probe_accuracy) << ", image probe "
                << fmt(st.image_probe_accuracy) << ", majority " << fmt(st.majority_accuracy) << " on "
                << st.test_size << " held-out samples\n";
      return 0;
    }

    if (c_train->parsed() || c_ablate->parsed()) {
      TrainConfig cfg;
      const RunKeys keys = load_config(config_path, cfg);
      try {
        apply(over, cfg);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (data_path.empty() && keys.data) data_path = *keys.data;
      if (!resolve_labels && keys.resolve_labels) resolve_labels = *keys.resolve_labels;
      if (seeds.empty()) seeds = keys.seeds.value_or(std::vector<std::uint64_t>{1, 2, 3});
      try {
        cfg.validate();
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (data_path.empty()) throw UsageError("a dataset manifest is required (--data or \"data\" in the config)");
      if (!fs::exists(data_path)) throw UsageError("manifest not found: " + data_path);
      const Dataset data = load(data_path, resolve_labels);
      try {
        (void)model_config_for(cfg, data);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      prepare_out_dir(out_dir, force);
      json resolved = to_json(cfg);
      resolved["data"] = fs::absolute(data_path).lexically_normal().string();
      resolved["resolve_labels"] = resolve_labels;
      if (c_ablate->parsed()) resolved["seeds"] = seeds;
      write_file(fs::path(out_dir) / "resolved_config.json", resolved.dump(2) + "\n");
      std::ostream* log = quiet ? nullptr : &std::cerr;

      if (c_train->parsed()) {
        const TrainResult r = train(data, cfg, log);
        json folds = json::array();
        for (std::size_t k = 0; k < r.folds.size(); ++k) {
          const FoldResult& f = r.folds[k];
          json fj = to_json(f.test);
          fj["fold"] = k;
          fj["best_epoch"] = f.best_epoch;
          fj["best_val_accuracy"] = f.best_val_acc;
          fj["initial_loss"] = f.initial_loss;
          folds.push_back(fj);
          write_file(fs::path(out_dir) / ("curves_fold" + std::to_string(k) + ".csv"), curve_csv(f.curve));
          write_report_curves(out_dir, f.test, "_fold" + std::to_string(k));
          save_checkpoint(fs::path(out_dir) / "checkpoints" / ("fold" + std::to_string(k)), f.model);
        }
        save_checkpoint(fs::path(out_dir) / "checkpoint", r.folds[r.best_fold].model);
        json metrics{{"folds", folds}, {"average", to_json(r.average, false)}, {"best_fold", r.best_fold}};
        write_file(fs::path(out_dir) / "metrics.json", metrics.dump(2) + "\n");
        std::cout << "mean over " << r.folds.size() << " test folds: ";
        print_summary(std::cout, r.average);
      } else {
        const std::vector<AblationRow> rows = run_ablation(data, cfg, seeds, log);
        const std::string csv = ablation_csv(rows);
        write_file(fs::path(out_dir) / "ablation.csv", csv);
        std::cout << csv;
      }
      return 0;
    }

    if (c_eval->parsed() || c_export->parsed()) {
      if (!fs::exists(checkpoint)) throw UsageError("checkpoint not found: " + checkpoint);
      if (!fs::exists(data_path)) throw UsageError("manifest not found: " + data_path);
      const Model model = load_checkpoint(checkpoint);
      const Dataset data = load(data_path, resolve_labels);
      if (data.classes != model.config().classes) {
        throw UsageError("checkpoint has " + std::to_string(model.config().classes) + " classes, dataset has " +
                         std::to_string(data.classes));
      }
      if (data.vocabulary.size() != model.config().vocab_size) {
        throw UsageError("checkpoint vocabulary size " + std::to_string(model.config().vocab_size) +
                         " differs from the dataset's " + std::to_string(data.vocabulary.size()));
      }
      prepare_out_dir(out_dir, force);
      if (c_eval->parsed()) {
        std::vector<std::size_t> all(data.size()), truth;
        for (std::size_t i = 0; i < data.size(); ++i) {
          all[i] = i;
          truth.push_back(data.samples[i].label);
        }
        const Evaluation ev = evaluate(model, data, all);
        const MetricsReport report = evaluate_predictions(truth, ev.probs, data.classes);
        json j = to_json(report);
        j["loss"] = ev.loss;
        write_file(fs::path(out_dir) / "metrics.json", j.dump(2) + "\n");
        write_report_curves(out_dir, report, "");
        print_summary(std::cout, report);
      } else {
        const std::vector<AttentionDump> dumps = collect_attention(model, data);
        write_attention_jsonl(fs::path(out_dir) / "attention.jsonl", dumps);
        std::cout << "wrote " << dumps.size() << " attention records\n";
      }
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
