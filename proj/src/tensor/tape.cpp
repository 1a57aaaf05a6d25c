// SPDX-License-Identifier: Apache-2.0
#include "dmla/tape.hpp"

#include <stdexcept>

namespace dmla {

namespace {
thread_local Tape* g_active = nullptr;
}

std::span<const double> Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.storage_id());
  if (it == grads_.end()) return {};
  return it->second;
}

std::vector<double>& Gradients::slot(const TensorStorage* id, std::size_t n) {
  auto& g = grads_[id];
  if (g.empty()) g.assign(n, 0.0);
  return g;
}

std::span<double> InputGrads::operator[](std::size_t i) {
  if (!needs_[i]) return {};
  const Tensor& t = inputs_[i];
  return grads_.slot(t.storage_id(), t.numel());
}

bool Tape::tracks(const Tensor& t) const {
  return t.defined() && (t.requires_grad() || produced_.count(t.storage_id()) != 0);
}

bool Tape::record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn) {
  if (consumed_) throw std::logic_error("cannot record onto a consumed tape");
  std::vector<bool> needs(inputs.size());
  bool any = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    needs[i] = tracks(inputs[i]);
    any = any || needs[i];
  }
  if (!any) return false;
  produced_.insert(output.storage_id());
  records_.push_back(Record{op, std::move(inputs), std::move(needs), output, std::move(fn)});
  return true;
}

Gradients Tape::sweep(const Tensor& loss, std::vector<Tensor>& leaves) {
  if (consumed_) throw std::logic_error("backward called twice on the same tape");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!tracks(loss)) throw std::invalid_argument("loss was not produced by operations on this tape");
  consumed_ = true;

  Gradients grads;
  grads.slot(loss.storage_id(), 1)[0] = 1.0;
  std::unordered_set<const TensorStorage*> seen_leaf;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    Record& rec = *it;
    if (!grads.has(rec.output)) continue;
    std::span<const double> g_out = grads.of(rec.output);
    InputGrads in(grads, rec.inputs, rec.needs);
    rec.backward(g_out, in);
    for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
      const Tensor& t = rec.inputs[i];
      if (rec.needs[i] && t.requires_grad() && seen_leaf.insert(t.storage_id()).second) {
        leaves.push_back(t);
      }
    }
  }
  if (loss.requires_grad() && seen_leaf.insert(loss.storage_id()).second) leaves.push_back(loss);
  // Saved values are no longer needed once consumed.
  records_.clear();
  produced_.clear();
  return grads;
}

void Tape::backward(const Tensor& loss) {
  std::vector<Tensor> leaves;
  Gradients grads = sweep(loss, leaves);
  for (Tensor& leaf : leaves) {
    std::span<const double> g = grads.of(leaf);
    std::span<double> slot = leaf.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
  }
}

Gradients Tape::gradients(const Tensor& loss) {
  std::vector<Tensor> leaves;
  Gradients all = sweep(loss, leaves);
  Gradients out;
  for (const Tensor& leaf : leaves) {
    std::span<const double> g = all.of(leaf);
    auto& dst = out.slot(leaf.storage_id(), g.size());
    dst.assign(g.begin(), g.end());
  }
  return out;
}

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

NoTapeScope::NoTapeScope() : previous_(g_active) { g_active = nullptr; }
NoTapeScope::~NoTapeScope() { g_active = previous_; }

}  // namespace dmla
