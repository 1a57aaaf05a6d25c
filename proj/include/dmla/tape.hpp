// SPDX-License-Identifier: Apache-2.0
// Reverse-mode recording of tensor operations.
//
// Operations record onto the tape that is active on the calling thread (see
// TapeScope) whenever one of their inputs is tracked: either a leaf with
// requires_grad set or the output of an earlier record on the same tape.
// Recording order is a topological order, so backward is a single reverse
// sweep. A tape supports exactly one backward pass.
#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dmla/tensor.hpp"

namespace dmla {

// Gradients keyed by tensor storage. Tensors the loss never reached have none.
class Gradients {
 public:
  // Empty span when the tensor received no gradient.
  std::span<const double> of(const Tensor& t) const;
  bool has(const Tensor& t) const { return grads_.count(t.storage_id()) != 0; }
  std::vector<double>& slot(const TensorStorage* id, std::size_t n);

 private:
  std::unordered_map<const TensorStorage*, std::vector<double>> grads_;
};

class Tape;

// Gradient buffers of one record's inputs, handed to its backward function.
class InputGrads {
 public:
  InputGrads(Gradients& grads, const std::vector<Tensor>& inputs, const std::vector<bool>& needs)
      : grads_(grads), inputs_(inputs), needs_(needs) {}
  bool wants(std::size_t i) const { return needs_[i]; }
  // Accumulation buffer for input i; empty when the input needs no gradient.
  std::span<double> operator[](std::size_t i);

 private:
  Gradients& grads_;
  const std::vector<Tensor>& inputs_;
  const std::vector<bool>& needs_;
};

class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out, InputGrads& grads)>;

  struct Record {
    const char* op;
    std::vector<Tensor> inputs;
    std::vector<bool> needs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // True when gradients must flow into t on this tape.
  bool tracks(const Tensor& t) const;
  // Records an op when any input is tracked; returns whether it recorded.
  bool record(const char* op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

  // Sweeps the tape and adds d(loss)/d(leaf) into every leaf's grad slot.
  void backward(const Tensor& loss);
  // Sweeps the tape and returns leaf gradients without touching grad slots.
  Gradients gradients(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Record>& records() const { return records_; }

 private:
  Gradients sweep(const Tensor& loss, std::vector<Tensor>& leaves);

  std::vector<Record> records_;
  std::unordered_set<const TensorStorage*> produced_;
  bool consumed_ = false;
};

// The tape operations record onto on this thread, or nullptr.
Tape* active_tape();

// Makes a tape active for the current thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on this thread (evaluation passes).
class NoTapeScope {
 public:
  NoTapeScope();
  ~NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace dmla
