// SPDX-License-Identifier: Apache-2.0
// Shared helpers: random tensors, the central-difference gradient oracle, temp dirs.
#pragma once

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dmla/model.hpp"
#include "dmla/random.hpp"
#include "dmla/tape.hpp"
#include "dmla/tensor.hpp"

namespace dmla::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  Tensor t(std::move(shape), std::move(v));
  if (grad) t.set_requires_grad(true);
  return t;
}

struct GradCheckResult {
  double worst = 0.0;  // max |analytic - numeric| / max(1, |numeric|)
  std::string where;
  std::size_t checked = 0;
};

// Compares tape gradients of loss() against central differences with step h
// for every entry of every listed tensor.
inline GradCheckResult grad_check(const std::vector<NamedTensor>& params, const std::function<Tensor()>& loss,
                                  double h = 1e-5) {
  Gradients g;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor l = loss();
    g = tape.gradients(l);
  }
  GradCheckResult r;
  NoTapeScope no_tape;
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    const std::span<const double> analytic = g.of(t);
    std::span<double> w = t.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + h;
      const double up = loss().item();
      w[i] = orig - h;
      const double down = loss().item();
      w[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
      ++r.checked;
      if (err > r.worst) {
        r.worst = err;
        r.where = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double total(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v;
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dmla_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Relative path -> contents for every regular file below root.
inline std::map<std::string, std::string> tree_contents(const std::filesystem::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace dmla::testing
