// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "dmla/random.hpp"
#include "dmla/training.hpp"

namespace dmla {

bool FoldPlan::operator==(const FoldPlan& o) const {
  if (folds.size() != o.folds.size()) return false;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    const FoldSplit &a = folds[k], &b = o.folds[k];
    if (a.train != b.train || a.validation != b.validation || a.test != b.test) return false;
  }
  return true;
}

FoldPlan make_folds(std::size_t n, std::size_t folds, const std::array<std::size_t, 3>& split, std::uint64_t seed) {
  if (folds == 0) throw std::invalid_argument("fold count must be positive");
  if (split[0] + split[1] + split[2] != 100) throw std::invalid_argument("split ratios must sum to 100");
  if (n < folds) {
    throw std::invalid_argument("dataset of " + std::to_string(n) + " samples is smaller than the fold count " +
                                std::to_string(folds));
  }
  const auto share = [n](std::size_t percent) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * static_cast<double>(percent) / 100.0));
  };
  const std::size_t n_test = std::max<std::size_t>(1, share(split[2]));
  const std::size_t n_val = share(split[1]);
  if (n_test * folds > n) {
    throw std::invalid_argument(std::to_string(folds) + " disjoint test slices of " + std::to_string(n_test) +
                                " do not fit in " + std::to_string(n) + " samples");
  }
  if (n_test + n_val >= n) throw std::invalid_argument("split leaves no training samples");

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, 0x666f6c64));
  rng.shuffle(perm);

  FoldPlan plan;
  for (std::size_t k = 0; k < folds; ++k) {
    FoldSplit s;
    const std::size_t start = k * n_test;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t idx = perm[(start + j) % n];
      if (j < n_test) {
        s.test.push_back(idx);
      } else if (j < n_test + n_val) {
        s.validation.push_back(idx);
      } else {
        s.train.push_back(idx);
      }
    }
    plan.folds.push_back(std::move(s));
  }
  return plan;
}

}  // namespace dmla
