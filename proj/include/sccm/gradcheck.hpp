/*
 * Copyright 2026 The SCCM Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SCCM_GRADCHECK_HPP
#define SCCM_GRADCHECK_HPP

// Finite-difference check of the analytic gradient of f(W; v) on small random
// instances.

#include <algorithm>
#include <cmath>

#include "sccm/core.hpp"
#include "sccm/loss.hpp"

namespace sccm {

struct GradCheckOptions {
  std::size_t max_pairs = 8;
  std::size_t max_feature_dim = 8;
  std::size_t max_embedding_dim = 4;
  double step = 1e-5;
  // Instances with a hinge argument closer than this to zero are redrawn, so
  // no finite-difference probe crosses a kink.
  double kink_clearance = 1e-4;
  SimilarityMode mode = SimilarityMode::inner_product;
  // Test hook: scales the analytic dW1 by (1 + corrupt) before comparing.
  double corrupt = 0.0;
};

struct GradCheckInstance {
  Dataset data;
  EmbeddingParams params;
  TetradSet tetrads;
  ImportanceVector weights;
  LossConfig loss;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t entries = 0;
  std::size_t redraws = 0;
};

/// |a - b| / max(|a|, |b|, 1e-3). The floor keeps entries whose true
/// derivative is ~0 from dividing finite-difference noise by ~0.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

/// A random instance with n in [2, max_pairs], p, q in [1, max_feature_dim],
/// d in [1, max_embedding_dim], weights uniform in [0, 1], margin in [0, 0.5].
inline GradCheckInstance random_gradcheck_instance(Rng& rng,
                                                   const GradCheckOptions& opt,
                                                   std::size_t* redraws = nullptr) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto size_in = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto gaussian = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) m(i, j) = normal(rng);
    return m;
  };

  for (std::size_t attempt = 0;; ++attempt) {
    const std::size_t n = size_in(2, opt.max_pairs);
    const std::size_t p = size_in(1, opt.max_feature_dim);
    const std::size_t q = size_in(1, opt.max_feature_dim);
    const std::size_t d = size_in(1, opt.max_embedding_dim);
    Dataset data = validate_dataset(gaussian(n, p), gaussian(n, q));
    EmbeddingParams params{gaussian(d, p), gaussian(d, 1).col(0), gaussian(d, q),
                           gaussian(d, 1).col(0)};
    const bool symmetric = unit(rng) < 0.5;
    TetradSet tetrads = build_tetrads(data, Sampling::full(), symmetric);
    ImportanceVector v = ImportanceVector::filled(tetrads, 0.0);
    for (auto& g : v.groups)
      for (auto& w : g) w = unit(rng);
    const LossConfig loss{0.5 * unit(rng)};

    const ScoreMatrix S = score_matrix(params, data, opt.mode);
    bool clear = true;
    for (const auto& g : tetrads.groups)
      for (const auto& t : g)
        clear = clear && std::abs(detail::hinge_argument(S, t, loss.margin)) >
                             opt.kink_clearance;
    if (clear) {
      if (redraws) *redraws = attempt;
      return {std::move(data), std::move(params), std::move(tetrads), std::move(v), loss};
    }
  }
}

/// Central differences of f(W; v) against the analytic gradient, over every
/// parameter entry.
inline double max_gradient_error(const GradCheckInstance& inst,
                                 const GradCheckOptions& opt,
                                 std::size_t* entries = nullptr) {
  Gradient g = grad_params(inst.params, inst.data, inst.tetrads, inst.weights,
                           inst.loss, opt.mode);
  g.dW1 *= 1.0 + opt.corrupt;

  auto f = [&](const EmbeddingParams& p) {
    return subproblem_value(p, inst.data, inst.tetrads, inst.weights, inst.loss,
                            opt.mode);
  };
  double worst = 0.0;
  std::size_t count = 0;
  auto probe = [&](auto member, const auto& analytic) {
    EmbeddingParams p = inst.params;
    auto& target = p.*member;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
      const double orig = target.data()[i];
      target.data()[i] = orig + opt.step;
      const double up = f(p);
      target.data()[i] = orig - opt.step;
      const double down = f(p);
      target.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      worst = std::max(worst, relative_error(analytic.data()[i], numeric));
      ++count;
    }
  };
  probe(&EmbeddingParams::W1, g.dW1);
  probe(&EmbeddingParams::b1, g.db1);
  probe(&EmbeddingParams::W2, g.dW2);
  probe(&EmbeddingParams::b2, g.db2);
  if (entries) *entries = count;
  return worst;
}

/// Worst error over `instances` random instances drawn from `seed`.
inline GradCheckReport gradient_check(std::uint64_t seed, std::size_t instances,
                                      const GradCheckOptions& opt = {}) {
  Rng rng(seed);
  GradCheckReport report;
  for (std::size_t i = 0; i < instances; ++i) {
    std::size_t redraws = 0;
    const auto inst = random_gradcheck_instance(rng, opt, &redraws);
    std::size_t entries = 0;
    report.max_relative_error =
        std::max(report.max_relative_error, max_gradient_error(inst, opt, &entries));
    report.entries += entries;
    report.redraws += redraws;
  }
  return report;
}

}  // namespace sccm

#endif  // SCCM_GRADCHECK_HPP
