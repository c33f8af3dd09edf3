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

#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace sccm {
namespace {

using testing::random_dataset;
using testing::random_params;
using testing::scalar_sigmoid;

// Reference implementation written from the definitions, sharing no code with
// the library beyond the data types.
struct Reference {
  const EmbeddingParams& p;
  const Dataset& d;

  std::vector<double> embed(const Matrix& W, const Vector& b, const Matrix& X,
                            Eigen::Index row) const {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      double a = b[i];
      for (Eigen::Index c = 0; c < W.cols(); ++c) a += W(i, c) * X(row, c);
      out.push_back(scalar_sigmoid(a));
    }
    return out;
  }
  double score(std::size_t image, std::size_t text) const {
    const auto h = embed(p.W1, p.b1, d.images(), image);
    const auto g = embed(p.W2, p.b2, d.texts(), text);
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += h[i] * g[i];
    return s;
  }
  double argument(const Tetrad& t, double margin) const {
    const bool i2t = t.direction == QueryDirection::image_to_text;
    const double aligned = score(t.query, t.query);
    const double negative = i2t ? score(t.query, t.negative) : score(t.negative, t.query);
    return t.label * (negative - aligned) + margin;
  }
  double loss(const Tetrad& t, double margin) const {
    return std::max(0.0, argument(t, margin));
  }
  double regularizer() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.W1.size(); ++i) s += p.W1.data()[i] * p.W1.data()[i];
    for (Eigen::Index i = 0; i < p.W2.size(); ++i) s += p.W2.data()[i] * p.W2.data()[i];
    return 0.5 * s;
  }
  double subproblem(const TetradSet& ts, const ImportanceVector& v, double margin) const {
    double total = regularizer();
    for (std::size_t k = 0; k < ts.groups.size(); ++k)
      for (std::size_t j = 0; j < ts.groups[k].size(); ++j)
        total += v.groups[k][j] * loss(ts.groups[k][j], margin);
    return total;
  }
  double objective(const TetradSet& ts, const ImportanceVector& v,
                   const PacingState& pacing, double margin) const {
    double total = regularizer();
    for (std::size_t k = 0; k < ts.groups.size(); ++k) {
      double mass = 0.0;
      for (std::size_t j = 0; j < ts.groups[k].size(); ++j) {
        total += v.groups[k][j] * loss(ts.groups[k][j], margin);
        total -= pacing.lambda * v.groups[k][j];
        mass += v.groups[k][j];
      }
      total -= pacing.gamma * std::sqrt(mass);
    }
    return total;
  }
};

// Two pairs with h = (0.5, 0.5, 0.5, 0.5) for every image and g = sigma(z) in
// every coordinate, so S(0, j) = 2 sigma(z_j).
struct TwoPairFixture {
  Dataset data;
  EmbeddingParams params;
  TwoPairFixture(double z0, double z1)
      : data(validate_dataset(Matrix::Zero(2, 1), (Matrix(2, 1) << z0, z1).finished())),
        params(EmbeddingParams::zeros(4, 1, 1)) {
    params.W2 = Matrix::Ones(4, 1);
  }
};

TEST(TetradLoss, MarginSatisfied) {
  const TwoPairFixture f(std::log(3.0), 0.0);  // S_00 - S_01 = 2 (0.75 - 0.5)
  EXPECT_EQ(tetrad_loss(f.params, f.data, Tetrad{0, 1}, LossConfig{0.1}), 0.0);
}

TEST(TetradLoss, EqualScoresGiveMargin) {
  const TwoPairFixture f(0.3, 0.3);
  EXPECT_DOUBLE_EQ(tetrad_loss(f.params, f.data, Tetrad{0, 1}, LossConfig{0.1}), 0.1);
}

TEST(TetradLoss, LinearRegion) {
  const TwoPairFixture f(0.0, std::log(1.5));  // S_01 - S_00 = 2 (0.6 - 0.5)
  EXPECT_NEAR(tetrad_loss(f.params, f.data, Tetrad{0, 1}, LossConfig{0.1}), 0.3, 1e-15);
}

TEST(TetradLoss, IndexOutOfRange) {
  const TwoPairFixture f(0.0, 0.0);
  for (const Tetrad t : {Tetrad{0, 2}, Tetrad{2, 0}, Tetrad{1, 1}}) {
    try {
      tetrad_loss(f.params, f.data, t, LossConfig{});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::IndexOutOfRange);
    }
  }
}

TEST(AllLosses, ZeroParamsGiveMargin) {
  Rng rng(1);
  const Dataset d = random_dataset(4, 3, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full(), true);
  const LossVector l = all_losses(EmbeddingParams::zeros(3, 3, 2), d, ts, LossConfig{0.1});
  ASSERT_EQ(l.size(), 24u);
  for (const auto& g : l.groups)
    for (double x : g) EXPECT_DOUBLE_EQ(x, 0.1);
}

TEST(AllLosses, TwoPairsMatchPointwise) {
  Rng rng(2);
  const Dataset d = random_dataset(2, 3, 2, rng);
  const auto p = random_params(2, 3, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  const LossVector l = all_losses(p, d, ts, LossConfig{0.1});
  ASSERT_EQ(l.size(), 2u);
  EXPECT_EQ(l.groups[0][0], tetrad_loss(p, d, ts.groups[0][0], LossConfig{0.1}));
  EXPECT_EQ(l.groups[1][0], tetrad_loss(p, d, ts.groups[1][0], LossConfig{0.1}));
}

TEST(AllLosses, MatchesReferenceForSeed46) {
  Rng rng(46);
  const Dataset d = random_dataset(6, 4, 5, rng);
  const auto p = random_params(3, 4, 5, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full(), true);
  const LossConfig cfg{0.2};
  const LossVector l = all_losses(p, d, ts, cfg);
  const Reference ref{p, d};
  for (std::size_t k = 0; k < ts.groups.size(); ++k)
    for (std::size_t j = 0; j < ts.groups[k].size(); ++j)
      EXPECT_NEAR(l.groups[k][j], ref.loss(ts.groups[k][j], cfg.margin), 1e-14);
}

TEST(AllLosses, NonnegativeAndZeroExactlyWhenMarginMet) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const Dataset d = random_dataset(6, 3, 3, rng);
    const auto p = random_params(3, 3, 3, rng);
    const TetradSet ts = build_tetrads(d, Sampling::full(), seed % 2 == 0);
    const LossConfig cfg{0.05 * static_cast<double>(seed % 5)};
    const LossVector l = all_losses(p, d, ts, cfg);
    const ScoreMatrix S = score_matrix(p, d);
    for (std::size_t k = 0; k < ts.groups.size(); ++k)
      for (std::size_t j = 0; j < ts.groups[k].size(); ++j) {
        const auto [aligned, negative] = detail::tetrad_scores(S, ts.groups[k][j]);
        EXPECT_GE(l.groups[k][j], 0.0);
        EXPECT_EQ(l.groups[k][j] == 0.0, aligned - negative >= cfg.margin);
      }
  }
}

TEST(Objective, ZeroWeightsLeaveRegularizer) {
  Rng rng(5);
  const Dataset d = random_dataset(4, 3, 2, rng);
  const auto p = random_params(2, 3, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  const ImportanceVector v = ImportanceVector::filled(ts, 0.0);
  const double expected = 0.5 * (p.W1.squaredNorm() + p.W2.squaredNorm());
  EXPECT_NEAR(objective(p, d, ts, v, PacingState{0.7, 0.3}, LossConfig{0.1}), expected,
              1e-12);
}

TEST(Objective, PlugInWithUnitWeights) {
  Rng rng(6);
  const Dataset d = random_dataset(3, 2, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  const ImportanceVector v = ImportanceVector::filled(ts, 1.0);
  for (double lambda : {0.05, 0.5, 2.0}) {
    const double value = objective(EmbeddingParams::zeros(2, 2, 2), d, ts, v,
                                   PacingState{lambda, 0.0}, LossConfig{0.1});
    EXPECT_NEAR(value, 6 * 0.1 - lambda * 6, 1e-14);
  }
}

TEST(Objective, MatchesReferenceForSeed47) {
  Rng rng(47);
  const Dataset d = random_dataset(5, 3, 4, rng);
  const auto p = random_params(3, 3, 4, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full(), true);
  ImportanceVector v = ImportanceVector::filled(ts, 0.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& g : v.groups)
    for (auto& w : g) w = unit(rng) < 0.3 ? 0.0 : unit(rng);
  const PacingState pacing{0.4, 0.25};
  const Reference ref{p, d};
  EXPECT_NEAR(objective(p, d, ts, v, pacing, LossConfig{0.3}),
              ref.objective(ts, v, pacing, 0.3), 1e-12);
}

TEST(Objective, AlignmentError) {
  Rng rng(8);
  const Dataset d = random_dataset(3, 2, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  ImportanceVector v = ImportanceVector::filled(ts, 1.0);
  v.groups[0].push_back(1.0);
  try {
    objective(EmbeddingParams::zeros(2, 2, 2), d, ts, v, PacingState{}, LossConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::AlignmentError);
  }
}

TEST(Regularizer, DirectSummationIgnoresBiases) {
  Rng rng(9);
  auto p = random_params(3, 4, 5, rng);
  double direct = 0.0;
  for (Eigen::Index r = 0; r < 3; ++r) {
    for (Eigen::Index c = 0; c < 4; ++c) direct += p.W1(r, c) * p.W1(r, c);
    for (Eigen::Index c = 0; c < 5; ++c) direct += p.W2(r, c) * p.W2(r, c);
  }
  EXPECT_NEAR(regularizer(p), 0.5 * direct, 1e-14);
  p.b1.setConstant(100.0);
  p.b2.setConstant(-100.0);
  EXPECT_NEAR(regularizer(p), 0.5 * direct, 1e-14);
}

void expect_regularizer_only(const Gradient& g, const EmbeddingParams& p) {
  EXPECT_EQ(g.dW1, p.W1);
  EXPECT_EQ(g.dW2, p.W2);
  EXPECT_TRUE(g.db1.isZero(0.0));
  EXPECT_TRUE(g.db2.isZero(0.0));
}

TEST(GradParams, ZeroWeightsGiveRegularizerGradient) {
  Rng rng(10);
  const Dataset d = random_dataset(4, 3, 2, rng);
  const auto p = random_params(2, 3, 2, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  expect_regularizer_only(
      grad_params(p, d, ts, ImportanceVector::filled(ts, 0.0), LossConfig{0.1}), p);
}

TEST(GradParams, InactiveHingesGiveRegularizerGradient) {
  Matrix feats(2, 2);
  feats << 1, -1, -1, 1;
  const Dataset d = validate_dataset(feats, feats);
  EmbeddingParams p = EmbeddingParams::zeros(2, 2, 2);
  p.W1 = 10.0 * Matrix::Identity(2, 2);
  p.W2 = 10.0 * Matrix::Identity(2, 2);
  const TetradSet ts = build_tetrads(d, Sampling::full(), true);
  const LossVector l = all_losses(p, d, ts, LossConfig{0.1});
  for (const auto& g : l.groups)
    for (double x : g) ASSERT_EQ(x, 0.0);
  expect_regularizer_only(
      grad_params(p, d, ts, ImportanceVector::filled(ts, 1.0), LossConfig{0.1}), p);
}

// Central differences of the reference f(W; v) = reg + sum v l.
double finite_difference_error(const EmbeddingParams& p, const Dataset& d,
                               const TetradSet& ts, const ImportanceVector& v,
                               double margin) {
  auto f = [&](const EmbeddingParams& q) { return Reference{q, d}.subproblem(ts, v, margin); };
  const Gradient g = grad_params(p, d, ts, v, LossConfig{margin});
  constexpr double h = 1e-5;
  double worst = 0.0;
  auto check = [&](Matrix EmbeddingParams::*m, const Matrix& analytic) {
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      EmbeddingParams q = p;
      (q.*m).data()[i] += h;
      const double up = f(q);
      (q.*m).data()[i] -= 2 * h;
      const double down = f(q);
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic.data()[i]) /
                                  std::max({std::abs(numeric), std::abs(analytic.data()[i]), 1e-3}));
    }
  };
  auto check_vec = [&](Vector EmbeddingParams::*m, const Vector& analytic) {
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
      EmbeddingParams q = p;
      (q.*m)[i] += h;
      const double up = f(q);
      (q.*m)[i] -= 2 * h;
      const double down = f(q);
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic[i]) /
                                  std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3}));
    }
  };
  check(&EmbeddingParams::W1, g.dW1);
  check_vec(&EmbeddingParams::b1, g.db1);
  check(&EmbeddingParams::W2, g.dW2);
  check_vec(&EmbeddingParams::b2, g.db2);
  return worst;
}

bool clear_of_kinks(const EmbeddingParams& p, const Dataset& d, const TetradSet& ts,
                    double margin) {
  const Reference ref{p, d};
  for (const auto& g : ts.groups)
    for (const auto& t : g)
      if (std::abs(ref.argument(t, margin)) < 1e-4) return false;
  return true;
}

TEST(GradParams, FiniteDifferencesSeed48) {
  Rng rng(48);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset d = random_dataset(6, 5, 5, rng);
  EmbeddingParams p = random_params(3, 5, 5, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full());
  while (!clear_of_kinks(p, d, ts, 0.3)) p = random_params(3, 5, 5, rng);
  ImportanceVector v = ImportanceVector::filled(ts, 0.0);
  for (auto& g : v.groups)
    for (auto& w : g) w = unit(rng);
  EXPECT_LT(finite_difference_error(p, d, ts, v, 0.3), 1e-5);
}

TEST(GradParams, FiniteDifferencesManySeeds) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint64_t seed = 100; seed < 125; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + seed % 7;
    const std::size_t p_dim = 1 + seed % 8;
    const std::size_t q_dim = 1 + (seed / 3) % 8;
    const std::size_t dim = 1 + seed % 4;
    const Dataset d = random_dataset(n, p_dim, q_dim, rng);
    const TetradSet ts = build_tetrads(d, Sampling::full(), seed % 2 == 1);
    EmbeddingParams p = random_params(dim, p_dim, q_dim, rng);
    while (!clear_of_kinks(p, d, ts, 0.25)) p = random_params(dim, p_dim, q_dim, rng);
    ImportanceVector v = ImportanceVector::filled(ts, 0.0);
    for (auto& g : v.groups)
      for (auto& w : g) w = unit(rng);
    EXPECT_LT(finite_difference_error(p, d, ts, v, 0.25), 1e-5) << "seed " << seed;
  }
}

TEST(GradParams, LibraryGradientCheckBothModes) {
  EXPECT_LT(gradient_check(1, 20).max_relative_error, 1e-5);
  GradCheckOptions cosine;
  cosine.mode = SimilarityMode::cosine;
  EXPECT_LT(gradient_check(2, 20, cosine).max_relative_error, 1e-5);
  GradCheckOptions corrupt;
  corrupt.corrupt = 1e-2;
  EXPECT_GT(gradient_check(1, 20, corrupt).max_relative_error, 1e-3);
}

TEST(ZeroWeights, RemovingThemChangesNothing) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Dataset d = random_dataset(6, 3, 4, rng);
    const auto p = random_params(3, 3, 4, rng);
    const TetradSet full = build_tetrads(d, Sampling::full(), true);
    ImportanceVector v = ImportanceVector::filled(full, 0.0);
    TetradSet kept;
    ImportanceVector kept_v;
    for (std::size_t k = 0; k < full.groups.size(); ++k) {
      kept.groups.emplace_back();
      kept_v.groups.emplace_back();
      for (std::size_t j = 0; j < full.groups[k].size(); ++j) {
        if (unit(rng) < 0.5) continue;
        v.groups[k][j] = unit(rng);
        kept.groups.back().push_back(full.groups[k][j]);
        kept_v.groups.back().push_back(v.groups[k][j]);
      }
    }
    const LossConfig cfg{0.4};
    const auto a = evaluate_subproblem(p, d, full, v, cfg);
    const auto b = evaluate_subproblem(p, d, kept, kept_v, cfg);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.gradient.dW1, b.gradient.dW1);
    EXPECT_EQ(a.gradient.db1, b.gradient.db1);
    EXPECT_EQ(a.gradient.dW2, b.gradient.dW2);
    EXPECT_EQ(a.gradient.db2, b.gradient.db2);
    EXPECT_EQ(subproblem_value(p, d, full, v, cfg), subproblem_value(p, d, kept, kept_v, cfg));
  }
}

TEST(EvaluateSubproblem, ThreadCountInvariant) {
  Rng rng(12);
  const Dataset d = random_dataset(11, 4, 3, rng);
  const auto p = random_params(3, 4, 3, rng);
  const TetradSet ts = build_tetrads(d, Sampling::full(), true);
  const ImportanceVector v = ImportanceVector::filled(ts, 0.7);
  const auto a = evaluate_subproblem(p, d, ts, v, LossConfig{0.5}, SimilarityMode::inner_product, 1);
  const auto b = evaluate_subproblem(p, d, ts, v, LossConfig{0.5}, SimilarityMode::inner_product, 3);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.gradient.dW1, b.gradient.dW1);
  EXPECT_EQ(a.gradient.dW2, b.gradient.dW2);
}

}  // namespace
}  // namespace sccm
