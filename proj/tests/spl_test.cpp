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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "test_support.hpp"

namespace sccm {
namespace {

using Losses = std::vector<double>;

struct Instance {
  Losses losses;
  double lambda = 0.0;
  double gamma = 0.0;
};

// g in [1, 8], losses in [0, 2], lambda in [0.05, 1], gamma in [0, 0.5]. Every
// third instance draws losses from a coarse lattice so ties are common.
Instance random_instance(Rng& rng, std::size_t index) {
  std::uniform_int_distribution<std::size_t> size(1, 8);
  std::uniform_real_distribution<double> loss(0.0, 2.0);
  std::uniform_int_distribution<int> lattice(0, 8);
  std::uniform_real_distribution<double> lambda(0.05, 1.0);
  std::uniform_real_distribution<double> gamma(0.0, 0.5);
  Instance inst;
  const std::size_t g = size(rng);
  for (std::size_t j = 0; j < g; ++j)
    inst.losses.push_back(index % 3 == 2 ? 0.25 * lattice(rng) : loss(rng));
  inst.lambda = lambda(rng);
  inst.gamma = index % 7 == 0 ? 0.0 : gamma(rng);
  return inst;
}

double mass(const Losses& w) { return std::accumulate(w.begin(), w.end(), 0.0); }

// Largest violation of the first-order optimality conditions of psi on the
// box, evaluated independently of either solver.
double kkt_violation(const Losses& l, const Losses& w, double lambda, double gamma) {
  const double t = mass(w);
  double worst = 0.0;
  for (std::size_t j = 0; j < l.size(); ++j) {
    double grad = l[j] - lambda;
    if (gamma > 0.0) {
      if (t <= 0.0) return std::numeric_limits<double>::infinity();
      grad -= gamma / (2.0 * std::sqrt(t));
    }
    if (w[j] <= 0.0)
      worst = std::max(worst, -grad);
    else if (w[j] >= 1.0)
      worst = std::max(worst, grad);
    else
      worst = std::max(worst, std::abs(grad));
  }
  return worst;
}

TEST(SolveSpl, SelectsEasyTetrads) {
  EXPECT_EQ(solve_spl(Losses{0.3}, 0.5).weights, Losses{1.0});
  EXPECT_EQ(solve_spl(Losses{0.7}, 0.5).weights, Losses{0.0});
  EXPECT_EQ(solve_spl(Losses{0.5}, 0.5).weights, Losses{1.0});
}

TEST(SolveSpl, ReportsObjectiveAndSupport) {
  const auto s = solve_spl(Losses{0.1, 0.9, 0.4}, 0.5);
  EXPECT_EQ(s.weights, (Losses{1.0, 0.0, 1.0}));
  EXPECT_EQ(s.support_size, 2u);
  EXPECT_NEAR(s.objective_value, 0.1 + 0.4 - 0.5 * 2, 1e-15);
}

TEST(SolveSpl, EmptyGroup) {
  try {
    solve_spl(Losses{}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
}

TEST(SolveSpld, ThreeLossExample) {
  const Losses l{0.1, 0.2, 0.9};
  EXPECT_EQ(solve_spld(l, 0.3, 0.2).weights, (Losses{1.0, 1.0, 0.0}));

  // Independent check: prefix-fill objective over total mass t on a fine grid.
  double best_t = 0.0;
  double best_f = 0.0;
  for (int i = 0; i <= 300000; ++i) {
    const double t = 3.0 * i / 300000.0;
    const double whole = std::floor(std::min(t, 2.999999999));
    double fill = 0.0;
    for (int u = 0; u < static_cast<int>(whole); ++u) fill += l[u];
    fill += (t - whole) * l[static_cast<int>(whole)];
    const double f = fill - 0.3 * t - 0.2 * std::sqrt(t);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  EXPECT_NEAR(best_t, 2.0, 1e-4);
  EXPECT_NEAR(solve_spld(l, 0.3, 0.2).objective_value, best_f, 1e-9);
}

TEST(SolveSpld, SingleItemClosedForm) {
  // 1.3 v - 0.3 v - 0.2 sqrt(v) is minimized at sqrt(v) = 0.1.
  const auto s = solve_spld(Losses{1.3}, 0.3, 0.2);
  ASSERT_EQ(s.weights.size(), 1u);
  EXPECT_NEAR(s.weights[0], 0.01, 1e-12);
  EXPECT_NEAR(s.objective_value, 0.01 - 0.02, 1e-12);
}

TEST(SolveSpld, ZeroGammaIsSpl) {
  Rng rng(3);
  for (std::size_t i = 0; i < 300; ++i) {
    const Instance inst = random_instance(rng, i);
    EXPECT_EQ(solve_spld(inst.losses, inst.lambda, 0.0).weights,
              solve_spl(inst.losses, inst.lambda).weights);
  }
}

TEST(SolveSpld, TiesShareBoundaryMass) {
  // Two tied losses above lambda: total stationary mass 0.25 split evenly.
  const auto s = solve_spld(Losses{0.5, 0.5}, 0.3, 0.2);
  EXPECT_NEAR(s.weights[0], 0.125, 1e-15);
  EXPECT_EQ(s.weights[0], s.weights[1]);
  const auto [o, diag] = oracle_spld(Losses{0.5, 0.5}, 0.3, 0.2);
  EXPECT_NEAR(s.objective_value, o.objective_value, 1e-12);
}

TEST(SolveSpld, MatchesOracleOnRandomInstances) {
  Rng rng(2024);
  for (std::size_t i = 0; i < 400; ++i) {
    const Instance inst = random_instance(rng, i);
    const auto fast = solve_spld(inst.losses, inst.lambda, inst.gamma);
    const auto [slow, diag] = oracle_spld(inst.losses, inst.lambda, inst.gamma);
    EXPECT_LE(fast.objective_value, slow.objective_value + 1e-8) << "instance " << i;
    EXPECT_NEAR(fast.objective_value, slow.objective_value, 1e-8) << "instance " << i;
    EXPECT_NEAR(fast.objective_value,
                spld_objective(inst.losses, fast.weights, inst.lambda, inst.gamma), 1e-15);
    EXPECT_LT(kkt_violation(inst.losses, fast.weights, inst.lambda, inst.gamma), 1e-9)
        << "instance " << i;
    EXPECT_GE(diag.kkt_residual, 0.0);
  }
}

TEST(SolveSpld, BoxFeasibleAndSupportCount) {
  Rng rng(5);
  for (std::size_t i = 0; i < 500; ++i) {
    const Instance inst = random_instance(rng, i);
    const auto s = solve_spld(inst.losses, inst.lambda, inst.gamma);
    std::size_t support = 0;
    for (double w : s.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      support += w > 0.0;
    }
    EXPECT_EQ(s.support_size, support);
  }
}

TEST(SolveSpld, DiversityKeepsEveryGroupAlive) {
  Rng rng(6);
  std::uniform_real_distribution<double> loss(0.0, 50.0);
  std::uniform_real_distribution<double> gamma(1e-3, 0.5);
  for (int i = 0; i < 500; ++i) {
    Losses l(1 + i % 8);
    for (double& x : l) x = loss(rng);
    const double lambda = 0.05;
    const double g = gamma(rng);
    EXPECT_GT(mass(solve_spld(l, lambda, g).weights), 0.0);
    EXPECT_GT(mass(oracle_spld(l, lambda, g).first.weights), 0.0);
  }
}

TEST(SolveSpld, OrderConsistency) {
  Rng rng(7);
  for (std::size_t i = 0; i < 500; ++i) {
    const Instance inst = random_instance(rng, i);
    const auto w = solve_spld(inst.losses, inst.lambda, inst.gamma).weights;
    for (std::size_t a = 0; a < w.size(); ++a)
      for (std::size_t b = 0; b < w.size(); ++b)
        if (inst.losses[a] < inst.losses[b]) {
          EXPECT_GE(w[a], w[b]);
        }
  }
}

TEST(SolveSpld, PermutationEquivariant) {
  Rng rng(8);
  for (std::size_t i = 0; i < 300; ++i) {
    const Instance inst = random_instance(rng, i);
    std::vector<std::size_t> perm(inst.losses.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Losses permuted(perm.size());
    for (std::size_t j = 0; j < perm.size(); ++j) permuted[j] = inst.losses[perm[j]];
    const auto w = solve_spld(inst.losses, inst.lambda, inst.gamma).weights;
    const auto wp = solve_spld(permuted, inst.lambda, inst.gamma).weights;
    for (std::size_t j = 0; j < perm.size(); ++j) EXPECT_EQ(wp[j], w[perm[j]]);
  }
}

TEST(SolveSpl, EasinessMonotoneInLambda) {
  Rng rng(9);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < 300; ++i) {
    const Instance inst = random_instance(rng, i);
    const double larger = inst.lambda * (1.0 + unit(rng));
    const auto small = solve_spld(inst.losses, inst.lambda, 0.0).weights;
    const auto big = solve_spld(inst.losses, larger, 0.0).weights;
    for (std::size_t j = 0; j < small.size(); ++j)
      if (small[j] > 0.0) {
        EXPECT_GT(big[j], 0.0);
      }
  }
}

TEST(OracleSpld, AgreesOnThreeLossExample) {
  const Losses l{0.1, 0.2, 0.9};
  EXPECT_NEAR(oracle_spld(l, 0.3, 0.2).first.objective_value,
              solve_spld(l, 0.3, 0.2).objective_value, 1e-8);
}

TEST(OracleSpld, ZeroGammaMatchesSplExactly) {
  Rng rng(10);
  for (std::size_t i = 0; i < 100; ++i) {
    const Instance inst = random_instance(rng, i);
    EXPECT_EQ(oracle_spld(inst.losses, inst.lambda, 0.0).first.objective_value,
              solve_spl(inst.losses, inst.lambda).objective_value);
  }
}

TEST(OracleSpld, HardLossesStillGetMass) {
  const auto [s, diag] = oracle_spld(Losses{1.0, 1.5, 2.0}, 0.1, 0.3);
  EXPECT_GT(mass(s.weights), 0.0);
  EXPECT_GE(diag.grid_points, 10000u);
}

TEST(OracleSpld, RejectsLargeGroups) {
  try {
    oracle_spld(Losses(kOracleMaxGroup + 1, 0.5), 0.3, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GroupTooLarge);
  }
}

TEST(UpdateImportance, ZeroGammaConcatenatesSpl) {
  const LossVector l{{{0.1, 0.9}, {0.6, 0.2, 0.4}}};
  const auto v = update_importance(l, PacingState{0.5, 0.0});
  ASSERT_EQ(v.groups.size(), 2u);
  EXPECT_EQ(v.groups[0], solve_spl(l.groups[0], 0.5).weights);
  EXPECT_EQ(v.groups[1], solve_spl(l.groups[1], 0.5).weights);
}

TEST(UpdateImportance, GroupsMatchOracleSeed49) {
  Rng rng(49);
  std::uniform_real_distribution<double> loss(0.0, 2.0);
  LossVector l;
  for (int k = 0; k < 5; ++k) {
    l.groups.emplace_back(6);
    for (double& x : l.groups.back()) x = loss(rng);
  }
  const PacingState pacing{0.4, 0.3};
  const auto v = update_importance(l, pacing);
  for (std::size_t k = 0; k < 5; ++k) {
    const double got = spld_objective(l.groups[k], v.groups[k], 0.4, 0.3);
    EXPECT_NEAR(got, oracle_spld(l.groups[k], 0.4, 0.3).first.objective_value, 1e-8);
  }
}

TEST(AdvancePacing, Examples) {
  const auto next = advance_pacing(PacingState{0.5, 0.1, 1.1, 1.1});
  EXPECT_NEAR(next.lambda, 0.55, 1e-15);
  EXPECT_NEAR(next.gamma, 0.11, 1e-15);
  const PacingState same{0.5, 0.1, 1.0, 1.0};
  EXPECT_EQ(advance_pacing(same), same);
  PacingState p{1.0, 0.0, 2.0, 1.0};
  for (int i = 0; i < 3; ++i) p = advance_pacing(p);
  EXPECT_EQ(p.lambda, 8.0);
}

TEST(AdvancePacing, SelectedMassNonDecreasing) {
  Rng rng(11);
  std::uniform_real_distribution<double> loss(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    LossVector l;
    for (int k = 0; k < 6; ++k) {
      l.groups.emplace_back(7);
      for (double& x : l.groups.back()) x = loss(rng);
    }
    PacingState pacing{0.1, trial % 2 == 0 ? 0.0 : 0.05, 1.15, 1.05};
    double previous = update_importance(l, pacing).total_mass();
    for (int it = 0; it < 30; ++it) {
      pacing = advance_pacing(pacing);
      const double now = update_importance(l, pacing).total_mass();
      EXPECT_GE(now, previous - 1e-12);
      previous = now;
    }
  }
}

TEST(InitLambda, Examples) {
  EXPECT_DOUBLE_EQ(init_lambda(LossVector{{{1, 2, 3, 4}}}, 0.5), 2.5);
  EXPECT_EQ(init_lambda(LossVector{{{1, 7, 3}, {2, 9, 5}}}, 1.0), 9.0);
  EXPECT_DOUBLE_EQ(init_lambda(LossVector{{{0, 0, 1, 2, 3, 4}, {0, 0}}}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(init_lambda(LossVector{{{0.4, 0.4}, {0.4, 0.4, 0.4}}}, 0.3), 0.4);
}

TEST(InitLambda, FloorsAtPositiveValue) {
  EXPECT_EQ(init_lambda(LossVector{{{0.0, 0.0}}}, 0.5), kMinLambda);
}

TEST(InitLambda, Errors) {
  try {
    init_lambda(LossVector{}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGroup);
  }
  try {
    init_lambda(LossVector{{{1.0}}}, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
}

}  // namespace
}  // namespace sccm
