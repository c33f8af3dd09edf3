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

#ifndef SCCM_SPL_HPP
#define SCCM_SPL_HPP

// Importance-weight solvers for one query group. Each minimizes
//
//   psi(v) = sum_j v_j l_j - lambda * sum_j v_j - gamma * sqrt(sum_j v_j)
//
// over the box [0, 1]^g. psi is convex, so a point satisfying first-order
// optimality is a global minimizer.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "sccm/core.hpp"
#include "sccm/loss.hpp"

namespace sccm {

struct WeightSolution {
  std::vector<double> weights;
  double objective_value = 0.0;
  std::size_t support_size = 0;
};

struct OracleDiagnostics {
  double kkt_residual = 0.0;
  std::size_t grid_points = 0;
};

/// psi(v) evaluated directly.
inline double spld_objective(std::span<const double> losses,
                             std::span<const double> weights, double lambda,
                             double gamma) {
  double linear = 0.0;
  double mass = 0.0;
  for (std::size_t j = 0; j < losses.size(); ++j) {
    linear += weights[j] * losses[j];
    mass += weights[j];
  }
  return linear - lambda * mass - gamma * std::sqrt(mass);
}

namespace detail {

inline void check_group(std::span<const double> losses, double lambda,
                        double gamma) {
  if (losses.empty()) throw Error(ErrorCode::EmptyGroup, "empty query group");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(ErrorCode::ConfigInvalid, "lambda must be positive");
  if (!(gamma >= 0.0) || !std::isfinite(gamma))
    throw Error(ErrorCode::ConfigInvalid, "gamma must be nonnegative");
  for (double l : losses)
    if (!(l >= 0.0) || !std::isfinite(l))
      throw Error(ErrorCode::NonFiniteValue, "losses must be finite and >= 0");
}

inline WeightSolution finish(std::span<const double> losses,
                             std::vector<double> weights, double lambda,
                             double gamma) {
  WeightSolution s;
  s.objective_value = spld_objective(losses, weights, lambda, gamma);
  s.support_size = static_cast<std::size_t>(
      std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0.0; }));
  s.weights = std::move(weights);
  return s;
}

}  // namespace detail

/// Plain self-paced selection: v_j = 1 iff l_j <= lambda.
inline WeightSolution solve_spl(std::span<const double> losses, double lambda) {
  detail::check_group(losses, lambda, 0.0);
  std::vector<double> w(losses.size());
  for (std::size_t j = 0; j < losses.size(); ++j)
    w[j] = losses[j] <= lambda ? 1.0 : 0.0;
  return detail::finish(losses, std::move(w), lambda, 0.0);
}

/// Exact minimizer of psi with diversity.
///
/// Losses are stably sorted ascending; rank u (1-based) is fully selected when
/// l_(u) < lambda + gamma / (2 sqrt(u)). The thresholds shrink with u while the
/// sorted losses grow, so the selected ranks form a prefix. The first rejected
/// rank, with loss l > lambda, carries the remaining stationary mass
///
///   t* = (gamma / (2 (l - lambda)))^2  minus the mass already at 1,
///
/// clipped to [0, 1]. All ranks tied with that boundary loss share their
/// combined mass equally, which keeps the result a function of the loss values
/// alone. gamma = 0 is exactly solve_spl.
inline WeightSolution solve_spld(std::span<const double> losses, double lambda,
                                 double gamma) {
  detail::check_group(losses, lambda, gamma);
  if (gamma == 0.0) return solve_spl(losses, lambda);

  const std::size_t g = losses.size();
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b];
  });

  std::vector<double> w(g, 0.0);
  std::size_t selected = 0;
  while (selected < g) {
    const double u = static_cast<double>(selected + 1);
    if (!(losses[order[selected]] < lambda + gamma / (2.0 * std::sqrt(u)))) break;
    w[order[selected]] = 1.0;
    ++selected;
  }
  if (selected == g) return detail::finish(losses, std::move(w), lambda, gamma);

  // Boundary rank `selected` (0-based). Its loss exceeds lambda because the
  // threshold there is strictly above lambda.
  const double boundary = losses[order[selected]];
  const double excess = boundary - lambda;
  const double stationary_mass =
      (gamma / (2.0 * excess)) * (gamma / (2.0 * excess));
  const double fractional =
      std::clamp(stationary_mass - static_cast<double>(selected), 0.0, 1.0);

  // Tie block [first, last) of ranks with the boundary loss value.
  std::size_t first = selected;
  while (first > 0 && losses[order[first - 1]] == boundary) --first;
  std::size_t last = selected + 1;
  while (last < g && losses[order[last]] == boundary) ++last;

  const double block_mass = static_cast<double>(selected - first) + fractional;
  const double share =
      std::clamp(block_mass / static_cast<double>(last - first), 0.0, 1.0);
  for (std::size_t r = first; r < last; ++r) w[order[r]] = share;
  return detail::finish(losses, std::move(w), lambda, gamma);
}

/// Largest group oracle_spld accepts.
inline constexpr std::size_t kOracleMaxGroup = 64;

/// Independent solver for the same problem, used to certify solve_spld.
///
/// For a fixed total mass t the best v fills the cheapest losses first, so
/// psi reduces to a convex 1-D function F(t) on [0, g], linear-plus-sqrt on
/// each unit segment. Candidates are the segment ends, the stationary point of
/// every segment, and a uniform grid; the best candidate wins.
inline std::pair<WeightSolution, OracleDiagnostics> oracle_spld(
    std::span<const double> losses, double lambda, double gamma,
    std::size_t grid_points = 20000) {
  detail::check_group(losses, lambda, gamma);
  const std::size_t g = losses.size();
  if (g > kOracleMaxGroup)
    throw Error(ErrorCode::GroupTooLarge,
                "oracle handles at most " + std::to_string(kOracleMaxGroup) +
                    " tetrads per group");

  std::vector<double> sorted(losses.begin(), losses.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> prefix(g + 1, 0.0);
  for (std::size_t i = 0; i < g; ++i) prefix[i + 1] = prefix[i] + sorted[i];

  auto F = [&](double t) {
    const auto whole = std::min<std::size_t>(static_cast<std::size_t>(t), g);
    const double frac = whole < g ? t - static_cast<double>(whole) : 0.0;
    const double fill = prefix[whole] + (whole < g ? frac * sorted[whole] : 0.0);
    return fill - lambda * t - gamma * std::sqrt(t);
  };

  std::vector<double> candidates;
  candidates.reserve(2 * g + grid_points + 2);
  for (std::size_t u = 0; u <= g; ++u) candidates.push_back(static_cast<double>(u));
  for (std::size_t u = 0; u < g; ++u) {
    const double slope = sorted[u] - lambda;
    if (slope > 0.0 && gamma > 0.0) {
      const double t = (gamma / (2.0 * slope)) * (gamma / (2.0 * slope));
      if (t > static_cast<double>(u) && t < static_cast<double>(u + 1))
        candidates.push_back(t);
    }
  }
  for (std::size_t i = 0; i <= grid_points; ++i)
    candidates.push_back(static_cast<double>(g) * static_cast<double>(i) /
                         static_cast<double>(grid_points));

  double best_t = 0.0;
  double best_f = F(0.0);
  for (double t : candidates) {
    const double f = F(t);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }

  // Greedy fill of best_t over the original positions, cheapest first.
  std::vector<std::size_t> order(g);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return losses[a] < losses[b];
  });
  std::vector<double> w(g, 0.0);
  double remaining = best_t;
  for (std::size_t r = 0; r < g && remaining > 0.0; ++r) {
    w[order[r]] = std::min(1.0, remaining);
    remaining -= w[order[r]];
  }

  // First-order residual: zero exactly at a KKT point of the box problem.
  OracleDiagnostics diag;
  diag.grid_points = grid_points + 1;
  double mass = 0.0;
  for (double x : w) mass += x;
  for (std::size_t j = 0; j < g; ++j) {
    double grad = losses[j] - lambda;
    if (gamma > 0.0)
      grad -= mass > 0.0 ? gamma / (2.0 * std::sqrt(mass))
                         : std::numeric_limits<double>::infinity();
    double r = 0.0;
    if (w[j] <= 0.0)
      r = std::max(0.0, -grad);
    else if (w[j] >= 1.0)
      r = std::max(0.0, grad);
    else
      r = std::abs(grad);
    diag.kkt_residual = std::max(diag.kkt_residual, r);
  }
  return {detail::finish(losses, std::move(w), lambda, gamma), diag};
}

/// Solves every query group independently.
inline ImportanceVector update_importance(const LossVector& losses,
                                          const PacingState& pacing) {
  pacing.validate();
  ImportanceVector v;
  v.groups.reserve(losses.groups.size());
  for (const auto& g : losses.groups)
    v.groups.push_back(solve_spld(g, pacing.lambda, pacing.gamma).weights);
  return v;
}

/// lambda *= mu_lambda, gamma *= mu_gamma.
inline PacingState advance_pacing(const PacingState& pacing) {
  PacingState next = pacing;
  next.lambda *= pacing.mu_lambda;
  next.gamma *= pacing.mu_gamma;
  return next;
}

/// Linear-interpolation quantile of `values` at `fraction` in [0, 1].
inline double quantile(std::vector<double> values, double fraction) {
  if (values.empty()) throw Error(ErrorCode::EmptyGroup, "quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = fraction * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Smallest lambda init_lambda returns; lambda must stay strictly positive.
inline constexpr double kMinLambda = 1e-8;

/// Median over query groups of each group's `fraction` quantile of its
/// positive losses, so about that share of each group's active tetrads is
/// selected at the first iteration. Zero losses are skipped: any lambda > 0
/// selects them and they carry no gradient. fraction = 1 returns the largest
/// loss, selecting everything.
inline double init_lambda(const LossVector& losses, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorCode::ConfigInvalid, "init fraction must be in (0, 1]");
  if (losses.groups.empty())
    throw Error(ErrorCode::EmptyGroup, "no query groups");
  std::vector<double> per_group;
  per_group.reserve(losses.groups.size());
  double largest = 0.0;
  for (const auto& g : losses.groups) {
    if (g.empty()) throw Error(ErrorCode::EmptyGroup, "empty query group");
    std::vector<double> active;
    for (double l : g)
      if (l > 0.0) active.push_back(l);
    if (active.empty()) continue;
    largest = std::max(largest, *std::max_element(active.begin(), active.end()));
    per_group.push_back(quantile(std::move(active), fraction));
  }
  if (per_group.empty()) return kMinLambda;
  if (fraction == 1.0) return largest;
  return std::max(quantile(std::move(per_group), 0.5), kMinLambda);
}

}  // namespace sccm

#endif  // SCCM_SPL_HPP
