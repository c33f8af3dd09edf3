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

#ifndef SCCM_TRAINER_HPP
#define SCCM_TRAINER_HPP

// Alternating minimization of the self-paced ranking objective.
//
// Each outer iteration at pacing (lambda, gamma):
//   1. parameter step: gradient descent with backtracking on f(W; v),
//   2. weight step: exact per-group solve for v at the current losses,
//   3. pacing advance: lambda *= mu_lambda, gamma *= mu_gamma.
// Steps 1 and 2 never increase the objective at the iteration's pacing.

#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sccm/core.hpp"
#include "sccm/embed.hpp"
#include "sccm/eval.hpp"
#include "sccm/loss.hpp"
#include "sccm/spl.hpp"

namespace sccm {

struct TrainConfig {
  std::size_t embedding_dim = 10;
  double margin = 1.0;

  // Pacing. lambda0 = 0 derives the first lambda from init_fraction.
  double init_fraction = 0.5;
  double lambda0 = 0.0;
  double gamma_ratio = 0.1;  // gamma0 = gamma_ratio * lambda0
  double mu_lambda = 1.1;
  double mu_gamma = 1.1;

  std::size_t max_outer_iters = 100;
  std::size_t max_inner_steps = 50;

  // Backtracking line search.
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo_c = 1e-4;
  std::size_t max_backtracks = 50;

  double rel_tol = 1e-5;
  std::uint64_t seed = 0;

  // 0 = full tetrads up to 2000 pairs, else this many sampled negatives.
  std::size_t negatives = 0;
  bool symmetric_tetrads = false;
  bool normalized_similarity = false;

  // With a validation set: stop after this many iterations without a new best
  // validation mAP, and return the best parameters seen. 0 disables it.
  std::size_t early_stop_patience = 0;

  SimilarityMode similarity_mode() const {
    return normalized_similarity ? SimilarityMode::cosine
                                 : SimilarityMode::inner_product;
  }

  void validate() const {
    auto fail = [](const std::string& msg) {
      throw Error(ErrorCode::ConfigInvalid, msg);
    };
    if (embedding_dim < 1) fail("embedding_dim must be >= 1");
    if (!(margin >= 0.0) || !std::isfinite(margin)) fail("margin must be >= 0");
    if (!(init_fraction > 0.0 && init_fraction <= 1.0))
      fail("init_fraction must be in (0, 1]");
    if (!(lambda0 >= 0.0) || !std::isfinite(lambda0)) fail("lambda0 must be >= 0");
    if (!(gamma_ratio >= 0.0) || !std::isfinite(gamma_ratio))
      fail("gamma_ratio must be >= 0");
    if (!(mu_lambda >= 1.0) || !(mu_gamma >= 1.0) || !std::isfinite(mu_lambda) ||
        !std::isfinite(mu_gamma))
      fail("growth factors must be >= 1");
    if (max_inner_steps < 1) fail("max_inner_steps must be >= 1");
    if (!(initial_step > 0.0) || !std::isfinite(initial_step))
      fail("initial_step must be > 0");
    if (!(shrink > 0.0 && shrink < 1.0)) fail("shrink must be in (0, 1)");
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) fail("armijo_c must be in (0, 1)");
    if (!(rel_tol > 0.0) || !std::isfinite(rel_tol)) fail("rel_tol must be > 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Line search
// ---------------------------------------------------------------------------

struct LineSearchParams {
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo_c = 1e-4;
  std::size_t max_backtracks = 50;
};

template <typename Point>
struct LineSearchResult {
  double step = 0.0;
  Point point;
  double value = 0.0;
  std::size_t evaluations = 0;
};

/// Backtracking along -grad from x until
///   f(x - s grad) <= f(x) - c s ||grad||^2
/// holds with strict decrease, shrinking s at most max_backtracks times.
/// Returns x with step 0 when no such s is found.
template <typename Point, typename Objective, typename Move>
LineSearchResult<Point> backtracking(const Point& x, double fx,
                                     double grad_sq_norm, Objective&& f,
                                     Move&& move, const LineSearchParams& ls) {
  LineSearchResult<Point> out{0.0, x, fx, 0};
  if (!(grad_sq_norm > 0.0)) return out;
  double step = ls.initial_step;
  for (std::size_t i = 0; i <= ls.max_backtracks; ++i, step *= ls.shrink) {
    Point candidate = move(x, step);
    const double value = f(candidate);
    ++out.evaluations;
    if (std::isfinite(value) && value < fx &&
        value <= fx - ls.armijo_c * step * grad_sq_norm) {
      out.step = step;
      out.point = std::move(candidate);
      out.value = value;
      return out;
    }
  }
  return out;
}

/// Context of one parameter subproblem f(W; v).
struct Subproblem {
  const Dataset& data;
  const TetradSet& tetrads;
  const ImportanceVector& weights;
  LossConfig loss;
  SimilarityMode mode = SimilarityMode::inner_product;
  unsigned threads = 1;

  double value(const EmbeddingParams& p) const {
    return subproblem_value(p, data, tetrads, weights, loss, mode, threads);
  }
  SubproblemEvaluation evaluate(const EmbeddingParams& p) const {
    return evaluate_subproblem(p, data, tetrads, weights, loss, mode, threads);
  }
};

inline LineSearchResult<EmbeddingParams> line_search(
    const EmbeddingParams& params, double value, const Gradient& gradient,
    const Subproblem& problem, const LineSearchParams& ls) {
  return backtracking(
      params, value, gradient.squared_norm(),
      [&](const EmbeddingParams& p) { return problem.value(p); },
      [&](const EmbeddingParams& p, double s) { return apply_step(p, gradient, s); },
      ls);
}

// ---------------------------------------------------------------------------
// Parameter step
// ---------------------------------------------------------------------------

struct OptimizeResult {
  EmbeddingParams params;
  std::size_t inner_steps = 0;
  std::vector<double> values;  // f before the first step, then after each
};

inline void require_finite(double value, const char* what) {
  if (!std::isfinite(value))
    throw Error(ErrorCode::NonFiniteObjective, std::string(what) + " is not finite");
}

/// Gradient descent on f(W; v) for fixed v. Stops when the relative decrease
/// of a step falls below rel_tol, the line search finds no decrease, or after
/// max_inner_steps. The line search starts each step from at most twice the
/// previously accepted step.
inline OptimizeResult optimize_W(const EmbeddingParams& start,
                                 const Subproblem& problem,
                                 const TrainConfig& cfg) {
  OptimizeResult out{start, 0, {}};
  auto eval = problem.evaluate(start);
  require_finite(eval.value, "subproblem value");
  if (!eval.gradient.finite())
    throw Error(ErrorCode::NonFiniteObjective, "gradient is not finite");
  out.values.push_back(eval.value);

  LineSearchParams ls{cfg.initial_step, cfg.shrink, cfg.armijo_c,
                      cfg.max_backtracks};
  while (out.inner_steps < cfg.max_inner_steps) {
    ++out.inner_steps;
    const auto found = line_search(out.params, eval.value, eval.gradient, problem, ls);
    if (found.step == 0.0) break;
    const double decrease = eval.value - found.value;
    out.params = found.point;
    eval = problem.evaluate(out.params);
    require_finite(eval.value, "subproblem value");
    if (!eval.gradient.finite())
      throw Error(ErrorCode::NonFiniteObjective, "gradient is not finite");
    out.values.push_back(eval.value);
    ls.initial_step = std::min(cfg.initial_step, 2.0 * found.step);
    if (decrease <= cfg.rel_tol * std::max(std::abs(found.value + decrease), 1e-300))
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

struct IterationRecord {
  std::size_t iteration = 0;  // 1-based
  double objective_start = 0.0;    // before the parameter step
  double objective_after_w = 0.0;  // after the parameter step
  double objective = 0.0;          // after the weight step
  double lambda = 0.0;
  double gamma = 0.0;
  std::vector<std::size_t> selected_counts;  // weights > 0, per group
  std::vector<double> group_mass;            // sum of weights, per group
  double selected_fraction = 0.0;            // total mass / tetrad count
  std::size_t inner_steps = 0;
  std::optional<double> val_map;

  bool operator==(const IterationRecord&) const = default;
};

struct TrainHistory {
  std::vector<IterationRecord> records;

  bool operator==(const TrainHistory&) const = default;
};

struct TrainOptions {
  const Dataset* validation = nullptr;
  unsigned threads = 1;
  // Called after every outer iteration with the current parameters.
  std::function<void(const IterationRecord&, const EmbeddingParams&)> on_iteration;
};

struct TrainResult {
  EmbeddingParams params;
  TrainHistory history;
  std::size_t iterations = 0;
};

/// Gaussian weights with std sqrt(2 / (fan_in + fan_out)), zero biases.
inline EmbeddingParams init_params(std::size_t d, std::size_t p, std::size_t q,
                                   std::uint64_t seed) {
  Rng rng(seed);
  auto draw = [&](std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> normal(
        0.0, std::sqrt(2.0 / static_cast<double>(rows + cols)));
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
  };
  EmbeddingParams params;
  params.W1 = draw(d, p);
  params.W2 = draw(d, q);
  params.b1 = Vector::Zero(d);
  params.b2 = Vector::Zero(d);
  return params;
}

/// Pair count above which the default switches to sampled negatives.
inline constexpr std::size_t kFullTetradLimit = 2000;

inline Sampling sampling_for(const TrainConfig& cfg, std::size_t n) {
  const std::uint64_t seed = cfg.seed + 1;
  if (cfg.negatives > 0) return Sampling::sample(cfg.negatives, seed);
  if (n <= kFullTetradLimit) return Sampling::full();
  return Sampling::sample(kFullTetradLimit, seed);
}

namespace detail {

inline void fill_selection(IterationRecord& rec, const ImportanceVector& v) {
  rec.selected_counts.clear();
  rec.group_mass.clear();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& g : v.groups) {
    std::size_t selected = 0;
    double mass = 0.0;
    for (double w : g) {
      if (w > 0.0) ++selected;
      mass += w;
    }
    rec.selected_counts.push_back(selected);
    rec.group_mass.push_back(mass);
    total += mass;
    count += g.size();
  }
  rec.selected_fraction = count > 0 ? total / static_cast<double>(count) : 0.0;
}

inline bool saturated(const ImportanceVector& v) {
  for (const auto& g : v.groups)
    for (double w : g)
      if (w < 1.0) return false;
  return true;
}

}  // namespace detail

/// Runs the alternating optimization. Stops after max_outer_iters, on early
/// stopping, or once the pacing admits no more mass (all weights 1, or both
/// growth factors 1) and the objective's relative change within an iteration
/// stayed below rel_tol for two consecutive iterations.
inline TrainResult train(const Dataset& data, const TrainConfig& cfg,
                         const TrainOptions& options = {}) {
  cfg.validate();
  const SimilarityMode mode = cfg.similarity_mode();
  const LossConfig loss{cfg.margin};
  const unsigned threads = std::max(1u, options.threads);

  TrainResult result;
  result.params =
      init_params(cfg.embedding_dim, data.image_dim(), data.text_dim(), cfg.seed);
  if (options.validation) check_compatible(result.params, *options.validation);
  if (cfg.max_outer_iters == 0) return result;

  const TetradSet tetrads =
      build_tetrads(data, sampling_for(cfg, data.size()), cfg.symmetric_tetrads);

  LossVector losses = all_losses(result.params, data, tetrads, loss, mode, threads);
  PacingState pacing;
  pacing.lambda = cfg.lambda0 > 0.0 ? cfg.lambda0 : init_lambda(losses, cfg.init_fraction);
  pacing.gamma = cfg.gamma_ratio * pacing.lambda;
  pacing.mu_lambda = cfg.mu_lambda;
  pacing.mu_gamma = cfg.mu_gamma;
  ImportanceVector v = update_importance(losses, pacing);

  const bool fixed_pacing = cfg.mu_lambda == 1.0 && cfg.mu_gamma == 1.0;
  const bool early_stopping = cfg.early_stop_patience > 0 && options.validation;
  std::size_t calm = 0;
  std::optional<double> best_val;
  std::size_t best_iter = 0;
  EmbeddingParams best_params = result.params;

  for (std::size_t it = 1; it <= cfg.max_outer_iters; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.lambda = pacing.lambda;
    rec.gamma = pacing.gamma;

    const double penalty_before = pacing_penalty(v, pacing);
    const Subproblem problem{data, tetrads, v, loss, mode, threads};
    const OptimizeResult step = optimize_W(result.params, problem, cfg);
    result.params = step.params;
    rec.inner_steps = step.inner_steps;
    rec.objective_start = step.values.front() + penalty_before;
    rec.objective_after_w = step.values.back() + penalty_before;

    losses = all_losses(result.params, data, tetrads, loss, mode, threads);
    v = update_importance(losses, pacing);
    rec.objective = regularizer(result.params) + weighted_loss(losses, v) +
                    pacing_penalty(v, pacing);
    require_finite(rec.objective, "objective");
    detail::fill_selection(rec, v);

    if (options.validation) {
      rec.val_map = mean_ap(result.params, *options.validation,
                            Direction::image_to_text, Cutoff::all(),
                            APMode::by_relevant, mode, threads)
                        .map;
      if (!best_val || *rec.val_map > *best_val) {
        best_val = rec.val_map;
        best_iter = it;
        best_params = result.params;
      }
    }

    result.history.records.push_back(rec);
    result.iterations = it;
    if (options.on_iteration) options.on_iteration(rec, result.params);

    if (early_stopping && it - best_iter >= cfg.early_stop_patience) break;

    const double change = std::abs(rec.objective - rec.objective_start) /
                          std::max(std::abs(rec.objective_start), 1e-12);
    const bool exhausted = fixed_pacing || detail::saturated(v);
    calm = (exhausted && change < cfg.rel_tol) ? calm + 1 : 0;
    if (calm >= 2) break;

    pacing = advance_pacing(pacing);
  }
  if (early_stopping) result.params = best_params;
  return result;
}

// ---------------------------------------------------------------------------
// History export
// ---------------------------------------------------------------------------

inline void write_history_csv(std::ostream& os, const TrainHistory& history) {
  os << "iteration,objective,lambda,gamma,selected_fraction,val_map,"
        "inner_steps,objective_start,objective_after_w,min_group_mass\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (const auto& r : history.records) {
    double min_mass = r.group_mass.empty() ? 0.0 : r.group_mass.front();
    for (double m : r.group_mass) min_mass = std::min(min_mass, m);
    os << r.iteration << ',' << num(r.objective) << ',' << num(r.lambda) << ','
       << num(r.gamma) << ',' << num(r.selected_fraction) << ','
       << (r.val_map ? num(*r.val_map) : std::string()) << ',' << r.inner_steps
       << ',' << num(r.objective_start) << ',' << num(r.objective_after_w) << ','
       << num(min_mass) << '\n';
  }
}

}  // namespace sccm

#endif  // SCCM_TRAINER_HPP
