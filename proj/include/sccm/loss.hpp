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

#ifndef SCCM_LOSS_HPP
#define SCCM_LOSS_HPP

// Margin ranking loss over tetrads, the weighted self-paced objective and its
// gradient with respect to the embedding parameters.
//
// For an image query k with negative text j and label y the loss is
//
//   l = max(0, y * (S(x_k, z_j) - S(x_k, z_k)) + margin).
//
// The smooth subproblem minimized over the parameters for fixed weights v is
//
//   f(W; v) = 1/2 (||W1||^2 + ||W2||^2) + sum_k sum_j v_kj * l_kj
//
// and the full objective adds -lambda * sum(v) - gamma * sum_k sqrt(sum_j v_kj).
// Biases are not regularized. Every sum runs group-major, then in tetrad
// order, so values do not depend on the thread count.

#include <cmath>

#include "sccm/core.hpp"
#include "sccm/embed.hpp"

namespace sccm {

/// Per-tetrad hinge losses, grouped like the TetradSet they came from.
struct LossVector {
  std::vector<std::vector<double>> groups;

  std::size_t size() const noexcept {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    return total;
  }
};

/// Derivatives of f(W; v), shaped like EmbeddingParams.
struct Gradient {
  Matrix dW1;
  Vector db1;
  Matrix dW2;
  Vector db2;

  double squared_norm() const {
    return dW1.squaredNorm() + db1.squaredNorm() + dW2.squaredNorm() +
           db2.squaredNorm();
  }
  bool finite() const {
    return dW1.allFinite() && db1.allFinite() && dW2.allFinite() &&
           db2.allFinite();
  }
};

/// params - step * direction.
inline EmbeddingParams apply_step(const EmbeddingParams& params,
                                  const Gradient& direction, double step) {
  return {params.W1 - step * direction.dW1, params.b1 - step * direction.db1,
          params.W2 - step * direction.dW2, params.b2 - step * direction.db2};
}

namespace detail {

inline void check_tetrad(const Tetrad& t, std::size_t n) {
  if (t.query >= n || t.negative >= n || t.query == t.negative) {
    throw Error(ErrorCode::IndexOutOfRange,
                "tetrad (" + std::to_string(t.query) + ", " +
                    std::to_string(t.negative) + ") invalid for n=" +
                    std::to_string(n));
  }
}

inline void check_tetrads(const TetradSet& tetrads, std::size_t n) {
  for (const auto& g : tetrads.groups)
    for (const auto& t : g) check_tetrad(t, n);
}

/// Scores of (query, aligned item) and (query, negative item) in S, whose rows
/// are images and columns texts.
inline std::pair<double, double> tetrad_scores(const ScoreMatrix& S,
                                               const Tetrad& t) {
  const auto k = static_cast<Eigen::Index>(t.query);
  const auto j = static_cast<Eigen::Index>(t.negative);
  if (t.direction == QueryDirection::image_to_text) return {S(k, k), S(k, j)};
  return {S(k, k), S(j, k)};
}

inline double hinge_argument(const ScoreMatrix& S, const Tetrad& t,
                             double margin) {
  const auto [aligned, negative] = tetrad_scores(S, t);
  return t.label * (negative - aligned) + margin;
}

inline double hinge(double argument) { return argument > 0.0 ? argument : 0.0; }

}  // namespace detail

/// Loss of one tetrad, from two pointwise similarity evaluations.
inline double tetrad_loss(const EmbeddingParams& params, const Dataset& data,
                          const Tetrad& t, const LossConfig& cfg,
                          SimilarityMode mode = SimilarityMode::inner_product) {
  check_compatible(params, data);
  detail::check_tetrad(t, data.size());
  double aligned = 0.0;
  double negative = 0.0;
  const Vector q = t.direction == QueryDirection::image_to_text
                       ? Vector(data.images().row(t.query).transpose())
                       : Vector(data.texts().row(t.query).transpose());
  if (t.direction == QueryDirection::image_to_text) {
    aligned = similarity(params, q, data.texts().row(t.query).transpose(), mode);
    negative = similarity(params, q, data.texts().row(t.negative).transpose(), mode);
  } else {
    aligned = similarity(params, data.images().row(t.query).transpose(), q, mode);
    negative = similarity(params, data.images().row(t.negative).transpose(), q, mode);
  }
  return detail::hinge(t.label * (negative - aligned) + cfg.margin);
}

/// Losses of every tetrad from a precomputed score matrix.
inline LossVector losses_from_scores(const ScoreMatrix& S,
                                     const TetradSet& tetrads, double margin) {
  LossVector out;
  out.groups.reserve(tetrads.groups.size());
  for (const auto& g : tetrads.groups) {
    std::vector<double> row;
    row.reserve(g.size());
    for (const auto& t : g)
      row.push_back(detail::hinge(detail::hinge_argument(S, t, margin)));
    out.groups.push_back(std::move(row));
  }
  return out;
}

/// All tetrad losses with a single score_matrix evaluation.
inline LossVector all_losses(const EmbeddingParams& params, const Dataset& data,
                             const TetradSet& tetrads, const LossConfig& cfg,
                             SimilarityMode mode = SimilarityMode::inner_product,
                             unsigned threads = 1) {
  detail::check_tetrads(tetrads, data.size());
  return losses_from_scores(score_matrix(params, data, mode, threads), tetrads,
                            cfg.margin);
}

/// 1/2 (sum of squared entries of W1 and W2).
inline double regularizer(const EmbeddingParams& params) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < params.W1.cols(); ++c)
    for (Eigen::Index r = 0; r < params.W1.rows(); ++r)
      s += params.W1(r, c) * params.W1(r, c);
  for (Eigen::Index c = 0; c < params.W2.cols(); ++c)
    for (Eigen::Index r = 0; r < params.W2.rows(); ++r)
      s += params.W2(r, c) * params.W2(r, c);
  return 0.5 * s;
}

/// sum_k sum_j v_kj * l_kj. Zero weights are skipped.
inline double weighted_loss(const LossVector& losses, const ImportanceVector& v) {
  double s = 0.0;
  for (std::size_t k = 0; k < losses.groups.size(); ++k)
    for (std::size_t j = 0; j < losses.groups[k].size(); ++j)
      if (v.groups[k][j] != 0.0) s += v.groups[k][j] * losses.groups[k][j];
  return s;
}

/// -lambda * ||v||_1 - gamma * sum_k sqrt(sum_j v_kj).
inline double pacing_penalty(const ImportanceVector& v,
                             const PacingState& pacing) {
  double l1 = 0.0;
  double diversity = 0.0;
  for (const auto& g : v.groups) {
    double group_mass = 0.0;
    for (double w : g) group_mass += w;
    l1 += group_mass;
    diversity += std::sqrt(group_mass);
  }
  return -pacing.lambda * l1 - pacing.gamma * diversity;
}

/// f(W; v): the part of the objective the parameter step minimizes.
inline double subproblem_value(const EmbeddingParams& params,
                               const Dataset& data, const TetradSet& tetrads,
                               const ImportanceVector& v, const LossConfig& cfg,
                               SimilarityMode mode = SimilarityMode::inner_product,
                               unsigned threads = 1) {
  check_aligned(tetrads, v);
  return regularizer(params) +
         weighted_loss(all_losses(params, data, tetrads, cfg, mode, threads), v);
}

/// Full self-paced objective with diversity.
inline double objective(const EmbeddingParams& params, const Dataset& data,
                        const TetradSet& tetrads, const ImportanceVector& v,
                        const PacingState& pacing, const LossConfig& cfg,
                        SimilarityMode mode = SimilarityMode::inner_product,
                        unsigned threads = 1) {
  return subproblem_value(params, data, tetrads, v, cfg, mode, threads) +
         pacing_penalty(v, pacing);
}

struct SubproblemEvaluation {
  double value = 0.0;
  Gradient gradient;
};

namespace detail {

// dh_k for cosine scores: project the gradient w.r.t. the normalized vector
// onto the tangent space and rescale by 1 / ||h_k||.
inline Matrix unnormalize_gradient(const Matrix& E, const Matrix& dEn) {
  Matrix out(E.rows(), E.cols());
  for (Eigen::Index r = 0; r < E.rows(); ++r) {
    const double norm = E.row(r).norm();
    const Eigen::RowVectorXd unit = E.row(r) / norm;
    out.row(r) = (dEn.row(r) - dEn.row(r).dot(unit) * unit) / norm;
  }
  return out;
}

inline Matrix row_normalized(const Matrix& E) {
  Matrix out = E;
  for (Eigen::Index r = 0; r < E.rows(); ++r) out.row(r) /= E.row(r).norm();
  return out;
}

}  // namespace detail

/// f(W; v) and its gradient in one pass. A tetrad contributes to the gradient
/// only when its hinge argument is strictly positive.
inline SubproblemEvaluation evaluate_subproblem(
    const EmbeddingParams& params, const Dataset& data,
    const TetradSet& tetrads, const ImportanceVector& v, const LossConfig& cfg,
    SimilarityMode mode = SimilarityMode::inner_product, unsigned threads = 1) {
  check_compatible(params, data);
  check_aligned(tetrads, v);
  detail::check_tetrads(tetrads, data.size());

  const Matrix H = embed_images(params, data.images(), threads);
  const Matrix G = embed_texts(params, data.texts(), threads);
  const ScoreMatrix S = scores_from_embeddings(H, G, mode, threads);

  // coeff(k, j) = d(weighted loss) / d S(k, j)
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix coeff = Matrix::Zero(n, n);
  double loss_sum = 0.0;
  for (std::size_t g = 0; g < tetrads.groups.size(); ++g) {
    for (std::size_t i = 0; i < tetrads.groups[g].size(); ++i) {
      const double w = v.groups[g][i];
      if (w == 0.0) continue;
      const Tetrad& t = tetrads.groups[g][i];
      const double arg = detail::hinge_argument(S, t, cfg.margin);
      if (!(arg > 0.0)) continue;
      loss_sum += w * arg;
      const auto k = static_cast<Eigen::Index>(t.query);
      const auto j = static_cast<Eigen::Index>(t.negative);
      const double c = w * t.label;
      if (t.direction == QueryDirection::image_to_text)
        coeff(k, j) += c;
      else
        coeff(j, k) += c;
      coeff(k, k) -= c;
    }
  }

  Matrix dH;
  Matrix dG;
  if (mode == SimilarityMode::inner_product) {
    dH = coeff * G;
    dG = coeff.transpose() * H;
  } else {
    const Matrix Hn = detail::row_normalized(H);
    const Matrix Gn = detail::row_normalized(G);
    dH = detail::unnormalize_gradient(H, coeff * Gn);
    dG = detail::unnormalize_gradient(G, coeff.transpose() * Hn);
  }

  // Through the sigmoid: sigma'(a) = sigma(a) (1 - sigma(a)).
  const Matrix dA1 = dH.cwiseProduct(H.cwiseProduct((1.0 - H.array()).matrix()));
  const Matrix dA2 = dG.cwiseProduct(G.cwiseProduct((1.0 - G.array()).matrix()));

  SubproblemEvaluation out;
  out.value = regularizer(params) + loss_sum;
  out.gradient.dW1 = dA1.transpose() * data.images() + params.W1;
  out.gradient.db1 = dA1.colwise().sum().transpose();
  out.gradient.dW2 = dA2.transpose() * data.texts() + params.W2;
  out.gradient.db2 = dA2.colwise().sum().transpose();
  return out;
}

/// Gradient of f(W; v) with respect to (W1, b1, W2, b2).
inline Gradient grad_params(const EmbeddingParams& params, const Dataset& data,
                            const TetradSet& tetrads, const ImportanceVector& v,
                            const LossConfig& cfg,
                            SimilarityMode mode = SimilarityMode::inner_product,
                            unsigned threads = 1) {
  return evaluate_subproblem(params, data, tetrads, v, cfg, mode, threads)
      .gradient;
}

}  // namespace sccm

#endif  // SCCM_LOSS_HPP
