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

#ifndef SCCM_EMBED_HPP
#define SCCM_EMBED_HPP

#include <cmath>
#include <limits>

#include "sccm/core.hpp"

namespace sccm {

/// Raw inner product h(x)^T g(z), or the same divided by ||h|| ||g||.
enum class SimilarityMode { inner_product, cosine };

/// n x n scores, rows = image index, columns = text index.
using ScoreMatrix = Matrix;

/// Logistic function. The argument is clamped to [-500, 500] and the result is
/// kept strictly below 1, so outputs always lie in the open interval (0, 1).
inline double sigmoid(double t) {
  constexpr double kMaxArg = 500.0;
  constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  t = std::clamp(t, -kMaxArg, kMaxArg);
  return std::min(1.0 / (1.0 + std::exp(-t)), kBelowOne);
}

namespace detail {

inline Vector affine_sigmoid(const Matrix& W, const Vector& b,
                             const Eigen::Ref<const Vector>& x) {
  if (x.size() != W.cols()) {
    throw Error(ErrorCode::DimensionMismatch,
                "feature length " + std::to_string(x.size()) +
                    " does not match map input dimension " +
                    std::to_string(W.cols()));
  }
  if (b.size() != W.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "bias length != embedding dim");
  }
  const Eigen::Index d = W.rows();
  const Eigen::Index p = W.cols();
  Vector out(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double a = b[i];
    for (Eigen::Index c = 0; c < p; ++c) a += W(i, c) * x[c];
    out[i] = sigmoid(a);
  }
  return out;
}

// Fixed left-to-right order; score_matrix and similarity both go through here.
inline double dot(const Eigen::Ref<const Vector>& a,
                  const Eigen::Ref<const Vector>& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double score(const Eigen::Ref<const Vector>& h,
                    const Eigen::Ref<const Vector>& g, SimilarityMode mode) {
  const double s = dot(h, g);
  if (mode == SimilarityMode::inner_product) return s;
  return s / (std::sqrt(dot(h, h)) * std::sqrt(dot(g, g)));
}

}  // namespace detail

/// h(x) = sigmoid(W1 x + b1).
inline Vector map_image(const EmbeddingParams& params,
                        const Eigen::Ref<const Vector>& x) {
  return detail::affine_sigmoid(params.W1, params.b1, x);
}

/// g(z) = sigmoid(W2 z + b2).
inline Vector map_text(const EmbeddingParams& params,
                       const Eigen::Ref<const Vector>& z) {
  return detail::affine_sigmoid(params.W2, params.b2, z);
}

inline double similarity(const EmbeddingParams& params,
                         const Eigen::Ref<const Vector>& x,
                         const Eigen::Ref<const Vector>& z,
                         SimilarityMode mode = SimilarityMode::inner_product) {
  return detail::score(map_image(params, x), map_text(params, z), mode);
}

/// Embeds every row of `features` (one row per item); row i of the result is
/// the embedding of item i.
inline Matrix embed_images(const EmbeddingParams& params, const Matrix& features,
                           unsigned threads = 1) {
  if (static_cast<std::size_t>(features.cols()) != params.image_dim())
    throw Error(ErrorCode::DimensionMismatch, "image feature dimension mismatch");
  Matrix out(features.rows(), params.dim());
  parallel_for(static_cast<std::size_t>(features.rows()), threads,
               [&](std::size_t i) {
                 out.row(i) = map_image(params, features.row(i).transpose()).transpose();
               });
  return out;
}

inline Matrix embed_texts(const EmbeddingParams& params, const Matrix& features,
                          unsigned threads = 1) {
  if (static_cast<std::size_t>(features.cols()) != params.text_dim())
    throw Error(ErrorCode::DimensionMismatch, "text feature dimension mismatch");
  Matrix out(features.rows(), params.dim());
  parallel_for(static_cast<std::size_t>(features.rows()), threads,
               [&](std::size_t i) {
                 out.row(i) = map_text(params, features.row(i).transpose()).transpose();
               });
  return out;
}

/// Scores between already-embedded images (rows of H) and texts (rows of G).
inline ScoreMatrix scores_from_embeddings(const Matrix& H, const Matrix& G,
                                          SimilarityMode mode,
                                          unsigned threads = 1) {
  ScoreMatrix S(H.rows(), G.rows());
  parallel_for(static_cast<std::size_t>(H.rows()), threads, [&](std::size_t k) {
    const Vector h = H.row(k).transpose();
    for (Eigen::Index j = 0; j < G.rows(); ++j)
      S(k, j) = detail::score(h, G.row(j).transpose(), mode);
  });
  return S;
}

/// S(k, j) = similarity(x_k, z_j), bit-identical to the pointwise call.
inline ScoreMatrix score_matrix(const EmbeddingParams& params,
                                const Dataset& data,
                                SimilarityMode mode = SimilarityMode::inner_product,
                                unsigned threads = 1) {
  check_compatible(params, data);
  return scores_from_embeddings(embed_images(params, data.images(), threads),
                                embed_texts(params, data.texts(), threads), mode,
                                threads);
}

}  // namespace sccm

#endif  // SCCM_EMBED_HPP
