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

#ifndef SCCM_CORE_HPP
#define SCCM_CORE_HPP

// Shared domain types for cross-modal ranking: paired datasets, embedding
// parameters, tetrads (query, aligned item, negative item, label), importance
// weights and the pacing state of the self-paced schedule.
//
// Indices are 0-based everywhere. Query k of the image-query direction is
// image row k; its aligned text is text row k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sccm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Seeded generator used for every random draw in the library.
using Rng = std::mt19937_64;

enum class ErrorCode {
  ShapeMismatch,
  NonFiniteValue,
  TooSmall,
  SampleTooLarge,
  DimensionMismatch,
  IndexOutOfRange,
  AlignmentError,
  EmptyGroup,
  GroupTooLarge,
  NonFiniteObjective,
  ConfigInvalid,
  IoFailure,
  VersionMismatch,
  CorruptCheckpoint,
  InvalidCutoff,
  ParseError,
  RaggedRows,
  SplitTooSmall,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::AlignmentError: return "AlignmentError";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::GroupTooLarge: return "GroupTooLarge";
    case ErrorCode::NonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::InvalidCutoff: return "InvalidCutoff";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::RaggedRows: return "RaggedRows";
    case ErrorCode::SplitTooSmall: return "SplitTooSmall";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

class Dataset;
Dataset validate_dataset(Matrix images, Matrix texts,
                         std::vector<std::string> ids = {});

/// Row-aligned image (n x p) and text (n x q) features. Immutable; build it
/// with validate_dataset().
class Dataset {
 public:
  const Matrix& images() const noexcept { return images_; }
  const Matrix& texts() const noexcept { return texts_; }
  /// Opaque item labels, one per pair. Empty when none were supplied.
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(images_.rows());
  }
  std::size_t image_dim() const noexcept {
    return static_cast<std::size_t>(images_.cols());
  }
  std::size_t text_dim() const noexcept {
    return static_cast<std::size_t>(texts_.cols());
  }

  /// Label of pair i: the supplied id, or the decimal index.
  std::string id(std::size_t i) const {
    return ids_.empty() ? std::to_string(i) : ids_[i];
  }

 private:
  Dataset(Matrix images, Matrix texts, std::vector<std::string> ids)
      : images_(std::move(images)),
        texts_(std::move(texts)),
        ids_(std::move(ids)) {}

  friend Dataset validate_dataset(Matrix, Matrix, std::vector<std::string>);

  Matrix images_;
  Matrix texts_;
  std::vector<std::string> ids_;
};

inline Dataset validate_dataset(Matrix images, Matrix texts,
                                std::vector<std::string> ids) {
  if (images.rows() != texts.rows()) {
    throw Error(ErrorCode::ShapeMismatch,
                "image rows (" + std::to_string(images.rows()) +
                    ") != text rows (" + std::to_string(texts.rows()) + ")");
  }
  if (images.rows() < 2) {
    throw Error(ErrorCode::TooSmall, "a dataset needs at least 2 pairs");
  }
  if (images.cols() < 1 || texts.cols() < 1) {
    throw Error(ErrorCode::ShapeMismatch, "feature dimension must be >= 1");
  }
  if (!all_finite(images) || !all_finite(texts)) {
    throw Error(ErrorCode::NonFiniteValue, "features contain NaN or Inf");
  }
  if (!ids.empty() && ids.size() != static_cast<std::size_t>(images.rows())) {
    throw Error(ErrorCode::ShapeMismatch, "id count does not match row count");
  }
  return Dataset(std::move(images), std::move(texts), std::move(ids));
}

/// The pairs listed in `rows`, in that order.
inline Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Matrix images(rows.size(), data.image_dim());
  Matrix texts(rows.size(), data.text_dim());
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= data.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "subset row out of range");
    }
    images.row(r) = data.images().row(rows[r]);
    texts.row(r) = data.texts().row(rows[r]);
    if (!data.ids().empty()) ids.push_back(data.ids()[rows[r]]);
  }
  return validate_dataset(std::move(images), std::move(texts), std::move(ids));
}

// ---------------------------------------------------------------------------
// Embedding parameters
// ---------------------------------------------------------------------------

/// Affine maps of both modalities into the shared d-dimensional space:
/// h(x) = sigmoid(W1 x + b1), g(z) = sigmoid(W2 z + b2).
struct EmbeddingParams {
  Matrix W1;  // d x p
  Vector b1;  // d
  Matrix W2;  // d x q
  Vector b2;  // d

  static EmbeddingParams zeros(std::size_t d, std::size_t p, std::size_t q) {
    return {Matrix::Zero(d, p), Vector::Zero(d), Matrix::Zero(d, q),
            Vector::Zero(d)};
  }

  std::size_t dim() const noexcept { return static_cast<std::size_t>(W1.rows()); }
  std::size_t image_dim() const noexcept { return static_cast<std::size_t>(W1.cols()); }
  std::size_t text_dim() const noexcept { return static_cast<std::size_t>(W2.cols()); }

  bool finite() const {
    return W1.allFinite() && b1.allFinite() && W2.allFinite() && b2.allFinite();
  }

  bool operator==(const EmbeddingParams& o) const {
    return W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() &&
           W2.rows() == o.W2.rows() && W2.cols() == o.W2.cols() &&
           b1.size() == o.b1.size() && b2.size() == o.b2.size() &&
           W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2;
  }
};

/// Throws DimensionMismatch unless params are internally consistent and fit
/// the dataset.
inline void check_compatible(const EmbeddingParams& params,
                             const Dataset& data) {
  const auto d = params.W1.rows();
  if (d < 1 || params.b1.size() != d || params.W2.rows() != d ||
      params.b2.size() != d) {
    throw Error(ErrorCode::DimensionMismatch,
                "inconsistent embedding parameter shapes");
  }
  if (params.image_dim() != data.image_dim() ||
      params.text_dim() != data.text_dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "parameters expect p=" + std::to_string(params.image_dim()) +
                    ", q=" + std::to_string(params.text_dim()) +
                    " but dataset has p=" + std::to_string(data.image_dim()) +
                    ", q=" + std::to_string(data.text_dim()));
  }
}

// ---------------------------------------------------------------------------
// Tetrads and weights
// ---------------------------------------------------------------------------

enum class QueryDirection { image_to_text, text_to_image };

/// One ranking constraint: for query k, the aligned item k should outrank the
/// negative item j. For image queries the items are texts; for text queries
/// (symmetric training) they are images.
struct Tetrad {
  std::size_t query = 0;
  std::size_t negative = 0;
  int label = +1;
  QueryDirection direction = QueryDirection::image_to_text;

  bool operator==(const Tetrad&) const = default;
};

struct TetradSet {
  std::vector<std::vector<Tetrad>> groups;

  std::size_t size() const noexcept {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    return total;
  }

  bool operator==(const TetradSet&) const = default;
};

/// Per-group weights in [0, 1], aligned index-for-index with a TetradSet.
struct ImportanceVector {
  std::vector<std::vector<double>> groups;

  std::size_t size() const noexcept {
    std::size_t total = 0;
    for (const auto& g : groups) total += g.size();
    return total;
  }

  double total_mass() const noexcept {
    double s = 0.0;
    for (const auto& g : groups)
      for (double w : g) s += w;
    return s;
  }

  /// Same shape as `tetrads`, every weight set to `value`.
  static ImportanceVector filled(const TetradSet& tetrads, double value) {
    ImportanceVector v;
    v.groups.reserve(tetrads.groups.size());
    for (const auto& g : tetrads.groups) v.groups.emplace_back(g.size(), value);
    return v;
  }

  bool operator==(const ImportanceVector&) const = default;
};

/// Throws AlignmentError unless v has exactly the group shape of `tetrads`.
inline void check_aligned(const TetradSet& tetrads, const ImportanceVector& v) {
  bool ok = v.groups.size() == tetrads.groups.size();
  for (std::size_t k = 0; ok && k < v.groups.size(); ++k)
    ok = v.groups[k].size() == tetrads.groups[k].size();
  if (!ok) {
    throw Error(ErrorCode::AlignmentError,
                "importance vector (" + std::to_string(v.size()) +
                    " weights) is not aligned with tetrad set (" +
                    std::to_string(tetrads.size()) + " tetrads)");
  }
}

/// Easiness penalty lambda, diversity penalty gamma, and their per-iteration
/// growth factors.
struct PacingState {
  double lambda = 1.0;
  double gamma = 0.0;
  double mu_lambda = 1.1;
  double mu_gamma = 1.1;

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
      throw Error(ErrorCode::ConfigInvalid, "lambda must be positive");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw Error(ErrorCode::ConfigInvalid, "gamma must be nonnegative");
    if (!(mu_lambda >= 1.0) || !(mu_gamma >= 1.0))
      throw Error(ErrorCode::ConfigInvalid, "growth factors must be >= 1");
  }

  bool operator==(const PacingState&) const = default;
};

struct LossConfig {
  double margin = 0.1;

  void validate() const {
    if (!(margin >= 0.0) || !std::isfinite(margin))
      throw Error(ErrorCode::ConfigInvalid, "margin must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Tetrad construction
// ---------------------------------------------------------------------------

/// Full enumeration, or m distinct negatives per query drawn from `seed`.
struct Sampling {
  std::size_t negatives = 0;  // 0 means full
  std::uint64_t seed = 0;

  static Sampling full() { return {}; }
  static Sampling sample(std::size_t m, std::uint64_t seed) {
    if (m == 0) throw Error(ErrorCode::ConfigInvalid, "sample size must be >= 1");
    return {m, seed};
  }
  bool is_full() const noexcept { return negatives == 0; }
};

namespace detail {

inline std::vector<Tetrad> query_group(std::size_t n, std::size_t k,
                                       QueryDirection dir,
                                       const Sampling& sampling, Rng& rng) {
  std::vector<std::size_t> candidates;
  candidates.reserve(n - 1);
  for (std::size_t j = 0; j < n; ++j)
    if (j != k) candidates.push_back(j);

  if (!sampling.is_full()) {
    // Partial Fisher-Yates: the first m slots become a uniform sample.
    const std::size_t m = sampling.negatives;
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
    }
    candidates.resize(m);
    std::sort(candidates.begin(), candidates.end());
  }

  std::vector<Tetrad> group;
  group.reserve(candidates.size());
  for (std::size_t j : candidates) group.push_back({k, j, +1, dir});
  return group;
}

}  // namespace detail

/// Groups 0..n-1 hold image queries. With `symmetric`, groups n..2n-1 hold the
/// text queries (query text k, aligned image k, negative image j).
inline TetradSet build_tetrads(const Dataset& data, const Sampling& sampling,
                               bool symmetric = false) {
  const std::size_t n = data.size();
  if (!sampling.is_full() && sampling.negatives > n - 1) {
    throw Error(ErrorCode::SampleTooLarge,
                "requested " + std::to_string(sampling.negatives) +
                    " negatives but only " + std::to_string(n - 1) +
                    " exist per query");
  }
  Rng rng(sampling.seed);
  TetradSet set;
  set.groups.reserve(symmetric ? 2 * n : n);
  for (std::size_t k = 0; k < n; ++k)
    set.groups.push_back(detail::query_group(
        n, k, QueryDirection::image_to_text, sampling, rng));
  if (symmetric) {
    for (std::size_t k = 0; k < n; ++k)
      set.groups.push_back(detail::query_group(
          n, k, QueryDirection::text_to_image, sampling, rng));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Threading
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
/// handled by exactly one call, so results written per-index do not depend on
/// the thread count.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, threads), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sccm

#endif  // SCCM_CORE_HPP
