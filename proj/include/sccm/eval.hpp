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

#ifndef SCCM_EVAL_HPP
#define SCCM_EVAL_HPP

// Retrieval and mean average precision over a paired corpus. The only relevant
// item for query k is its aligned counterpart k.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "sccm/core.hpp"
#include "sccm/embed.hpp"

namespace sccm {

using Direction = QueryDirection;

inline const char* to_string(Direction d) {
  return d == Direction::image_to_text ? "i2t" : "t2i";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "i2t") return Direction::image_to_text;
  if (s == "t2i") return Direction::text_to_image;
  throw Error(ErrorCode::ConfigInvalid, "direction must be i2t or t2i, got '" + s + "'");
}

/// AP normalization: by min(#relevant, R), or by R as in the literal
/// mAP@R definition.
enum class APMode { by_relevant, by_R };

inline const char* to_string(APMode m) {
  return m == APMode::by_relevant ? "by_relevant" : "by_r";
}

inline APMode parse_ap_mode(const std::string& s) {
  if (s == "by_relevant") return APMode::by_relevant;
  if (s == "by_r" || s == "by_R") return APMode::by_R;
  throw Error(ErrorCode::ConfigInvalid, "mode must be by_relevant or by_r, got '" + s + "'");
}

/// Number of ranked items examined. Empty means all of them.
struct Cutoff {
  std::optional<std::size_t> value;

  static Cutoff all() { return {}; }
  static Cutoff at(std::size_t r) {
    if (r < 1) throw Error(ErrorCode::InvalidCutoff, "cutoff R must be >= 1");
    return {r};
  }
  std::size_t resolve(std::size_t list_size) const {
    return value ? *value : list_size;
  }
  std::string str() const { return value ? std::to_string(*value) : "all"; }
};

inline Cutoff parse_cutoff(const std::string& s) {
  if (s == "all") return Cutoff::all();
  std::size_t pos = 0;
  long long r = 0;
  try {
    r = std::stoll(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw Error(ErrorCode::InvalidCutoff, "cutoff must be a positive integer or 'all'");
  if (r < 1) throw Error(ErrorCode::InvalidCutoff, "cutoff R must be >= 1");
  return Cutoff::at(static_cast<std::size_t>(r));
}

struct RankedList {
  std::size_t query = 0;
  std::vector<std::size_t> items;
  std::vector<double> scores;
};

struct EvalResult {
  std::vector<double> ap;  // per query, in query order
  double map = 0.0;
  Cutoff cutoff;
  Direction direction = Direction::image_to_text;
  APMode mode = APMode::by_relevant;
};

/// Indices sorted by descending score; equal scores keep ascending index.
inline std::vector<std::size_t> rank_descending(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

/// Ranks the corpus rows against one query. For image-to-text the query is an
/// image feature vector and the corpus holds text features, and vice versa.
/// top_k = 0 keeps every item.
inline RankedList retrieve(const EmbeddingParams& params,
                           const Eigen::Ref<const Vector>& query,
                           const Matrix& corpus, Direction direction,
                           std::size_t top_k = 0,
                           SimilarityMode mode = SimilarityMode::inner_product) {
  const bool i2t = direction == Direction::image_to_text;
  const Vector q = i2t ? map_image(params, query) : map_text(params, query);
  const Matrix E = i2t ? embed_texts(params, corpus) : embed_images(params, corpus);
  std::vector<double> scores(static_cast<std::size_t>(E.rows()));
  for (Eigen::Index j = 0; j < E.rows(); ++j)
    scores[j] = i2t ? detail::score(q, E.row(j).transpose(), mode)
                    : detail::score(E.row(j).transpose(), q, mode);

  RankedList out;
  out.items = rank_descending(scores);
  if (top_k > 0 && top_k < out.items.size()) out.items.resize(top_k);
  out.scores.reserve(out.items.size());
  for (std::size_t i : out.items) out.scores.push_back(scores[i]);
  return out;
}

/// AP over the first R entries of a ranked relevance list:
/// (1/N) sum_{j <= R} Prec(j) Rel(j), with N = min(#relevant, R) or N = R.
/// Returns 0 when the list has no relevant item. R larger than the list is
/// truncated to the list length.
inline double average_precision(const std::vector<bool>& relevance,
                                 std::size_t R,
                                 APMode mode = APMode::by_relevant) {
  if (R < 1) throw Error(ErrorCode::InvalidCutoff, "cutoff R must be >= 1");
  const auto total_relevant = static_cast<std::size_t>(
      std::count(relevance.begin(), relevance.end(), true));
  if (total_relevant == 0) return 0.0;
  const std::size_t examined = std::min(R, relevance.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < examined; ++j) {
    if (!relevance[j]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(j + 1);
  }
  const std::size_t denom =
      mode == APMode::by_relevant ? std::min(total_relevant, R) : R;
  return sum / static_cast<double>(denom);
}

namespace detail {

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

}  // namespace detail

/// mAP from a score matrix (rows images, columns texts).
inline EvalResult mean_ap_from_scores(const ScoreMatrix& S, Direction direction,
                                      Cutoff cutoff,
                                      APMode mode = APMode::by_relevant) {
  const auto n = static_cast<std::size_t>(S.rows());
  EvalResult out;
  out.cutoff = cutoff;
  out.direction = direction;
  out.mode = mode;
  out.ap.reserve(n);
  const std::size_t R = cutoff.resolve(n);
  std::vector<double> scores(n);
  std::vector<bool> relevance(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j)
      scores[j] = direction == Direction::image_to_text ? S(k, j) : S(j, k);
    const auto order = rank_descending(scores);
    for (std::size_t r = 0; r < n; ++r) relevance[r] = order[r] == k;
    out.ap.push_back(average_precision(relevance, R, mode));
  }
  out.map = detail::mean(out.ap);
  return out;
}

inline EvalResult mean_ap(const EmbeddingParams& params, const Dataset& data,
                          Direction direction, Cutoff cutoff,
                          APMode mode = APMode::by_relevant,
                          SimilarityMode sim = SimilarityMode::inner_product,
                          unsigned threads = 1) {
  return mean_ap_from_scores(score_matrix(params, data, sim, threads), direction,
                             cutoff, mode);
}

/// Mean mAP of `trials` uniformly random rankings of an n-pair corpus.
inline double random_baseline(std::size_t n, Cutoff cutoff, std::uint64_t seed,
                              std::size_t trials,
                              APMode mode = APMode::by_relevant) {
  if (trials < 1) throw Error(ErrorCode::ConfigInvalid, "trials must be >= 1");
  if (n < 1) throw Error(ErrorCode::TooSmall, "empty corpus");
  Rng rng(seed);
  const std::size_t R = cutoff.resolve(n);
  std::vector<std::size_t> perm(n);
  std::vector<bool> relevance(n);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    double sum_ap = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t r = 0; r < n; ++r) relevance[r] = perm[r] == k;
      sum_ap += average_precision(relevance, R, mode);
    }
    total += sum_ap / static_cast<double>(n);
  }
  return total / static_cast<double>(trials);
}

/// Direction does not change the distribution of a random ranking; the
/// parameter is accepted for symmetry with mean_ap.
inline double random_baseline(const Dataset& data, Direction /*direction*/,
                              Cutoff cutoff, std::uint64_t seed,
                              std::size_t trials,
                              APMode mode = APMode::by_relevant) {
  return random_baseline(data.size(), cutoff, seed, trials, mode);
}

/// Writes "query_id,ap" rows followed by "# key=value" trailer lines.
inline void write_eval_result(std::ostream& os, const EvalResult& r,
                              const std::vector<std::string>& query_ids = {}) {
  char buf[64];
  os << "query_id,ap\n";
  for (std::size_t k = 0; k < r.ap.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", r.ap[k]);
    os << (query_ids.empty() ? std::to_string(k) : query_ids[k]) << ',' << buf
       << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.17g", r.map);
  os << "# map=" << buf << '\n'
     << "# r=" << r.cutoff.str() << '\n'
     << "# direction=" << to_string(r.direction) << '\n'
     << "# mode=" << to_string(r.mode) << '\n';
}

inline void write_eval_result(const std::string& path, const EvalResult& r,
                              const std::vector<std::string>& query_ids = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  write_eval_result(os, r, query_ids);
  if (!os) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

}  // namespace sccm

#endif  // SCCM_EVAL_HPP
