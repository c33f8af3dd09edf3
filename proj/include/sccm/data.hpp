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

#ifndef SCCM_DATA_HPP
#define SCCM_DATA_HPP

// Feature files, train/validation/test splits and synthetic paired data.
//
// Feature file format: one item per line, whitespace-separated decimal reals.
// Lines whose first non-blank character is '#' and blank lines are ignored.
// The dimension is taken from the first data row.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sccm/core.hpp"

namespace sccm {

inline Matrix parse_features(std::istream& in, const std::string& source = "<stream>") {
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view rest(line);
    const auto first = rest.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || rest[first] == '#') continue;

    std::size_t count = 0;
    std::size_t pos = 0;
    while (true) {
      pos = line.find_first_not_of(" \t\r", pos);
      if (pos == std::string::npos) break;
      std::size_t end = line.find_first_of(" \t\r", pos);
      if (end == std::string::npos) end = line.size();
      double x = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data() + pos, line.data() + end, x);
      if (ec != std::errc() || ptr != line.data() + end) {
        throw Error(ErrorCode::ParseError,
                    source + ":" + std::to_string(line_no) + ":" +
                        std::to_string(pos + 1) + ": cannot parse '" +
                        line.substr(pos, end - pos) + "' as a real number");
      }
      if (!std::isfinite(x)) {
        throw Error(ErrorCode::NonFiniteValue,
                    source + ":" + std::to_string(line_no) + ":" +
                        std::to_string(pos + 1) + ": non-finite value");
      }
      values.push_back(x);
      ++count;
      pos = end;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw Error(ErrorCode::RaggedRows,
                  source + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(cols) + " values, found " +
                      std::to_string(count));
    }
    ++rows;
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = values[r * cols + c];
  return m;
}

inline Matrix load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  return parse_features(in, path);
}

/// 17 significant digits, so load_features(save_features(m)) == m exactly.
inline void write_features(std::ostream& os, const Matrix& m) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      if (c > 0) os << ' ';
      os << buf;
    }
    os << '\n';
  }
}

inline void save_features(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + path);
  write_features(os, m);
  if (!os) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

inline Dataset load_dataset(const std::string& images_path,
                            const std::string& texts_path) {
  return validate_dataset(load_features(images_path), load_features(texts_path));
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train, validation, test})
      if (!(f > 0.0 && f < 1.0))
        throw Error(ErrorCode::ConfigInvalid, "split fractions must lie in (0, 1)");
    if (std::abs(train + validation + test - 1.0) > 1e-9)
      throw Error(ErrorCode::ConfigInvalid, "split fractions must sum to 1");
  }
};

struct SplitResult {
  Dataset train;
  Dataset validation;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> validation_rows;
  std::vector<std::size_t> test_rows;
};

/// Seeded permutation sliced into contiguous parts of rounded sizes.
inline SplitResult split(const Dataset& data, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * n));
  const auto n_val = static_cast<std::size_t>(std::llround(spec.validation * n));
  if (n_train < 2 || n_val < 2 || n_train + n_val + 2 > n) {
    throw Error(ErrorCode::SplitTooSmall,
                "n=" + std::to_string(n) +
                    " is too small: every part needs at least 2 pairs");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(spec.seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::size_t> tr(perm.begin(), perm.begin() + n_train);
  std::vector<std::size_t> va(perm.begin() + n_train, perm.begin() + n_train + n_val);
  std::vector<std::size_t> te(perm.begin() + n_train + n_val, perm.end());
  return {subset(data, tr), subset(data, va), subset(data, te),
          std::move(tr), std::move(va), std::move(te)};
}

/// One line per part: "<name> <row> <row> ...".
inline void write_split_manifest(std::ostream& os, const SplitResult& s) {
  auto line = [&](const char* name, const std::vector<std::size_t>& rows) {
    os << name;
    for (std::size_t r : rows) os << ' ' << r;
    os << '\n';
  };
  line("train", s.train_rows);
  line("validation", s.validation_rows);
  line("test", s.test_rows);
}

// ---------------------------------------------------------------------------
// Synthetic planted correspondence
// ---------------------------------------------------------------------------

/// Pairs sharing a latent code e_i ~ N(0, I_r): x_i = A e_i + noise,
/// z_i = B e_i + noise, with A (p x r) and B (q x r) fixed Gaussian maps.
struct SynthSpec {
  std::size_t n = 100;
  std::size_t latent = 5;
  std::size_t image_dim = 20;
  std::size_t text_dim = 20;
  double noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 4) throw Error(ErrorCode::ConfigInvalid, "synthetic n must be >= 4");
    if (latent < 1 || latent > std::min(image_dim, text_dim))
      throw Error(ErrorCode::ConfigInvalid, "latent dim must be in [1, min(p, q)]");
    if (!(noise >= 0.0) || !std::isfinite(noise))
      throw Error(ErrorCode::ConfigInvalid, "noise std must be >= 0");
  }
};

/// Latent codes and planted maps behind a synthetic dataset.
struct SynthDraw {
  Matrix latents;  // n x r
  Matrix A;        // p x r
  Matrix B;        // q x r
  Matrix image_noise;
  Matrix text_noise;
};

namespace detail {

inline Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = normal(rng);
  return m;
}

}  // namespace detail

/// Raw draws in a fixed order: A, B, latents, image noise, text noise.
inline SynthDraw synth_draw(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SynthDraw d;
  d.A = detail::gaussian(spec.image_dim, spec.latent, rng);
  d.B = detail::gaussian(spec.text_dim, spec.latent, rng);
  d.latents = detail::gaussian(spec.n, spec.latent, rng);
  d.image_noise = detail::gaussian(spec.n, spec.image_dim, rng);
  d.text_noise = detail::gaussian(spec.n, spec.text_dim, rng);
  return d;
}

namespace detail {

inline Dataset assemble(const SynthSpec& spec, const SynthDraw& d,
                        const std::vector<double>& noise_scale,
                        std::vector<std::string> ids) {
  Matrix images = d.latents * d.A.transpose();
  Matrix texts = d.latents * d.B.transpose();
  for (std::size_t i = 0; i < spec.n; ++i) {
    images.row(i) += spec.noise * noise_scale[i] * d.image_noise.row(i);
    texts.row(i) += spec.noise * noise_scale[i] * d.text_noise.row(i);
  }
  return validate_dataset(std::move(images), std::move(texts), std::move(ids));
}

}  // namespace detail

inline Dataset synth_generate(const SynthSpec& spec) {
  const SynthDraw d = synth_draw(spec);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.n; ++i) ids.push_back("pair_" + std::to_string(i));
  return detail::assemble(spec, d, std::vector<double>(spec.n, 1.0), std::move(ids));
}

/// Noise multiplier applied to hard pairs by skewed_synth.
inline constexpr double kHardNoiseScale = 5.0;

inline bool is_hard_id(const std::string& id) { return id.rfind("hard_", 0) == 0; }

/// synth_generate with round(hard_fraction * n) pairs, picked from a seeded
/// stream independent of the feature draws, carrying 5x the noise std on both
/// sides. Hard pairs get ids "hard_<i>", the rest "pair_<i>".
inline Dataset skewed_synth(const SynthSpec& spec, double hard_fraction) {
  if (!(hard_fraction > 0.0 && hard_fraction < 1.0))
    throw Error(ErrorCode::ConfigInvalid, "hard fraction must be in (0, 1)");
  const SynthDraw d = synth_draw(spec);
  const auto hard = static_cast<std::size_t>(
      std::llround(hard_fraction * static_cast<double>(spec.n)));

  std::vector<std::size_t> perm(spec.n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng pick(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::shuffle(perm.begin(), perm.end(), pick);

  std::vector<double> scale(spec.n, 1.0);
  for (std::size_t i = 0; i < hard; ++i) scale[perm[i]] = kHardNoiseScale;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < spec.n; ++i)
    ids.push_back((scale[i] > 1.0 ? "hard_" : "pair_") + std::to_string(i));
  return detail::assemble(spec, d, scale, std::move(ids));
}

}  // namespace sccm

#endif  // SCCM_DATA_HPP
