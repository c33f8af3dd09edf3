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

#ifndef SCCM_CHECKPOINT_HPP
#define SCCM_CHECKPOINT_HPP

// Binary checkpoint, all integers and doubles little-endian:
//
//   "SCCM"                       4 bytes magic
//   u32  format version          (kCheckpointVersion)
//   TrainConfig                  fixed field order, see write_config()
//   u64  seed
//   u64  iteration
//   u64  d, u64 p, u64 q
//   f64  W1[d*p] row-major, f64 b1[d], f64 W2[d*q] row-major, f64 b2[d]
//   u64  FNV-1a 64 of every preceding byte
//
// Doubles are stored as their IEEE-754 bit patterns, so a round trip is exact.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "sccm/core.hpp"
#include "sccm/trainer.hpp"

namespace sccm {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  EmbeddingParams params;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;

  bool operator==(const Checkpoint&) const = default;
};

inline std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t x) { bytes_.push_back(x); }
  void u32(std::uint32_t x) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<unsigned char>(x >> (8 * i)));
  }
  void u64(std::uint64_t x) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(x >> (8 * i)));
  }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void raw(const char* s, std::size_t n) { bytes_.insert(bytes_.end(), s, s + n); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { need(1); return data_[pos_++]; }
  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= std::uint32_t{data_[pos_++]} << (8 * i);
    return x;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= std::uint64_t{data_[pos_++]} << (8 * i);
    return x;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_)
      throw Error(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
  }
  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline void write_config(ByteWriter& w, const TrainConfig& c) {
  w.u64(c.embedding_dim);
  w.f64(c.margin);
  w.f64(c.init_fraction);
  w.f64(c.lambda0);
  w.f64(c.gamma_ratio);
  w.f64(c.mu_lambda);
  w.f64(c.mu_gamma);
  w.u64(c.max_outer_iters);
  w.u64(c.max_inner_steps);
  w.f64(c.initial_step);
  w.f64(c.shrink);
  w.f64(c.armijo_c);
  w.u64(c.max_backtracks);
  w.f64(c.rel_tol);
  w.u64(c.seed);
  w.u64(c.negatives);
  w.u8(c.symmetric_tetrads ? 1 : 0);
  w.u8(c.normalized_similarity ? 1 : 0);
  w.u64(c.early_stop_patience);
}

inline TrainConfig read_config(ByteReader& r) {
  TrainConfig c;
  c.embedding_dim = r.u64();
  c.margin = r.f64();
  c.init_fraction = r.f64();
  c.lambda0 = r.f64();
  c.gamma_ratio = r.f64();
  c.mu_lambda = r.f64();
  c.mu_gamma = r.f64();
  c.max_outer_iters = r.u64();
  c.max_inner_steps = r.u64();
  c.initial_step = r.f64();
  c.shrink = r.f64();
  c.armijo_c = r.f64();
  c.max_backtracks = r.u64();
  c.rel_tol = r.f64();
  c.seed = r.u64();
  c.negatives = r.u64();
  c.symmetric_tetrads = r.u8() != 0;
  c.normalized_similarity = r.u8() != 0;
  c.early_stop_patience = r.u64();
  return c;
}

inline void write_matrix(ByteWriter& w, const Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
}

inline Matrix read_matrix(ByteReader& r, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = r.f64();
  return m;
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.raw("SCCM", 4);
  w.u32(ck.version);
  detail::write_config(w, ck.config);
  w.u64(ck.seed);
  w.u64(ck.iteration);
  w.u64(ck.params.dim());
  w.u64(ck.params.image_dim());
  w.u64(ck.params.text_dim());
  detail::write_matrix(w, ck.params.W1);
  detail::write_matrix(w, ck.params.b1);
  detail::write_matrix(w, ck.params.W2);
  detail::write_matrix(w, ck.params.b2);
  const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return std::move(w.bytes());
}

inline Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 8 || std::string(bytes.begin(), bytes.begin() + 4) != "SCCM")
    throw Error(ErrorCode::CorruptCheckpoint, "missing SCCM magic");
  detail::ByteReader r(bytes.data(), bytes.size());
  r.u32();  // magic
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion)
    throw Error(ErrorCode::VersionMismatch,
                "checkpoint version " + std::to_string(ck.version) +
                    ", expected " + std::to_string(kCheckpointVersion));
  if (bytes.size() < 16)
    throw Error(ErrorCode::CorruptCheckpoint, "checkpoint is truncated");
  const std::size_t body = bytes.size() - 8;
  detail::ByteReader tail(bytes.data() + body, 8);
  if (tail.u64() != fnv1a64(bytes.data(), body))
    throw Error(ErrorCode::CorruptCheckpoint, "checksum mismatch");

  ck.config = detail::read_config(r);
  ck.seed = r.u64();
  ck.iteration = r.u64();
  const std::uint64_t d = r.u64();
  const std::uint64_t p = r.u64();
  const std::uint64_t q = r.u64();
  const std::uint64_t expected = 8 * (d * p + d + d * q + d);
  if (d == 0 || p == 0 || q == 0 || body - r.position() != expected)
    throw Error(ErrorCode::CorruptCheckpoint, "inconsistent matrix sizes");
  ck.params.W1 = detail::read_matrix(r, d, p);
  ck.params.b1 = detail::read_matrix(r, d, 1);
  ck.params.W2 = detail::read_matrix(r, d, q);
  ck.params.b2 = detail::read_matrix(r, d, 1);
  if (!ck.params.finite())
    throw Error(ErrorCode::CorruptCheckpoint, "non-finite parameters");
  return ck;
}

/// Writes to "<path>.tmp" and renames it over `path`.
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(ErrorCode::IoFailure, "write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw Error(ErrorCode::IoFailure, "cannot rename " + tmp + " to " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace sccm

#endif  // SCCM_CHECKPOINT_HPP
