// Copyright 2026 The fedpriv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Portable, splittable randomness.
//
// The block function is Philox4x32-10 (Salmon et al., SC'11). A stream is the
// pair (key, stream id); block i of the stream is
//
//   philox4x32_10(counter = {lo32(i), hi32(i), lo32(id), hi32(id)},
//                 key     = {lo32(key), hi32(key)})
//
// and each block yields two 64-bit words, (w1 << 32) | w0 then (w3 << 32) | w2.
// Stream ids for nested purposes (client, provider, round, ...) are derived
// with derive(), which mixes the parent id and a tag through SplitMix64, so a
// stream depends only on its path and never on how many values other streams
// consumed. Floating-point draws avoid <random> distributions, whose output is
// implementation-defined, so results are identical across platforms.

#ifndef FEDPRIV_RNG_H_
#define FEDPRIV_RNG_H_

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace fedpriv {

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// 64-bit FNV-1a; a platform-independent way to key streams by name.
std::uint64_t fnv1a64(std::string_view text);

// Well-known tags for derive(). Values are part of the reproducibility
// contract: changing them changes every generated dataset and run.
enum class StreamTag : std::uint64_t {
  kDataset = 1,
  kClassMeans = 2,
  kProvider = 3,
  kValidation = 4,
  kModelInit = 5,
  kRound = 6,
  kClient = 7,
  kGroup = 8,
  kNoise = 9,
  kShuffle = 10,
  kDual = 11,
  kSampling = 12,
  kVocabulary = 13,
  kLora = 14,
};

class RngStream {
 public:
  RngStream(std::uint64_t key, std::uint64_t stream_id = 0)
      : key_(key), stream_(stream_id) {}

  // Child stream for a (tag, index) path component.
  RngStream derive(StreamTag tag, std::uint64_t index = 0) const;

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in (0, 1]; safe as a log() argument.
  double uniform_open_low();
  // Standard normal via Box-Muller; values come in cached pairs.
  double normal();
  // Uniform integer in [0, n) without modulo bias; n > 0.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices drawn from [0, n), returned in ascending order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::uint64_t key() const { return key_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace fedpriv

#endif  // FEDPRIV_RNG_H_
