// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace evfl {

using Rng = std::mt19937_64;

/// Derives an independent generator from a base seed and a stream key, so
/// that e.g. (seed, round, client) always maps to the same sequence no
/// matter in which order streams are created.
inline Rng make_rng(std::uint64_t seed,
                    std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (std::uint64_t s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags keep the derived generators of different subsystems apart.
namespace stream {
inline constexpr std::uint64_t kInit = 0x494e4954;
inline constexpr std::uint64_t kSplit = 0x53504c54;
inline constexpr std::uint64_t kEpoch = 0x45504f43;
inline constexpr std::uint64_t kSampling = 0x53414d50;
inline constexpr std::uint64_t kPermutation = 0x5045524d;
inline constexpr std::uint64_t kDummy = 0x44554d59;
inline constexpr std::uint64_t kSynth = 0x53594e54;
}  // namespace stream

}  // namespace evfl
