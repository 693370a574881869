/* Copyright 2026 The fluidsched Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <array>
#include <cstdint>

namespace fluidsched {

// Philox4x64-10 counter-based generator. Output matches numpy's
// Philox(key=...) bit generator: the counter is incremented before each
// block, so the first block uses counter 1.
class Philox {
 public:
  using Counter = std::array<uint64_t, 4>;
  using Key = std::array<uint64_t, 2>;

  Philox(uint64_t key0, uint64_t key1) : key_{key0, key1} {}

  static Counter block(Counter ctr, Key key);

  uint64_t next_u64() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  double exponential(double rate);
  // Uniform integer on [0, n).
  uint64_t below(uint64_t n);

 private:
  void refill();

  Key key_;
  Counter counter_{0, 0, 0, 0};
  Counter buffer_{};
  int pos_ = 4;
};

// Independent streams for each source of randomness, keyed by
// (root seed, stream id).
enum class Stream : uint64_t {
  kArrivals = 1,
  kServices = 2,
  kPatience = 3,
  kRouting = 4,
};

inline Philox make_stream(uint64_t root_seed, Stream stream) {
  return Philox(root_seed, static_cast<uint64_t>(stream));
}

}  // namespace fluidsched
