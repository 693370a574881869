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


#include <cmath>

#include <gtest/gtest.h>

#include "fluidsched/random.h"

namespace fluidsched {
namespace {

// Reference draws from numpy.random.Philox(key=[k0, k1]).random_raw().
TEST(Philox, MatchesNumpyRawStream) {
  struct Case {
    uint64_t k0, k1;
    uint64_t want[6];
  };
  const Case cases[] = {
      {0, 0, {0x02f4ba6408e4d89bULL, 0x3dd62b0b9ca8c5b2ULL, 0x1c8667a55d902e79ULL,
              0x907d7a052fd5b4dcULL, 0x809bf322883987c3ULL, 0x471128b9e807f7ddULL}},
      {7, 1, {0xe1e9589fbf7f6f1dULL, 0x5e794bda66c92f56ULL, 0x845eadf36d56f2f7ULL,
              0x54f02c50b6b75554ULL, 0xb7da48af1eff8048ULL, 0xb79da30c1f72c516ULL}},
      {12345, 4, {0x2b6a85f1253eeaafULL, 0x5fe058323fbe9248ULL, 0x5a4a8209df0e0760ULL,
                  0x0fab440b4b4fc330ULL, 0x7d06652283d18183ULL, 0x49f2a1dccc65c5b0ULL}},
  };
  for (const auto& c : cases) {
    Philox rng(c.k0, c.k1);
    for (uint64_t w : c.want) EXPECT_EQ(rng.next_u64(), w);
  }
}

// numpy.random.Generator(Philox(key=[7, 2])).random().
TEST(Philox, UniformMatchesNumpyGenerator) {
  Philox rng(7, 2);
  EXPECT_DOUBLE_EQ(rng.uniform(), 0.36654848046680033);
  EXPECT_DOUBLE_EQ(rng.uniform(), 0.39989196903035706);
  EXPECT_DOUBLE_EQ(rng.uniform(), 0.8479983815736046);
}

TEST(Philox, StreamsAreDistinct) {
  Philox a = make_stream(1, Stream::kArrivals);
  Philox b = make_stream(1, Stream::kServices);
  Philox c = make_stream(2, Stream::kArrivals);
  const uint64_t x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(Philox, ExponentialMoments) {
  Philox rng(3, 3);
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < n; ++k) {
    const double v = rng.exponential(2.0);
    ASSERT_GT(v, 0.0);
    s += v;
    s2 += v * v;
  }
  const double mean = s / n;
  EXPECT_NEAR(mean, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - mean * mean, 0.25, 0.01);
}

TEST(Philox, BelowIsUniform) {
  Philox rng(9, 0);
  int counts[7] = {};
  const int n = 70000;
  for (int k = 0; k < n; ++k) {
    const uint64_t v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);  // 0.999 quantile, 6 dof
}

}  // namespace
}  // namespace fluidsched
