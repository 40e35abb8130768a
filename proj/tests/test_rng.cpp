#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "smadd/rng.hpp"

using namespace smadd;

TEST_CASE("same seed and stream replay exactly") {
  Rng a(42, Stream::init);
  Rng b(42, Stream::init);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u32() == b.next_u32());
}

TEST_CASE("streams of one seed are unrelated") {
  Rng a(42, Stream::init);
  Rng b(42, Stream::shuffle);
  int agree = 0;
  for (int i = 0; i < 256; ++i) {
    if (a.next_u32() == b.next_u32()) ++agree;
  }
  CHECK(agree == 0);

  // Drawing from one stream must not perturb another: interleaved and
  // isolated use give identical sequences.
  Rng c(7, Stream::init);
  Rng d(7, Stream::shuffle);
  std::vector<std::uint32_t> mixed;
  for (int i = 0; i < 64; ++i) {
    mixed.push_back(c.next_u32());
    d.next_u32();
  }
  Rng e(7, Stream::init);
  for (int i = 0; i < 64; ++i) CHECK(e.next_u32() == mixed[i]);
}

TEST_CASE("below is in range and unbiased enough") {
  Rng rng(1, Stream::scratch);
  std::vector<int> counts(6, 0);
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    std::uint32_t v = rng.below(6);
    REQUIRE(v < 6);
    counts[v]++;
  }
  // Expected 10000 per bucket, sd ~ 91; allow 6 sigma.
  for (int c : counts) CHECK(std::abs(c - 10000) < 550);
}

TEST_CASE("uniform doubles live in the half-open unit interval") {
  Rng rng(2, Stream::scratch);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("normal draws have the right first two moments") {
  Rng rng(3, Stream::scratch);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s1 += x;
    s2 += x * x;
  }
  double mean = s1 / n;
  double var = s2 / n - mean * mean;
  // sd of the sample mean is 1/sqrt(n) ~ 0.0022; allow 5 sigma.
  CHECK(std::fabs(mean) < 0.012);
  CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("shuffle permutes and is seed deterministic") {
  Rng a(9, Stream::shuffle);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  a.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[i] == i);

  Rng b(9, Stream::shuffle);
  std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  b.shuffle(w);
  CHECK(v == w);
}

TEST_CASE("shuffle hits all permutations of three elements") {
  Rng rng(4, Stream::scratch);
  std::map<std::vector<int>, int> counts;
  const int n = 6000;
  for (int i = 0; i < n; ++i) {
    std::vector<int> v{0, 1, 2};
    rng.shuffle(v);
    counts[v]++;
  }
  CHECK(counts.size() == 6);
  // Expected 1000 each, sd ~ 29; allow 6 sigma.
  for (const auto& [perm, c] : counts) CHECK(std::abs(c - 1000) < 180);
}
