#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "shiftlens/rng.hpp"
#include "shiftlens/thread_pool.hpp"

using shiftlens::Rng;

TEST_CASE("rng is deterministic in seed") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    auto va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= a2.next_u64() != c.next_u64();
  CHECK(any_diff);
}

TEST_CASE("forked streams are independent of draw order") {
  Rng root(7);
  Rng f3 = root.fork(3);
  root.next_u64();  // advancing the parent must not change fork streams
  Rng f3_again = Rng(7).fork(3);
  for (int i = 0; i < 20; ++i) CHECK(f3.next_u64() == f3_again.next_u64());
}

TEST_CASE("uniform lies in [0,1) with the right mean") {
  Rng rng(1);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // 3 sigma of the mean of Uniform(0,1): 3 / sqrt(12 n)
  CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0 * n));
}

TEST_CASE("gaussian moments") {
  Rng rng(2);
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    double g = rng.gaussian();
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("below stays in range and covers values") {
  Rng rng(3);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    auto v = rng.below(7);
    REQUIRE(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("sample_without_replacement yields distinct in-range indices") {
  Rng rng(4);
  auto sample = rng.sample_without_replacement(50, 20);
  REQUIRE(sample.size() == 20);
  std::set<int> unique(sample.begin(), sample.end());
  CHECK(unique.size() == 20);
  for (int v : sample) {
    CHECK(v >= 0);
    CHECK(v < 50);
  }
  CHECK_THROWS(Rng(4).sample_without_replacement(5, 6));

  auto again = Rng(4).sample_without_replacement(50, 20);
  CHECK(sample == again);
}

TEST_CASE("crc32 matches the reference vector") {
  const char* s = "123456789";
  CHECK(shiftlens::crc32(s, 9) == 0xCBF43926u);
  CHECK(shiftlens::crc32("", 0) == 0u);
}

TEST_CASE("parallel_for touches every index once and propagates errors") {
  std::vector<int> hits(1000, 0);
  shiftlens::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

  CHECK_THROWS_AS(shiftlens::parallel_for(
                      10, 4,
                      [](std::size_t i) {
                        if (i == 5) throw std::runtime_error("boom");
                      }),
                  std::runtime_error);
}
