#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "volharm/rng.hpp"

using volharm::Rng;

TEST_SUITE("rng") {

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.uniform() == d.uniform());
    CHECK(c.normal() == d.normal());
  }
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("uniform(lo,hi) maps the endpoints") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-5.0, 5.0);
    CHECK(u >= -5.0);
    CHECK(u < 5.0);
  }
}

TEST_CASE("normal moments match a unit gaussian") {
  Rng rng(123);
  const int n = 200000;
  double sum = 0.0, ss = 0.0, s3 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    ss += x * x;
    s3 += x * x * x;
  }
  const double mean = sum / n;
  const double var = ss / n - mean * mean;
  // SE(mean) ~ 1/sqrt(n) = 0.0022; 5 sigma bounds.
  CHECK(std::abs(mean) < 0.012);
  CHECK(std::abs(var - 1.0) < 0.02);
  CHECK(std::abs(s3 / n) < 0.03);
}

TEST_CASE("normal(mean,sd) rescales") {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) {
    CHECK(b.normal(2.0, 3.0) == doctest::Approx(2.0 + 3.0 * a.normal()).epsilon(1e-15));
  }
}

TEST_CASE("below(n) covers [0,n) roughly uniformly") {
  Rng rng(17);
  std::map<std::uint64_t, int> counts;
  const int n = 60000;
  for (int i = 0; i < n; ++i) {
    const auto v = rng.below(6);
    CHECK(v < 6);
    ++counts[v];
  }
  CHECK(counts.size() == 6);
  for (const auto& [value, count] : counts) {
    CHECK(count > n / 6 - 600);  // ~6 sigma for a fair die
    CHECK(count < n / 6 + 600);
  }
}

TEST_CASE("shuffle is a permutation and seed-stable") {
  std::vector<int> v(52);
  for (int i = 0; i < 52; ++i) v[static_cast<std::size_t>(i)] = i;
  std::vector<int> w = v;
  Rng a(5), b(5);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 52; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
  CHECK(v != sorted);  // 52! makes identity astronomically unlikely
}

TEST_CASE("shuffle visits permutations uniformly on 3 elements") {
  std::map<std::vector<int>, int> counts;
  const int trials = 60000;
  Rng rng(31);
  for (int t = 0; t < trials; ++t) {
    std::vector<int> v = {0, 1, 2};
    rng.shuffle(v);
    ++counts[v];
  }
  CHECK(counts.size() == 6);
  for (const auto& [perm, count] : counts) {
    CHECK(count > trials / 6 - 600);
    CHECK(count < trials / 6 + 600);
  }
}

}  // TEST_SUITE
