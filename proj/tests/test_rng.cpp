#include <doctest.h>

#include <cmath>
#include <set>

#include "stylab/rng.hpp"

using namespace stylab;

TEST_CASE("identical seed and key path reproduce identical draws") {
  RngStream a = RngStream(42).sub("crop").sub(3ull);
  RngStream b = RngStream(42).sub("crop").sub(3ull);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct keys give distinct streams") {
  RngStream root(42);
  std::set<uint64_t> firsts;
  firsts.insert(root.sub("crop").next_u64());
  firsts.insert(root.sub("flip").next_u64());
  firsts.insert(root.sub(0ull).next_u64());
  firsts.insert(root.sub(1ull).next_u64());
  firsts.insert(RngStream(43).sub("crop").next_u64());
  CHECK(firsts.size() == 5);
}

TEST_CASE("deriving a substream does not advance the parent") {
  RngStream a(7);
  RngStream b(7);
  (void)a.sub("x");
  (void)a.sub(123ull);
  CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform draws live in [0,1) and cover the range") {
  RngStream r(1);
  double lo = 1, hi = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.next_uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("bernoulli endpoints are exact") {
  RngStream r(2);
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(r.next_bernoulli(0.0));
    CHECK(r.next_bernoulli(1.0));
  }
}

TEST_CASE("gaussian draws have roughly standard moments") {
  RngStream r(3);
  const int n = 20000;
  double sum = 0, sum2 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = r.next_gaussian();
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("next_index stays in range and hits every value") {
  RngStream r(4);
  std::set<int64_t> seen;
  for (int i = 0; i < 1000; ++i) {
    const int64_t v = r.next_index(7);
    CHECK(v >= 0);
    CHECK(v < 7);
    seen.insert(v);
  }
  CHECK(seen.size() == 7);
}
