#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "advrep/rng.hpp"

using namespace advrep;

TEST_CASE("same seed reproduces the sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  size_t same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("hash_name is FNV-1a") {
  CHECK(Rng::hash_name("") == 14695981039346656037ull);
  CHECK(Rng::hash_name("init") != Rng::hash_name("shuffle_ae"));
  CHECK(Rng::hash_name("init") == Rng::hash_name("init"));
}

TEST_CASE("named substreams are independent and indexed") {
  Rng a = Rng::substream(7, "init");
  Rng b = Rng::substream(7, "shuffle_ae");
  CHECK(a.next_u64() != b.next_u64());

  Rng e1 = Rng::substream(7, "shuffle_ae", 1);
  Rng e2 = Rng::substream(7, "shuffle_ae", 2);
  CHECK(e1.next_u64() != e2.next_u64());

  Rng r1 = Rng::substream(7, "shuffle_ae", 1);
  Rng r2 = Rng::substream(7, "shuffle_ae", 1);
  CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("uniform lies in [0,1) and fills the range") {
  Rng r(3);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("below is bounded and roughly uniform") {
  Rng r(5);
  std::vector<size_t> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const uint64_t v = r.below(7);
    REQUIRE(v < 7);
    ++counts[v];
  }
  for (size_t c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("normal has the right first two moments") {
  Rng r(11);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("shuffle permutes and is seed-deterministic") {
  std::vector<int> v(20);
  for (int i = 0; i < 20; ++i) v[i] = i;
  std::vector<int> w = v;
  Rng a(9);
  a.shuffle(v);
  CHECK(std::set<int>(v.begin(), v.end()).size() == 20);
  CHECK(v != w);  // 1/20! chance of false alarm

  std::vector<int> u = w;
  Rng b(9);
  b.shuffle(u);
  CHECK(u == v);
}

TEST_CASE("state round-trips") {
  Rng r(13);
  r.next_u64();
  const auto s = r.state();
  const uint64_t a = r.next_u64();
  Rng q(0);
  q.set_state(s);
  CHECK(q.next_u64() == a);
}

TEST_CASE("splitmix64 advances its state") {
  uint64_t s1 = 123, s2 = 123;
  const uint64_t a = Rng::splitmix64(s1);
  const uint64_t b = Rng::splitmix64(s1);
  CHECK(a != b);
  CHECK(Rng::splitmix64(s2) == a);
}
