#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctpnp/rng.hpp"

using namespace ctpnp;

// Known-answer vectors published with Random123 (kat_vectors, philox4x32_10).
TEST_CASE("philox4x32-10 known answers") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(philox4x32_10(A4{0, 0, 0, 0}, A2{0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10(A4{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, A2{0xffffffff, 0xffffffff}) ==
        A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10(A4{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, A2{0xa4093822, 0x299f31d0}) ==
        A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniform draws stay inside the open interval") {
  CHECK(philox_uniform(0, 0) > 0.0);
  CHECK(philox_uniform(0xffffffff, 0xffffffff) < 1.0);
  CounterRng rng(7);
  double s = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    s += u;
  }
  CHECK(s / 20000.0 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normal draws: moments and determinism") {
  const int n = 100000;
  double m = 0.0, v = 0.0;
  for (int i = 0; i < n; ++i) m += philox_normal(3, 1, static_cast<std::uint64_t>(i));
  m /= n;
  for (int i = 0; i < n; ++i) {
    const double d = philox_normal(3, 1, static_cast<std::uint64_t>(i)) - m;
    v += d * d;
  }
  v /= n - 1;
  CHECK(std::abs(m) < 3.0 / std::sqrt(static_cast<double>(n)));
  CHECK(v == doctest::Approx(1.0).epsilon(0.02));
  CHECK(philox_normal(3, 1, 12345) == philox_normal(3, 1, 12345));
  CHECK(philox_normal(3, 1, 12345) != philox_normal(4, 1, 12345));
  CHECK(philox_normal(3, 1, 12345) != philox_normal(3, 2, 12345));
}

TEST_CASE("shuffle is a seeded permutation") {
  std::vector<int> a(50), b(50), c(50);
  std::iota(a.begin(), a.end(), 0);
  b = a;
  c = a;
  CounterRng(11).shuffle(a);
  CounterRng(11).shuffle(b);
  CounterRng(12).shuffle(c);
  CHECK(a == b);
  CHECK(a != c);
  std::sort(c.begin(), c.end());
  std::vector<int> ref(50);
  std::iota(ref.begin(), ref.end(), 0);
  CHECK(c == ref);
}

TEST_CASE("below covers its range") {
  CounterRng rng(5);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) hits[rng.below(7)] += 1;
  for (int h : hits) CHECK(h > 800);
}
