#include <cmath>
#include <set>

#include "cmdplab/rng.hpp"
#include "doctest.h"

using cmdplab::Rng;

TEST_CASE("philox known-answer vectors") {
  using A4 = std::array<std::uint32_t, 4>;
  using A2 = std::array<std::uint32_t, 2>;
  CHECK(Rng::philox4x32_10(A4{0, 0, 0, 0}, A2{0, 0}) ==
        A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Rng::philox4x32_10(A4{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                           A2{0xffffffffu, 0xffffffffu}) ==
        A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Rng::philox4x32_10(A4{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                           A2{0xa4093822u, 0x299f31d0u}) ==
        A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are reproducible and split deterministically") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());

  const Rng root(1);
  Rng c1 = root.split("replication-0");
  Rng c2 = root.split("replication-0");
  Rng c3 = root.split("replication-1");
  CHECK(c1.key() == c2.key());
  CHECK(c1.key() != c3.key());
  CHECK(root.split(std::uint64_t{3}).key() != root.split(std::uint64_t{4}).key());

  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(c1());
  CHECK(seen.size() == 1000);
}

TEST_CASE("uniform draws stay in [0,1) with the right mean") {
  Rng rng(9);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // 3 standard errors of a U(0,1) mean.
  CHECK(std::abs(sum / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
}
