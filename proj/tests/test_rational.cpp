#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sparsedom/rational.hpp"

using namespace sparsedom;

TEST_CASE("canonical form") {
  CHECK(Rational(2, 4) == Rational(1, 2));
  CHECK(Rational(-2, -4) == Rational(1, 2));
  CHECK(Rational(2, -4) == Rational(-1, 2));
  CHECK(Rational(0, 7) == Rational(0));
  CHECK(Rational(6, 3).is_integer());
}

TEST_CASE("exact arithmetic") {
  Rational third(1, 3), half(1, 2);
  CHECK(third + half == Rational(5, 6));
  CHECK(third - half == Rational(-1, 6));
  CHECK(third * half == Rational(1, 6));
  CHECK(third / half == Rational(2, 3));
  CHECK(half.times_pow2(3) == Rational(4));
  CHECK(half.times_pow2(-2) == Rational(1, 8));
  CHECK((Rational(1) - Rational(1, 3) * Rational(3)).is_zero());
}

TEST_CASE("comparisons are exact") {
  CHECK(Rational(1, 3) < Rational(34, 100));
  CHECK(Rational(-1, 3) > Rational(-34, 100));
  CHECK(Rational(2, 6) <= Rational(1, 3));
  CHECK(Rational(1, 3) >= Rational(1, 3));
}

TEST_CASE("floor") {
  CHECK(Rational(7, 2).floor() == 3);
  CHECK(Rational(-7, 2).floor() == -4);
  CHECK(Rational(6, 3).floor() == 2);
  CHECK(Rational(-6, 3).floor() == -2);
}

TEST_CASE("division by zero and overflow throw") {
  CHECK_THROWS_AS(Rational(1) / Rational(0), std::domain_error);
  Rational big(INT64_MAX / 2, 1);
  CHECK_THROWS_AS(big * Rational(8), std::overflow_error);
}

TEST_CASE("random triples agree with 128-bit brute force") {
  std::uint64_t state = 12345;
  auto next = [&]() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<std::int64_t>((state >> 33) % 2000) - 1000;
  };
  for (int trial = 0; trial < 2000; ++trial) {
    std::int64_t a = next(), b = next() | 1, c = next(), d = next() | 1;
    if (b == 0 || d == 0) continue;
    Rational x(a, b), y(c, d);
    Rational sum = x + y;
    __int128 ln = static_cast<__int128>(a) * d + static_cast<__int128>(c) * b;
    __int128 ld = static_cast<__int128>(b) * d;
    // cross-check: sum == ln/ld exactly
    CHECK(static_cast<__int128>(sum.num()) * ld == ln * sum.den());
    Rational prod = x * y;
    CHECK(static_cast<__int128>(prod.num()) * (static_cast<__int128>(b) * d) ==
          static_cast<__int128>(a) * c * prod.den());
  }
}
