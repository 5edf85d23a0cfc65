#include <doctest.h>

#include <cmath>

#include "metapop/rng.hpp"

using namespace metapop;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
  }
  bool any_diff = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) any_diff |= a2.normal() != c.normal();
  CHECK(any_diff);
}

TEST_CASE("derived seeds separate streams") {
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
}

TEST_CASE("transform sanity") {
  Rng rng(7);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(0.5, 2.0);
    CHECK(u >= 0.5);
    CHECK(u < 2.0);
  }
}
