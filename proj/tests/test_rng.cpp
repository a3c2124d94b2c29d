#include <cmath>
#include <vector>

#include "doctest.h"
#include "voxfuse/rng.hpp"

using namespace voxfuse;

TEST_CASE("identical seeds replay identical streams") {
  Rng a(99);
  Rng b(99);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.uniform01() == b.uniform01());
    CHECK(a.uniform_index(17) == b.uniform_index(17));
    CHECK(a.normal() == b.normal());
  }
}

TEST_CASE("uniform draws stay inside their ranges") {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.uniform_index(7) < 7);
    const double x = rng.uniform(-3.0, 2.0);
    CHECK(x >= -3.0);
    CHECK(x < 2.0);
  }
}

TEST_CASE("derive_seed separates streams by tag") {
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 0) != derive_seed(1, 2, 1));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
}

TEST_CASE("normal samples have unit-ish moments") {
  Rng rng(1234);
  const int n = 100000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}
