#include <cmath>
#include <random>

#include "doctest.h"
#include "mass/metrics/metrics.hpp"
#include "oracles.hpp"

using namespace mass;
using namespace mass::metrics;
using doctest::Approx;

TEST_CASE("pearson examples") {
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == Approx(1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == Approx(-1.0));
  CHECK(pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) ==
        Approx(0.8).epsilon(1e-12));
  CHECK(pearson(std::vector<double>{5, 5, 5}, std::vector<double>{1, 2, 3}) == 0.0);
}

TEST_CASE("pearson errors") {
  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
}

TEST_CASE("pearson symmetric and invariant to positive affine maps") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(9), y(9), z(9);
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    const double a = std::abs(u(rng)) + 0.1, b = u(rng);
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = a * x[i] + b;
    CHECK(pearson(x, y) == Approx(pearson(y, x)).epsilon(1e-12));
    CHECK(pearson(z, y) == Approx(pearson(x, y)).epsilon(1e-9));
  }
}

TEST_CASE("corr_vector is the user mean of per-user coefficients") {
  TraceTensor t(2, 4);
  // user 0: r = 0.8; user 1: perfectly anticorrelated.
  const double u0[4][2] = {{1, 1}, {2, 3}, {3, 2}, {4, 4}};
  const double u1[4][2] = {{1, 4}, {2, 3}, {3, 2}, {4, 1}};
  for (std::size_t k = 0; k < 4; ++k) {
    t.at(0, k, Feature::download) = u0[k][0];
    t.at(0, k, Feature::upload) = u0[k][1];
    t.at(1, k, Feature::download) = u1[k][0];
    t.at(1, k, Feature::upload) = u1[k][1];
  }
  auto r = corr_vector(t);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == Approx((0.8 - 1.0) / 2));

  TraceTensor same(3, 5);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t k = 0; k < 5; ++k)
      same.at(u, k, Feature::download) = same.at(u, k, Feature::upload) = double(k * k + u);
  CHECK(corr_vector(same)[0] == Approx(1.0));
}

TEST_CASE("corr_distance") {
  CHECK(corr_distance({0.5}, {0.5}) == 0.0);
  CHECK(corr_distance({0.5}, {0.1}) == Approx(0.4));
  CHECK(corr_distance({0.2, 0.4, 0.6}, {0.2, 0.1, 0.6}) == Approx(0.3));
  CHECK_THROWS_AS(corr_distance({0.1}, {0.1, 0.2}), Error);
}

TEST_CASE("moments examples") {
  auto m = moments(std::vector<double>{0, 0, 0, 1});
  CHECK(m.mu == Approx(0.25));
  CHECK(m.sigma == Approx(0.4330127019));
  CHECK(m.skew == Approx(1.1547005384));
  auto c = moments(std::vector<double>{3, 3, 3});
  CHECK(c.mu == 3.0);
  CHECK(c.sigma == 0.0);
  CHECK(c.skew == 0.0);
  CHECK(moments(std::vector<double>{1, 2, 3}).skew == Approx(0.0));
  CHECK_THROWS_AS(moments(std::vector<double>{1}), Error);
}

TEST_CASE("moments_distance") {
  MomentTriple a{0.25, 0.4330127019, 1.1547005384};
  MomentTriple b{0.75, 0.4330127019, -1.1547005384};
  CHECK(moments_distance(a, a) == 0.0);
  CHECK(moments_distance(MomentTriple{1, 2, 3}, MomentTriple{2, 2, 3}) == Approx(1.0));
  CHECK(moments_distance(a, b) == Approx(0.25 + 4.0 / 0.75).epsilon(1e-9));
  CHECK(moments_distance(a, b) == Approx(5.583).epsilon(1e-3));
}

TEST_CASE("cross_correlation") {
  std::vector<double> x{1, 4, 2, 8, 5, 7, 3, 9};
  CHECK(cross_correlation(x, x, 0) == Approx(1.0));
  std::vector<double> y(x.size());
  for (std::size_t i = 2; i < x.size(); ++i) y[i] = x[i - 2];
  y[0] = 11;
  y[1] = -3;
  CHECK(cross_correlation(x, y, 2) == Approx(1.0));
  CHECK_THROWS_AS(cross_correlation(x, y, 7), Error);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> a(12), b(12);
  for (std::size_t i = 0; i < 12; ++i) {
    a[i] = u(rng);
    b[i] = u(rng);
  }
  for (std::size_t k = 0; k <= 10; ++k) {
    std::vector<double> xa(a.begin(), a.end() - k), xb(b.begin() + k, b.end());
    CHECK(cross_correlation(a, b, k) == Approx(oracle::pearson(xa, xb)).epsilon(1e-9));
  }
}

TEST_CASE("novelty lag bound") {
  CHECK(novelty_max_lag(12) == 7);
  CHECK(novelty_max_lag(100) == 16);
  CHECK(novelty_max_lag(2) == 0);
  CHECK(novelty_max_lag(4) == 2);  // capped to keep two overlapping samples
  CHECK(novelty_max_lag(20) == 10);
}

TEST_CASE("novelty of identical users is zero") {
  TraceTensor t(5, 12);
  for (std::size_t u = 0; u < 5; ++u)
    for (std::size_t k = 0; k < 12; ++k)
      t.at(u, k, Feature::download) = std::sin(0.7 * double(k)) + 2.0;
  CHECK(novelty(t) == Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(novelty(TraceTensor(1, 12)), Error);
}

TEST_CASE("novelty range and lagged copy property") {
  int lower = 0;
  const int trials = 40;
  for (int seed = 0; seed < trials; ++seed) {
    std::mt19937_64 rng(seed);
    auto base = oracle::random_tensor(rng, 6, 48);
    auto shifted = base;
    auto noise = base;
    std::uniform_real_distribution<double> u(0, 1);
    for (std::size_t k = 0; k < 48; ++k) {
      shifted.at(5, k, Feature::download) =
          k >= 3 ? base.at(0, k - 3, Feature::download) : u(rng);
      noise.at(5, k, Feature::download) = u(rng);
    }
    const double n_shift = novelty(shifted), n_noise = novelty(noise);
    CHECK(n_shift >= 0.0);
    CHECK(n_shift <= 2.0);
    CHECK(n_noise <= 2.0);
    if (n_shift < n_noise) ++lower;
  }
  CHECK(lower >= trials * 95 / 100);
}

TEST_CASE("metrics match brute-force oracles on random 5x8x2 tensors") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = oracle::random_tensor(rng, 5, 8);
    auto b = oracle::random_tensor(rng, 5, 8);
    CHECK(corr_vector(a)[0] == Approx(oracle::mean_user_pearson(a)).epsilon(1e-9));
    for (std::size_t f = 0; f < 2; ++f) {
      auto mo = oracle::moments(oracle::lumped(a, f));
      auto mi = moments(a, static_cast<Feature>(f));
      CHECK(std::abs(mi.mu - mo.mu) < 1e-9);
      CHECK(std::abs(mi.sigma - mo.sigma) < 1e-9);
      CHECK(std::abs(mi.skew - mo.skew) < 1e-9);
      CHECK(std::abs(novelty(a, static_cast<Feature>(f)) - oracle::novelty(a, f, 6)) < 1e-9);
    }
    const double cd = corr_distance(corr_vector(a), corr_vector(b));
    CHECK(std::abs(cd - std::abs(oracle::mean_user_pearson(a) - oracle::mean_user_pearson(b))) < 1e-9);
    double md = 0;
    for (std::size_t f = 0; f < 2; ++f)
      md += oracle::moments_distance(oracle::moments(oracle::lumped(a, f)),
                                     oracle::moments(oracle::lumped(b, f)));
    CHECK(std::abs(moments_distance(a, b) - md) < 1e-9);
    CHECK(moments_distance(a, b) == Approx(moments_distance(b, a)).epsilon(1e-12));
    CHECK(moments_distance(a, a) == 0.0);
    CHECK(cd <= 2.0);
  }
}
