#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "smadd/numerics.hpp"
#include "smadd/rng.hpp"

using namespace smadd;

TEST_CASE("softmax handles extreme logits without overflow") {
  Vec s = softmax({1000.0, 0.0});
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-15));
  // Long-double reference on the shifted form.
  long double e = expl(-1000.0L);
  CHECK(std::fabs(s[1] - static_cast<double>(e / (1.0L + e))) <= 1e-300);

  Vec t = softmax({-1000.0, -1001.0, -999.0});
  double sum = t[0] + t[1] + t[2];
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("softmax is shift invariant and ordered") {
  Rng rng(3, Stream::scratch);
  for (int rep = 0; rep < 50; ++rep) {
    Vec logits(5);
    for (double& x : logits) x = rng.uniform(-10.0, 10.0);
    Vec a = softmax(logits);
    Vec shifted = logits;
    for (double& x : shifted) x += 123.25;
    Vec b = softmax(shifted);
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::fabs(a[i] - b[i]) <= 1e-14);
      CHECK(a[i] > 0.0);
      total += a[i];
    }
    CHECK(std::fabs(total - 1.0) <= 1e-14);
  }
}

TEST_CASE("softmax of equal logits is uniform") {
  Vec s = softmax({2.5, 2.5, 2.5, 2.5});
  for (double x : s) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("gelu matches the erf definition at reference points") {
  CHECK(gelu(0.0) == 0.0);
  // x * Phi(x) at x=1: Phi(1) = 0.841344746068543...
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  CHECK(gelu(-1.0) == doctest::Approx(-0.15865525393145707).epsilon(1e-13));
  // Far tails: identity on the right, zero on the left.
  CHECK(gelu(20.0) == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(std::fabs(gelu(-20.0)) < 1e-80);
}

TEST_CASE("gelu_prime agrees with finite differences on a dense grid") {
  // 1000 points across the active region; central differences with h=1e-6.
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    double x = -8.0 + 16.0 * i / 999.0;
    double fd = testing::central_diff([](double t) { return gelu(t); }, x, 1e-6);
    worst = std::max(worst, std::fabs(fd - gelu_prime(x)));
  }
  CHECK(worst <= 1e-7);
}

TEST_CASE("gelu_prime closed form: cdf plus x times pdf") {
  // Spot value at x=1: Phi(1) + 1 * phi(1) = 0.841344746 + 0.241970725
  CHECK(gelu_prime(1.0) == doctest::Approx(1.0833154705876864).epsilon(1e-13));
  CHECK(gelu_prime(0.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize returns unit vectors and guards the origin") {
  Vec v = {3.0, 4.0};
  Vec n = normalize(v);
  CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-15));

  Vec zero = {0.0, 0.0, 0.0};
  Vec nz = normalize(zero);
  for (double x : nz) CHECK(x == 0.0);

  // Below the guard the map is linear, v / 1e-12, so still finite.
  Vec tiny = {1e-300, 0.0};
  Vec nt = normalize(tiny);
  CHECK(nt[0] == doctest::Approx(1e-288).epsilon(1e-12));
}

TEST_CASE("smoothed_normalize matches plain normalization above unit norm") {
  Rng rng(5, Stream::scratch);
  for (int rep = 0; rep < 50; ++rep) {
    Vec v(3);
    for (double& x : v) x = rng.uniform(-3.0, 3.0);
    if (norm2(v) < 1.0) continue;
    Vec a = normalize(v);
    Vec b = smoothed_normalize(v);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-15);
  }
}

TEST_CASE("smoothed_normalize gains down smoothly below unit norm") {
  // Output magnitude should be smoothstep(r) = 3r^2 - 2r^3.
  for (double r : {0.1, 0.25, 0.5, 0.75, 0.9, 0.999}) {
    Vec v = {r, 0.0};
    Vec s = smoothed_normalize(v);
    double expect = 3.0 * r * r - 2.0 * r * r * r;
    CHECK(s[0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(s[1] == 0.0);
  }
  // Continuous at r=1 and flat at the origin.
  Vec at_one = smoothed_normalize(Vec{1.0, 0.0});
  CHECK(at_one[0] == doctest::Approx(1.0).epsilon(1e-15));
  Vec near_zero = smoothed_normalize(Vec{1e-8, 0.0});
  CHECK(std::fabs(near_zero[0]) <= 3e-16);
}

TEST_CASE("operator_norm on matrices with known spectra") {
  Mat d2(2, 2);
  d2(0, 0) = 3.0;
  d2(1, 1) = -4.0;
  CHECK(operator_norm(d2) == doctest::Approx(4.0).epsilon(1e-10));

  Mat id(5, 5);
  for (int i = 0; i < 5; ++i) id(i, i) = 1.0;
  CHECK(operator_norm(id) == doctest::Approx(1.0).epsilon(1e-12));

  Mat zero(4, 7);
  CHECK(operator_norm(zero) == 0.0);

  // A row vector's operator norm is its Euclidean norm.
  Mat row(1, 3);
  row(0, 0) = 1.0;
  row(0, 1) = 2.0;
  row(0, 2) = 2.0;
  CHECK(operator_norm(row) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("operator_norm agrees with the Jacobi oracle on random matrices") {
  Rng rng(17, Stream::scratch);
  for (int rep = 0; rep < 25; ++rep) {
    int r = 1 + static_cast<int>(rng.below(8));
    int c = 1 + static_cast<int>(rng.below(8));
    Mat m(r, c);
    for (double& x : m.a) x = rng.uniform(-2.0, 2.0);
    double pi = operator_norm(m);
    double jac = testing::jacobi_max_singular(m);
    CHECK(std::fabs(pi - jac) <= 1e-8 * std::max(1.0, jac));
  }
}

TEST_CASE("operator_norm is transpose invariant") {
  Rng rng(19, Stream::scratch);
  for (int rep = 0; rep < 20; ++rep) {
    Mat m(3 + static_cast<int>(rng.below(5)), 2 + static_cast<int>(rng.below(6)));
    for (double& x : m.a) x = rng.uniform(-1.0, 1.0);
    Mat mt(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i) {
      for (int j = 0; j < m.cols; ++j) mt(j, i) = m(i, j);
    }
    CHECK(std::fabs(operator_norm(m) - operator_norm(mt)) <= 1e-9);
  }
}

TEST_CASE("tv_distance basics") {
  CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(tv_distance({1.0, 0.0}, {0.0, 1.0}) == 1.0);
  CHECK(tv_distance({0.7, 0.3}, {0.3, 0.7}) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(tv_distance({0.5, 0.5}, {1.0}), LengthMismatch);
}

TEST_CASE("tv_distance to a one-hot is one minus the mass on the hot index") {
  Rng rng(23, Stream::scratch);
  for (int rep = 0; rep < 200; ++rep) {
    int n = 2 + static_cast<int>(rng.below(6));
    Vec p(n);
    double tot = 0.0;
    for (double& x : p) {
      x = rng.uniform(1e-6, 1.0);
      tot += x;
    }
    for (double& x : p) x /= tot;
    int y = static_cast<int>(rng.below(static_cast<std::uint32_t>(n)));
    Vec onehot(n, 0.0);
    onehot[y] = 1.0;
    CHECK(std::fabs(tv_distance(p, onehot) - (1.0 - p[y])) <= 1e-12);
  }
}

TEST_CASE("gemv and friends against hand computation") {
  Mat m(2, 3);
  m(0, 0) = 1.0;
  m(0, 1) = 2.0;
  m(0, 2) = 3.0;
  m(1, 0) = -1.0;
  m(1, 1) = 0.5;
  m(1, 2) = 4.0;
  double x[] = {1.0, -1.0, 2.0};
  double y[2];
  gemv(m, x, y);
  CHECK(y[0] == 5.0);
  CHECK(y[1] == 6.5);

  double xt[] = {2.0, -1.0};
  double yt[3];
  gemv_t(m, xt, yt);
  CHECK(yt[0] == 3.0);
  CHECK(yt[1] == 3.5);
  CHECK(yt[2] == 2.0);

  Mat acc(2, 2);
  double u[] = {1.0, 2.0};
  double v[] = {3.0, 4.0};
  ger(0.5, u, v, acc);
  CHECK(acc(0, 0) == 1.5);
  CHECK(acc(0, 1) == 2.0);
  CHECK(acc(1, 0) == 3.0);
  CHECK(acc(1, 1) == 4.0);
}
