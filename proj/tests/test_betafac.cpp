#include <doctest.h>

#include <random>

#include "ntfsep/betafac.hpp"

using namespace ntfsep;

TEST_CASE("beta divergence closed forms") {
  CHECK(beta_divergence(1.0, 1.0, Beta{0.3}) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(beta_divergence(1.0, 2.0, Beta{1.0}) ==
        doctest::Approx(std::log(0.5) + 1.0).epsilon(1e-12));
  CHECK(beta_divergence(1.0, 2.0, Beta{0.0}) ==
        doctest::Approx(0.5 - std::log(0.5) - 1.0).epsilon(1e-12));
  CHECK(beta_divergence(3.0, 1.0, Beta{2.0}) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("beta divergence domain handling") {
  CHECK_THROWS(beta_divergence(1.0, 0.0, Beta{1.0}));
  CHECK_THROWS(beta_divergence(1.0, -1.0, Beta{0.5}));
  CHECK_THROWS(beta_divergence(0.0, 1.0, Beta{0.0}));
  CHECK(beta_divergence(0.0, 2.0, Beta{1.0}) == doctest::Approx(2.0));
  CHECK_THROWS(beta_divergence(-1.0, 1.0, Beta{0.5}));
}

TEST_CASE("branch consistency near beta = 0 and 1") {
  for (int ia = 0; ia < 20; ++ia) {
    for (int ib = 0; ib < 20; ++ib) {
      const double a = 0.1 + ia * (9.9 / 19.0);
      const double b = 0.1 + ib * (9.9 / 19.0);
      const double kl = beta_divergence(a, b, Beta{1.0});
      const double is = beta_divergence(a, b, Beta{0.0});
      for (const double d : {-1e-6, 1e-6}) {
        CHECK(std::abs(beta_divergence(a, b, Beta{1.0 + d}) - kl) <= 1e-4 * (1.0 + std::abs(kl)));
        CHECK(std::abs(beta_divergence(a, b, Beta{0.0 + d}) - is) <= 1e-4 * (1.0 + std::abs(is)));
      }
    }
  }
}

TEST_CASE("identity of indiscernibles") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.05, 10.0);
  for (const double beta : {0.0, 0.3, 0.6, 0.9, 1.0, 1.2}) {
    for (int i = 0; i < 50; ++i) {
      const double a = uni(rng);
      double b = uni(rng);
      if (std::abs(a - b) < 1e-3) b += 0.5;
      CHECK(beta_divergence(a, a, Beta{beta}) == 0.0);
      CHECK(beta_divergence(a, b, Beta{beta}) > 0.0);
    }
  }
}

TEST_CASE("total divergence") {
  Mat A(1, 2), B(1, 2);
  A << 1.0, 1.0;
  B << 2.0, 2.0;
  CHECK(total_divergence(A, A, Beta{0.7}) == doctest::Approx(0.0));
  CHECK(total_divergence(A, B, Beta{1.0}) ==
        doctest::Approx(2.0 * (std::log(0.5) + 1.0)).epsilon(1e-12));
  Mat a1(1, 1), b1(1, 1);
  a1 << 3.0;
  b1 << 1.5;
  CHECK(total_divergence(a1, b1, Beta{0.4}) ==
        doctest::Approx(beta_divergence(3.0, 1.5, Beta{0.4})));
  Mat C(2, 1);
  CHECK_THROWS(total_divergence(A, C, Beta{1.0}));
}

TEST_CASE("elementwise power conventions") {
  CHECK(elementwise_power(cplx(4.0, 0.0), 0.5).real() == doctest::Approx(2.0));
  const cplx z = std::polar(2.0, std::numbers::pi / 3.0);
  const cplx zp = elementwise_power(z, -1.0);
  CHECK(std::abs(zp) == doctest::Approx(0.5));
  CHECK(std::arg(zp) == doctest::Approx(std::numbers::pi / 3.0));
  const cplx u = std::polar(1.0, 1.234);
  CHECK(std::abs(elementwise_power(u, 3.7) - u) < 1e-14);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(0.01, 5.0);
  for (int i = 0; i < 100; ++i) {
    const double x = uni(rng), p = uni(rng) - 2.5;
    const Mat xm = Mat::Constant(1, 1, x);
    CHECK(elementwise_power(xm, p)(0, 0) == doctest::Approx(std::pow(x, p)).epsilon(1e-14));
  }
}

TEST_CASE("mu step") {
  Mat num(2, 2), den(2, 2), f(2, 2);
  num << 1.0, 2.0, 3.0, 4.0;
  den = num;
  f << 0.5, 1.5, 0.0, 2.0;
  const Mat out = mu_step(num, den, f);
  CHECK((out - f).abs().maxCoeff() == doctest::Approx(0.0));
  CHECK(out(1, 0) == 0.0);

  Mat n1(1, 1), d1(1, 1), b1(1, 1);
  n1 << 3.0;
  d1 << 6.0;
  b1 << 2.0;
  CHECK(mu_step(n1, d1, b1)(0, 0) == doctest::Approx(1.0));
  Mat bad(1, 2);
  CHECK_THROWS(mu_step(n1, d1, bad));
}

TEST_CASE("mu step preserves nonnegativity under composition") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(0.0, 3.0);
  Mat f = Mat::NullaryExpr(4, 4, [&]() { return uni(rng); });
  for (int it = 0; it < 20; ++it) {
    const Mat num = Mat::NullaryExpr(4, 4, [&]() { return uni(rng); });
    const Mat den = Mat::NullaryExpr(4, 4, [&]() { return uni(rng); });
    f = mu_step(num, den, f);
    CHECK(f.minCoeff() >= 0.0);
  }
}
