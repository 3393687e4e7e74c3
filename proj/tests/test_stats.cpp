#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "tmeval/error.hpp"
#include "tmeval/stats.hpp"

using namespace tmeval;

TEST_CASE("mean and sample standard deviation") {
  const std::vector<double> x = {2, 4, 4, 4, 5, 5, 7, 9};
  CHECK(mean(x) == 5.0);
  CHECK(sample_std(x) == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-15));
  CHECK(sample_std(std::vector<double>{3.0}) == 0.0);
}

TEST_CASE("identical samples give t 0 and p 1") {
  const std::vector<double> a = {0.2, 0.4, 0.3};
  const auto r = welch_t_test(a, a);
  CHECK(r.t == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(r.a_is_smaller);
}

TEST_CASE("constant samples") {
  const std::vector<double> zeros = {0, 0, 0}, ones = {1, 1, 1};
  const auto r = welch_t_test(zeros, ones);
  CHECK(r.a_is_smaller);
  CHECK(r.p_value < 0.001);
  CHECK(std::isinf(r.t));
  CHECK(r.t < 0);
  const auto same = welch_t_test(ones, ones);
  CHECK(same.t == 0.0);
  CHECK(same.p_value == 1.0);
}

namespace {

std::vector<double> series(double base, double amp, double freq, bool cosine) {
  std::vector<double> out;
  for (int i = 0; i < 45; ++i) out.push_back(base + amp * (cosine ? std::cos(freq * i) : std::sin(freq * i)));
  return out;
}

}  // namespace

// Reference values from scipy.stats.ttest_ind(a, b, equal_var=False).
TEST_CASE("Welch test on two 45-point samples") {
  const auto a = series(0.30, 0.01, 1.0, false), b = series(0.35, 0.02, 1.7, true);
  const auto r = welch_t_test(a, b);
  CHECK(r.t == doctest::Approx(-21.011725552770166).epsilon(1e-12));
  CHECK(r.p_value == doctest::Approx(2.0063251797760388e-30).epsilon(1e-6));
  CHECK(r.a_is_smaller);

  const auto c = series(0.5, 0.1, 0.3, false), d = series(0.51, 0.12, 0.9, true);
  const auto s = welch_t_test(c, d);
  CHECK(s.t == doctest::Approx(-0.694349977321871).epsilon(1e-12));
  CHECK(s.p_value == doctest::Approx(0.489366674043762).epsilon(1e-10));
  CHECK(s.df == doctest::Approx(84.53328803802825).epsilon(1e-12));
}

TEST_CASE("Welch test is antisymmetric in its arguments") {
  const auto a = series(0.5, 0.1, 0.3, false), b = series(0.51, 0.12, 0.9, true);
  const auto ab = welch_t_test(a, b), ba = welch_t_test(b, a);
  CHECK(ab.t == -ba.t);
  CHECK(ab.p_value == ba.p_value);
  CHECK(ab.a_is_smaller != ba.a_is_smaller);
}

TEST_CASE("Welch test needs two values per sample") {
  const std::vector<double> one = {1.0}, two = {1.0, 2.0};
  CHECK_THROWS_AS(welch_t_test(one, two), Error);
  CHECK_THROWS_AS(welch_t_test(two, one), Error);
}
