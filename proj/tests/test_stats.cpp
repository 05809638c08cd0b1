#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "icelab/error.hpp"
#include "icelab/stats.hpp"
#include "oracles.hpp"

using namespace icelab;

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("basic estimators") {
  const std::vector<double> xs{1, 2, 3, 4, 5, 6, 7, 8};
  const auto m = mean_estimate(xs);
  CHECK(m.value == doctest::Approx(4.5));
  CHECK(m.std_error == doctest::Approx(std::sqrt(6.0 / 8.0)));
  CHECK(m.n == 8);
  CHECK(variance_estimate(xs).value == doctest::Approx(6.0));
  CHECK(second_moment_estimate(xs).value == doctest::Approx(204.0 / 8.0));
  const std::vector<double> ys{2, 4, 6, 8, 10, 12, 14, 16};
  CHECK(covariance_estimate(xs, ys).value == doctest::Approx(12.0));
  CHECK(correlation(xs, ys) == doctest::Approx(1.0));
  CHECK(std::isnan(correlation(xs, std::vector<double>(8, 1.0))));
  CHECK_THROWS_AS(mean_estimate(std::vector<double>{}), InvalidArgument);
  CHECK(normal_cdf(0) == doctest::Approx(0.5));
  CHECK(normal_cdf(-1) == doctest::Approx(phi(-1)));
}

TEST_CASE("step distributions") {
  const auto s = StepDistribution::symmetric(2);
  CHECK(s.support() == std::vector<int>{-2, 2});
  CHECK(s.max_abs() == 2);
  CHECK_THROWS_AS(StepDistribution({1, 2}, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(StepDistribution({-1, 1}, {1, 0}), InvalidArgument);
  CHECK_THROWS_AS(StepDistribution({-1, -1}, {1, 1}), InvalidArgument);
  CHECK_THROWS_AS(StepDistribution({}, {}), InvalidArgument);
  const StepDistribution skew({-2, 1}, {1, 2});
  Rational total = 0;
  for (const auto& p : skew.probabilities()) total += p;
  CHECK(total == 1);
}

TEST_CASE("ballot values for fair unit steps") {
  const auto s = StepDistribution::symmetric(1);
  CHECK(ballot_dp(s, 1).rational == 1);
  CHECK(ballot_dp(s, 2).rational == Rational(1, 2));
  CHECK(ballot_dp(s, 3).rational == Rational(1, 4));
  CHECK(ballot_dp(s, 5).rational == Rational(3, 16));
  CHECK(ballot_dp(s, 5).exact);
  CHECK_THROWS_AS(ballot_dp(s, 0), InvalidArgument);
}

TEST_CASE("ballot dynamic program equals path enumeration") {
  const std::vector<std::pair<std::vector<int>, std::vector<std::int64_t>>> steps{
      {{-1, 1}, {1, 1}}, {{-2, 2}, {1, 1}}, {{-2, 1}, {1, 2}}, {{-3, -1, 2}, {1, 1, 2}}, {{-1, 0, 1}, {1, 2, 1}}};
  for (const auto& [support, weights] : steps) {
    const StepDistribution s(support, weights);
    for (int n = 1; n <= 12; ++n) {
      const auto p = ballot_dp(s, n);
      REQUIRE(p.exact);
      CHECK(p.rational == oracle::ballot_by_paths(support, weights, n));
    }
  }
}

TEST_CASE("ballot probabilities are nonincreasing and scale like n^-1/2") {
  for (int a : {1, 2}) {
    const auto s = StepDistribution::symmetric(a);
    Rational prev = 2;
    for (int n = 1; n <= 64; ++n) {
      const auto p = ballot_dp(s, n).rational;
      CHECK(p <= prev);
      prev = p;
    }
    const auto t = ballot_bound_check(s, 64);
    CHECK(t.scaled.size() == 64);
    CHECK(t.scaled.front() == doctest::Approx(1.0));
    CHECK(t.min > 0);
    CHECK(t.ratio() <= 4.0);
  }
  CHECK_THROWS_AS(ballot_bound_check(StepDistribution::symmetric(1), 3), InvalidArgument);
}

TEST_CASE("ballot beyond the exact range carries an error bound") {
  const auto s = StepDistribution::symmetric(1);
  const auto p = ballot_dp(s, 300);
  CHECK_FALSE(p.exact);
  CHECK(p.error_bound >= 0);
  CHECK(p.error_bound < 1e-20);
  // p_n = C(n-2, floor((n-2)/2)) / 2^(n-1) for fair unit steps.
  const double lg = std::lgamma(299.0) - 2 * std::lgamma(150.0) - 299 * std::log(2.0);
  CHECK(p.value() == doctest::Approx(std::exp(lg)).epsilon(1e-10));
}

namespace {

// Flat checkerboard heights: 2 on even cells, 1 on odd ones.
HeightField checkerboard(int N) {
  auto d = build_even_domain({0, 0}, N);
  std::vector<Height> h(d->size());
  for (std::size_t i = 0; i < d->size(); ++i) h[i] = is_even(d->cell(i)) ? 2 : 1;
  return HeightField(d, h);
}

}  // namespace

TEST_CASE("crossing detectors on explicit fields") {
  const auto f = checkerboard(6);
  REQUIRE(is_valid(f));
  const auto rect = rectangle_region(3, 4);
  CHECK(crossing_geq(f, rect, 1));
  CHECK_FALSE(crossing_geq(f, rect, 2));
  CHECK_FALSE(crossing_geq(f, rect, 3));
  CHECK(crossing_eq_cross(f, rect, 2));
  CHECK(crossing_eq_cross(f, rect, 1));
  CHECK_FALSE(crossing_eq_cross(f, rect, 0));

  // A pyramid peaking at the center: the level-4 set does not reach the sides.
  auto d = build_even_domain({0, 0}, 6);
  auto hi = extremal_field(d, BoundaryCondition::zero(*d), Extremum::max);
  CHECK_FALSE(crossing_geq(hi, rect, 4));
  CHECK(crossing_geq(hi, rect, 0));
}

TEST_CASE("fkg covariance") {
  const auto fs = testing::lane_fields(8, 4, 200);
  auto d = fs.front().domain_ptr();
  const auto u = d->index_of({-2, 0});
  const auto v = d->index_of({2, 0});
  Functional F = [u](std::span<const Height> h) { return static_cast<double>(h[u]); };
  Functional G = [v](std::span<const Height> h) { return static_cast<double>(h[v]); };
  const auto same = fkg_covariance(fs, F, F, FkgMode::field);
  std::vector<double> xs;
  for (const auto& f : fs) xs.push_back(f[u]);
  CHECK(same.value == doctest::Approx(variance_estimate(xs).value));
  CHECK(same.value >= 0);
  const auto c = fkg_covariance(fs, F, G, FkgMode::field);
  CHECK(c.value >= -3 * c.std_error);
  const auto ca = fkg_covariance(fs, F, G, FkgMode::absfield);
  CHECK(ca.value >= -3 * ca.std_error);
  CHECK_THROWS_AS(fkg_covariance(std::span<const HeightField>{}, F, G, FkgMode::field), InvalidArgument);
}

TEST_CASE("normal distance") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 3.0);
  std::vector<std::int64_t> xs;
  const int n = 20000;
  for (int i = 0; i < n; ++i) xs.push_back(2 * static_cast<std::int64_t>(std::floor((g(rng) + 1) / 2)));
  const auto d = normal_distance(xs, 1);
  double expected = 0;
  for (int m = -40; m <= 40; m += 2) {
    const double q = phi((m + 1) / 3.0) - phi((m - 1) / 3.0);
    expected += 0.5 * std::sqrt(2 * q * (1 - q) / (std::numbers::pi * n));
  }
  CHECK(d.tv <= 2 * expected);
  CHECK(d.sigma == doctest::Approx(3.0).epsilon(0.03));
  CHECK(d.ks_dithered < 0.02);
  CHECK(normal_distance(xs, 1).ks_dithered == d.ks_dithered);

  CHECK_THROWS_AS(normal_distance(std::vector<std::int64_t>(200, 0)), InvalidArgument);
  CHECK_THROWS_AS(normal_distance(std::vector<std::int64_t>(50, 2)), InvalidArgument);
  std::vector<std::int64_t> mixed(200, 2);
  mixed[3] = 1;
  CHECK_THROWS_AS(normal_distance(mixed), InvalidArgument);
}

TEST_CASE("KS of fair point masses at -1 and 1") {
  std::vector<double> pm(1000000);
  for (std::size_t i = 0; i < pm.size(); ++i) pm[i] = i % 2 ? 1.0 : -1.0;
  CHECK(ks_against_normal(pm, 1.0) == doctest::Approx(0.5 - phi(-1)).epsilon(0.01 / 0.3413));
  CHECK(std::abs(ks_against_normal(pm, 1.0) - 0.3413) <= 0.01);

  // With dither the law is uniform on [-2, 2].
  std::vector<std::int64_t> ints(1000000);
  for (std::size_t i = 0; i < ints.size(); ++i) ints[i] = i % 2 ? 1 : -1;
  double sup = 0;
  for (double x = -2; x <= 2; x += 1e-4) sup = std::max(sup, std::abs((x + 2) / 4 - phi(x)));
  CHECK(std::abs(normal_distance(ints, 3).ks_dithered - sup) <= 0.01);
  CHECK_THROWS_AS(ks_against_normal(pm, 0.0), InvalidArgument);
}

TEST_CASE("discrete normal mass") {
  double total = 0;
  for (int m = -60; m <= 60; m += 2) total += discrete_normal_mass(m, 4.0);
  CHECK(total == doctest::Approx(1.0));
  CHECK(discrete_normal_mass(0, 1.0) == doctest::Approx(phi(1) - phi(-1)));
}

TEST_CASE("variance fit") {
  std::vector<std::pair<double, double>> line;
  for (double N : {8.0, 16.0, 32.0, 64.0}) line.emplace_back(N, 2 * std::log(N));
  const auto f = variance_fit(line);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(f.max_rel_residual < 1e-12);
  std::vector<std::pair<double, double>> flat{{8, 1}, {16, 1}, {32, 1}};
  CHECK(variance_fit(flat).slope == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<std::pair<double, double>> few{{8, 1}, {8, 2}, {16, 1}};
  CHECK_THROWS_AS(variance_fit(few), InvalidArgument);
}

TEST_CASE("decoupling matrix") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> step(-2, 2);
  std::vector<std::vector<std::int64_t>> iid;
  for (int s = 0; s < 5000; ++s) iid.push_back({2 * step(rng), 2 * step(rng), 2 * step(rng), 2 * step(rng)});
  const auto m = decoupling_matrix(iid);
  REQUIRE(m.dim == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> sq;
    for (const auto& r : iid) sq.push_back(static_cast<double>(r[k] * r[k]));
    CHECK(m.at(k, k) == doctest::Approx(variance_estimate(sq).value));
    for (std::size_t l = 0; l < 4; ++l) {
      CHECK(m.at(k, l) == m.at(l, k));
      if (k != l) CHECK(std::abs(m.at(k, l)) <= 3 * m.error_at(k, l));
    }
  }
  std::vector<std::vector<std::int64_t>> same;
  for (int s = 0; s < 200; ++s) {
    const std::int64_t x = 2 * step(rng);
    same.push_back({x, x, x});
  }
  const auto p = decoupling_matrix(same);
  CHECK(p.at(0, 1) == doctest::Approx(p.at(0, 0)));
  CHECK(p.at(1, 2) == doctest::Approx(p.at(2, 2)));
  CHECK(p.normalized(0, 2) == doctest::Approx(1.0));
  std::vector<std::vector<std::int64_t>> zero(10, std::vector<std::int64_t>{0, 2});
  zero[0][1] = 4;
  CHECK(std::isnan(decoupling_matrix(zero).normalized(0, 1)));
  CHECK_THROWS_AS(decoupling_matrix({}), InvalidArgument);
  CHECK_THROWS_AS(decoupling_matrix({{1, 2}, {1}}), InvalidArgument);
}

TEST_CASE("hypothesis tests") {
  const std::vector<std::uint64_t> even{100, 100, 100, 100};
  CHECK(chi_square_uniform(even).statistic == doctest::Approx(0.0));
  CHECK(chi_square_uniform(even).p_value == doctest::Approx(1.0));
  CHECK(chi_square_uniform(even).dof == 3);
  const std::vector<std::uint64_t> skew{10, 30};
  // Statistic 10 on one degree of freedom.
  CHECK(chi_square_uniform(skew).statistic == doctest::Approx(10.0));
  CHECK(chi_square_uniform(skew).p_value == doctest::Approx(std::erfc(std::sqrt(5.0))));
  const std::vector<double> probs{0.25, 0.75};
  CHECK(chi_square(skew, probs).statistic == doctest::Approx(0.0));
  CHECK_THROWS_AS(chi_square(skew, std::vector<double>{1.0}), InvalidArgument);

  const std::vector<double> xs{1, 2, 3, 4, 5};
  const std::vector<double> down{5, 4, 3, 2, 1};
  CHECK(spearman_negative(xs, down).statistic == doctest::Approx(-1.0));
  CHECK(spearman_negative(xs, down).p_value < 0.01);
  CHECK(spearman_negative(xs, xs).p_value > 0.99);
  const std::vector<double> ties{1, 1, 2, 2, 3};
  CHECK(spearman_negative(xs, ties).statistic == doctest::Approx(0.9486832980505138));
  CHECK_THROWS_AS(spearman_negative(std::vector<double>{1, 2}, std::vector<double>{2, 1}), InvalidArgument);

  std::vector<double> contrasts(400, -0.1);
  for (std::size_t i = 0; i < contrasts.size(); i += 2) contrasts[i] = 0.3;
  const auto t = paired_trend_negative(contrasts);
  CHECK(t.statistic > 0);
  CHECK(t.p_value > 0.5);
  CHECK(fisher_z_decrease(0.5, 1000, 0.1, 1000).p_value < 1e-6);
  CHECK(fisher_z_decrease(0.1, 1000, 0.5, 1000).p_value > 0.99);
  CHECK_THROWS_AS(fisher_z_decrease(0.1, 3, 0.1, 100), InvalidArgument);
}

TEST_CASE("autocorrelation time of an AR(1) chain") {
  const double rho = 0.8;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> chains(8);
  for (auto& c : chains) {
    double x = g(rng) / std::sqrt(1 - rho * rho);
    for (int t = 0; t < 20000; ++t) {
      c.push_back(x);
      x = rho * x + g(rng);
    }
  }
  // tau = (1 + rho) / (2 (1 - rho)).
  CHECK(integrated_autocorrelation_time(chains) == doctest::Approx(4.5).epsilon(0.1));
  CHECK_THROWS_AS(integrated_autocorrelation_time({}), InvalidArgument);
  CHECK_THROWS_AS(integrated_autocorrelation_time({{1, 2, 3, 4, 5}, {1, 2}}), InvalidArgument);
}
