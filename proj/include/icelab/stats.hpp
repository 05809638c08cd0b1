#pragma once

// Estimators and oracles: ballot probabilities, crossing detectors, FKG
// covariances, distance to the normal law, variance fits, the decoupling
// covariance matrix and the small hypothesis tests used by the gates.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "icelab/heightfield.hpp"
#include "icelab/lattice.hpp"

namespace icelab {

using Rational = boost::multiprecision::cpp_rational;
using BigFloat = boost::multiprecision::cpp_bin_float_100;

struct EstimateWithError {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
};

/// Sample mean with the usual standard error.
EstimateWithError mean_estimate(std::span<const double> xs);
/// Unbiased sample variance; the standard error uses the fourth central moment.
EstimateWithError variance_estimate(std::span<const double> xs);
/// Mean of x^2 with its standard error.
EstimateWithError second_moment_estimate(std::span<const double> xs);
/// Sample covariance with a delete-one jackknife standard error.
EstimateWithError covariance_estimate(std::span<const double> xs, std::span<const double> ys);
/// Pearson correlation (NaN when either side is constant).
double correlation(std::span<const double> xs, std::span<const double> ys);

/// Law of one step of a mean-zero walk with finite integer support.
class StepDistribution {
 public:
  /// Probabilities proportional to the positive integer `weights`. Throws
  /// InvalidArgument on empty or mismatched input, nonpositive weights,
  /// repeated support points, or nonzero mean.
  StepDistribution(std::vector<int> support, std::vector<std::int64_t> weights);

  /// Fair +/- a steps.
  static StepDistribution symmetric(int a);

  const std::vector<int>& support() const { return support_; }
  const std::vector<Rational>& probabilities() const { return probs_; }
  int max_abs() const;

 private:
  std::vector<int> support_;
  std::vector<Rational> probs_;
};

/// P[S_i > 0 for all 0 < i < n] for the walk started at 0.
struct BallotProbability {
  bool exact = false;
  Rational rational;      // valid when exact
  BigFloat approx;        // always set
  double error_bound = 0; // absolute bound on |approx - truth| when not exact
  double value() const { return approx.convert_to<double>(); }
};

/// Dynamic program over the positive states. Exact rationals for n <= 256,
/// 100-digit binary floating point beyond.
BallotProbability ballot_dp(const StepDistribution& step, int n);

struct BallotTable {
  std::vector<double> scaled;  // scaled[n - 1] = p_n * sqrt(n), n = 1..n_max
  double min = 0;
  double max = 0;
  double ratio() const { return max / min; }
};
BallotTable ballot_bound_check(const StepDistribution& step, int n_max);

/// Left-right crossing of `rect` by a nearest-neighbor path inside it with
/// h >= k at every vertex. `rect` must lie in the field's domain.
bool crossing_geq(const HeightField& field, const Region& rect, Height k);
/// Left-right crossing of `rect` by a x-path inside it with h == k everywhere.
bool crossing_eq_cross(const HeightField& field, const Region& rect, Height k);

enum class FkgMode { field, absfield };
/// A functional of the heights (in domain cell order).
using Functional = std::function<double(std::span<const Height>)>;

/// Covariance of F and G over `samples`, applied to h or |h|.
EstimateWithError fkg_covariance(std::span<const HeightField> samples, const Functional& f,
                                 const Functional& g, FkgMode mode);

struct NormalDistance {
  double tv = 0;
  double ks_dithered = 0;
  double sigma = 0;  // sqrt of the mean of x^2
};

/// `samples` all share one parity. tv compares the empirical law on that
/// parity class of Z with the centered normal of variance mean(x^2) integrated
/// over the cells [m - 1, m + 1). ks_dithered is the KS statistic of
/// x + U(-1, 1) (dither drawn from `dither_seed`) against the same normal.
NormalDistance normal_distance(std::span<const std::int64_t> samples, std::uint64_t dither_seed = 0);
/// KS statistic of `xs` against N(0, sigma^2).
double ks_against_normal(std::vector<double> xs, double sigma);
/// Mass the centered discretized normal puts on the cell around `m`.
double discrete_normal_mass(std::int64_t m, double sigma);

struct VarianceFit {
  double slope = 0;
  double intercept = 0;
  double max_rel_residual = 0;
};
/// Least squares of variance against ln N.
VarianceFit variance_fit(std::span<const std::pair<double, double>> points);

struct CovarianceMatrix {
  std::size_t dim = 0;
  std::vector<double> cov;        // row-major dim x dim
  std::vector<double> std_error;  // row-major dim x dim
  double at(std::size_t k, std::size_t l) const { return cov[k * dim + l]; }
  double error_at(std::size_t k, std::size_t l) const { return std_error[k * dim + l]; }
  /// |cov(k, l)| / sqrt(cov(k, k) cov(l, l)); NaN when a diagonal is zero.
  double normalized(std::size_t k, std::size_t l) const;
};
/// cov(x_k^2, x_l^2) across rows, where rows[s][k] is the k-th truncated
/// difference of sample s.
CovarianceMatrix decoupling_matrix(const std::vector<std::vector<std::int64_t>>& rows);

struct TestResult {
  double statistic = 0;
  double p_value = 1;
  double dof = 0;
};

/// Pearson chi-square of `counts` against equal cell probabilities.
TestResult chi_square_uniform(std::span<const std::uint64_t> counts);
/// Pearson chi-square against the given cell probabilities.
TestResult chi_square(std::span<const std::uint64_t> counts, std::span<const double> probs);
/// Spearman rank correlation (average ranks for ties); `p_value` is the
/// one-sided p for a negative trend from the t approximation.
TestResult spearman_negative(std::span<const double> xs, std::span<const double> ys);
/// One-sided z test that the mean of paired contrasts is negative.
TestResult paired_trend_negative(std::span<const double> contrasts);
/// One-sided Fisher z test that |r_large| < |r_small| for independent samples.
TestResult fisher_z_decrease(double r_small, std::size_t n_small, double r_large, std::size_t n_large);

/// Integrated autocorrelation time tau = 1/2 + sum_t rho(t) with Sokal's
/// self-consistent window (smallest M with M >= window * tau(M)). Each row is
/// one chain; autocorrelations are pooled over chains with per-chain means.
double integrated_autocorrelation_time(const std::vector<std::vector<double>>& chains,
                                       double window = 5.0);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace icelab
