#include "icelab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "icelab/error.hpp"
#include "icelab/rng.hpp"

namespace icelab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

void require_nonempty(std::size_t n, std::size_t min, const char* what) {
  if (n < min) {
    throw InvalidArgument(std::string(what) + ": need at least " + std::to_string(min) + " samples");
  }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

EstimateWithError mean_estimate(std::span<const double> xs) {
  require_nonempty(xs.size(), 1, "mean_estimate");
  const double m = mean_of(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  const auto n = static_cast<double>(xs.size());
  const double se = xs.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  return {m, se, xs.size()};
}

EstimateWithError variance_estimate(std::span<const double> xs) {
  require_nonempty(xs.size(), 2, "variance_estimate");
  const double m = mean_of(xs);
  double m2 = 0, m4 = 0;
  for (double x : xs) {
    const double d = (x - m) * (x - m);
    m2 += d;
    m4 += d * d;
  }
  const auto n = static_cast<double>(xs.size());
  const double s2 = m2 / (n - 1);
  m4 /= n;
  const double var_of_s2 = std::max(0.0, (m4 - (n - 3) / (n - 1) * s2 * s2) / n);
  return {s2, std::sqrt(var_of_s2), xs.size()};
}

EstimateWithError second_moment_estimate(std::span<const double> xs) {
  std::vector<double> sq(xs.size());
  std::transform(xs.begin(), xs.end(), sq.begin(), [](double x) { return x * x; });
  return mean_estimate(sq);
}

EstimateWithError covariance_estimate(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("covariance_estimate: length mismatch");
  require_nonempty(xs.size(), 2, "covariance_estimate");
  const std::size_t n = xs.size();
  const double mx = mean_of(xs), my = mean_of(ys);
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = xs[i] - mx, b = ys[i] - my;
    sx += a;
    sy += b;
    sxy += a * b;
  }
  const auto nd = static_cast<double>(n);
  const double cov = (sxy - sx * sy / nd) / (nd - 1);
  if (n < 3) return {cov, std::numeric_limits<double>::infinity(), n};
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = xs[i] - mx, b = ys[i] - my;
    loo[i] = (sxy - a * b - (sx - a) * (sy - b) / (nd - 1)) / (nd - 2);
  }
  const double mean_loo = std::accumulate(loo.begin(), loo.end(), 0.0) / nd;
  double ss = 0;
  for (double v : loo) ss += (v - mean_loo) * (v - mean_loo);
  return {cov, std::sqrt((nd - 1) / nd * ss), n};
}

double correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("correlation: length mismatch");
  require_nonempty(xs.size(), 2, "correlation");
  const double mx = mean_of(xs), my = mean_of(ys);
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double a = xs[i] - mx, b = ys[i] - my;
    sxx += a * a;
    syy += b * b;
    sxy += a * b;
  }
  if (sxx == 0 || syy == 0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Ballot

StepDistribution::StepDistribution(std::vector<int> support, std::vector<std::int64_t> weights)
    : support_(std::move(support)) {
  if (support_.empty() || support_.size() != weights.size()) {
    throw InvalidArgument("StepDistribution: support and weights must be nonempty and aligned");
  }
  auto sorted = support_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("StepDistribution: repeated support point");
  }
  std::int64_t total = 0;
  Rational mean = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0) throw InvalidArgument("StepDistribution: weights must be positive");
    if (support_[i] > (1 << 20) || support_[i] < -(1 << 20)) {
      throw InvalidArgument("StepDistribution: support must be bounded by 2^20");
    }
    total += weights[i];
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    probs_.emplace_back(Rational(weights[i], total));
    mean += probs_.back() * support_[i];
  }
  if (mean != 0) throw InvalidArgument("StepDistribution: mean must be zero");
}

StepDistribution StepDistribution::symmetric(int a) {
  if (a <= 0) throw InvalidArgument("StepDistribution::symmetric: need a > 0");
  return StepDistribution({-a, a}, {1, 1});
}

int StepDistribution::max_abs() const {
  int m = 0;
  for (int s : support_) m = std::max(m, s < 0 ? -s : s);
  return m;
}

namespace {

template <class T>
T ballot_mass(const StepDistribution& step, int n) {
  if (n <= 1) return T(1);
  const int a = step.max_abs();
  const std::size_t width = static_cast<std::size_t>(n) * static_cast<std::size_t>(a) + 1;
  std::vector<T> probs;
  for (const auto& p : step.probabilities()) probs.emplace_back(T(p));
  // dist[s] = P[S_i = s and S_1..S_i > 0]; index 0 only holds the start.
  std::vector<T> dist(width, T(0)), next(width, T(0));
  dist[0] = T(1);
  for (int i = 1; i < n; ++i) {
    std::fill(next.begin(), next.end(), T(0));
    for (std::size_t s = 0; s < width; ++s) {
      if (dist[s] == 0) continue;
      for (std::size_t j = 0; j < probs.size(); ++j) {
        const auto t = static_cast<std::int64_t>(s) + step.support()[j];
        if (t <= 0) continue;
        next[static_cast<std::size_t>(t)] += dist[s] * probs[j];
      }
    }
    std::swap(dist, next);
  }
  T total(0);
  for (const auto& v : dist) total += v;
  return total;
}

}  // namespace

BallotProbability ballot_dp(const StepDistribution& step, int n) {
  if (n < 1) throw InvalidArgument("ballot_dp: need n >= 1");
  BallotProbability out;
  if (n <= 256) {
    out.exact = true;
    out.rational = ballot_mass<Rational>(step, n);
    out.approx = BigFloat(out.rational);
    return out;
  }
  out.approx = ballot_mass<BigFloat>(step, n);
  const double eps = std::ldexp(1.0, -300);
  out.error_bound = eps * static_cast<double>(n) * static_cast<double>(n) *
                    static_cast<double>(step.max_abs()) * static_cast<double>(step.support().size());
  return out;
}

BallotTable ballot_bound_check(const StepDistribution& step, int n_max) {
  if (n_max < 4) throw InvalidArgument("ballot_bound_check: need n_max >= 4");
  BallotTable t;
  for (int n = 1; n <= n_max; ++n) {
    t.scaled.push_back(ballot_dp(step, n).value() * std::sqrt(static_cast<double>(n)));
  }
  t.min = *std::min_element(t.scaled.begin(), t.scaled.end());
  t.max = *std::max_element(t.scaled.begin(), t.scaled.end());
  return t;
}

// ---------------------------------------------------------------------------
// Crossings

namespace {

template <class Steps, class Pred>
bool left_right_crossing(const HeightField& field, const Region& rect, const Steps& steps, Pred ok) {
  const auto& d = field.domain();
  if (rect.empty()) return false;
  for (Vertex v : rect.vertices()) {
    if (!d.contains(v)) throw InvalidArgument("crossing: rectangle leaves the domain");
  }
  const int left = rect.lower().x;
  const int right = rect.upper().x;
  std::vector<std::uint8_t> seen(d.size(), 0);
  std::deque<Vertex> queue;
  for (Vertex v : rect.vertices()) {
    if (v.x != left) continue;
    const auto i = d.index_of(v);
    if (!ok(field[i])) continue;
    seen[i] = 1;
    queue.push_back(v);
  }
  while (!queue.empty()) {
    const Vertex v = queue.front();
    queue.pop_front();
    if (v.x == right) return true;
    for (Vertex s : steps) {
      const Vertex w = v + s;
      if (!rect.contains(w)) continue;
      const auto j = d.index_of(w);
      if (seen[j] || !ok(field[j])) continue;
      seen[j] = 1;
      queue.push_back(w);
    }
  }
  return false;
}

constexpr std::array<Vertex, 8> kCrossSteps{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

}  // namespace

bool crossing_geq(const HeightField& field, const Region& rect, Height k) {
  return left_right_crossing(field, rect, kNearestSteps, [k](Height h) { return h >= k; });
}

bool crossing_eq_cross(const HeightField& field, const Region& rect, Height k) {
  return left_right_crossing(field, rect, kCrossSteps, [k](Height h) { return h == k; });
}

EstimateWithError fkg_covariance(std::span<const HeightField> samples, const Functional& f,
                                 const Functional& g, FkgMode mode) {
  require_nonempty(samples.size(), 2, "fkg_covariance");
  std::vector<double> fs, gs;
  std::vector<Height> buf;
  for (const auto& s : samples) {
    auto v = s.values();
    buf.assign(v.begin(), v.end());
    if (mode == FkgMode::absfield) {
      for (auto& h : buf) h = h < 0 ? -h : h;
    }
    fs.push_back(f(buf));
    gs.push_back(g(buf));
  }
  return covariance_estimate(fs, gs);
}

// ---------------------------------------------------------------------------
// Normal approximation

double discrete_normal_mass(std::int64_t m, double sigma) {
  const auto x = static_cast<double>(m);
  return normal_cdf((x + 1) / sigma) - normal_cdf((x - 1) / sigma);
}

double ks_against_normal(std::vector<double> xs, double sigma) {
  require_nonempty(xs.size(), 1, "ks_against_normal");
  if (!(sigma > 0)) throw InvalidArgument("ks_against_normal: sigma must be positive");
  std::sort(xs.begin(), xs.end());
  const auto n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i] / sigma);
    d = std::max(d, static_cast<double>(i + 1) / n - f);
    d = std::max(d, f - static_cast<double>(i) / n);
  }
  return d;
}

NormalDistance normal_distance(std::span<const std::int64_t> samples, std::uint64_t dither_seed) {
  require_nonempty(samples.size(), 100, "normal_distance");
  const int par = static_cast<int>(samples.front() & 1);
  double m2 = 0;
  std::map<std::int64_t, std::uint64_t> counts;
  std::int64_t extreme = 0;
  for (auto x : samples) {
    if (static_cast<int>(x & 1) != par) throw InvalidArgument("normal_distance: samples mix parities");
    m2 += static_cast<double>(x) * static_cast<double>(x);
    ++counts[x];
    extreme = std::max(extreme, x < 0 ? -x : x);
  }
  const auto n = static_cast<double>(samples.size());
  m2 /= n;
  if (m2 == 0) throw InvalidArgument("normal_distance: zero variance");
  NormalDistance out;
  out.sigma = std::sqrt(m2);

  const auto reach = extreme + 2 + static_cast<std::int64_t>(std::ceil(12 * out.sigma));
  const std::int64_t start = -reach - (((-reach) & 1) != par ? 1 : 0);
  double gap = 0, covered = 0;
  for (std::int64_t m = start; m <= reach; m += 2) {
    const double q = discrete_normal_mass(m, out.sigma);
    covered += q;
    const auto it = counts.find(m);
    const double p = it == counts.end() ? 0.0 : static_cast<double>(it->second) / n;
    gap += std::abs(p - q);
  }
  out.tv = 0.5 * (gap + std::max(0.0, 1.0 - covered));

  Xoshiro256pp rng(dither_seed);
  std::vector<double> dithered(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    dithered[i] = static_cast<double>(samples[i]) + (2.0 * rng.uniform() - 1.0);
  }
  out.ks_dithered = ks_against_normal(std::move(dithered), out.sigma);
  return out;
}

VarianceFit variance_fit(std::span<const std::pair<double, double>> points) {
  std::vector<double> ns;
  for (const auto& p : points) {
    if (!(p.first > 0)) throw InvalidArgument("variance_fit: N must be positive");
    ns.push_back(p.first);
  }
  std::sort(ns.begin(), ns.end());
  if (std::unique(ns.begin(), ns.end()) - ns.begin() < 3) {
    throw InvalidArgument("variance_fit: need at least 3 distinct N");
  }
  const auto k = static_cast<double>(points.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [nv, var] : points) {
    const double x = std::log(nv);
    sx += x;
    sy += var;
    sxx += x * x;
    sxy += x * var;
  }
  const double denom = k * sxx - sx * sx;
  VarianceFit fit;
  fit.slope = (k * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / k;
  for (const auto& [nv, var] : points) {
    const double pred = fit.intercept + fit.slope * std::log(nv);
    const double rel = pred != 0 ? std::abs(var - pred) / std::abs(pred) : std::abs(var - pred);
    fit.max_rel_residual = std::max(fit.max_rel_residual, rel);
  }
  return fit;
}

double CovarianceMatrix::normalized(std::size_t k, std::size_t l) const {
  const double dk = at(k, k), dl = at(l, l);
  if (!(dk > 0) || !(dl > 0)) return kNaN;
  return std::abs(at(k, l)) / std::sqrt(dk * dl);
}

CovarianceMatrix decoupling_matrix(const std::vector<std::vector<std::int64_t>>& rows) {
  require_nonempty(rows.size(), 2, "decoupling_matrix");
  const std::size_t dim = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != dim) throw InvalidArgument("decoupling_matrix: rows differ in length");
  }
  std::vector<std::vector<double>> cols(dim, std::vector<double>(rows.size()));
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t k = 0; k < dim; ++k) {
      const auto x = static_cast<double>(rows[s][k]);
      cols[k][s] = x * x;
    }
  }
  CovarianceMatrix m;
  m.dim = dim;
  m.cov.assign(dim * dim, 0);
  m.std_error.assign(dim * dim, 0);
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t l = k; l < dim; ++l) {
      const auto e = covariance_estimate(cols[k], cols[l]);
      m.cov[k * dim + l] = m.cov[l * dim + k] = e.value;
      m.std_error[k * dim + l] = m.std_error[l * dim + k] = e.std_error;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Tests

TestResult chi_square(std::span<const std::uint64_t> counts, std::span<const double> probs) {
  if (counts.size() != probs.size() || counts.size() < 2) {
    throw InvalidArgument("chi_square: need at least two aligned cells");
  }
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (n == 0) throw InvalidArgument("chi_square: no observations");
  TestResult r;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = n * probs[i];
    if (!(e > 0)) throw InvalidArgument("chi_square: cell with zero expectation");
    const double d = static_cast<double>(counts[i]) - e;
    r.statistic += d * d / e;
  }
  r.dof = static_cast<double>(counts.size() - 1);
  boost::math::chi_squared dist(r.dof);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.statistic));
  return r;
}

TestResult chi_square_uniform(std::span<const std::uint64_t> counts) {
  std::vector<double> probs(counts.size(), 1.0 / static_cast<double>(counts.size()));
  return chi_square(counts, probs);
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

TestResult spearman_negative(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) {
    throw InvalidArgument("spearman_negative: need at least 3 aligned pairs");
  }
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  TestResult r;
  r.statistic = correlation(rx, ry);
  r.dof = static_cast<double>(xs.size() - 2);
  if (std::isnan(r.statistic)) {
    r.p_value = 1;
    return r;
  }
  if (r.statistic <= -1) {
    r.p_value = 0;
    return r;
  }
  if (r.statistic >= 1) {
    r.p_value = 1;
    return r;
  }
  const double t = r.statistic * std::sqrt(r.dof / (1 - r.statistic * r.statistic));
  r.p_value = boost::math::cdf(boost::math::students_t(r.dof), t);
  return r;
}

TestResult paired_trend_negative(std::span<const double> contrasts) {
  const auto e = mean_estimate(contrasts);
  TestResult r;
  r.dof = static_cast<double>(contrasts.size());
  if (e.std_error == 0) {
    r.statistic = e.value < 0 ? -std::numeric_limits<double>::infinity() : 0.0;
    r.p_value = e.value < 0 ? 0.0 : 1.0;
    return r;
  }
  r.statistic = e.value / e.std_error;
  r.p_value = normal_cdf(r.statistic);
  return r;
}

TestResult fisher_z_decrease(double r_small, std::size_t n_small, double r_large, std::size_t n_large) {
  if (n_small < 4 || n_large < 4) throw InvalidArgument("fisher_z_decrease: need n >= 4");
  const double zs = std::atanh(std::min(std::abs(r_small), 0.999999));
  const double zl = std::atanh(std::min(std::abs(r_large), 0.999999));
  TestResult r;
  r.statistic = (zl - zs) / std::sqrt(1.0 / static_cast<double>(n_small - 3) +
                                      1.0 / static_cast<double>(n_large - 3));
  r.p_value = normal_cdf(r.statistic);
  return r;
}

double integrated_autocorrelation_time(const std::vector<std::vector<double>>& chains, double window) {
  if (chains.empty()) throw InvalidArgument("integrated_autocorrelation_time: no chains");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw InvalidArgument("integrated_autocorrelation_time: ragged chains");
  }
  if (n < 4) throw InvalidArgument("integrated_autocorrelation_time: series too short");
  std::vector<std::vector<double>> centered(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const double m = mean_of(chains[c]);
    centered[c].resize(n);
    for (std::size_t s = 0; s < n; ++s) centered[c][s] = chains[c][s] - m;
  }
  auto autocov = [&](std::size_t t) {
    double acc = 0;
    for (const auto& c : centered) {
      for (std::size_t s = 0; s + t < n; ++s) acc += c[s] * c[s + t];
    }
    return acc / static_cast<double>(chains.size() * (n - t));
  };
  const double c0 = autocov(0);
  if (c0 <= 0) return 0.5;
  double tau = 0.5;
  for (std::size_t t = 1; t < n / 2; ++t) {
    tau += autocov(t) / c0;
    if (static_cast<double>(t) >= window * tau) break;
  }
  return std::max(tau, 0.5);
}

}  // namespace icelab
