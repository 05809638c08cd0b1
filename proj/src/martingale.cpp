#include "icelab/martingale.hpp"

#include <cmath>
#include <string>

#include "icelab/error.hpp"

namespace icelab {

MartingaleProfile profile(const HeightField& field, const LoopFamily& family, int N) {
  if (N < 2) throw InvalidArgument("profile: need N >= 2");
  if (family.loops.empty()) throw InvalidArgument("profile: empty family");
  const auto sc = circuits_at_scales(family, N);
  MartingaleProfile p;
  p.target = family.target;
  p.N = N;
  p.target_height = field.at(family.target);
  p.circuit_heights = sc.heights;
  for (int k = 1; k <= sc.K(); ++k) {
    p.deltas.push_back(sc.heights[static_cast<std::size_t>(k)] - sc.heights[static_cast<std::size_t>(k - 1)]);
  }
  p.residual = p.target_height - sc.heights.back();
  return truncate(std::move(p), family, N);
}

MartingaleProfile profile(const HeightField& field, Vertex target, int N) {
  if (field.domain().radius() != N || field.domain().center() != Vertex{0, 0}) {
    throw InvalidArgument("profile: field must live on D_N");
  }
  return profile(field, extract_loop_family(field, target), N);
}

MartingaleProfile truncate(MartingaleProfile p, const LoopFamily& family, int N) {
  if (p.N != N || p.target != family.target || p.K() != scale_count(N)) {
    throw InvalidArgument("truncate: profile and family do not match");
  }
  const int w = loglog_window(N);
  p.flags.assign(static_cast<std::size_t>(p.K()), 0);
  p.truncated.assign(static_cast<std::size_t>(p.K()), 0);
  for (int k = 1; k <= p.K(); ++k) {
    const auto c = count_in_annulus(family, family.target, scale_radius(N, k + w), scale_radius(N, k));
    const auto i = static_cast<std::size_t>(k - 1);
    p.flags[i] = c.contained >= 1 ? 1 : 0;
    p.truncated[i] = p.flags[i] ? p.deltas[i] : 0;
  }
  return p;
}

SigmaEstimate sigma_hat(std::span<const MartingaleProfile> profiles) {
  if (profiles.size() < 2) throw InvalidArgument("sigma_hat: need at least two profiles");
  const int K = profiles.front().K();
  std::vector<std::vector<double>> squares(static_cast<std::size_t>(K));
  std::vector<double> totals;
  for (const auto& p : profiles) {
    if (p.K() != K || p.N != profiles.front().N) throw InvalidArgument("sigma_hat: profiles differ in N");
    double total = 0;
    for (int k = 0; k < K; ++k) {
      const double d = p.deltas[static_cast<std::size_t>(k)];
      squares[static_cast<std::size_t>(k)].push_back(d * d);
      total += d * d;
    }
    totals.push_back(total);
  }
  SigmaEstimate s;
  double sum = 0;
  for (const auto& col : squares) {
    s.per_scale.push_back(mean_estimate(col));
    sum += s.per_scale.back().value;
  }
  s.sigma = std::sqrt(sum);
  const auto t = mean_estimate(totals);
  s.std_error = s.sigma > 0 ? t.std_error / (2 * s.sigma) : 0.0;
  return s;
}

namespace {

bool boxes_overlap(Vertex a, Vertex b, int r) {
  if (chebyshev(a, b) > 2 * r + 2) return false;
  for (int y = a.y - r - 1; y <= a.y + r + 1; ++y) {
    for (int x = a.x - r - 1; x <= a.x + r + 1; ++x) {
      if (in_even_domain(a, r, {x, y}) && in_even_domain(b, r, {x, y})) return true;
    }
  }
  return false;
}

}  // namespace

int separation_scale(std::span<const Vertex> targets, int N) {
  if (targets.empty()) throw InvalidArgument("separation_scale: no targets");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    for (std::size_t j = i + 1; j < targets.size(); ++j) {
      if (targets[i] == targets[j]) throw InvalidArgument("separation_scale: coincident targets");
    }
  }
  const int K = scale_count(N);
  for (int m = 1; m <= K; ++m) {
    const int r = scale_radius(N, m);
    bool disjoint = true;
    for (std::size_t i = 0; i < targets.size() && disjoint; ++i) {
      for (std::size_t j = i + 1; j < targets.size() && disjoint; ++j) {
        disjoint = !boxes_overlap(targets[i], targets[j], r);
      }
    }
    if (disjoint) return m;
  }
  throw InvalidArgument("separation_scale: no scale separates the targets");
}

MultipointProfile multipoint_profiles(const HeightField& field, std::span<const Vertex> targets, int N) {
  MultipointProfile mp;
  mp.m0 = separation_scale(targets, N);
  for (Vertex x : targets) {
    const auto i = field.domain().find(x);
    if (!i || field.domain().is_boundary(*i)) {
      throw InvalidArgument("multipoint_profiles: target not in the interior");
    }
    mp.targets.push_back(x);
    mp.profiles.push_back(profile(field, x, N));
  }
  return mp;
}

}  // namespace icelab
