#pragma once

// Martingale differences of the target height across dyadic scales: Delta_k
// is the height increment between consecutive level circuits, the residual
// closes the telescope at the innermost scale, and the truncated differences
// keep Delta_k only when the log-log window below scale k holds a loop.

#include <cstdint>
#include <span>
#include <vector>

#include "icelab/heightfield.hpp"
#include "icelab/loops.hpp"
#include "icelab/stats.hpp"

namespace icelab {

struct MartingaleProfile {
  Vertex target;
  int N = 0;
  Height target_height = 0;
  std::vector<Height> circuit_heights;  // C_0..C_K
  std::vector<Height> deltas;           // Delta_1..Delta_K
  Height residual = 0;
  std::vector<Height> truncated;        // filled by truncate()
  std::vector<std::uint8_t> flags;      // filled by truncate()

  int K() const { return static_cast<int>(deltas.size()); }
};

/// Differences from an already extracted family. The scales are boxes around
/// the family's target; `N` fixes r_k = max(1, floor(N / 2^k)).
MartingaleProfile profile(const HeightField& field, const LoopFamily& family, int N);
/// Extracts the family around `target` and computes the truncated profile.
MartingaleProfile profile(const HeightField& field, Vertex target, int N);

/// Fills flags[k] = (some family loop lies in A_{r_{k+w}, r_k} around the
/// target) with w = loglog_window(N), and truncated[k] = deltas[k] * flags[k].
MartingaleProfile truncate(MartingaleProfile p, const LoopFamily& family, int N);

struct SigmaEstimate {
  double sigma = 0;
  double std_error = 0;
  std::vector<EstimateWithError> per_scale;  // E[Delta_k^2], k = 1..K
};
/// sigma = sqrt(sum_k mean(Delta_k^2)); the standard error comes from the
/// per-sample sums so cross-scale correlation is accounted for.
SigmaEstimate sigma_hat(std::span<const MartingaleProfile> profiles);

struct MultipointProfile {
  std::vector<Vertex> targets;
  std::vector<MartingaleProfile> profiles;
  int m0 = 0;
};

/// Smallest m in 1..K for which the boxes B_m(x_i) are pairwise disjoint.
/// Throws InvalidArgument when no scale separates the targets.
int separation_scale(std::span<const Vertex> targets, int N);

/// One profile per target plus the separation scale.
MultipointProfile multipoint_profiles(const HeightField& field, std::span<const Vertex> targets, int N);

}  // namespace icelab
