#pragma once

// Uniform sampling from Hom(D, B, kappa): single-site heat-bath Glauber
// dynamics, the grand monotone coupling, monotone coupling from the past, a
// 64-chain bit-sliced Glauber engine for large ensembles, and exhaustive
// enumeration for small domains.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <optional>
#include <vector>

#include "icelab/heightfield.hpp"
#include "icelab/rng.hpp"

namespace icelab {

struct RunSpec {
  std::uint64_t seed = 0;
  std::uint64_t chain_id = 0;
  std::int64_t burn_in_sweeps = 0;
  std::int64_t thinning_sweeps = 1;
  std::int64_t n_samples = 1;

  void check() const;
};

/// Resamples h(v) uniformly among the values allowed by its neighbors. When
/// every neighbor equals a the new value is a - 1 + 2u, otherwise it is forced.
/// Monotone: f <= g pointwise stays ordered under the same (v, u).
HeightField heat_bath_update(HeightField field, Vertex v, bool u);

/// In-place version on a dense cell index; the caller guarantees that `i` is a
/// free vertex of a valid field.
inline void heat_bath_update_at(const EvenDomain& d, std::span<Height> h, std::size_t i, bool u) {
  Height lo = std::numeric_limits<Height>::min();
  Height hi = std::numeric_limits<Height>::max();
  for (auto j : d.neighbor_indices(i)) {
    if (j < 0) continue;
    const Height x = h[static_cast<std::size_t>(j)];
    lo = std::max(lo, x - 1);
    hi = std::min(hi, x + 1);
  }
  h[i] = lo == hi ? lo : lo + (u ? 2 : 0);
}

/// One heat-bath chain scanning its free vertices in row-major order.
class GlauberChain {
 public:
  GlauberChain(HeightField start, const BoundaryCondition& bc, std::uint64_t seed);

  void sweep();
  void sweeps(std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k) sweep();
  }
  const HeightField& field() const { return field_; }
  std::int64_t sweep_count() const { return sweep_count_; }
  const std::vector<std::size_t>& free_sites() const { return free_; }

 private:
  HeightField field_;
  std::vector<std::size_t> free_;
  BitStream bits_;
  std::int64_t sweep_count_ = 0;
};

/// Cells not fixed by `bc`, row-major.
std::vector<std::size_t> free_sites(const EvenDomain& domain, const BoundaryCondition& bc);

using FieldSink = std::function<void(const HeightField&)>;

/// Starts from the maximal extension, performs `burn_in_sweeps`, then emits a
/// sample every `thinning_sweeps` sweeps, `n_samples` times. Deterministic in
/// (domain, bc, spec).
void glauber_run(const DomainPtr& domain, const BoundaryCondition& bc, const RunSpec& spec,
                 const FieldSink& sink);
std::vector<HeightField> glauber_run(const DomainPtr& domain, const BoundaryCondition& bc,
                                     const RunSpec& spec);

/// Two chains under the same (v, u) stream, started from the maximal
/// extensions of bc_low <= bc_high; the order low <= high holds at every step.
void coupled_glauber_run(const DomainPtr& domain, const BoundaryCondition& bc_low,
                         const BoundaryCondition& bc_high, const RunSpec& spec,
                         const std::function<void(const HeightField&, const HeightField&)>& sink);

struct CftpOptions {
  std::int64_t max_sweeps = std::int64_t{1} << 22;
};

struct CftpResult {
  HeightField field;
  std::int64_t sweeps = 0;  // T at which the extremal chains coalesced
};

/// Monotone coupling from the past with epoch doubling. The bit used at site
/// i during the sweep t steps before time 0 is a counter hash of (seed, t, i),
/// so earlier epochs are replayed exactly. Throws NotCoalesced past the cap.
CftpResult cftp_sample(const DomainPtr& domain, const BoundaryCondition& bc, std::uint64_t seed,
                       const CftpOptions& options = {});

/// Calls `visit` once per valid extension of `bc`, in a fixed depth-first
/// order; stops early once `cap` is exceeded. Returns the
/// number of extensions visited. Inadmissible conditions visit nothing.
std::uint64_t for_each_extension(const DomainPtr& domain, const BoundaryCondition& bc,
                                 const std::function<void(const HeightField&)>& visit,
                                 std::uint64_t cap = UINT64_MAX);

/// Every valid extension; throws TooLarge when there are more than `cap`.
std::vector<HeightField> enumerate_uniform(const DomainPtr& domain, const BoundaryCondition& bc,
                                           std::uint64_t cap);

/// 64 independent heat-bath chains packed bit-per-chain.
///
/// Since h(v) is congruent to parity(v) mod 2, a valid field is determined by
/// its fixed values and the single bit b(v) = ((h(v) - parity(v)) / 2) mod 2
/// per vertex. Neighbors of v all carry the same height exactly when their
/// bits agree, in which case the heat-bath move draws b(v) fresh; otherwise
/// b(v) is forced and stays put. Lane k of every word is chain k. A sweep
/// updates the even sublattice then the odd one, each in row-major order.
class LaneEnsemble {
 public:
  static constexpr int kLanes = 64;

  /// Requires bc to fix exactly the boundary circuit.
  LaneEnsemble(DomainPtr domain, const BoundaryCondition& bc, std::uint64_t seed);

  void sweep();
  void sweeps(std::int64_t n) {
    for (std::int64_t k = 0; k < n; ++k) sweep();
  }
  std::int64_t sweep_count() const { return sweep_count_; }

  /// Integrates lane `lane` from the boundary into a full height field.
  HeightField lane_field(int lane) const;
  /// Height at cell `i` in every lane, integrating along a fixed path.
  std::array<Height, kLanes> heights_at(std::size_t i) const;

  const DomainPtr& domain() const { return domain_; }

 private:
  std::size_t canvas_index(Vertex v) const;

  DomainPtr domain_;
  int side_ = 0;
  Vertex origin_{};
  std::vector<std::uint64_t> words_;
  std::vector<std::int32_t> sites_;  // canvas offsets: even sublattice, then odd
  std::vector<std::int32_t> canvas_of_cell_;
  std::vector<Height> anchor_value_;  // fixed height per cell (boundary only)
  std::vector<std::int32_t> parent_;  // integration tree toward the boundary
  std::vector<std::int32_t> order_;   // cells with parents before children
  Xoshiro256pp rng_;
  std::int64_t sweep_count_ = 0;
};

/// Burn-in and thinning chosen from a pilot run.
struct Calibration {
  double iat_sweeps = 0.0;  // integrated autocorrelation time of h(center) and h(center)^2
  std::int64_t burn_in_sweeps = 0;
  std::int64_t thinning_sweeps = 0;
  std::int64_t pilot_sweeps = 0;
};

/// Pilot on a LaneEnsemble from the maximal field: measures the integrated
/// autocorrelation time of h(center) and h(center)^2 (Sokal windowing, lanes
/// averaged) on the second half of the pilot, doubling the pilot until it
/// spans at least 100 autocorrelation times. thinning = ceil(5 * IAT) and
/// burn_in = max(pilot / 2, ceil(20 * IAT)).
Calibration calibrate_mixing(const DomainPtr& domain, const BoundaryCondition& bc, std::uint64_t seed,
                             std::int64_t initial_pilot_sweeps = 256);

}  // namespace icelab
