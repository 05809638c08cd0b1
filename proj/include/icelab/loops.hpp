#pragma once

// Level loops of a height field: the nested family L_0, L_1, ... around a
// target, the level circuits C_k at dyadic scales, loop counts in annuli and
// outermost constant-height circuits in a region.
//
// Every circuit here is a closed x-path of even vertices using diagonal steps
// only (a constant-height x-path cannot take unit steps). Odd vertices act as
// faces: the face at odd f is the diamond with corners f +/- (1,0), f +/- (0,1),
// and two faces share an edge exactly when they are diagonal neighbors.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icelab/heightfield.hpp"
#include "icelab/lattice.hpp"

namespace icelab {

/// A simple closed x-path in counterclockwise order plus its strict interior.
struct Circuit {
  std::vector<Vertex> vertices;
  std::vector<std::uint8_t> inside;  // per domain cell, strictly enclosed
};

/// The outermost circuit whose vertices all lie in `allowed` (a per-cell mask
/// of even cells) and which strictly surrounds `target`, or nothing.
std::optional<Circuit> outermost_circuit(const EvenDomain& domain, std::span<const std::uint8_t> allowed,
                                         Vertex target);

/// Ray-crossing parity of `p` against the polygon through `circuit`; `p` must
/// not be a circuit vertex.
bool surrounds(std::span<const Vertex> circuit, Vertex p);

struct LevelLoop {
  std::vector<Vertex> circuit;
  Height height = 0;
  std::vector<std::uint8_t> inside;
};

struct LoopFamily {
  Vertex target;
  std::vector<LevelLoop> loops;  // loops[0] is the domain boundary

  std::size_t size() const { return loops.size(); }
  std::vector<Height> heights() const;
};

/// Nested level loops around `target`. L_j is the outermost circuit strictly
/// inside L_{j-1} on which the field is constant and differs from the height
/// of L_{j-1} by 2; the family stops when no such circuit surrounds the
/// target. Requires a constant boundary value and an interior target. Every
/// loop is audited before returning; an audit failure throws logic_error.
LoopFamily extract_loop_family(const HeightField& field, Vertex target);

/// Certificate checks on a family: circuits simple, closed, diagonal, constant
/// height, surrounding the target, strictly nested with steps of 2, and each
/// loop touching the region explored from its parent. Empty means sound.
std::vector<std::string> audit_loop_family(const HeightField& field, const LoopFamily& family);

/// r_k = max(1, floor(N / 2^k)).
int scale_radius(int N, int k);
/// K = floor(log2 N).
int scale_count(int N);
/// w = max(1, ceil(log2 log2 N)).
int loglog_window(int N);

struct ScaleCircuits {
  int N = 0;
  std::vector<int> radii;         // radii[k] = r_k, k = 0..K (radii[0] = N)
  std::vector<int> loop_index;    // family index of C_k, k = 0..K (C_0 = L_0)
  std::vector<Height> heights;    // height of C_k
  int K() const { return static_cast<int>(radii.size()) - 1; }
};

/// C_k = outermost family loop contained in B_k(target) for k = 1..K, or
/// C_{k-1} when there is none.
ScaleCircuits circuits_at_scales(const LoopFamily& family, int N);

struct AnnulusCount {
  int contained = 0;
  int crossing = 0;
};
/// Loops entirely inside `ann`, and loops meeting it without being inside.
AnnulusCount count_in_annulus(const LoopFamily& family, const Region& ann);
/// Same for the annulus B(center, r_out) minus B(center, r_in) without
/// materializing it; all zero when r_in >= r_out.
AnnulusCount count_in_annulus(const LoopFamily& family, Vertex center, int r_in, int r_out);

/// Outermost circuit of height 0 surrounding `target` whose vertices lie in
/// `region`, or nothing.
std::optional<LevelLoop> outermost_zero_loop(const HeightField& field, Vertex target, const Region& region);

/// Whether some circuit of constant height +2 or -2 surrounding the origin
/// lies in A_{n,2n}. The domain must contain D_{2n}.
bool annulus_loop_event(const HeightField& field, int n);

}  // namespace icelab
