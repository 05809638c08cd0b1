#pragma once

// Geometry of Z^2: parity, adjacency, even domains bounded by x-circuits,
// boxes, annuli and rectangles.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace icelab {

struct Vertex {
  std::int32_t x = 0;
  std::int32_t y = 0;

  friend auto operator<=>(const Vertex&, const Vertex&) = default;
  friend Vertex operator+(Vertex a, Vertex b) { return {a.x + b.x, a.y + b.y}; }
  friend Vertex operator-(Vertex a, Vertex b) { return {a.x - b.x, a.y - b.y}; }
};

struct VertexHash {
  std::size_t operator()(Vertex v) const noexcept {
    auto ux = static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.x));
    auto uy = static_cast<std::uint64_t>(static_cast<std::uint32_t>(v.y));
    std::uint64_t h = (ux << 32) ^ uy;
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

/// 0 for even vertices, 1 for odd ones.
inline int parity(Vertex v) { return (v.x + v.y) & 1; }
inline bool is_even(Vertex v) { return parity(v) == 0; }

inline int chebyshev(Vertex a, Vertex b) {
  int dx = a.x > b.x ? a.x - b.x : b.x - a.x;
  int dy = a.y > b.y ? a.y - b.y : b.y - a.y;
  return dx > dy ? dx : dy;
}

/// Unit steps in the order east, north, west, south.
inline constexpr std::array<Vertex, 4> kNearestSteps{{{1, 0}, {0, 1}, {-1, 0}, {0, -1}}};
/// Diagonal steps, counterclockwise from north-east.
inline constexpr std::array<Vertex, 4> kDiagonalSteps{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};

/// The four vertices at Euclidean distance 1.
std::array<Vertex, 4> neighbors(Vertex v);
/// The eight vertices at Euclidean distance 1 or sqrt(2).
std::array<Vertex, 8> cross_neighbors(Vertex v);

/// True iff consecutive vertices are at distance 1 or sqrt(2).
bool cross_adjacent(Vertex a, Vertex b);

/// Membership test for build_even_domain(center, radius) without building it:
/// the box of half-width `radius` plus the even, non-corner vertices of the
/// next ring.
bool in_even_domain(Vertex center, int radius, Vertex v);

/// A finite vertex set whose boundary is a x-circuit of even vertices.
///
/// Cells are stored row-major (y outer, x inner) and addressed by a dense
/// index; neighbor indices are precomputed (-1 when outside the domain).
class EvenDomain {
 public:
  Vertex center() const { return center_; }
  int radius() const { return radius_; }

  std::size_t size() const { return cells_.size(); }
  const std::vector<Vertex>& cells() const { return cells_; }
  Vertex cell(std::size_t i) const { return cells_[i]; }

  /// The boundary circuit in counterclockwise order.
  const std::vector<Vertex>& boundary() const { return boundary_; }
  bool is_boundary(std::size_t i) const { return on_boundary_[i] != 0; }
  /// Number of cells that are not on the boundary circuit.
  std::size_t interior_size() const { return size() - boundary_index_count_; }

  bool contains(Vertex v) const { return in_even_domain(center_, radius_, v); }
  std::optional<std::size_t> find(Vertex v) const;
  /// Dense index of `v`; throws InvalidArgument when `v` is outside.
  std::size_t index_of(Vertex v) const;

  /// Neighbor indices in kNearestSteps order, -1 when outside the domain.
  std::span<const std::int32_t, 4> neighbor_indices(std::size_t i) const {
    return std::span<const std::int32_t, 4>(neighbors_.data() + 4 * i, 4);
  }

  /// Lower-left corner and side of the bounding box box(center, radius + 1).
  Vertex box_origin() const { return {center_.x - radius_ - 1, center_.y - radius_ - 1}; }
  int box_side() const { return 2 * radius_ + 3; }

  friend bool operator==(const EvenDomain& a, const EvenDomain& b) {
    return a.center_ == b.center_ && a.radius_ == b.radius_;
  }

 private:
  friend std::shared_ptr<const EvenDomain> build_even_domain(Vertex, int);
  EvenDomain(Vertex center, int radius);

  Vertex center_;
  int radius_;
  std::vector<Vertex> cells_;
  std::vector<std::int32_t> box_index_;
  std::vector<std::int32_t> neighbors_;
  std::vector<Vertex> boundary_;
  std::vector<std::uint8_t> on_boundary_;
  std::size_t boundary_index_count_ = 0;
};

using DomainPtr = std::shared_ptr<const EvenDomain>;

/// Zig-zag even domain: box(center, radius) is contained in the cells, which
/// are contained in box(center, radius + 1). At each perimeter position of the
/// ring pair {radius, radius + 1} the boundary circuit visits whichever of the
/// inner/outer pair is even.
DomainPtr build_even_domain(Vertex center, int radius);

/// Result of the invariant audit on an EvenDomain; empty means sound.
std::vector<std::string> audit_even_domain(const EvenDomain& domain);

enum class RegionKind { annulus, rectangle, generic };

/// A plain finite vertex set with O(1) membership.
class Region {
 public:
  Region() = default;
  Region(std::vector<Vertex> vertices, RegionKind kind);

  const std::vector<Vertex>& vertices() const { return vertices_; }
  RegionKind kind() const { return kind_; }
  std::size_t size() const { return vertices_.size(); }
  bool empty() const { return vertices_.empty(); }
  bool contains(Vertex v) const;

  /// Bounding box in inclusive coordinates (only meaningful when non-empty).
  Vertex lower() const { return lower_; }
  Vertex upper() const { return upper_; }

 private:
  std::vector<Vertex> vertices_;
  RegionKind kind_ = RegionKind::generic;
  Vertex lower_{0, 0};
  Vertex upper_{-1, -1};
  std::vector<std::uint8_t> mask_;
};

/// cells(D(center, r_out)) minus cells(D(center, r_in)).
Region annulus_region(Vertex center, int r_in, int r_out);

/// ([-n, n] x [-rho_n, rho_n]) intersected with Z^2.
Region rectangle_region(int rho_n, int n);

}  // namespace icelab
