#pragma once

// Homomorphism height functions on even domains, boundary conditions, the
// six-vertex arrow bijection and the order structure of Hom(D, B, kappa).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "icelab/lattice.hpp"

namespace icelab {

using Height = std::int32_t;

/// Integer heights on every cell of an even domain, stored in the domain's
/// row-major cell order. Out-of-domain access throws.
class HeightField {
 public:
  HeightField() = default;
  /// Field with every height set to the vertex parity (the flat field).
  explicit HeightField(DomainPtr domain);
  HeightField(DomainPtr domain, std::vector<Height> values);

  const EvenDomain& domain() const { return *domain_; }
  const DomainPtr& domain_ptr() const { return domain_; }
  std::size_t size() const { return values_.size(); }

  Height operator[](std::size_t i) const { return values_[i]; }
  Height& operator[](std::size_t i) { return values_[i]; }
  Height at(Vertex v) const { return values_[domain_->index_of(v)]; }
  void set(Vertex v, Height h) { values_[domain_->index_of(v)] = h; }

  std::span<const Height> values() const { return values_; }
  std::span<Height> values() { return values_; }

  friend bool operator==(const HeightField& a, const HeightField& b);

 private:
  DomainPtr domain_;
  std::vector<Height> values_;
};

struct Violation {
  enum class Kind { step, parity };
  Kind kind;
  Vertex a;
  Vertex b;  // equal to `a` for parity violations
};

/// Every violated constraint: |h(u) - h(v)| = 1 on edges and h(v) = parity(v)
/// mod 2. Empty means the field is a valid homomorphism.
std::vector<Violation> validate(const HeightField& field);
bool is_valid(const HeightField& field);

/// Prescribed heights on a subset of the domain (usually its boundary).
struct BoundaryCondition {
  std::vector<Vertex> support;
  std::vector<Height> kappa;

  /// kappa = value on the whole boundary circuit of `domain`.
  static BoundaryCondition constant(const EvenDomain& domain, Height value);
  static BoundaryCondition zero(const EvenDomain& domain) { return constant(domain, 0); }
  /// Heights of `field` on the boundary circuit.
  static BoundaryCondition from_field(const HeightField& field);

  /// Per-cell view: fixed flag and value (unfixed cells carry 0).
  struct Dense {
    std::vector<std::uint8_t> fixed;
    std::vector<Height> value;
  };
  Dense densify(const EvenDomain& domain) const;
  /// Pointwise order on a common support.
  bool dominated_by(const BoundaryCondition& other) const;
};

/// Orientation of each primal edge crossed by a dual (height) edge.
///
/// For the dual edge u -> u + (1, 0) the crossed primal edge is vertical and
/// `up[i]` says whether its arrow points to +y. For u -> u + (0, 1) the primal
/// edge is horizontal and `right[i]` says whether its arrow points to +x.
/// Frame: walking a dual edge from u to v, "left" is the counterclockwise side;
/// h(v) - h(u) = +1 iff the arrow crosses from left to right.
struct ArrowConfig {
  DomainPtr domain;
  std::vector<std::uint8_t> up;     // indexed by cell, meaningful if east neighbor exists
  std::vector<std::uint8_t> right;  // indexed by cell, meaningful if north neighbor exists

  /// Primal vertices (faces with all four corners in the domain) violating the
  /// two-in two-out rule, reported by their lower-left corner.
  std::vector<Vertex> ice_rule_violations() const;
};

ArrowConfig to_six_vertex(const HeightField& field);
HeightField from_six_vertex(const ArrowConfig& arrows, Vertex anchor, Height anchor_value);

enum class Extremum { max, min };

/// Largest (or smallest) extension of `bc`: h(v) = min over u in B of
/// kappa(u) + dist(u, v) (resp. max of kappa(u) - dist(u, v)), graph distance
/// inside the domain. Throws InadmissibleBoundary when no extension exists.
HeightField extremal_field(const DomainPtr& domain, const BoundaryCondition& bc, Extremum which);

/// Pointwise min / max of two fields on the same domain.
HeightField meet(const HeightField& f, const HeightField& g);
HeightField join(const HeightField& f, const HeightField& g);
/// Pointwise order f <= g.
bool pointwise_leq(const HeightField& f, const HeightField& g);

/// h -> 2 * level - h on `region`, which must be the interior of a loop on
/// which the field equals `level` (every outside neighbor of the region sits
/// at `level`).
HeightField reflect(const HeightField& field, Height level, const Region& region);

/// Text serialization: header `N center_x center_y`, then one `x y h` line per
/// cell in row-major order.
void write_field(std::ostream& os, const HeightField& field);
HeightField read_field(std::istream& is);

}  // namespace icelab
