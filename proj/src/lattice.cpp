#include "icelab/lattice.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>
#include <stdexcept>
#include <string>

#include "icelab/error.hpp"

namespace icelab {

std::array<Vertex, 4> neighbors(Vertex v) {
  std::array<Vertex, 4> out;
  for (std::size_t k = 0; k < 4; ++k) out[k] = v + kNearestSteps[k];
  return out;
}

std::array<Vertex, 8> cross_neighbors(Vertex v) {
  std::array<Vertex, 8> out;
  for (std::size_t k = 0; k < 4; ++k) {
    out[2 * k] = v + kNearestSteps[k];
    out[2 * k + 1] = v + kDiagonalSteps[k];
  }
  return out;
}

bool cross_adjacent(Vertex a, Vertex b) { return a != b && chebyshev(a, b) == 1; }

bool in_even_domain(Vertex center, int radius, Vertex v) {
  const int dx = std::abs(v.x - center.x);
  const int dy = std::abs(v.y - center.y);
  const int d = std::max(dx, dy);
  if (d <= radius) return true;
  if (d > radius + 1) return false;
  // Outer ring: even vertices away from the four corners.
  return is_even(v) && !(dx == radius + 1 && dy == radius + 1);
}

namespace {

// Counterclockwise walk over the outer ring's side positions; each position is
// paired with the inner-ring vertex one step toward the center.
std::vector<Vertex> zigzag_circuit(Vertex c, int r) {
  std::vector<Vertex> out;
  auto emit = [&](Vertex outer, Vertex inner) {
    Vertex pick = is_even(outer) ? outer : inner;
    if (out.empty() || out.back() != pick) out.push_back(pick);
  };
  for (int y = c.y - r; y <= c.y + r; ++y) emit({c.x + r + 1, y}, {c.x + r, y});
  for (int x = c.x + r; x >= c.x - r; --x) emit({x, c.y + r + 1}, {x, c.y + r});
  for (int y = c.y + r; y >= c.y - r; --y) emit({c.x - r - 1, y}, {c.x - r, y});
  for (int x = c.x - r; x <= c.x + r; ++x) emit({x, c.y - r - 1}, {x, c.y - r});
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

}  // namespace

EvenDomain::EvenDomain(Vertex center, int radius) : center_(center), radius_(radius) {
  const int side = box_side();
  const Vertex o = box_origin();
  box_index_.assign(static_cast<std::size_t>(side) * side, -1);
  for (int y = o.y; y < o.y + side; ++y) {
    for (int x = o.x; x < o.x + side; ++x) {
      Vertex v{x, y};
      if (!in_even_domain(center_, radius_, v)) continue;
      box_index_[static_cast<std::size_t>(y - o.y) * side + (x - o.x)] =
          static_cast<std::int32_t>(cells_.size());
      cells_.push_back(v);
    }
  }
  neighbors_.resize(4 * cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      auto j = find(cells_[i] + kNearestSteps[k]);
      neighbors_[4 * i + k] = j ? static_cast<std::int32_t>(*j) : -1;
    }
  }
  boundary_ = zigzag_circuit(center_, radius_);
  on_boundary_.assign(cells_.size(), 0);
  for (Vertex v : boundary_) on_boundary_[index_of(v)] = 1;
  boundary_index_count_ = boundary_.size();

  auto problems = audit_even_domain(*this);
  if (!problems.empty()) {
    throw std::logic_error("even domain construction failed: " + problems.front());
  }
}

std::optional<std::size_t> EvenDomain::find(Vertex v) const {
  const Vertex o = box_origin();
  const int side = box_side();
  const int bx = v.x - o.x;
  const int by = v.y - o.y;
  if (bx < 0 || by < 0 || bx >= side || by >= side) return std::nullopt;
  const auto idx = box_index_[static_cast<std::size_t>(by) * side + bx];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

std::size_t EvenDomain::index_of(Vertex v) const {
  auto i = find(v);
  if (!i) {
    throw InvalidArgument("vertex (" + std::to_string(v.x) + "," + std::to_string(v.y) +
                          ") is outside the domain");
  }
  return *i;
}

DomainPtr build_even_domain(Vertex center, int radius) {
  if (radius < 0) throw InvalidArgument("build_even_domain: radius must be nonnegative");
  if (radius > (1 << 20)) throw InvalidArgument("build_even_domain: radius too large");
  return DomainPtr(new EvenDomain(center, radius));
}

std::vector<std::string> audit_even_domain(const EvenDomain& d) {
  std::vector<std::string> problems;
  const auto& circuit = d.boundary();
  if (circuit.empty()) {
    problems.emplace_back("empty boundary");
    return problems;
  }
  std::set<Vertex> seen;
  for (std::size_t i = 0; i < circuit.size(); ++i) {
    Vertex v = circuit[i];
    if (!is_even(v)) problems.emplace_back("odd boundary vertex");
    if (!d.contains(v)) problems.emplace_back("boundary vertex outside cells");
    if (!seen.insert(v).second) problems.emplace_back("boundary circuit not simple");
    if (circuit.size() > 1) {
      Vertex w = circuit[(i + 1) % circuit.size()];
      if (!cross_adjacent(v, w)) problems.emplace_back("boundary circuit not a x-path");
    }
  }
  // The circuit must coincide with the set of cells having a neighbor outside.
  std::set<Vertex> rim;
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (auto j : d.neighbor_indices(i)) {
      if (j < 0) {
        rim.insert(d.cell(i));
        break;
      }
    }
  }
  if (d.size() == 1) rim.insert(d.cell(0));
  if (rim != seen) problems.emplace_back("boundary circuit differs from the topological boundary");
  // Nesting between the two boxes.
  const Vertex c = d.center();
  for (Vertex v : d.cells()) {
    if (chebyshev(v, c) > d.radius() + 1) problems.emplace_back("cell outside box(radius + 1)");
  }
  for (int y = c.y - d.radius(); y <= c.y + d.radius(); ++y) {
    for (int x = c.x - d.radius(); x <= c.x + d.radius(); ++x) {
      if (!d.find({x, y})) problems.emplace_back("box(radius) not contained in cells");
    }
  }
  return problems;
}

Region::Region(std::vector<Vertex> vertices, RegionKind kind)
    : vertices_(std::move(vertices)), kind_(kind) {
  std::sort(vertices_.begin(), vertices_.end());
  vertices_.erase(std::unique(vertices_.begin(), vertices_.end()), vertices_.end());
  if (vertices_.empty()) return;
  lower_ = upper_ = vertices_.front();
  for (Vertex v : vertices_) {
    lower_.x = std::min(lower_.x, v.x);
    lower_.y = std::min(lower_.y, v.y);
    upper_.x = std::max(upper_.x, v.x);
    upper_.y = std::max(upper_.y, v.y);
  }
  const auto w = static_cast<std::size_t>(upper_.x - lower_.x + 1);
  const auto h = static_cast<std::size_t>(upper_.y - lower_.y + 1);
  mask_.assign(w * h, 0);
  for (Vertex v : vertices_) {
    mask_[static_cast<std::size_t>(v.y - lower_.y) * w + (v.x - lower_.x)] = 1;
  }
}

bool Region::contains(Vertex v) const {
  if (vertices_.empty()) return false;
  if (v.x < lower_.x || v.y < lower_.y || v.x > upper_.x || v.y > upper_.y) return false;
  const auto w = static_cast<std::size_t>(upper_.x - lower_.x + 1);
  return mask_[static_cast<std::size_t>(v.y - lower_.y) * w + (v.x - lower_.x)] != 0;
}

Region annulus_region(Vertex center, int r_in, int r_out) {
  if (r_in <= 0) throw InvalidArgument("annulus_region: inner radius must be positive");
  if (r_in >= r_out) throw InvalidArgument("annulus_region: need r_in < r_out");
  std::vector<Vertex> out;
  for (int y = center.y - r_out - 1; y <= center.y + r_out + 1; ++y) {
    for (int x = center.x - r_out - 1; x <= center.x + r_out + 1; ++x) {
      Vertex v{x, y};
      if (in_even_domain(center, r_out, v) && !in_even_domain(center, r_in, v)) out.push_back(v);
    }
  }
  return Region(std::move(out), RegionKind::annulus);
}

Region rectangle_region(int rho_n, int n) {
  if (rho_n <= 0 || n <= 0) throw InvalidArgument("rectangle_region: sides must be positive");
  std::vector<Vertex> out;
  out.reserve(static_cast<std::size_t>(2 * n + 1) * (2 * rho_n + 1));
  for (int y = -rho_n; y <= rho_n; ++y) {
    for (int x = -n; x <= n; ++x) out.push_back({x, y});
  }
  return Region(std::move(out), RegionKind::rectangle);
}

}  // namespace icelab
