#include "icelab/loops.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "icelab/error.hpp"

namespace icelab {

namespace {

// Square window covering the domain with a one-cell margin, so the margin is
// always outside every circuit.
struct Canvas {
  Vertex origin;
  int side;

  explicit Canvas(const EvenDomain& d)
      : origin(d.box_origin() - Vertex{1, 1}), side(d.box_side() + 2) {}

  std::size_t size() const { return static_cast<std::size_t>(side) * static_cast<std::size_t>(side); }
  std::size_t index(Vertex v) const {
    return static_cast<std::size_t>(v.y - origin.y) * static_cast<std::size_t>(side) +
           static_cast<std::size_t>(v.x - origin.x);
  }
  Vertex vertex(std::size_t c) const {
    const auto s = static_cast<std::size_t>(side);
    return {origin.x + static_cast<int>(c % s), origin.y + static_cast<int>(c / s)};
  }
  bool on_frame(Vertex v) const {
    return v.x == origin.x || v.y == origin.y || v.x == origin.x + side - 1 || v.y == origin.y + side - 1;
  }
};

// Directed diamond edges of face f, counterclockwise, with the face across.
struct DiamondEdge {
  Vertex from, to, across;
};
constexpr std::array<DiamondEdge, 4> kDiamondEdges{{
    {{1, 0}, {0, 1}, {1, 1}},
    {{0, 1}, {-1, 0}, {-1, 1}},
    {{-1, 0}, {0, -1}, {-1, -1}},
    {{0, -1}, {1, 0}, {1, -1}},
}};

bool diagonal_step(Vertex a, Vertex b) {
  const int dx = std::abs(a.x - b.x), dy = std::abs(a.y - b.y);
  return dx == 1 && dy == 1;
}

// Per-cell interior of the polygon through `circuit` by scanline parity.
std::vector<std::uint8_t> polygon_interior(const EvenDomain& d, std::span<const Vertex> circuit) {
  const Vertex lo = d.box_origin();
  const int side = d.box_side();
  std::vector<std::vector<int>> crossings(static_cast<std::size_t>(side));
  const std::size_t m = circuit.size();
  for (std::size_t e = 0; e < m; ++e) {
    const Vertex p = circuit[e], q = circuit[(e + 1) % m];
    if (p.y == q.y) continue;
    const Vertex a = p.y < q.y ? p : q;
    const Vertex b = p.y < q.y ? q : p;
    for (int y = a.y; y < b.y; ++y) {
      if (y < lo.y || y >= lo.y + side) continue;
      const int x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
      crossings[static_cast<std::size_t>(y - lo.y)].push_back(x);
    }
  }
  for (auto& row : crossings) std::sort(row.begin(), row.end());
  std::vector<std::uint8_t> on(d.size(), 0);
  for (Vertex v : circuit) {
    if (auto i = d.find(v)) on[*i] = 1;
  }
  std::vector<std::uint8_t> inside(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (on[i]) continue;
    const Vertex v = d.cell(i);
    const auto& row = crossings[static_cast<std::size_t>(v.y - lo.y)];
    const auto right = row.end() - std::upper_bound(row.begin(), row.end(), v.x);
    inside[i] = (right & 1) ? 1 : 0;
  }
  return inside;
}

}  // namespace

bool surrounds(std::span<const Vertex> circuit, Vertex p) {
  bool odd = false;
  const std::size_t m = circuit.size();
  for (std::size_t e = 0; e < m; ++e) {
    const Vertex a = circuit[e], b = circuit[(e + 1) % m];
    if ((a.y <= p.y) == (b.y <= p.y)) continue;
    const double x = a.x + static_cast<double>(p.y - a.y) * (b.x - a.x) / static_cast<double>(b.y - a.y);
    if (x > p.x) odd = !odd;
  }
  return odd;
}

std::optional<Circuit> outermost_circuit(const EvenDomain& d, std::span<const std::uint8_t> allowed,
                                         Vertex target) {
  if (allowed.size() != d.size()) throw InvalidArgument("outermost_circuit: mask size mismatch");
  if (!d.contains(target)) throw InvalidArgument("outermost_circuit: target outside the domain");
  const Canvas cv(d);
  std::vector<std::uint8_t> wall(cv.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (allowed[i] && is_even(d.cell(i))) wall[cv.index(d.cell(i))] = 1;
  }

  // Cells reachable from the frame by unit steps avoiding walls.
  std::vector<std::uint8_t> outside(cv.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t c = 0; c < cv.size(); ++c) {
    if (cv.on_frame(cv.vertex(c))) {
      outside[c] = 1;
      queue.push_back(c);
    }
  }
  while (!queue.empty()) {
    const Vertex v = cv.vertex(queue.front());
    queue.pop_front();
    for (Vertex s : kNearestSteps) {
      const Vertex w = v + s;
      if (w.x < cv.origin.x || w.y < cv.origin.y || w.x >= cv.origin.x + cv.side ||
          w.y >= cv.origin.y + cv.side) {
        continue;
      }
      const auto c = cv.index(w);
      if (outside[c] || wall[c]) continue;
      outside[c] = 1;
      queue.push_back(c);
    }
  }

  std::vector<Vertex> seeds;
  if (is_even(target)) {
    for (Vertex s : kNearestSteps) seeds.push_back(target + s);
  } else {
    seeds.push_back(target);
  }
  for (Vertex f : seeds) {
    if (outside[cv.index(f)]) return std::nullopt;
  }

  // Enclosed faces edge-connected to the target.
  std::vector<std::uint8_t> face(cv.size(), 0);
  for (Vertex f : seeds) {
    face[cv.index(f)] = 1;
    queue.push_back(cv.index(f));
  }
  std::vector<Vertex> faces;
  while (!queue.empty()) {
    const Vertex f = cv.vertex(queue.front());
    queue.pop_front();
    faces.push_back(f);
    for (Vertex s : kDiagonalSteps) {
      const auto c = cv.index(f + s);
      if (face[c] || outside[c]) continue;
      face[c] = 1;
      queue.push_back(c);
    }
  }

  // Boundary of the union of diamonds, traced counterclockwise.
  std::vector<std::int64_t> next(cv.size(), -1);
  std::size_t edges = 0;
  std::optional<Vertex> start;
  for (Vertex f : faces) {
    for (const auto& e : kDiamondEdges) {
      if (face[cv.index(f + e.across)]) continue;
      const auto a = cv.index(f + e.from);
      if (next[a] != -1) throw std::logic_error("outermost_circuit: pinched boundary");
      next[a] = static_cast<std::int64_t>(cv.index(f + e.to));
      ++edges;
      if (!start || f + e.from < *start) start = f + e.from;
    }
  }
  Circuit out;
  std::size_t c = cv.index(*start);
  do {
    out.vertices.push_back(cv.vertex(c));
    if (next[c] < 0) throw std::logic_error("outermost_circuit: open boundary");
    c = static_cast<std::size_t>(next[c]);
  } while (c != cv.index(*start) && out.vertices.size() <= edges);
  if (out.vertices.size() != edges) throw std::logic_error("outermost_circuit: boundary is not one cycle");

  out.inside.assign(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vertex v = d.cell(i);
    if (!is_even(v)) {
      out.inside[i] = face[cv.index(v)];
      continue;
    }
    bool all = true;
    for (Vertex s : kNearestSteps) all = all && face[cv.index(v + s)];
    out.inside[i] = all ? 1 : 0;
  }
  return out;
}

std::vector<Height> LoopFamily::heights() const {
  std::vector<Height> out;
  for (const auto& l : loops) out.push_back(l.height);
  return out;
}

std::vector<std::string> audit_loop_family(const HeightField& field, const LoopFamily& family) {
  std::vector<std::string> problems;
  const auto& d = field.domain();
  auto report = [&](std::size_t j, const std::string& what) {
    problems.push_back("loop " + std::to_string(j) + ": " + what);
  };
  for (std::size_t j = 0; j < family.loops.size(); ++j) {
    const auto& loop = family.loops[j];
    const auto& c = loop.circuit;
    if (c.size() < 4) {
      report(j, "fewer than four vertices");
      continue;
    }
    if (loop.inside.size() != d.size()) {
      report(j, "interior mask has the wrong size");
      continue;
    }
    auto sorted = c;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) report(j, "repeated vertex");
    bool in_domain = true;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!d.contains(c[k])) {
        in_domain = false;
        break;
      }
      if (!diagonal_step(c[k], c[(k + 1) % c.size()])) report(j, "non-diagonal step");
      if (field.at(c[k]) != loop.height) report(j, "height not constant");
    }
    if (!in_domain) {
      report(j, "vertex outside the domain");
      continue;
    }
    if (std::binary_search(sorted.begin(), sorted.end(), family.target) || !surrounds(c, family.target)) {
      report(j, "does not surround the target");
    }
    if (polygon_interior(d, c) != loop.inside) report(j, "interior mask disagrees with the polygon");
    if (j == 0) continue;
    const auto& parent = family.loops[j - 1];
    const Height step = loop.height - parent.height;
    if (step != 2 && step != -2) report(j, "height step is not 2");
    for (Vertex v : c) {
      if (!parent.inside[d.index_of(v)]) report(j, "not strictly inside its parent");
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (loop.inside[i] && !parent.inside[i]) {
        report(j, "interior not nested");
        break;
      }
    }
    // Each vertex borders the region between the two loops.
    for (Vertex v : c) {
      bool touches = false;
      for (Vertex s : kNearestSteps) {
        auto i = d.find(v + s);
        if (i && parent.inside[*i] && !loop.inside[*i]) touches = true;
      }
      if (!touches) {
        report(j, "vertex not adjacent to the explored region");
        break;
      }
    }
  }
  return problems;
}

LoopFamily extract_loop_family(const HeightField& field, Vertex target) {
  const auto& d = field.domain();
  const auto t = d.find(target);
  if (!t) throw InvalidArgument("extract_loop_family: target outside the domain");
  if (d.is_boundary(*t)) throw InvalidArgument("extract_loop_family: target on the boundary");
  if (!is_valid(field)) throw InvalidArgument("extract_loop_family: invalid field");
  const Height base = field.at(d.boundary().front());
  for (Vertex v : d.boundary()) {
    if (field.at(v) != base) throw InvalidArgument("extract_loop_family: boundary value is not constant");
  }

  LoopFamily family;
  family.target = target;
  LevelLoop l0;
  l0.circuit = d.boundary();
  l0.height = base;
  l0.inside.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) l0.inside[i] = d.is_boundary(i) ? 0 : 1;
  family.loops.push_back(std::move(l0));

  std::vector<std::uint8_t> allowed(d.size());
  for (;;) {
    const auto& prev = family.loops.back();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Height gap = field[i] - prev.height;
      allowed[i] = prev.inside[i] && (gap == 2 || gap == -2);
    }
    auto c = outermost_circuit(d, allowed, target);
    if (!c) break;
    LevelLoop l;
    l.height = field.at(c->vertices.front());
    l.circuit = std::move(c->vertices);
    l.inside = std::move(c->inside);
    family.loops.push_back(std::move(l));
  }
  if (auto problems = audit_loop_family(field, family); !problems.empty()) {
    throw std::logic_error("extract_loop_family: certificate failed: " + problems.front());
  }
  return family;
}

int scale_radius(int N, int k) {
  if (k >= 31) return 1;
  return std::max(1, N >> k);
}

int scale_count(int N) {
  int k = 0;
  while ((2LL << k) <= N) ++k;
  return k;
}

int loglog_window(int N) {
  if (N < 4) return 1;
  const double w = std::ceil(std::log2(std::log2(static_cast<double>(N))) - 1e-9);
  return std::max(1, static_cast<int>(w));
}

ScaleCircuits circuits_at_scales(const LoopFamily& family, int N) {
  if (N < 1) throw InvalidArgument("circuits_at_scales: need N >= 1");
  if (family.loops.empty()) throw InvalidArgument("circuits_at_scales: empty family");
  ScaleCircuits s;
  s.N = N;
  const int K = scale_count(N);
  s.radii.push_back(N);
  s.loop_index.push_back(0);
  s.heights.push_back(family.loops.front().height);
  for (int k = 1; k <= K; ++k) {
    const int r = scale_radius(N, k);
    s.radii.push_back(r);
    int chosen = s.loop_index.back();
    for (std::size_t j = static_cast<std::size_t>(chosen); j < family.loops.size(); ++j) {
      const auto& c = family.loops[j].circuit;
      if (std::all_of(c.begin(), c.end(), [&](Vertex v) { return in_even_domain(family.target, r, v); })) {
        chosen = static_cast<int>(j);
        break;
      }
    }
    s.loop_index.push_back(chosen);
    s.heights.push_back(family.loops[static_cast<std::size_t>(chosen)].height);
  }
  return s;
}

AnnulusCount count_in_annulus(const LoopFamily& family, const Region& ann) {
  AnnulusCount out;
  for (const auto& l : family.loops) {
    std::size_t in = 0;
    for (Vertex v : l.circuit) in += ann.contains(v) ? 1 : 0;
    if (in == l.circuit.size()) {
      ++out.contained;
    } else if (in > 0) {
      ++out.crossing;
    }
  }
  return out;
}

AnnulusCount count_in_annulus(const LoopFamily& family, Vertex center, int r_in, int r_out) {
  AnnulusCount out;
  if (r_in >= r_out) return out;
  for (const auto& l : family.loops) {
    std::size_t in = 0;
    for (Vertex v : l.circuit) {
      in += (in_even_domain(center, r_out, v) && !in_even_domain(center, r_in, v)) ? 1 : 0;
    }
    if (in == l.circuit.size()) {
      ++out.contained;
    } else if (in > 0) {
      ++out.crossing;
    }
  }
  return out;
}

std::optional<LevelLoop> outermost_zero_loop(const HeightField& field, Vertex target, const Region& region) {
  const auto& d = field.domain();
  std::vector<std::uint8_t> allowed(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    allowed[i] = field[i] == 0 && region.contains(d.cell(i));
  }
  auto c = outermost_circuit(d, allowed, target);
  if (!c) return std::nullopt;
  return LevelLoop{std::move(c->vertices), 0, std::move(c->inside)};
}

bool annulus_loop_event(const HeightField& field, int n) {
  if (n < 1) throw InvalidArgument("annulus_loop_event: need n >= 1");
  const auto& d = field.domain();
  const Vertex origin{0, 0};
  for (int y = -2 * n - 1; y <= 2 * n + 1; ++y) {
    for (int x = -2 * n - 1; x <= 2 * n + 1; ++x) {
      if (in_even_domain(origin, 2 * n, {x, y}) && !d.contains({x, y})) {
        throw InvalidArgument("annulus_loop_event: domain does not contain D_2n");
      }
    }
  }
  std::vector<std::uint8_t> allowed(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vertex v = d.cell(i);
    allowed[i] = (field[i] == 2 || field[i] == -2) && in_even_domain(origin, 2 * n, v) &&
                 !in_even_domain(origin, n, v);
  }
  return outermost_circuit(d, allowed, origin).has_value();
}

}  // namespace icelab
