#include "icelab/heightfield.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

#include "icelab/error.hpp"

namespace icelab {

namespace {

bool parity_ok(Height h, Vertex v) { return ((h - parity(v)) & 1) == 0; }

void require_same_domain(const HeightField& f, const HeightField& g, const char* what) {
  if (f.domain_ptr() == nullptr || g.domain_ptr() == nullptr || !(f.domain() == g.domain())) {
    throw InvalidArgument(std::string(what) + ": fields live on different domains");
  }
}

}  // namespace

HeightField::HeightField(DomainPtr domain) : domain_(std::move(domain)) {
  values_.resize(domain_->size());
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = parity(domain_->cell(i));
}

HeightField::HeightField(DomainPtr domain, std::vector<Height> values)
    : domain_(std::move(domain)), values_(std::move(values)) {
  if (values_.size() != domain_->size()) {
    throw InvalidArgument("HeightField: value count does not match the domain");
  }
}

bool operator==(const HeightField& a, const HeightField& b) {
  if (a.domain_ == nullptr || b.domain_ == nullptr) return a.domain_ == b.domain_;
  return *a.domain_ == *b.domain_ && a.values_ == b.values_;
}

std::vector<Violation> validate(const HeightField& field) {
  std::vector<Violation> out;
  const auto& d = field.domain();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Vertex v = d.cell(i);
    if (!parity_ok(field[i], v)) out.push_back({Violation::Kind::parity, v, v});
    const auto nb = d.neighbor_indices(i);
    for (std::size_t k : {std::size_t{0}, std::size_t{1}}) {  // east, north
      if (nb[k] < 0) continue;
      const auto j = static_cast<std::size_t>(nb[k]);
      const Height diff = field[j] - field[i];
      if (diff != 1 && diff != -1) out.push_back({Violation::Kind::step, v, d.cell(j)});
    }
  }
  return out;
}

bool is_valid(const HeightField& field) { return validate(field).empty(); }

BoundaryCondition BoundaryCondition::constant(const EvenDomain& domain, Height value) {
  BoundaryCondition bc;
  bc.support = domain.boundary();
  bc.kappa.assign(bc.support.size(), value);
  return bc;
}

BoundaryCondition BoundaryCondition::from_field(const HeightField& field) {
  BoundaryCondition bc;
  bc.support = field.domain().boundary();
  bc.kappa.reserve(bc.support.size());
  for (Vertex v : bc.support) bc.kappa.push_back(field.at(v));
  return bc;
}

BoundaryCondition::Dense BoundaryCondition::densify(const EvenDomain& domain) const {
  if (support.size() != kappa.size()) {
    throw InvalidArgument("BoundaryCondition: support and kappa sizes differ");
  }
  Dense out;
  out.fixed.assign(domain.size(), 0);
  out.value.assign(domain.size(), 0);
  for (std::size_t k = 0; k < support.size(); ++k) {
    auto i = domain.find(support[k]);
    if (!i) throw InvalidArgument("BoundaryCondition: support vertex outside the domain");
    if (out.fixed[*i] && out.value[*i] != kappa[k]) {
      throw InvalidArgument("BoundaryCondition: conflicting values at one vertex");
    }
    out.fixed[*i] = 1;
    out.value[*i] = kappa[k];
  }
  return out;
}

bool BoundaryCondition::dominated_by(const BoundaryCondition& other) const {
  std::vector<std::pair<Vertex, Height>> a, b;
  for (std::size_t k = 0; k < support.size(); ++k) a.emplace_back(support[k], kappa[k]);
  for (std::size_t k = 0; k < other.support.size(); ++k) b.emplace_back(other.support[k], other.kappa[k]);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].first != b[k].first || a[k].second > b[k].second) return false;
  }
  return true;
}

std::vector<Vertex> ArrowConfig::ice_rule_violations() const {
  std::vector<Vertex> out;
  const auto& d = *domain;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto nb = d.neighbor_indices(i);
    if (nb[0] < 0 || nb[1] < 0) continue;
    const auto j = static_cast<std::size_t>(nb[0]);  // east
    const auto k = static_cast<std::size_t>(nb[1]);  // north
    if (d.neighbor_indices(k)[0] < 0) continue;      // north-east corner
    const int incoming = (up[i] ? 1 : 0) + (up[k] ? 0 : 1) + (right[i] ? 1 : 0) + (right[j] ? 0 : 1);
    if (incoming != 2) out.push_back(d.cell(i));
  }
  return out;
}

ArrowConfig to_six_vertex(const HeightField& field) {
  if (!is_valid(field)) throw InvalidArgument("to_six_vertex: field is not a valid height function");
  const auto& d = field.domain();
  ArrowConfig a;
  a.domain = field.domain_ptr();
  a.up.assign(d.size(), 0);
  a.right.assign(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto nb = d.neighbor_indices(i);
    // East step +1 means the vertical arrow crosses from north (left) to south.
    if (nb[0] >= 0) a.up[i] = field[static_cast<std::size_t>(nb[0])] - field[i] == -1;
    // North step +1 means the horizontal arrow crosses from west (left) to east.
    if (nb[1] >= 0) a.right[i] = field[static_cast<std::size_t>(nb[1])] - field[i] == 1;
  }
  return a;
}

HeightField from_six_vertex(const ArrowConfig& arrows, Vertex anchor, Height anchor_value) {
  if (!arrows.domain) throw InvalidArgument("from_six_vertex: arrows carry no domain");
  const auto& d = *arrows.domain;
  if (arrows.up.size() != d.size() || arrows.right.size() != d.size()) {
    throw InvalidArgument("from_six_vertex: arrow arrays do not match the domain");
  }
  if (!arrows.ice_rule_violations().empty()) {
    throw InvalidArgument("from_six_vertex: ice rule violated");
  }
  const std::size_t a = d.index_of(anchor);
  if (!parity_ok(anchor_value, anchor)) {
    throw InvalidArgument("from_six_vertex: anchor value has the wrong parity");
  }
  // Step from i to its k-th neighbor.
  auto step = [&](std::size_t i, std::size_t k) -> Height {
    const auto j = static_cast<std::size_t>(d.neighbor_indices(i)[k]);
    switch (k) {
      case 0: return arrows.up[i] ? -1 : 1;
      case 1: return arrows.right[i] ? 1 : -1;
      case 2: return arrows.up[j] ? 1 : -1;
      default: return arrows.right[j] ? -1 : 1;
    }
  };
  std::vector<Height> h(d.size(), 0);
  std::vector<std::uint8_t> seen(d.size(), 0);
  std::deque<std::size_t> queue{a};
  h[a] = anchor_value;
  seen[a] = 1;
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop_front();
    const auto nb = d.neighbor_indices(i);
    for (std::size_t k = 0; k < 4; ++k) {
      if (nb[k] < 0) continue;
      const auto j = static_cast<std::size_t>(nb[k]);
      const Height value = h[i] + step(i, k);
      if (!seen[j]) {
        seen[j] = 1;
        h[j] = value;
        queue.push_back(j);
      } else if (h[j] != value) {
        throw InvalidArgument("from_six_vertex: arrows are not curl free");
      }
    }
  }
  return HeightField(arrows.domain, std::move(h));
}

HeightField extremal_field(const DomainPtr& domain, const BoundaryCondition& bc, Extremum which) {
  const auto& d = *domain;
  if (bc.support.empty()) throw InvalidArgument("extremal_field: empty boundary support");
  const auto dense = bc.densify(d);
  const Height sign = which == Extremum::max ? 1 : -1;

  using Item = std::pair<std::int64_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  constexpr auto kInf = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> dist(d.size(), kInf);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!dense.fixed[i]) continue;
    if (!parity_ok(dense.value[i], d.cell(i))) {
      throw InadmissibleBoundary("boundary value has the wrong parity at a vertex");
    }
    dist[i] = sign * static_cast<std::int64_t>(dense.value[i]);
    queue.emplace(dist[i], i);
  }
  while (!queue.empty()) {
    auto [di, i] = queue.top();
    queue.pop();
    if (di != dist[i]) continue;
    for (auto j : d.neighbor_indices(i)) {
      if (j < 0) continue;
      const auto uj = static_cast<std::size_t>(j);
      if (di + 1 < dist[uj]) {
        dist[uj] = di + 1;
        queue.emplace(dist[uj], uj);
      }
    }
  }
  std::vector<Height> values(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) values[i] = static_cast<Height>(sign * dist[i]);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (dense.fixed[i] && values[i] != dense.value[i]) {
      throw InadmissibleBoundary("boundary condition violates the Lipschitz constraint");
    }
  }
  HeightField out(domain, std::move(values));
  if (!is_valid(out)) throw InadmissibleBoundary("extremal extension is not a height function");
  return out;
}

HeightField meet(const HeightField& f, const HeightField& g) {
  require_same_domain(f, g, "meet");
  HeightField out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(f[i], g[i]);
  return out;
}

HeightField join(const HeightField& f, const HeightField& g) {
  require_same_domain(f, g, "join");
  HeightField out = f;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(f[i], g[i]);
  return out;
}

bool pointwise_leq(const HeightField& f, const HeightField& g) {
  require_same_domain(f, g, "pointwise_leq");
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] > g[i]) return false;
  }
  return true;
}

HeightField reflect(const HeightField& field, Height level, const Region& region) {
  const auto& d = field.domain();
  HeightField out = field;
  for (Vertex v : region.vertices()) {
    const std::size_t i = d.index_of(v);
    for (Vertex w : neighbors(v)) {
      if (region.contains(w)) continue;
      auto j = d.find(w);
      if (!j || field[*j] != level) {
        throw InvalidArgument("reflect: region is not enclosed by a loop at the given level");
      }
    }
    out[i] = 2 * level - field[i];
  }
  return out;
}

void write_field(std::ostream& os, const HeightField& field) {
  const auto& d = field.domain();
  os << d.radius() << ' ' << d.center().x << ' ' << d.center().y << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    os << d.cell(i).x << ' ' << d.cell(i).y << ' ' << field[i] << '\n';
  }
}

HeightField read_field(std::istream& is) {
  std::string line;
  std::size_t row = 1;
  if (!std::getline(is, line)) throw FormatError("field: missing header", row);
  std::istringstream header(line);
  int radius = 0;
  Vertex center;
  if (!(header >> radius >> center.x >> center.y) || radius < 0) {
    throw FormatError("field: malformed header", row);
  }
  auto domain = build_even_domain(center, radius);
  std::vector<Height> values(domain->size(), 0);
  std::vector<std::uint8_t> seen(domain->size(), 0);
  for (std::size_t k = 0; k < domain->size(); ++k) {
    ++row;
    if (!std::getline(is, line)) throw FormatError("field: truncated cell list", row);
    std::istringstream in(line);
    Vertex v;
    Height h = 0;
    if (!(in >> v.x >> v.y >> h)) throw FormatError("field: malformed cell line", row);
    auto i = domain->find(v);
    if (!i || seen[*i]) throw FormatError("field: unexpected or repeated cell", row);
    seen[*i] = 1;
    values[*i] = h;
  }
  return HeightField(std::move(domain), std::move(values));
}

}  // namespace icelab
