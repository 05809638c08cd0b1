#include "oracles.hpp"

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <stdexcept>

namespace oracle {

namespace {

bool parity_ok(int h, Vertex v) { return ((h - ((v.x + v.y) & 1)) & 1) == 0; }

}  // namespace

std::uint64_t count_by_transfer(const icelab::EvenDomain& d, int b) {
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < d.size(); ++i) rows[d.cell(i).y].push_back(i);
  for (auto& [y, cells] : rows) {
    std::sort(cells.begin(), cells.end(), [&](std::size_t a, std::size_t c) { return d.cell(a).x < d.cell(c).x; });
  }
  const int bound = d.radius() + 3 + std::abs(b);

  std::map<std::vector<int>, std::uint64_t> states{{{}, 1}};
  std::vector<std::size_t> prev_cells;
  for (const auto& [y, cells] : rows) {
    std::map<int, std::size_t> prev_pos;
    for (std::size_t k = 0; k < prev_cells.size(); ++k) prev_pos[d.cell(prev_cells[k]).x] = k;
    std::map<std::vector<int>, std::uint64_t> next;
    for (const auto& [prev, count] : states) {
      std::vector<int> row(cells.size());
      std::function<void(std::size_t)> fill = [&](std::size_t k) {
        if (k == cells.size()) {
          next[row] += count;
          return;
        }
        const Vertex v = d.cell(cells[k]);
        for (int h = -bound; h <= bound; ++h) {
          if (!parity_ok(h, v)) continue;
          if (d.is_boundary(cells[k]) && h != b) continue;
          if (k > 0 && d.cell(cells[k - 1]).x == v.x - 1 && std::abs(row[k - 1] - h) != 1) continue;
          if (auto it = prev_pos.find(v.x); it != prev_pos.end() && std::abs(prev[it->second] - h) != 1) continue;
          row[k] = h;
          fill(k + 1);
        }
      };
      fill(0);
    }
    states = std::move(next);
    prev_cells = cells;
  }
  std::uint64_t total = 0;
  for (const auto& [s, c] : states) total += c;
  return total;
}

std::vector<std::vector<int>> brute_force_fields(const icelab::EvenDomain& d) {
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.is_boundary(i)) free.push_back(i);
  }
  if (free.size() > 12) throw std::invalid_argument("brute_force_fields: too many interior cells");
  const int bound = d.radius() + 2;
  std::vector<int> h(d.size(), 0);
  std::vector<std::vector<int>> out;
  std::function<void(std::size_t)> rec = [&](std::size_t k) {
    if (k == free.size()) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        const Vertex v = d.cell(i);
        for (Vertex w : {Vertex{v.x + 1, v.y}, Vertex{v.x, v.y + 1}}) {
          if (auto j = d.find(w); j && std::abs(h[i] - h[*j]) != 1) return;
        }
      }
      out.push_back(h);
      return;
    }
    const Vertex v = d.cell(free[k]);
    for (int x = -bound; x <= bound; ++x) {
      if (!parity_ok(x, v)) continue;
      h[free[k]] = x;
      rec(k + 1);
    }
  };
  rec(0);
  return out;
}

std::vector<std::vector<Vertex>> diagonal_cycles(const icelab::EvenDomain& d, const std::vector<std::uint8_t>& allowed,
                                                 std::size_t cap) {
  std::vector<Vertex> vs;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (allowed[i] && ((d.cell(i).x + d.cell(i).y) & 1) == 0) vs.push_back(d.cell(i));
  }
  std::sort(vs.begin(), vs.end());
  const auto id = [&](Vertex v) -> int {
    auto it = std::lower_bound(vs.begin(), vs.end(), v);
    return it != vs.end() && *it == v ? static_cast<int>(it - vs.begin()) : -1;
  };
  std::vector<std::vector<int>> adj(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    for (int dx : {-1, 1}) {
      for (int dy : {-1, 1}) {
        const int j = id({vs[i].x + dx, vs[i].y + dy});
        if (j >= 0) adj[i].push_back(j);
      }
    }
  }
  std::vector<std::vector<Vertex>> out;
  std::vector<int> path;
  std::vector<std::uint8_t> on(vs.size(), 0);
  for (int s = 0; s < static_cast<int>(vs.size()); ++s) {
    std::function<void(int)> dfs = [&](int u) {
      for (int w : adj[static_cast<std::size_t>(u)]) {
        if (w == s && path.size() >= 4 && path[1] < path.back()) {
          std::vector<Vertex> c;
          for (int p : path) c.push_back(vs[static_cast<std::size_t>(p)]);
          out.push_back(std::move(c));
          if (out.size() > cap) throw std::length_error("diagonal_cycles: cap exceeded");
        }
        if (w <= s || on[static_cast<std::size_t>(w)]) continue;
        on[static_cast<std::size_t>(w)] = 1;
        path.push_back(w);
        dfs(w);
        path.pop_back();
        on[static_cast<std::size_t>(w)] = 0;
      }
    };
    path = {s};
    on[static_cast<std::size_t>(s)] = 1;
    dfs(s);
    on[static_cast<std::size_t>(s)] = 0;
  }
  return out;
}

bool encloses(const std::vector<Vertex>& poly, Vertex p) {
  // Winding number by signed upward/downward crossings of the horizontal line.
  int wn = 0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vertex a = poly[i];
    const Vertex b = poly[(i + 1) % n];
    const std::int64_t side = static_cast<std::int64_t>(b.x - a.x) * (p.y - a.y) -
                              static_cast<std::int64_t>(p.x - a.x) * (b.y - a.y);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0) ++wn;
    } else if (b.y <= p.y && side < 0) {
      --wn;
    }
  }
  return wn != 0;
}

std::int64_t twice_area(const std::vector<Vertex>& poly) {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vertex a = poly[i];
    const Vertex b = poly[(i + 1) % poly.size()];
    s += static_cast<std::int64_t>(a.x) * b.y - static_cast<std::int64_t>(b.x) * a.y;
  }
  return s;
}

std::optional<std::set<Vertex>> outermost_by_cycles(const icelab::EvenDomain& d,
                                                    const std::vector<std::uint8_t>& allowed, Vertex target) {
  std::optional<std::set<Vertex>> best;
  std::int64_t best_area = -1;
  for (const auto& c : diagonal_cycles(d, allowed)) {
    if (std::find(c.begin(), c.end(), target) != c.end()) continue;
    if (!encloses(c, target)) continue;
    const std::int64_t a = std::llabs(twice_area(c));
    if (a > best_area) {
      best_area = a;
      best = std::set<Vertex>(c.begin(), c.end());
    }
  }
  return best;
}

Rational ballot_by_paths(const std::vector<int>& support, const std::vector<std::int64_t>& weights, int n) {
  using boost::multiprecision::cpp_int;
  cpp_int total = 0;
  for (auto w : weights) total += w;
  cpp_int favourable = 0;
  std::function<void(int, std::int64_t, cpp_int)> walk = [&](int step, std::int64_t pos, cpp_int w) {
    if (step == n - 1) {
      favourable += w;
      return;
    }
    for (std::size_t k = 0; k < support.size(); ++k) {
      const std::int64_t q = pos + support[k];
      if (q > 0) walk(step + 1, q, w * weights[k]);
    }
  };
  walk(0, 0, 1);
  cpp_int denom = 1;
  for (int i = 0; i + 1 < n; ++i) denom *= total;
  return Rational(favourable, denom);
}

}  // namespace oracle
