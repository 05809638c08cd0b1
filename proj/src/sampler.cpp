#include "icelab/sampler.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

#include "icelab/error.hpp"
#include "icelab/stats.hpp"

namespace icelab {

void RunSpec::check() const {
  if (burn_in_sweeps < 0 || thinning_sweeps < 0 || n_samples < 1) {
    throw InvalidArgument("RunSpec: sweeps must be nonnegative and n_samples >= 1");
  }
}

std::vector<std::size_t> free_sites(const EvenDomain& domain, const BoundaryCondition& bc) {
  const auto dense = bc.densify(domain);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    if (!dense.fixed[i]) out.push_back(i);
  }
  return out;
}

HeightField heat_bath_update(HeightField field, Vertex v, bool u) {
  const auto& d = field.domain();
  const std::size_t i = d.index_of(v);
  if (d.is_boundary(i)) throw InvalidArgument("heat_bath_update: boundary vertices are fixed");
  Height lo = std::numeric_limits<Height>::min();
  Height hi = std::numeric_limits<Height>::max();
  for (auto j : d.neighbor_indices(i)) {
    if (j < 0) continue;
    lo = std::max(lo, field[static_cast<std::size_t>(j)] - 1);
    hi = std::min(hi, field[static_cast<std::size_t>(j)] + 1);
  }
  if (lo > hi || ((hi - lo) != 0 && (hi - lo) != 2)) {
    throw InvalidArgument("heat_bath_update: neighbors admit no value");
  }
  heat_bath_update_at(d, field.values(), i, u);
  return field;
}

GlauberChain::GlauberChain(HeightField start, const BoundaryCondition& bc, std::uint64_t seed)
    : field_(std::move(start)), free_(icelab::free_sites(field_.domain(), bc)), bits_(seed) {}

void GlauberChain::sweep() {
  const auto& d = field_.domain();
  auto h = field_.values();
  for (std::size_t i : free_) heat_bath_update_at(d, h, i, bits_.next());
  ++sweep_count_;
}

void glauber_run(const DomainPtr& domain, const BoundaryCondition& bc, const RunSpec& spec,
                 const FieldSink& sink) {
  spec.check();
  GlauberChain chain(extremal_field(domain, bc, Extremum::max), bc,
                     derive_chain_seed(spec.seed, spec.chain_id));
  chain.sweeps(spec.burn_in_sweeps);
  for (std::int64_t s = 0; s < spec.n_samples; ++s) {
    chain.sweeps(spec.thinning_sweeps);
    sink(chain.field());
  }
}

std::vector<HeightField> glauber_run(const DomainPtr& domain, const BoundaryCondition& bc,
                                     const RunSpec& spec) {
  std::vector<HeightField> out;
  out.reserve(static_cast<std::size_t>(spec.n_samples));
  glauber_run(domain, bc, spec, [&](const HeightField& f) { out.push_back(f); });
  return out;
}

void coupled_glauber_run(const DomainPtr& domain, const BoundaryCondition& bc_low,
                         const BoundaryCondition& bc_high, const RunSpec& spec,
                         const std::function<void(const HeightField&, const HeightField&)>& sink) {
  spec.check();
  if (!bc_low.dominated_by(bc_high)) {
    throw InvalidArgument("coupled_glauber_run: need bc_low <= bc_high on a common support");
  }
  HeightField low = extremal_field(domain, bc_low, Extremum::max);
  HeightField high = extremal_field(domain, bc_high, Extremum::max);
  const auto free = free_sites(*domain, bc_low);
  BitStream bits(derive_chain_seed(spec.seed, spec.chain_id));
  auto sweep = [&] {
    for (std::size_t i : free) {
      const bool u = bits.next();
      heat_bath_update_at(*domain, low.values(), i, u);
      heat_bath_update_at(*domain, high.values(), i, u);
    }
  };
  for (std::int64_t s = 0; s < spec.burn_in_sweeps; ++s) sweep();
  for (std::int64_t n = 0; n < spec.n_samples; ++n) {
    for (std::int64_t s = 0; s < spec.thinning_sweeps; ++s) sweep();
    if (!pointwise_leq(low, high)) throw std::logic_error("monotone coupling lost its order");
    sink(low, high);
  }
}

CftpResult cftp_sample(const DomainPtr& domain, const BoundaryCondition& bc, std::uint64_t seed,
                       const CftpOptions& options) {
  const HeightField top = extremal_field(domain, bc, Extremum::max);
  const HeightField bottom = extremal_field(domain, bc, Extremum::min);
  const auto free = free_sites(*domain, bc);
  const auto& d = *domain;
  auto sweep_at = [&](HeightField& hi, HeightField& lo, std::int64_t t) {
    std::uint64_t word = 0;
    for (std::size_t pos = 0; pos < free.size(); ++pos) {
      if (pos % 64 == 0) word = counter_word(seed, static_cast<std::uint64_t>(t), pos / 64);
      const bool u = ((word >> (pos % 64)) & 1U) != 0;
      heat_bath_update_at(d, hi.values(), free[pos], u);
      heat_bath_update_at(d, lo.values(), free[pos], u);
    }
  };
  for (std::int64_t horizon = 1;; horizon *= 2) {
    HeightField hi = top;
    HeightField lo = bottom;
    for (std::int64_t t = horizon; t >= 1; --t) sweep_at(hi, lo, t);
    if (hi == lo) return {std::move(hi), horizon};
    if (horizon * 2 > options.max_sweeps) {
      throw NotCoalesced("cftp_sample: no coalescence within " + std::to_string(options.max_sweeps) +
                         " sweeps");
    }
  }
}

std::uint64_t for_each_extension(const DomainPtr& domain, const BoundaryCondition& bc,
                                 const std::function<void(const HeightField&)>& visit,
                                 std::uint64_t cap) {
  const auto& d = *domain;
  HeightField hi, lo;
  try {
    hi = extremal_field(domain, bc, Extremum::max);
    lo = extremal_field(domain, bc, Extremum::min);
  } catch (const InadmissibleBoundary&) {
    return 0;
  }
  const auto dense = bc.densify(d);
  // Breadth-first order from the fixed cells, so each free cell after the
  // first has an assigned neighbor when it is reached.
  std::vector<std::size_t> order;
  std::vector<std::uint8_t> queued(d.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (dense.fixed[i]) {
      queued[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    auto i = queue.front();
    queue.pop_front();
    if (!dense.fixed[i]) order.push_back(i);
    for (auto j : d.neighbor_indices(i)) {
      if (j >= 0 && !queued[static_cast<std::size_t>(j)]) {
        queued[static_cast<std::size_t>(j)] = 1;
        queue.push_back(static_cast<std::size_t>(j));
      }
    }
  }

  HeightField work = lo;
  std::vector<std::uint8_t> assigned(dense.fixed);
  std::uint64_t count = 0;
  bool stop = false;
  std::function<void(std::size_t)> descend = [&](std::size_t depth) {
    if (stop) return;
    if (depth == order.size()) {
      ++count;
      if (count > cap) {
        stop = true;
        return;
      }
      visit(work);
      return;
    }
    const std::size_t i = order[depth];
    for (Height value = lo[i]; value <= hi[i]; value += 2) {
      bool ok = true;
      for (auto j : d.neighbor_indices(i)) {
        if (j < 0 || !assigned[static_cast<std::size_t>(j)]) continue;
        const Height diff = value - work[static_cast<std::size_t>(j)];
        if (diff != 1 && diff != -1) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      work[i] = value;
      assigned[i] = 1;
      descend(depth + 1);
      assigned[i] = 0;
      if (stop) return;
    }
  };
  descend(0);
  return count;
}

std::vector<HeightField> enumerate_uniform(const DomainPtr& domain, const BoundaryCondition& bc,
                                           std::uint64_t cap) {
  std::vector<HeightField> out;
  const auto count = for_each_extension(
      domain, bc, [&](const HeightField& f) { out.push_back(f); }, cap);
  if (count > cap) {
    throw TooLarge("enumerate_uniform: more than " + std::to_string(cap) + " extensions");
  }
  return out;
}

// ---------------------------------------------------------------------------
// LaneEnsemble

LaneEnsemble::LaneEnsemble(DomainPtr domain, const BoundaryCondition& bc, std::uint64_t seed)
    : domain_(std::move(domain)), rng_(seed) {
  const auto& d = *domain_;
  const auto dense = bc.densify(d);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if ((dense.fixed[i] != 0) != d.is_boundary(i)) {
      throw InvalidArgument("LaneEnsemble: boundary condition must fix exactly the boundary circuit");
    }
  }
  const HeightField start = extremal_field(domain_, bc, Extremum::max);

  side_ = d.box_side() + 2;
  origin_ = d.box_origin() - Vertex{1, 1};
  words_.assign(static_cast<std::size_t>(side_) * side_, 0);
  canvas_of_cell_.resize(d.size());
  anchor_value_.assign(d.size(), 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = canvas_index(d.cell(i));
    canvas_of_cell_[i] = static_cast<std::int32_t>(c);
    const Height level = (start[i] - parity(d.cell(i))) / 2;
    words_[c] = (level & 1) ? ~std::uint64_t{0} : 0;
    if (d.is_boundary(i)) anchor_value_[i] = start[i];
  }
  for (int p = 0; p < 2; ++p) {
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d.is_boundary(i) && parity(d.cell(i)) == p) sites_.push_back(canvas_of_cell_[i]);
    }
  }
  parent_.assign(d.size(), -1);
  std::vector<std::uint8_t> seen(d.size(), 0);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.is_boundary(i)) {
      seen[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    auto i = queue.front();
    queue.pop_front();
    order_.push_back(static_cast<std::int32_t>(i));
    for (auto j : d.neighbor_indices(i)) {
      if (j >= 0 && !seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        parent_[static_cast<std::size_t>(j)] = static_cast<std::int32_t>(i);
        queue.push_back(static_cast<std::size_t>(j));
      }
    }
  }
}

std::size_t LaneEnsemble::canvas_index(Vertex v) const {
  return static_cast<std::size_t>(v.y - origin_.y) * static_cast<std::size_t>(side_) +
         static_cast<std::size_t>(v.x - origin_.x);
}

void LaneEnsemble::sweep() {
  std::uint64_t* w = words_.data();
  const std::ptrdiff_t stride = side_;
  for (const std::int32_t idx : sites_) {
    const std::uint64_t e = w[idx + 1];
    const std::uint64_t n = w[idx + stride];
    const std::uint64_t west = w[idx - 1];
    const std::uint64_t s = w[idx - stride];
    const std::uint64_t agree = ~((e ^ n) | (e ^ west) | (e ^ s));
    w[idx] = (w[idx] & ~agree) | (rng_() & agree);
  }
  ++sweep_count_;
}

namespace {

// Height of a cell given its parent's height and the cell's lane bit.
inline Height step_from(Height parent_h, int cell_parity, unsigned bit) {
  const int residue = cell_parity + 2 * static_cast<int>(bit);
  const int diff = ((residue - parent_h) % 4 + 4) % 4;
  return parent_h + (diff == 1 ? 1 : -1);
}

}  // namespace

HeightField LaneEnsemble::lane_field(int lane) const {
  const auto& d = *domain_;
  std::vector<Height> h(d.size(), 0);
  for (const auto i : order_) {
    const auto ui = static_cast<std::size_t>(i);
    if (parent_[ui] < 0) {
      h[ui] = anchor_value_[ui];
      continue;
    }
    const unsigned bit = (words_[static_cast<std::size_t>(canvas_of_cell_[ui])] >> lane) & 1U;
    h[ui] = step_from(h[static_cast<std::size_t>(parent_[ui])], parity(d.cell(ui)), bit);
  }
  return HeightField(domain_, std::move(h));
}

std::array<Height, LaneEnsemble::kLanes> LaneEnsemble::heights_at(std::size_t i) const {
  const auto& d = *domain_;
  std::vector<std::size_t> path;
  for (auto c = static_cast<std::int32_t>(i); c >= 0; c = parent_[static_cast<std::size_t>(c)]) {
    path.push_back(static_cast<std::size_t>(c));
  }
  std::array<Height, kLanes> out{};
  for (int lane = 0; lane < kLanes; ++lane) {
    Height h = anchor_value_[path.back()];
    for (auto it = path.rbegin() + 1; it != path.rend(); ++it) {
      const unsigned bit = (words_[static_cast<std::size_t>(canvas_of_cell_[*it])] >> lane) & 1U;
      h = step_from(h, parity(d.cell(*it)), bit);
    }
    out[static_cast<std::size_t>(lane)] = h;
  }
  return out;
}

Calibration calibrate_mixing(const DomainPtr& domain, const BoundaryCondition& bc, std::uint64_t seed,
                             std::int64_t initial_pilot_sweeps) {
  const auto& d = *domain;
  const std::size_t center = d.index_of(d.center());
  if (d.is_boundary(center)) throw InvalidArgument("calibrate_mixing: domain has no interior");
  constexpr std::int64_t kMaxPilot = std::int64_t{1} << 22;
  constexpr std::size_t kMaxRecords = 4096;

  LaneEnsemble ensemble(domain, bc, seed);
  std::int64_t pilot = std::max<std::int64_t>(initial_pilot_sweeps, 16);
  std::int64_t stride = 1;
  // Records of h(center) per lane, one every `stride` sweeps.
  std::vector<std::vector<double>> records(LaneEnsemble::kLanes);
  for (;;) {
    while (ensemble.sweep_count() < pilot) {
      ensemble.sweep();
      if (ensemble.sweep_count() % stride == 0) {
        const auto h = ensemble.heights_at(center);
        for (int lane = 0; lane < LaneEnsemble::kLanes; ++lane) {
          records[static_cast<std::size_t>(lane)].push_back(h[static_cast<std::size_t>(lane)]);
        }
      }
    }
    const std::size_t half = records.front().size() / 2;
    std::vector<std::vector<double>> tail(records.size()), tail_sq(records.size());
    for (std::size_t lane = 0; lane < records.size(); ++lane) {
      tail[lane].assign(records[lane].begin() + static_cast<std::ptrdiff_t>(half), records[lane].end());
      for (double x : tail[lane]) tail_sq[lane].push_back(x * x);
    }
    const double tau_records =
        std::max(integrated_autocorrelation_time(tail), integrated_autocorrelation_time(tail_sq));
    const double tau = tau_records * static_cast<double>(stride);
    if (static_cast<double>(pilot) / 2.0 >= 100.0 * tau || pilot >= kMaxPilot) {
      Calibration c;
      c.iat_sweeps = tau;
      c.pilot_sweeps = pilot;
      c.thinning_sweeps = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(5.0 * tau)));
      c.burn_in_sweeps = std::max<std::int64_t>(pilot / 2, static_cast<std::int64_t>(std::ceil(20.0 * tau)));
      return c;
    }
    pilot *= 2;
    if (records.front().size() >= kMaxRecords) {
      // Thin the stored history to keep the autocorrelation sums bounded.
      for (auto& r : records) {
        std::vector<double> kept;
        for (std::size_t k = 1; k < r.size(); k += 2) kept.push_back(r[k]);
        r = std::move(kept);
      }
      stride *= 2;
    }
  }
}

}  // namespace icelab
