#pragma once

#include <vector>

#include "icelab/heightfield.hpp"
#include "icelab/lattice.hpp"
#include "icelab/sampler.hpp"

namespace testing {

/// 64 fields from a lane ensemble on D_N after `sweeps` sweeps.
inline std::vector<icelab::HeightField> lane_fields(int N, std::uint64_t seed, std::int64_t sweeps) {
  auto d = icelab::build_even_domain({0, 0}, N);
  icelab::LaneEnsemble e(d, icelab::BoundaryCondition::zero(*d), seed);
  e.sweeps(sweeps);
  std::vector<icelab::HeightField> out;
  for (int l = 0; l < icelab::LaneEnsemble::kLanes; ++l) out.push_back(e.lane_field(l));
  return out;
}

inline icelab::HeightField lane_field(int N, std::uint64_t seed, std::int64_t sweeps, int lane = 0) {
  auto d = icelab::build_even_domain({0, 0}, N);
  icelab::LaneEnsemble e(d, icelab::BoundaryCondition::zero(*d), seed);
  e.sweeps(sweeps);
  return e.lane_field(lane);
}

}  // namespace testing
