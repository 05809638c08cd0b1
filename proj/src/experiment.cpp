#include "icelab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "icelab/error.hpp"
#include "icelab/heightfield.hpp"
#include "icelab/lattice.hpp"
#include "icelab/loops.hpp"
#include "icelab/martingale.hpp"
#include "icelab/rng.hpp"
#include "icelab/sampler.hpp"
#include "icelab/stats.hpp"

namespace icelab {

namespace {

const std::vector<std::pair<ExperimentKind, std::string>>& kind_names() {
  static const std::vector<std::pair<ExperimentKind, std::string>> names{
      {ExperimentKind::uniformity, "uniformity"},
      {ExperimentKind::variance, "variance"},
      {ExperimentKind::clt, "clt"},
      {ExperimentKind::rsw, "rsw"},
      {ExperimentKind::loops, "loops"},
      {ExperimentKind::fkg, "fkg"},
      {ExperimentKind::decoupling, "decoupling"},
      {ExperimentKind::coupling_failure, "coupling_failure"},
      {ExperimentKind::ballot, "ballot"},
      {ExperimentKind::multipoint, "multipoint"},
  };
  return names;
}

Json default_params(ExperimentKind kind) {
  Json p = Json::object();
  p["rounds_per_chain"] = 32;
  switch (kind) {
    case ExperimentKind::uniformity:
      p["max_fields"] = 1000000;
      break;
    case ExperimentKind::variance:
      p["max_rel_residual"] = 0.15;
      break;
    case ExperimentKind::clt:
      p["tv_max"] = 0.08;
      p["tv_trend_min_N"] = 16;
      break;
    case ExperimentKind::rsw:
      p["R"] = 6;
      p["rho"] = 4;
      p["k"] = 2;
      p["band"] = {0.02, 0.98};
      break;
    case ExperimentKind::loops:
      p["k"] = 4;
      p["c"] = 0.25;
      p["a"] = {1, 2, 3};
      p["alpha"] = 0.05;
      break;
    case ExperimentKind::fkg:
      p["block"] = 1;
      break;
    case ExperimentKind::decoupling:
      p["max_separation"] = 4;
      p["alpha"] = 0.05;
      break;
    case ExperimentKind::coupling_failure:
      p["r_out_fraction"] = 0.5;
      p["r_in_fractions"] = {0.25, 0.125, 0.0625};
      p["alpha"] = 0.05;
      break;
    case ExperimentKind::ballot:
      p.erase("rounds_per_chain");
      p["n_max"] = 64;
      p["enumerate_max"] = 12;
      p["band_ratio_max"] = 4.0;
      p["steps"] = Json::array({Json{{"support", {-1, 1}}, {"weights", {1, 1}}},
                                Json{{"support", {-2, 2}}, {"weights", {1, 1}}},
                                Json{{"support", {-2, 1}}, {"weights", {1, 2}}}});
      break;
    case ExperimentKind::multipoint:
      p["tv_max"] = 0.08;
      p["alpha"] = 0.05;
      break;
  }
  return p;
}

template <class T>
T param(const Json& params, const char* key) {
  try {
    return params.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("params.") + key + ": " + e.what());
  }
}

int rounds_per_chain(const Json& params) { return param<int>(params, "rounds_per_chain"); }

Vertex resolve_target(const std::array<double, 2>& t, int N) {
  return {static_cast<std::int32_t>(std::lround(t[0] * N)), static_cast<std::int32_t>(std::lround(t[1] * N))};
}

bool is_interior(const EvenDomain& d, Vertex v) {
  const auto i = d.find(v);
  return i && !d.is_boundary(*i);
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kind_names()) {
    if (k == kind) return name;
  }
  throw InvalidArgument("to_string: unknown experiment");
}

ExperimentKind parse_experiment(const std::string& name) {
  for (const auto& [k, n] : kind_names()) {
    if (n == name) return k;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

const std::vector<ExperimentKind>& all_experiments() {
  static const std::vector<ExperimentKind> kinds = [] {
    std::vector<ExperimentKind> v;
    for (const auto& kn : kind_names()) v.push_back(kn.first);
    return v;
  }();
  return kinds;
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  c.params = default_params(kind);
  c.targets = {{0.0, 0.0}};
  switch (kind) {
    case ExperimentKind::uniformity:
      c.N_list = {1};
      c.samples_per_N = 100000;
      break;
    case ExperimentKind::variance:
      c.N_list = {8, 16, 32, 64};
      c.samples_per_N = 10000;
      break;
    case ExperimentKind::clt:
      c.N_list = {16, 32, 64};
      c.samples_per_N = 20000;
      break;
    case ExperimentKind::rsw:
      c.N_list = {48, 96, 192};
      c.samples_per_N = 5000;
      break;
    case ExperimentKind::loops:
    case ExperimentKind::decoupling:
    case ExperimentKind::coupling_failure:
      c.N_list = {64};
      c.samples_per_N = 10000;
      break;
    case ExperimentKind::fkg:
      c.N_list = {32};
      c.samples_per_N = 10000;
      c.targets = {{-0.25, 0.0}, {0.25, 0.0}};
      break;
    case ExperimentKind::ballot:
      c.N_list = {};
      c.samples_per_N = 1;
      c.targets = {};
      break;
    case ExperimentKind::multipoint:
      c.N_list = {16, 64};
      c.samples_per_N = 10000;
      c.targets = {{-0.25, 0.0}, {0.25, 0.0}};
      break;
  }
  return c;
}

namespace {

std::optional<std::int64_t> auto_or_int(const Json& v, const char* key) {
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return std::nullopt;
    throw ConfigError(std::string(key) + ": expected an integer or \"auto\"");
  }
  if (!v.is_number_integer()) throw ConfigError(std::string(key) + ": expected an integer or \"auto\"");
  return v.get<std::int64_t>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("experiment")) throw ConfigError("config: missing 'experiment'");
  if (!j["experiment"].is_string()) throw ConfigError("experiment: expected a string");
  ExperimentConfig c = defaults(parse_experiment(j["experiment"].get<std::string>()));
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "experiment") {
        continue;
      } else if (key == "N_list") {
        c.N_list = v.get<std::vector<int>>();
      } else if (key == "samples_per_N") {
        c.samples_per_N = v.get<std::int64_t>();
      } else if (key == "seed") {
        if (!v.is_number_integer()) throw ConfigError("seed: expected an integer");
        c.seed = v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(v.get<std::int64_t>());
      } else if (key == "workers") {
        c.workers = v.get<int>();
      } else if (key == "sampler") {
        const auto s = v.get<std::string>();
        if (s == "glauber") {
          c.sampler = SamplerKind::glauber;
        } else if (s == "cftp") {
          c.sampler = SamplerKind::cftp;
        } else {
          throw ConfigError("sampler: expected glauber or cftp");
        }
      } else if (key == "burn_in") {
        c.burn_in = auto_or_int(v, "burn_in");
      } else if (key == "thinning") {
        c.thinning = auto_or_int(v, "thinning");
      } else if (key == "targets") {
        c.targets = v.get<std::vector<std::array<double, 2>>>();
      } else if (key == "output_dir") {
        c.output_dir = v.get<std::string>();
      } else if (key == "params") {
        if (!v.is_object()) throw ConfigError("params: expected an object");
        for (const auto& [pk, pv] : v.items()) {
          if (!c.params.contains(pk)) throw ConfigError("params: unknown key '" + pk + "'");
          c.params[pk] = pv;
        }
      } else {
        throw ConfigError("config: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

Json ExperimentConfig::to_json() const {
  Json j;
  j["experiment"] = to_string(experiment);
  j["N_list"] = N_list;
  j["samples_per_N"] = samples_per_N;
  j["seed"] = seed;
  j["workers"] = workers;
  j["sampler"] = sampler == SamplerKind::cftp ? "cftp" : "glauber";
  j["burn_in"] = burn_in ? Json(*burn_in) : Json("auto");
  j["thinning"] = thinning ? Json(*thinning) : Json("auto");
  j["targets"] = targets;
  j["output_dir"] = output_dir.string();
  j["params"] = params;
  return j;
}

void ExperimentConfig::validate() const {
  if (samples_per_N < 1) throw ConfigError("samples_per_N must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (burn_in && *burn_in < 0) throw ConfigError("burn_in must be >= 0");
  if (thinning && *thinning < 1) throw ConfigError("thinning must be >= 1");
  const Json defaults_p = default_params(experiment);
  for (const auto& [k, v] : params.items()) {
    if (!defaults_p.contains(k)) throw ConfigError("params: unknown key '" + k + "'");
  }
  if (experiment == ExperimentKind::ballot) {
    const int n_max = param<int>(params, "n_max");
    if (n_max < 5) throw ConfigError("params.n_max must be >= 5");
    if (param<int>(params, "enumerate_max") > 20) throw ConfigError("params.enumerate_max must be <= 20");
    try {
      for (const auto& s : params.at("steps")) {
        StepDistribution(s.at("support").get<std::vector<int>>(), s.at("weights").get<std::vector<std::int64_t>>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("params.steps: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("params.steps: ") + e.what());
    }
    return;
  }
  if (N_list.empty()) throw ConfigError("N_list must not be empty");
  if (rounds_per_chain(params) < 1) throw ConfigError("params.rounds_per_chain must be >= 1");
  std::set<int> seen;
  for (int N : N_list) {
    if (N < 1) throw ConfigError("every N must be >= 1");
    if (!seen.insert(N).second) throw ConfigError("N_list has a repeated entry");
    if (experiment != ExperimentKind::uniformity && N < 2) throw ConfigError("this experiment needs N >= 2");
  }
  const int max_N = *std::max_element(N_list.begin(), N_list.end());
  if (sampler == SamplerKind::cftp && max_N > 12) throw ConfigError("cftp is allowed only for max(N_list) <= 12");
  if (targets.empty()) throw ConfigError("targets must not be empty");
  if (experiment == ExperimentKind::fkg && targets.size() != 2) throw ConfigError("fkg needs exactly two targets");
  if (experiment == ExperimentKind::multipoint && targets.size() < 2) throw ConfigError("multipoint needs two or more targets");
  for (int N : N_list) {
    const auto d = build_even_domain({0, 0}, N);
    std::vector<Vertex> resolved;
    for (const auto& t : targets) {
      const Vertex v = resolve_target(t, N);
      if (!is_interior(*d, v)) throw ConfigError("target outside the interior of D_" + std::to_string(N));
      resolved.push_back(v);
    }
    if (experiment == ExperimentKind::multipoint) {
      try {
        separation_scale(resolved, N);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("targets: ") + e.what());
      }
    }
    if (experiment == ExperimentKind::rsw) {
      const int R = param<int>(params, "R");
      const int rho = param<int>(params, "rho");
      if (R < 2 || N % R != 0) throw ConfigError("rsw: every N must be a multiple of params.R >= 2");
      const int n = N / R;
      if (rho < 1 || rho * n >= N) throw ConfigError("rsw: the rectangle must fit strictly inside D_N");
    }
    if (experiment == ExperimentKind::loops) {
      const int k = param<int>(params, "k");
      const auto as = param<std::vector<int>>(params, "a");
      if (k < 1 || as.size() < 2) throw ConfigError("loops: need k >= 1 and two or more values of a");
      for (int a : as) {
        if (a < 1 || (static_cast<std::int64_t>(k) << a) > N) throw ConfigError("loops: k * 2^a must not exceed N");
      }
    }
    if (experiment == ExperimentKind::coupling_failure) {
      const auto fr = param<std::vector<double>>(params, "r_in_fractions");
      const int r_out = static_cast<int>(std::lround(param<double>(params, "r_out_fraction") * N));
      if (fr.size() < 2) throw ConfigError("coupling_failure: need two or more inner radii");
      int prev = r_out;
      for (double f : fr) {
        const int r_in = static_cast<int>(std::lround(f * N));
        if (r_in < 1 || r_in >= prev) throw ConfigError("coupling_failure: inner radii must decrease below r_out");
        prev = r_in;
      }
      if (r_out > N) throw ConfigError("coupling_failure: r_out must not exceed N");
    }
  }
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

std::string field_key(const HeightField& f) {
  const auto& v = f.values();
  return std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(Height));
}

struct NContext {
  int N = 0;
  DomainPtr domain;
  BoundaryCondition bc;
  double iat = 0;
  std::int64_t burn_in = 0;
  std::int64_t thinning = 0;
  std::int64_t pilot = 0;
  std::vector<Vertex> targets;
  std::vector<std::size_t> target_cells;
  int m0 = 0;
  std::unordered_map<std::string, std::int64_t> field_index;
  Region rect;
  std::vector<std::pair<int, int>> annuli;  // (r_in, r_out)
  std::vector<Region> annulus_regions;
  std::vector<std::vector<std::size_t>> blocks;
};

NContext prepare(const ExperimentConfig& c, int N) {
  NContext ctx;
  ctx.N = N;
  ctx.domain = build_even_domain({0, 0}, N);
  ctx.bc = BoundaryCondition::zero(*ctx.domain);
  for (const auto& t : c.targets) {
    ctx.targets.push_back(resolve_target(t, N));
    ctx.target_cells.push_back(*ctx.domain->find(ctx.targets.back()));
  }
  const auto& p = c.params;
  switch (c.experiment) {
    case ExperimentKind::uniformity: {
      const auto cap = param<std::uint64_t>(p, "max_fields");
      std::int64_t next = 0;
      try {
        for_each_extension(
            ctx.domain, ctx.bc, [&](const HeightField& f) { ctx.field_index.emplace(field_key(f), next++); }, cap);
      } catch (const TooLarge&) {
        throw ConfigError("uniformity: D_" + std::to_string(N) + " has more than params.max_fields fields");
      }
      if (static_cast<std::uint64_t>(next) > cap) {
        throw ConfigError("uniformity: D_" + std::to_string(N) + " has more than params.max_fields fields");
      }
      break;
    }
    case ExperimentKind::rsw: {
      const int n = N / param<int>(p, "R");
      ctx.rect = rectangle_region(param<int>(p, "rho") * n, n);
      break;
    }
    case ExperimentKind::loops: {
      const int k = param<int>(p, "k");
      for (int a : param<std::vector<int>>(p, "a")) ctx.annuli.emplace_back(k, k << a);
      break;
    }
    case ExperimentKind::coupling_failure: {
      const int r_out = static_cast<int>(std::lround(param<double>(p, "r_out_fraction") * N));
      for (double f : param<std::vector<double>>(p, "r_in_fractions")) {
        const int r_in = static_cast<int>(std::lround(f * N));
        ctx.annuli.emplace_back(r_in, r_out);
        ctx.annulus_regions.push_back(annulus_region(ctx.targets[0], r_in, r_out));
      }
      break;
    }
    case ExperimentKind::fkg: {
      const int b = param<int>(p, "block");
      for (Vertex t : ctx.targets) {
        std::vector<std::size_t> cells;
        for (std::size_t i = 0; i < ctx.domain->size(); ++i) {
          if (chebyshev(ctx.domain->cell(i), t) <= b) cells.push_back(i);
        }
        ctx.blocks.push_back(std::move(cells));
      }
      break;
    }
    case ExperimentKind::multipoint:
      ctx.m0 = separation_scale(ctx.targets, N);
      break;
    default:
      break;
  }
  if (c.sampler == SamplerKind::glauber) {
    if (!c.burn_in || !c.thinning) {
      const auto cal = calibrate_mixing(ctx.domain, ctx.bc, derive_chain_seed(c.seed, 0xca11b000ULL + static_cast<std::uint64_t>(N)));
      ctx.iat = cal.iat_sweeps;
      ctx.pilot = cal.pilot_sweeps;
      ctx.burn_in = cal.burn_in_sweeps;
      ctx.thinning = cal.thinning_sweeps;
    }
    if (c.burn_in) ctx.burn_in = *c.burn_in;
    if (c.thinning) ctx.thinning = *c.thinning;
  }
  return ctx;
}

Json profile_json(const MartingaleProfile& p) {
  Json j;
  j["deltas"] = p.deltas;
  j["truncated"] = p.truncated;
  j["flags"] = p.flags;
  j["residual"] = p.residual;
  return j;
}

Json observe(const ExperimentConfig& c, const NContext& ctx, const HeightField& f) {
  Json j = Json::object();
  std::vector<Height> phi;
  for (std::size_t i : ctx.target_cells) phi.push_back(f[i]);
  j["phi_at_targets"] = phi;
  const auto& p = c.params;
  switch (c.experiment) {
    case ExperimentKind::uniformity: {
      const auto it = ctx.field_index.find(field_key(f));
      if (it == ctx.field_index.end()) throw std::logic_error("uniformity: sampled field not in the enumeration");
      j["field_index"] = it->second;
      break;
    }
    case ExperimentKind::variance:
    case ExperimentKind::clt:
    case ExperimentKind::decoupling:
      j["profiles"] = Json::array({profile_json(profile(f, ctx.targets[0], ctx.N))});
      break;
    case ExperimentKind::multipoint: {
      const auto mp = multipoint_profiles(f, ctx.targets, ctx.N);
      j["m0"] = mp.m0;
      Json arr = Json::array();
      for (const auto& pr : mp.profiles) arr.push_back(profile_json(pr));
      j["profiles"] = arr;
      break;
    }
    case ExperimentKind::rsw: {
      const int n = ctx.N / param<int>(p, "R");
      const auto k = static_cast<Height>(param<int>(p, "k"));
      Json ev;
      ev["n"] = n;
      ev["crossing_geq"] = crossing_geq(f, ctx.rect, k);
      ev["crossing_eq_cross"] = crossing_eq_cross(f, ctx.rect, k);
      ev["G"] = annulus_loop_event(f, n);
      j["event_flags"] = ev;
      break;
    }
    case ExperimentKind::loops: {
      const auto fam = extract_loop_family(f, ctx.targets[0]);
      Json arr = Json::array();
      for (const auto& [r_in, r_out] : ctx.annuli) {
        const auto cnt = count_in_annulus(fam, ctx.targets[0], r_in, r_out);
        arr.push_back(Json{{"r_in", r_in}, {"r_out", r_out}, {"contained", cnt.contained}, {"crossing", cnt.crossing}});
      }
      j["loop_counts"] = arr;
      break;
    }
    case ExperimentKind::coupling_failure: {
      Json arr = Json::array();
      for (std::size_t a = 0; a < ctx.annuli.size(); ++a) {
        const bool found = outermost_zero_loop(f, ctx.targets[0], ctx.annulus_regions[a]).has_value();
        arr.push_back(Json{{"r_in", ctx.annuli[a].first}, {"r_out", ctx.annuli[a].second}, {"failure", !found}});
      }
      j["event_flags"] = Json{{"coupling", arr}};
      break;
    }
    case ExperimentKind::fkg: {
      std::int64_t s[2] = {0, 0};
      std::int64_t a[2] = {0, 0};
      for (int t = 0; t < 2; ++t) {
        for (std::size_t i : ctx.blocks[static_cast<std::size_t>(t)]) {
          s[t] += f[i];
          a[t] += std::abs(f[i]);
        }
      }
      j["observables"] = Json{{"block_sum", {s[0], s[1]}}, {"block_abs_sum", {a[0], a[1]}}};
      break;
    }
    case ExperimentKind::ballot:
      break;
  }
  return j;
}

Json sample_header(const ExperimentConfig& c, const NContext& ctx, std::uint64_t chain_id, std::int64_t index,
                   std::uint64_t chain_seed) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["record_type"] = "sample";
  j["experiment"] = to_string(c.experiment);
  j["N"] = ctx.N;
  j["chain_id"] = chain_id;
  j["sample_index"] = index;
  j["seed"] = chain_seed;
  j["burn_in"] = ctx.burn_in;
  j["thinning"] = ctx.thinning;
  return j;
}

struct ChainTask {
  std::size_t n_index = 0;
  std::uint64_t chain_id = 0;
  std::int64_t count = 0;
};

std::vector<std::string> run_chain(const ExperimentConfig& c, const NContext& ctx, const ChainTask& task) {
  std::vector<std::string> lines;
  const std::uint64_t chain_seed = derive_chain_seed(c.seed, task.chain_id);
  auto emit = [&](std::int64_t index, const HeightField& f, std::int64_t sweeps) {
    Json j = sample_header(c, ctx, task.chain_id, index, chain_seed);
    j.update(observe(c, ctx, f));
    j["timing"] = Json{{"sweeps", sweeps}};
    lines.push_back(j.dump());
  };
  if (c.sampler == SamplerKind::cftp) {
    for (std::int64_t s = 0; s < task.count; ++s) {
      const auto r = cftp_sample(ctx.domain, ctx.bc, counter_word(chain_seed, static_cast<std::uint64_t>(s), 0));
      emit(s, r.field, r.sweeps);
    }
    return lines;
  }
  LaneEnsemble e(ctx.domain, ctx.bc, chain_seed);
  e.sweeps(ctx.burn_in);
  std::int64_t s = 0;
  while (s < task.count) {
    e.sweeps(ctx.thinning);
    for (int lane = 0; lane < LaneEnsemble::kLanes && s < task.count; ++lane, ++s) {
      emit(s, e.lane_field(lane), e.sweep_count());
    }
  }
  return lines;
}

Json run_header(const ExperimentConfig& c, const std::vector<NContext>& ctxs,
                const std::vector<std::int64_t>& chains) {
  Json cfg = c.to_json();
  cfg.erase("workers");
  cfg.erase("output_dir");
  Json runs = Json::array();
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    const auto& ctx = ctxs[i];
    Json r;
    r["N"] = ctx.N;
    r["iat_sweeps"] = ctx.iat;
    r["pilot_sweeps"] = ctx.pilot;
    r["burn_in"] = ctx.burn_in;
    r["thinning"] = ctx.thinning;
    Json ts = Json::array();
    for (Vertex v : ctx.targets) ts.push_back({v.x, v.y});
    r["targets"] = ts;
    r["chains"] = chains[i];
    runs.push_back(r);
  }
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["record_type"] = "run";
  j["experiment"] = to_string(c.experiment);
  j["config"] = cfg;
  j["runs"] = runs;
  return j;
}

std::string rational_string(const Rational& r) {
  std::ostringstream os;
  os << numerator(r) << "/" << denominator(r);
  return os.str();
}

Rational parse_rational(const std::string& s, std::size_t row) {
  const auto slash = s.find('/');
  if (slash == std::string::npos) throw FormatError("malformed rational '" + s + "'", row);
  try {
    const boost::multiprecision::cpp_int num(s.substr(0, slash));
    const boost::multiprecision::cpp_int den(s.substr(slash + 1));
    if (den <= 0) throw FormatError("malformed rational '" + s + "'", row);
    return Rational(num, den);
  } catch (const std::runtime_error&) {
    throw FormatError("malformed rational '" + s + "'", row);
  }
}

void write_ballot_records(const ExperimentConfig& c, std::ostream& os) {
  const int n_max = param<int>(c.params, "n_max");
  std::size_t step_index = 0;
  for (const auto& s : c.params.at("steps")) {
    const StepDistribution step(s.at("support").get<std::vector<int>>(), s.at("weights").get<std::vector<std::int64_t>>());
    for (int n = 1; n <= n_max; ++n) {
      const auto b = ballot_dp(step, n);
      Json j;
      j["schema_version"] = kSchemaVersion;
      j["record_type"] = "sample";
      j["experiment"] = "ballot";
      j["step_index"] = step_index;
      j["support"] = step.support();
      j["weights"] = s.at("weights");
      j["n"] = n;
      j["p_exact"] = b.exact ? Json(rational_string(b.rational)) : Json(nullptr);
      j["p"] = b.value();
      j["error_bound"] = b.error_bound;
      os << j.dump() << '\n';
    }
    ++step_index;
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create " + config.output_dir.string() + ": " + ec.message());
  const std::string name = to_string(config.experiment);
  ExperimentResult res;
  res.records = config.output_dir / (name + ".records.jsonl");
  res.summary = config.output_dir / (name + ".summary.csv");
  std::ofstream os(res.records, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + res.records.string() + " for writing");

  if (config.experiment == ExperimentKind::ballot) {
    Json cfg = config.to_json();
    cfg.erase("workers");
    cfg.erase("output_dir");
    os << Json{{"schema_version", kSchemaVersion}, {"record_type", "run"}, {"experiment", name},
               {"config", cfg}, {"runs", Json::array()}}
              .dump()
       << '\n';
    write_ballot_records(config, os);
  } else {
    std::vector<NContext> ctxs;
    for (int N : config.N_list) ctxs.push_back(prepare(config, N));
    const std::int64_t per_chain = static_cast<std::int64_t>(LaneEnsemble::kLanes) * rounds_per_chain(config.params);
    std::vector<ChainTask> tasks;
    std::vector<std::int64_t> chains;
    std::uint64_t chain_id = 0;
    for (std::size_t i = 0; i < ctxs.size(); ++i) {
      std::int64_t left = config.samples_per_N;
      std::int64_t count = 0;
      while (left > 0) {
        const std::int64_t take = std::min(left, per_chain);
        tasks.push_back({i, chain_id++, take});
        left -= take;
        ++count;
      }
      chains.push_back(count);
    }
    os << run_header(config, ctxs, chains).dump() << '\n';

    std::vector<std::vector<std::string>> results(tasks.size());
    std::vector<std::uint8_t> done(tasks.size(), 0);
    std::exception_ptr failure;
    std::mutex m;
    std::condition_variable cv;
    std::size_t next = 0;
    std::size_t written = 0;
    const std::size_t window = 2 * static_cast<std::size_t>(config.workers);
    auto worker = [&] {
      for (;;) {
        std::size_t i;
        {
          std::unique_lock lock(m);
          cv.wait(lock, [&] { return failure || next >= tasks.size() || next < written + window; });
          if (failure || next >= tasks.size()) return;
          i = next++;
        }
        std::vector<std::string> lines;
        std::exception_ptr err;
        try {
          lines = run_chain(config, ctxs[tasks[i].n_index], tasks[i]);
        } catch (...) {
          err = std::current_exception();
        }
        std::lock_guard lock(m);
        if (err && !failure) failure = err;
        results[i] = std::move(lines);
        done[i] = 1;
        cv.notify_all();
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < config.workers; ++w) pool.emplace_back(worker);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      std::vector<std::string> lines;
      {
        std::unique_lock lock(m);
        cv.wait(lock, [&] { return failure || done[i]; });
        if (failure) break;
        lines = std::move(results[i]);
      }
      for (const auto& l : lines) os << l << '\n';
      std::lock_guard lock(m);
      written = i + 1;
      cv.notify_all();
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  os.close();
  if (!os) throw IoError("failed writing " + res.records.string());

  res.rows = analyze(config.experiment, read_records(res.records));
  write_summary(res.summary, res.rows);
  res.exit_code = exit_code_for(res.rows);
  return res;
}

// ---------------------------------------------------------------------------
// Reading

std::vector<Json> read_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<Json> out;
  std::string line;
  std::size_t row = 0;
  bool seen_run = false;
  while (std::getline(is, line)) {
    ++row;
    if (is.eof()) throw FormatError("truncated file: last line has no newline", row);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw FormatError("unparseable record", row);
    }
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
      throw FormatError("record without schema_version", row);
    }
    if (j["schema_version"].get<int>() != kSchemaVersion) {
      throw FormatError("unsupported schema_version " + j["schema_version"].dump(), row);
    }
    const auto type = j.value("record_type", std::string());
    if (type == "run") {
      if (!j.contains("config") || !j.contains("runs") || !j.contains("experiment")) {
        throw FormatError("incomplete run record", row);
      }
      seen_run = true;
    } else if (type == "sample") {
      if (!seen_run) throw FormatError("sample before any run record", row);
      if (!j.contains("experiment")) throw FormatError("sample without experiment", row);
    } else {
      throw FormatError("unknown record_type", row);
    }
    j["_row"] = row;
    out.push_back(std::move(j));
  }
  if (is.bad()) throw IoError("failed reading " + path.string());
  if (!seen_run) throw FormatError("no run record", row);
  return out;
}

// ---------------------------------------------------------------------------
// Analysis

namespace {

SummaryRow info(int criterion, ExperimentKind kind, std::optional<int> N, std::string stat, double value,
                double se = 0, std::int64_t n = 0) {
  SummaryRow r;
  r.criterion = criterion;
  r.experiment = to_string(kind);
  r.N = N;
  r.statistic = std::move(stat);
  r.value = value;
  r.std_error = se;
  r.n = n;
  return r;
}

SummaryRow gated(int criterion, ExperimentKind kind, std::optional<int> N, std::string stat, double value,
                 double se, std::int64_t n, std::string gate, double threshold, bool pass) {
  SummaryRow r = info(criterion, kind, N, std::move(stat), value, se, n);
  r.gate = std::move(gate);
  r.threshold = threshold;
  r.pass = pass && !std::isnan(value);
  return r;
}

struct Samples {
  std::map<int, std::vector<const Json*>> by_N;
  Json params;
  std::map<int, Json> runs;  // per N, from the first header
};

template <class T>
T field_of(const Json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(std::string("bad or missing '") + key + "'", j.value("_row", std::size_t{0}));
  }
}

const Json& member(const Json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing '") + key + "'", j.value("_row", std::size_t{0}));
  return *it;
}

Samples collect(ExperimentKind kind, const std::vector<Json>& records) {
  Samples s;
  const std::string name = to_string(kind);
  bool first = true;
  for (const auto& j : records) {
    const auto row = j.value("_row", std::size_t{0});
    if (j.at("experiment") != name) {
      throw FormatError("record is for experiment " + j.at("experiment").dump() + ", not " + name, row);
    }
    if (j.at("record_type") == "run") {
      const auto& params = j.at("config").at("params");
      if (first) {
        s.params = params;
        first = false;
      } else if (params != s.params) {
        throw FormatError("run records with different params cannot be pooled", row);
      }
      for (const auto& r : j.at("runs")) {
        const int N = field_of<int>(r, "N");
        if (!s.runs.count(N)) s.runs[N] = r;
      }
    } else {
      if (kind == ExperimentKind::ballot) {
        s.by_N[0].push_back(&j);
      } else {
        const int N = field_of<int>(j, "N");
        if (!s.runs.count(N)) throw FormatError("sample for N without a run record", row);
        s.by_N[N].push_back(&j);
      }
    }
  }
  return s;
}

std::vector<double> phi_column(const std::vector<const Json*>& rs, std::size_t t) {
  std::vector<double> out;
  out.reserve(rs.size());
  for (const Json* j : rs) {
    const auto& a = member(*j, "phi_at_targets");
    if (!a.is_array() || a.size() <= t) throw FormatError("phi_at_targets too short", j->value("_row", std::size_t{0}));
    out.push_back(a[t].get<double>());
  }
  return out;
}

std::vector<std::int64_t> phi_int_column(const std::vector<const Json*>& rs, std::size_t t) {
  std::vector<std::int64_t> out;
  for (double v : phi_column(rs, t)) out.push_back(static_cast<std::int64_t>(v));
  return out;
}

struct ProfileView {
  std::vector<std::int64_t> deltas;
  std::vector<std::int64_t> truncated;
  std::vector<int> flags;
  std::int64_t residual = 0;
};

ProfileView profile_of(const Json& j, std::size_t t) {
  const auto row = j.value("_row", std::size_t{0});
  try {
    const auto& p = j.at("profiles").at(t);
    ProfileView v;
    v.deltas = p.at("deltas").get<std::vector<std::int64_t>>();
    v.truncated = p.at("truncated").get<std::vector<std::int64_t>>();
    v.flags = p.at("flags").get<std::vector<int>>();
    v.residual = p.at("residual").get<std::int64_t>();
    if (v.truncated.size() != v.deltas.size() || v.flags.size() != v.deltas.size()) {
      throw FormatError("profile arrays differ in length", row);
    }
    return v;
  } catch (const nlohmann::json::exception&) {
    throw FormatError("bad profile", row);
  }
}

void telescoping_rows(ExperimentKind kind, int N, const std::vector<const Json*>& rs, std::size_t n_targets,
                      std::vector<SummaryRow>& rows) {
  std::int64_t tele_fail = 0;
  std::int64_t parity_fail = 0;
  std::int64_t parity_checks = 0;
  std::int64_t tele_checks = 0;
  for (const Json* j : rs) {
    for (std::size_t t = 0; t < n_targets; ++t) {
      const auto p = profile_of(*j, t);
      std::int64_t sum = p.residual;
      for (auto d : p.deltas) {
        sum += d;
        ++parity_checks;
        if (d % 2 != 0) ++parity_fail;
      }
      ++tele_checks;
      if (sum != member(*j, "phi_at_targets").at(t).get<std::int64_t>()) ++tele_fail;
    }
  }
  rows.push_back(gated(4, kind, N, "telescoping_failures", static_cast<double>(tele_fail), 0, tele_checks, "== 0", 0,
                       tele_fail == 0));
  rows.push_back(gated(4, kind, N, "odd_delta_count", static_cast<double>(parity_fail), 0, parity_checks, "== 0", 0,
                       parity_fail == 0));
}

double tv_of(const std::vector<std::int64_t>& xs, std::uint64_t seed, double* ks = nullptr, double* sigma = nullptr) {
  try {
    const auto nd = normal_distance(xs, seed);
    if (ks) *ks = nd.ks_dithered;
    if (sigma) *sigma = nd.sigma;
    return nd.tv;
  } catch (const InvalidArgument&) {
    if (ks) *ks = std::nan("");
    if (sigma) *sigma = std::nan("");
    return std::nan("");
  }
}

constexpr std::uint64_t kDitherSeed = 0x7465737464697468ULL;

void analyze_uniformity(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::uniformity;
  for (const auto& [N, rs] : s.by_N) {
    const auto& run = s.runs.at(N);
    const auto d = build_even_domain({0, 0}, N);
    const auto bc = BoundaryCondition::zero(*d);
    const auto t = run.at("targets").at(0).get<std::array<int, 2>>();
    const auto cell = d->find({t[0], t[1]});
    if (!cell) throw FormatError("uniformity: target outside the domain");
    std::vector<double> target_values;
    for_each_extension(d, bc, [&](const HeightField& f) { target_values.push_back(f[*cell]); });
    const std::size_t M = target_values.size();
    Rational sum = 0;
    Rational sum2 = 0;
    for (double v : target_values) {
      sum += static_cast<std::int64_t>(v);
      sum2 += static_cast<std::int64_t>(v) * static_cast<std::int64_t>(v);
    }
    const Rational mean = sum / M;
    const Rational exact_var = sum2 / M - mean * mean;
    std::vector<std::uint64_t> counts(M, 0);
    for (const Json* j : rs) {
      const auto i = field_of<std::int64_t>(*j, "field_index");
      if (i < 0 || static_cast<std::size_t>(i) >= M) throw FormatError("field_index out of range", j->value("_row", std::size_t{0}));
      ++counts[static_cast<std::size_t>(i)];
    }
    const auto n = static_cast<std::int64_t>(rs.size());
    if (N == 1) {
      rows.push_back(gated(1, kind, N, "field_count", static_cast<double>(M), 0, 0, "== 18", 18, M == 18));
    } else {
      rows.push_back(info(1, kind, N, "field_count", static_cast<double>(M)));
    }
    const auto chi = M > 1 ? chi_square_uniform(counts) : TestResult{};
    rows.push_back(gated(1, kind, N, "chi_square_p", chi.p_value, 0, n, "> 0.001", 0.001, chi.p_value > 0.001));
    rows.push_back(info(1, kind, N, "chi_square_statistic", chi.statistic, 0, n));
    const auto phi = phi_column(rs, 0);
    const auto v = variance_estimate(phi);
    const double ev = exact_var.convert_to<double>();
    rows.push_back(info(1, kind, N, "exact_var_target", ev));
    rows.push_back(gated(1, kind, N, "var_target", v.value, v.std_error, n, "|x - exact| <= 3 se", ev,
                         std::abs(v.value - ev) <= 3 * v.std_error));
  }
}

void analyze_variance(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::variance;
  std::vector<std::pair<double, double>> points;
  std::vector<std::pair<int, EstimateWithError>> vars;
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    const auto v = variance_estimate(phi_column(rs, 0));
    rows.push_back(info(6, kind, N, "var_phi", v.value, v.std_error, n));
    rows.push_back(info(6, kind, N, "var_phi_over_lnN", v.value / std::log(N), v.std_error / std::log(N), n));
    vars.emplace_back(N, v);
    points.emplace_back(static_cast<double>(N), v.value);
    if (rs.size() >= 2) {
      std::vector<MartingaleProfile> profs;
      for (const Json* j : rs) {
        const auto pv = profile_of(*j, 0);
        MartingaleProfile mp;
        mp.N = N;
        mp.deltas.assign(pv.deltas.begin(), pv.deltas.end());
        profs.push_back(std::move(mp));
      }
      const auto sh = sigma_hat(profs);
      rows.push_back(info(6, kind, N, "sigma_hat_sq", sh.sigma * sh.sigma, 2 * sh.sigma * sh.std_error, n));
      for (std::size_t k = 0; k < sh.per_scale.size(); ++k) {
        rows.push_back(info(6, kind, N, "mean_delta_sq_k" + std::to_string(k + 1), sh.per_scale[k].value,
                            sh.per_scale[k].std_error, n));
      }
    }
    telescoping_rows(kind, N, rs, 1, rows);
  }
  double min_step = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < vars.size(); ++i) min_step = std::min(min_step, vars[i].second.value - vars[i - 1].second.value);
  if (vars.size() < 2) min_step = std::nan("");
  rows.push_back(gated(6, kind, std::nullopt, "min_var_increment", min_step, 0, static_cast<std::int64_t>(vars.size()),
                       "> 0", 0, min_step > 0));
  VarianceFit fit{std::nan(""), std::nan(""), std::nan("")};
  if (points.size() >= 3) fit = variance_fit(points);
  const double max_res = param<double>(s.params, "max_rel_residual");
  rows.push_back(gated(6, kind, std::nullopt, "slope_vs_lnN", fit.slope, 0, static_cast<std::int64_t>(points.size()),
                       "> 0", 0, fit.slope > 0));
  rows.push_back(info(6, kind, std::nullopt, "intercept", fit.intercept));
  rows.push_back(gated(6, kind, std::nullopt, "max_rel_residual", fit.max_rel_residual, 0,
                       static_cast<std::int64_t>(points.size()), "<= threshold", max_res, fit.max_rel_residual <= max_res));
}

void analyze_clt(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::clt;
  const double tv_max = param<double>(s.params, "tv_max");
  const int trend_min = param<int>(s.params, "tv_trend_min_N");
  std::vector<double> trend;
  double last_tv = std::nan("");
  int last_N = 0;
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    double ks = 0;
    double sigma = 0;
    const double tv = tv_of(phi_int_column(rs, 0), kDitherSeed ^ static_cast<std::uint64_t>(N), &ks, &sigma);
    rows.push_back(info(7, kind, N, "tv", tv, 0, n));
    rows.push_back(info(7, kind, N, "ks_dithered", ks, 0, n));
    rows.push_back(info(7, kind, N, "sigma", sigma, 0, n));
    if (N >= trend_min) trend.push_back(tv);
    last_tv = tv;
    last_N = N;
    telescoping_rows(kind, N, rs, 1, rows);
  }
  double worst = trend.size() >= 2 ? -std::numeric_limits<double>::infinity() : std::nan("");
  for (std::size_t i = 1; i < trend.size(); ++i) worst = std::max(worst, trend[i] - trend[i - 1]);
  rows.push_back(gated(7, kind, std::nullopt, "max_tv_increment", worst, 0, static_cast<std::int64_t>(trend.size()),
                       "< 0", 0, worst < 0));
  rows.push_back(gated(7, kind, last_N, "tv_at_max_N", last_tv, 0, 0, "<= threshold", tv_max, last_tv <= tv_max));
}

void analyze_rsw(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::rsw;
  const auto band = param<std::vector<double>>(s.params, "band");
  if (band.size() != 2) throw FormatError("rsw: params.band must have two entries");
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    for (const char* ev : {"crossing_geq", "crossing_eq_cross", "G"}) {
      double hits = 0;
      for (const Json* j : rs) {
        try {
          hits += j->at("event_flags").at(ev).get<bool>() ? 1 : 0;
        } catch (const nlohmann::json::exception&) {
          throw FormatError(std::string("missing event flag ") + ev, j->value("_row", std::size_t{0}));
        }
      }
      const double p = hits / static_cast<double>(n);
      const double se = std::sqrt(p * (1 - p) / static_cast<double>(n));
      const int small_n = N / param<int>(s.params, "R");
      rows.push_back(gated(8, kind, N, std::string("P_") + ev + "_n" + std::to_string(small_n), p, se, n,
                           "0.02 <= x <= 0.98 band", band[0], p >= band[0] && p <= band[1]));
    }
  }
}

void analyze_loops(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::loops;
  const double c = param<double>(s.params, "c");
  const auto as = param<std::vector<int>>(s.params, "a");
  const double alpha = param<double>(s.params, "alpha");
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    std::vector<std::vector<double>> ind(as.size());
    std::vector<std::int64_t> crossing_last;
    for (const Json* j : rs) {
      const auto& lc = j->at("loop_counts");
      if (!lc.is_array() || lc.size() != as.size()) throw FormatError("loop_counts has the wrong length", j->value("_row", std::size_t{0}));
      for (std::size_t a = 0; a < as.size(); ++a) {
        const auto contained = field_of<int>(lc[a], "contained");
        ind[a].push_back(contained < c * as[a] ? 1.0 : 0.0);
      }
      crossing_last.push_back(field_of<std::int64_t>(lc[as.size() - 1], "crossing"));
    }
    double worst = -std::numeric_limits<double>::infinity();
    double prev = std::nan("");
    for (std::size_t a = 0; a < as.size(); ++a) {
      const auto m = mean_estimate(ind[a]);
      rows.push_back(info(9, kind, N, "frac_contained_below_ca_a" + std::to_string(as[a]), m.value, m.std_error, n));
      if (a > 0) worst = std::max(worst, m.value - prev);
      prev = m.value;
    }
    rows.push_back(gated(9, kind, N, "max_frac_increment_in_a", worst, 0, n, "<= 0", 0, worst <= 0));
    std::vector<double> contrasts;
    for (std::size_t i = 0; i < ind.front().size(); ++i) contrasts.push_back(ind.back()[i] - ind.front()[i]);
    const auto t = paired_trend_negative(contrasts);
    rows.push_back(gated(9, kind, N, "trend_p", t.p_value, 0, n, "< alpha", alpha, t.p_value < alpha));

    const std::int64_t jmax = crossing_last.empty() ? 0 : *std::max_element(crossing_last.begin(), crossing_last.end());
    std::vector<std::int64_t> tail(static_cast<std::size_t>(jmax) + 2, 0);
    for (auto x : crossing_last) {
      for (std::int64_t jj = 0; jj <= x; ++jj) ++tail[static_cast<std::size_t>(jj)];
    }
    for (std::int64_t jj = 1; jj <= jmax; ++jj) {
      rows.push_back(info(9, kind, N, "crossing_tail_ge" + std::to_string(jj),
                          static_cast<double>(tail[static_cast<std::size_t>(jj)]) / static_cast<double>(n), 0, n));
    }
    // Ratios t_{j+1}/t_j over the range where t_{j+1} is seen at least 5 times.
    double max_ratio = std::nan("");
    for (std::int64_t jj = 1; jj + 1 <= jmax; ++jj) {
      const auto hi = tail[static_cast<std::size_t>(jj + 1)];
      if (hi < 5) break;
      const double r = static_cast<double>(hi) / static_cast<double>(tail[static_cast<std::size_t>(jj)]);
      max_ratio = std::isnan(max_ratio) ? r : std::max(max_ratio, r);
    }
    rows.push_back(gated(9, kind, N, "crossing_tail_max_ratio", max_ratio, 0, n, "< 1", 1, max_ratio < 1));
  }
}

void analyze_fkg(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::fkg;
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    std::vector<double> cols[8];
    for (const Json* j : rs) {
      const auto row = j->value("_row", std::size_t{0});
      try {
        const auto& phi = member(*j, "phi_at_targets");
        const auto& ob = j->at("observables");
        for (int t = 0; t < 2; ++t) {
          const double h = phi.at(static_cast<std::size_t>(t)).get<double>();
          cols[t].push_back(h);
          cols[2 + t].push_back(std::abs(h));
          cols[4 + t].push_back(ob.at("block_sum").at(static_cast<std::size_t>(t)).get<double>());
          cols[6 + t].push_back(ob.at("block_abs_sum").at(static_cast<std::size_t>(t)).get<double>());
        }
      } catch (const nlohmann::json::exception&) {
        throw FormatError("bad fkg observables", row);
      }
    }
    const char* names[4] = {"cov_h_u_h_v", "cov_abs_h_u_abs_h_v", "cov_block_sum", "cov_block_abs_sum"};
    for (int q = 0; q < 4; ++q) {
      const auto e = covariance_estimate(cols[2 * q], cols[2 * q + 1]);
      rows.push_back(gated(10, kind, N, names[q], e.value, e.std_error, n, ">= -3 se", -3 * e.std_error,
                           e.value >= -3 * e.std_error));
    }
  }
}

void analyze_decoupling(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::decoupling;
  const int max_sep = param<int>(s.params, "max_separation");
  const double alpha = param<double>(s.params, "alpha");
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    std::vector<std::vector<std::int64_t>> tr;
    std::vector<double> flag_sum;
    for (const Json* j : rs) {
      const auto p = profile_of(*j, 0);
      tr.push_back(p.truncated);
      flag_sum.resize(p.flags.size(), 0.0);
      for (std::size_t k = 0; k < p.flags.size(); ++k) flag_sum[k] += p.flags[k];
    }
    for (std::size_t k = 0; k < flag_sum.size(); ++k) {
      rows.push_back(info(11, kind, N, "flag_rate_k" + std::to_string(k + 1), flag_sum[k] / static_cast<double>(n), 0, n));
    }
    std::vector<double> seps;
    std::vector<double> vals;
    if (!tr.empty() && tr.size() >= 2) {
      const auto cm = decoupling_matrix(tr);
      for (int d = 1; d <= max_sep; ++d) {
        double sum = 0;
        int cnt = 0;
        for (std::size_t k = 0; k + static_cast<std::size_t>(d) < cm.dim; ++k) {
          const double v = cm.normalized(k, k + static_cast<std::size_t>(d));
          if (std::isnan(v)) continue;
          seps.push_back(d);
          vals.push_back(v);
          sum += v;
          ++cnt;
        }
        rows.push_back(info(11, kind, N, "mean_norm_cov_sep" + std::to_string(d), cnt ? sum / cnt : std::nan(""), 0, cnt));
      }
    }
    TestResult sp{std::nan(""), std::nan(""), 0};
    if (vals.size() >= 3) sp = spearman_negative(seps, vals);
    rows.push_back(gated(11, kind, N, "spearman_rho", sp.statistic, 0, static_cast<std::int64_t>(vals.size()), "< 0", 0,
                         sp.statistic < 0));
    rows.push_back(gated(11, kind, N, "spearman_p", sp.p_value, 0, static_cast<std::int64_t>(vals.size()), "< alpha",
                         alpha, sp.p_value < alpha));
    telescoping_rows(kind, N, rs, 1, rows);
  }
}

void analyze_coupling(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::coupling_failure;
  const double alpha = param<double>(s.params, "alpha");
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    std::vector<std::vector<double>> ind;
    std::vector<std::pair<int, int>> radii;
    for (const Json* j : rs) {
      const auto row = j->value("_row", std::size_t{0});
      try {
        const auto& arr = j->at("event_flags").at("coupling");
        if (ind.empty()) {
          ind.resize(arr.size());
          for (const auto& e : arr) radii.emplace_back(e.at("r_in").get<int>(), e.at("r_out").get<int>());
        }
        if (arr.size() != ind.size()) throw FormatError("coupling flags have the wrong length", row);
        for (std::size_t a = 0; a < arr.size(); ++a) ind[a].push_back(arr[a].at("failure").get<bool>() ? 1.0 : 0.0);
      } catch (const nlohmann::json::exception&) {
        throw FormatError("bad coupling flags", row);
      }
    }
    if (ind.size() < 2) continue;
    double worst = -std::numeric_limits<double>::infinity();
    double prev = 0;
    for (std::size_t a = 0; a < ind.size(); ++a) {
      const auto m = mean_estimate(ind[a]);
      rows.push_back(info(11, kind, N,
                          "failure_A_" + std::to_string(radii[a].first) + "_" + std::to_string(radii[a].second), m.value,
                          m.std_error, n));
      if (a > 0) worst = std::max(worst, m.value - prev);
      prev = m.value;
    }
    rows.push_back(gated(11, kind, N, "max_failure_increment", worst, 0, n, "< 0", 0, worst < 0));
    std::vector<double> contrasts;
    for (std::size_t i = 0; i < ind.front().size(); ++i) contrasts.push_back(ind.back()[i] - ind.front()[i]);
    const auto t = paired_trend_negative(contrasts);
    rows.push_back(gated(11, kind, N, "trend_p", t.p_value, 0, n, "< alpha", alpha, t.p_value < alpha));
  }
}

// Independent check of the ballot DP by listing every path.
Rational ballot_by_paths(const std::vector<int>& support, const std::vector<std::int64_t>& weights, int n) {
  std::int64_t total_w = 0;
  for (auto w : weights) total_w += w;
  Rational good = 0;
  std::vector<std::size_t> idx(static_cast<std::size_t>(std::max(n - 1, 0)), 0);
  const std::size_t steps = idx.size();
  for (;;) {
    std::int64_t pos = 0;
    bool ok = true;
    boost::multiprecision::cpp_int w = 1;
    for (std::size_t i = 0; i < steps; ++i) {
      pos += support[idx[i]];
      w *= weights[idx[i]];
      if (pos <= 0) {
        ok = false;
        break;
      }
    }
    if (ok) good += Rational(w);
    std::size_t i = 0;
    while (i < steps && ++idx[i] == support.size()) idx[i++] = 0;
    if (i == steps) break;
  }
  boost::multiprecision::cpp_int denom = 1;
  for (std::size_t i = 0; i < steps; ++i) denom *= total_w;
  return good / Rational(denom);
}

void analyze_ballot(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::ballot;
  const int enum_max = param<int>(s.params, "enumerate_max");
  const double band_max = param<double>(s.params, "band_ratio_max");
  std::map<std::size_t, std::vector<const Json*>> by_step;
  auto it = s.by_N.find(0);
  if (it != s.by_N.end()) {
    for (const Json* j : it->second) by_step[field_of<std::size_t>(*j, "step_index")].push_back(j);
  }
  for (auto& [si, rs] : by_step) {
    std::sort(rs.begin(), rs.end(), [](const Json* a, const Json* b) { return a->at("n").get<int>() < b->at("n").get<int>(); });
    const auto support = field_of<std::vector<int>>(*rs.front(), "support");
    const auto weights = field_of<std::vector<std::int64_t>>(*rs.front(), "weights");
    std::ostringstream label;
    label << "step";
    for (std::size_t i = 0; i < support.size(); ++i) label << (i ? "_" : "[") << support[i] << ":" << weights[i];
    label << "]";
    const std::string L = label.str();
    std::map<int, Rational> exact;
    std::vector<std::pair<int, double>> approx;
    for (const Json* j : rs) {
      const int n = field_of<int>(*j, "n");
      if (!j->at("p_exact").is_null()) exact[n] = parse_rational(field_of<std::string>(*j, "p_exact"), j->value("_row", std::size_t{0}));
      approx.emplace_back(n, field_of<double>(*j, "p"));
    }
    const std::pair<int, Rational> known[] = {{1, Rational(1)}, {2, Rational(1, 2)}, {3, Rational(1, 4)}, {5, Rational(3, 16)}};
    const bool simple = support.size() == 2 && support[0] == -support[1] && weights[0] == weights[1];
    if (simple) {
      for (const auto& [n, q] : known) {
        if (!exact.count(n)) continue;
        rows.push_back(gated(3, kind, std::nullopt, L + ":p_" + std::to_string(n), exact[n].convert_to<double>(), 0, n,
                             "== " + rational_string(q), q.convert_to<double>(), exact[n] == q));
      }
    }
    std::int64_t mismatches = 0;
    std::int64_t compared = 0;
    for (const auto& [n, q] : exact) {
      if (n > enum_max) break;
      ++compared;
      if (ballot_by_paths(support, weights, n) != q) ++mismatches;
    }
    rows.push_back(gated(3, kind, std::nullopt, L + ":enumeration_mismatches", static_cast<double>(mismatches), 0,
                         compared, "== 0", 0, mismatches == 0 && compared > 0));
    std::int64_t increases = 0;
    for (std::size_t i = 1; i < approx.size(); ++i) {
      const int n = approx[i].first;
      const bool up = exact.count(n) && exact.count(n - 1) ? exact[n] > exact[n - 1] : approx[i].second > approx[i - 1].second;
      if (up) ++increases;
    }
    rows.push_back(gated(3, kind, std::nullopt, L + ":nonincreasing_violations", static_cast<double>(increases), 0,
                         static_cast<std::int64_t>(approx.size()), "== 0", 0, increases == 0));
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0;
    for (const auto& [n, p] : approx) {
      const double v = p * std::sqrt(static_cast<double>(n));
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double ratio = approx.empty() ? std::nan("") : hi / lo;
    rows.push_back(gated(3, kind, std::nullopt, L + ":band_ratio", ratio, 0, static_cast<std::int64_t>(approx.size()),
                         "<= threshold", band_max, ratio <= band_max));
  }
}

void analyze_multipoint(const Samples& s, std::vector<SummaryRow>& rows) {
  const auto kind = ExperimentKind::multipoint;
  const double tv_max = param<double>(s.params, "tv_max");
  const double alpha = param<double>(s.params, "alpha");
  std::vector<std::pair<double, std::size_t>> corr;
  int max_N = 0;
  for (const auto& [N, rs] : s.by_N) {
    const auto n = static_cast<std::int64_t>(rs.size());
    const std::size_t n_t = s.runs.at(N).at("targets").size();
    const auto x1 = phi_column(rs, 0);
    const auto x2 = phi_column(rs, 1);
    const double r = correlation(x1, x2);
    rows.push_back(info(12, kind, N, "corr_x1_x2", r, 0, n));
    corr.emplace_back(r, rs.size());
    if (!rs.empty()) rows.push_back(info(12, kind, N, "m0", rs.front()->at("m0").get<double>()));
    max_N = N;
    for (std::size_t t = 0; t < n_t; ++t) {
      const double tv = tv_of(phi_int_column(rs, t), kDitherSeed ^ static_cast<std::uint64_t>(N * 16 + static_cast<int>(t)));
      const bool last = N == s.by_N.rbegin()->first;
      const std::string name = "tv_target" + std::to_string(t + 1);
      if (last) {
        rows.push_back(gated(12, kind, N, name, tv, 0, n, "<= threshold", tv_max, tv <= tv_max));
      } else {
        rows.push_back(info(12, kind, N, name, tv, 0, n));
      }
    }
    telescoping_rows(kind, N, rs, n_t, rows);
  }
  if (corr.size() >= 2) {
    const auto& [r_small, n_small] = corr.front();
    const auto& [r_large, n_large] = corr.back();
    const double diff = std::abs(r_large) - std::abs(r_small);
    rows.push_back(gated(12, kind, max_N, "abs_corr_change", diff, 0, static_cast<std::int64_t>(n_large), "< 0", 0,
                         diff < 0));
    const auto f = fisher_z_decrease(r_small, n_small, r_large, n_large);
    rows.push_back(gated(12, kind, max_N, "fisher_p", f.p_value, 0, static_cast<std::int64_t>(n_large), "< alpha", alpha,
                         f.p_value < alpha));
  } else {
    rows.push_back(gated(12, kind, max_N, "abs_corr_change", std::nan(""), 0, 0, "< 0", 0, false));
  }
}

}  // namespace

std::vector<SummaryRow> analyze(ExperimentKind kind, const std::vector<Json>& records) {
  const Samples s = collect(kind, records);
  std::vector<SummaryRow> rows;
  try {
    switch (kind) {
      case ExperimentKind::uniformity: analyze_uniformity(s, rows); break;
      case ExperimentKind::variance: analyze_variance(s, rows); break;
      case ExperimentKind::clt: analyze_clt(s, rows); break;
      case ExperimentKind::rsw: analyze_rsw(s, rows); break;
      case ExperimentKind::loops: analyze_loops(s, rows); break;
      case ExperimentKind::fkg: analyze_fkg(s, rows); break;
      case ExperimentKind::decoupling: analyze_decoupling(s, rows); break;
      case ExperimentKind::coupling_failure: analyze_coupling(s, rows); break;
      case ExperimentKind::ballot: analyze_ballot(s, rows); break;
      case ExperimentKind::multipoint: analyze_multipoint(s, rows); break;
    }
  } catch (const ConfigError& e) {
    throw FormatError(std::string("params in run record: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed record: ") + e.what());
  }
  return rows;
}

ExperimentResult replay(const std::filesystem::path& records, const std::string& analysis,
                        const std::filesystem::path& summary) {
  const auto recs = read_records(records);
  const ExperimentKind kind =
      analysis.empty() ? parse_experiment(recs.front().at("experiment").get<std::string>()) : parse_experiment(analysis);
  ExperimentResult res;
  res.records = records;
  res.summary = summary;
  res.rows = analyze(kind, recs);
  write_summary(summary, res.rows);
  res.exit_code = exit_code_for(res.rows);
  return res;
}

// ---------------------------------------------------------------------------
// Summary

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "criterion,experiment,N,statistic,value,std_error,n,gate,threshold,pass\n";
  for (const auto& r : rows) {
    os << r.criterion << ',' << r.experiment << ',' << (r.N ? std::to_string(*r.N) : "") << ',' << r.statistic << ','
       << num(r.value) << ',' << num(r.std_error) << ',' << r.n << ',' << r.gate << ','
       << (r.gate.empty() ? "" : num(r.threshold)) << ',' << (r.pass ? (*r.pass ? "pass" : "fail") : "info") << '\n';
  }
  return os.str();
}

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << summary_csv(rows);
  os.close();
  if (!os) throw IoError("failed writing " + path.string());
}

int exit_code_for(const std::vector<SummaryRow>& rows) {
  for (const auto& r : rows) {
    if (r.pass && !*r.pass) return 1;
  }
  return 0;
}

}  // namespace icelab
