// Runs every acceptance experiment at its default size and prints one
// PASS/FAIL line per criterion. Criteria listed in --expected-fail still print
// FAIL but do not change the exit status.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icelab/error.hpp"
#include "icelab/experiment.hpp"
#include "icelab/heightfield.hpp"
#include "icelab/loops.hpp"
#include "icelab/sampler.hpp"

using namespace icelab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  double seconds = 0;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

class Runner {
 public:
  explicit Runner(fs::path out) : out_(std::move(out)) {}

  // Default config of `kind`, run once and cached by label.
  const ExperimentResult& run(ExperimentKind kind, const std::string& label,
                              const std::function<void(ExperimentConfig&)>& tweak = {}) {
    auto it = cache_.find(label);
    if (it != cache_.end()) return it->second;
    auto c = ExperimentConfig::defaults(kind);
    c.output_dir = out_ / label;
    if (tweak) tweak(c);
    const auto t0 = Clock::now();
    auto res = run_experiment(c);
    seconds_[label] = since(t0);
    std::fprintf(stderr, "  %s: %.1f s, exit %d\n", label.c_str(), seconds_[label], res.exit_code);
    return cache_.emplace(label, std::move(res)).first->second;
  }

  double seconds(const std::string& label) const { return seconds_.at(label); }
  const fs::path& out() const { return out_; }

 private:
  fs::path out_;
  std::map<std::string, ExperimentResult> cache_;
  std::map<std::string, double> seconds_;
};

// Gated rows of `criterion` across `results`: pass iff there is at least one
// and none fails. Failing statistics are listed in the detail.
Outcome gate_rows(int criterion, const std::vector<const ExperimentResult*>& results) {
  Outcome o;
  int gated = 0;
  std::vector<std::string> failed;
  for (const auto* r : results) {
    for (const auto& row : r->rows) {
      if (row.criterion != criterion || !row.pass) continue;
      ++gated;
      if (!*row.pass) {
        failed.push_back(row.experiment + (row.N ? "/N=" + std::to_string(*row.N) : "") + "/" + row.statistic + "=" +
                         fmt(row.value));
      }
    }
  }
  o.pass = gated > 0 && failed.empty();
  o.detail = std::to_string(gated) + " gated rows";
  if (!failed.empty()) {
    o.detail += ", failing:";
    for (const auto& f : failed) o.detail += " " + f;
  }
  return o;
}

const SummaryRow* row_named(const ExperimentResult& r, const std::string& stat) {
  for (const auto& row : r.rows) {
    if (row.statistic == stat) return &row;
  }
  return nullptr;
}

Outcome criterion1(Runner& R) {
  const auto& cftp = R.run(ExperimentKind::uniformity, "uniformity_cftp",
                           [](ExperimentConfig& c) { c.sampler = SamplerKind::cftp; });
  const auto& glauber = R.run(ExperimentKind::uniformity, "uniformity_glauber");
  auto o = gate_rows(1, {&cftp, &glauber});
  for (const auto* r : {&cftp, &glauber}) {
    const auto* count = row_named(*r, "field_count");
    const auto* p = row_named(*r, "chi_square_p");
    const auto* v = row_named(*r, "var_target");
    o.pass = o.pass && count && count->value == 18;
    if (p && v) o.detail += "; p=" + fmt(p->value) + " var=" + fmt(v->value) + "+-" + fmt(v->std_error);
  }
  const double secs = std::max(R.seconds("uniformity_cftp"), R.seconds("uniformity_glauber"));
  o.detail += "; slowest sampler " + fmt(secs) + " s";
  return o;
}

Outcome criterion2() {
  Outcome o;
  std::size_t fields = 0;
  std::size_t failures = 0;
  for (int N : {4, 8}) {
    auto d = build_even_domain({0, 0}, N);
    LaneEnsemble e(d, BoundaryCondition::zero(*d), 0xb1ec7 + static_cast<std::uint64_t>(N));
    e.sweeps(200);
    for (int round = 0; round < 16; ++round) {
      e.sweeps(10);
      for (int l = 0; l < LaneEnsemble::kLanes; ++l) {
        const auto f = e.lane_field(l);
        const auto a = to_six_vertex(f);
        const Vertex anchor = d->boundary().front();
        ++fields;
        if (!a.ice_rule_violations().empty() || !(from_six_vertex(a, anchor, f.at(anchor)) == f)) ++failures;
      }
    }
  }
  o.pass = failures == 0 && fields >= 2000;
  o.detail = std::to_string(fields) + " fields, " + std::to_string(failures) + " failures";
  return o;
}

Outcome criterion3(Runner& R) { return gate_rows(3, {&R.run(ExperimentKind::ballot, "ballot")}); }

// Groups every extension by (loop index, loop interior, heights outside the
// interior) and checks that the group's target heights average to the loop
// height exactly.
Outcome criterion5() {
  Outcome o;
  struct Group {
    std::int64_t sum = 0;
    std::int64_t count = 0;
    Height height = 0;
  };
  std::int64_t groups_total = 0;
  std::int64_t nested = 0;
  std::int64_t bad = 0;
  std::int64_t fields_total = 0;
  const std::vector<std::pair<Vertex, int>> domains{{{0, 0}, 1}, {{1, 0}, 1}, {{0, 0}, 2}, {{1, 0}, 2}, {{0, 1}, 2}};
  for (const auto& [c, r] : domains) {
    auto d = build_even_domain(c, r);
    std::vector<Vertex> targets;
    for (std::size_t i = 0; i < d->size(); ++i) {
      if (!d->is_boundary(i)) targets.push_back(d->cell(i));
    }
    std::vector<std::map<std::vector<Height>, Group>> by_target(targets.size());
    fields_total += static_cast<std::int64_t>(for_each_extension(d, BoundaryCondition::zero(*d), [&](const HeightField& f) {
      for (std::size_t t = 0; t < targets.size(); ++t) {
        const auto fam = extract_loop_family(f, targets[t]);
        for (std::size_t j = 0; j < fam.size(); ++j) {
          const auto& loop = fam.loops[j];
          std::vector<Height> key{static_cast<Height>(j)};
          for (std::size_t i = 0; i < f.size(); ++i) {
            key.push_back(loop.inside[i] ? Height{-1000} : Height{0});
            if (!loop.inside[i]) key.push_back(f[i]);
          }
          auto& g = by_target[t][key];
          g.sum += f.at(targets[t]);
          ++g.count;
          g.height = loop.height;
        }
      }
    }));
    for (const auto& m : by_target) {
      for (const auto& [key, g] : m) {
        ++groups_total;
        if (key.front() > 0) ++nested;
        if (g.sum != g.count * g.height) ++bad;
      }
    }
  }
  o.pass = bad == 0 && groups_total > 0;
  o.detail = std::to_string(fields_total) + " fields, " + std::to_string(groups_total) + " groups (" +
             std::to_string(nested) + " below the boundary loop), " +
             std::to_string(bad) + " mismatches";
  return o;
}

Outcome criterion13(Runner& R) {
  Outcome o;
  std::vector<std::string> diffs;
  int compared = 0;
  auto check = [&](ExperimentKind kind, const std::string& base, const std::function<void(ExperimentConfig&)>& tweak) {
    const auto& a = R.run(kind, base, tweak);
    for (int workers : {1, 3}) {
      const std::string label = base + "_rerun_w" + std::to_string(workers);
      const auto& b = R.run(kind, label, [&](ExperimentConfig& c) {
        if (tweak) tweak(c);
        c.output_dir = R.out() / label;
        c.workers = workers;
      });
      ++compared;
      if (slurp(a.records) != slurp(b.records) || slurp(a.summary) != slurp(b.summary)) diffs.push_back(label);
    }
  };
  check(ExperimentKind::fkg, "fkg", {});
  check(ExperimentKind::ballot, "ballot", {});
  check(ExperimentKind::uniformity, "uniformity_small_cftp", [](ExperimentConfig& c) {
    c.sampler = SamplerKind::cftp;
    c.samples_per_N = 5000;
  });
  check(ExperimentKind::variance, "variance_small", [](ExperimentConfig& c) {
    c.N_list = {8, 16};
    c.samples_per_N = 2000;
    c.params["rounds_per_chain"] = 4;
  });
  o.pass = diffs.empty();
  o.detail = std::to_string(compared) + " reruns byte-compared";
  for (const auto& d : diffs) o.detail += " differs:" + d;
  return o;
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.insert(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icelab acceptance run"};
  std::string out = "acceptance_out";
  std::string expected;
  std::string only;
  app.add_option("--out", out, "scratch directory for records and summaries");
  app.add_option("--expected-fail", expected, "comma list of criteria known not to pass at this scale");
  app.add_option("--only", only, "comma list of criteria to run");
  CLI11_PARSE(app, argc, argv);

  const auto expected_fail = parse_list(expected);
  const auto selected = parse_list(only);
  fs::create_directories(out);
  Runner R(out);

  const std::vector<std::pair<int, std::string>> names{
      {1, "oracle exactness"},       {2, "six-vertex round trip"},   {3, "ballot oracle"},
      {4, "telescoping and parity"}, {5, "conditional-mean identity"}, {6, "variance growth"},
      {7, "one-point CLT"},          {8, "RSW band"},                {9, "loop-count tails"},
      {10, "FKG"},                   {11, "decoupling decay"},       {12, "multipoint"},
      {13, "determinism"}};

  auto evaluate = [&](int c) -> Outcome {
    switch (c) {
      case 1: return criterion1(R);
      case 2: return criterion2();
      case 3: return criterion3(R);
      case 4:
        return gate_rows(4, {&R.run(ExperimentKind::variance, "variance"), &R.run(ExperimentKind::clt, "clt"),
                             &R.run(ExperimentKind::decoupling, "decoupling"),
                             &R.run(ExperimentKind::multipoint, "multipoint")});
      case 5: return criterion5();
      case 6: return gate_rows(6, {&R.run(ExperimentKind::variance, "variance")});
      case 7: return gate_rows(7, {&R.run(ExperimentKind::clt, "clt")});
      case 8: return gate_rows(8, {&R.run(ExperimentKind::rsw, "rsw")});
      case 9: return gate_rows(9, {&R.run(ExperimentKind::loops, "loops")});
      case 10: return gate_rows(10, {&R.run(ExperimentKind::fkg, "fkg")});
      case 11:
        return gate_rows(11, {&R.run(ExperimentKind::decoupling, "decoupling"),
                              &R.run(ExperimentKind::coupling_failure, "coupling_failure")});
      case 12: return gate_rows(12, {&R.run(ExperimentKind::multipoint, "multipoint")});
      case 13: return criterion13(R);
    }
    return {};
  };

  int unexpected = 0;
  std::vector<std::string> lines;
  for (const auto& [c, name] : names) {
    if (!selected.empty() && !selected.count(c)) continue;
    std::fprintf(stderr, "criterion %d: %s\n", c, name.c_str());
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = evaluate(c);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    o.seconds = since(t0);
    std::string tag = o.pass ? "PASS" : "FAIL";
    if (!o.pass && expected_fail.count(c)) tag += " (expected)";
    if (!o.pass && !expected_fail.count(c)) ++unexpected;
    char head[128];
    std::snprintf(head, sizeof head, "criterion %2d %-26s %-15s %7.1fs  ", c, name.c_str(), tag.c_str(), o.seconds);
    lines.push_back(head + o.detail);
    std::printf("%s\n", lines.back().c_str());
    std::fflush(stdout);
  }
  std::printf("\nsummary\n");
  std::ofstream report(fs::path(out) / "acceptance.txt");
  for (const auto& l : lines) {
    std::printf("%s\n", l.c_str());
    report << l << "\n";
  }
  return unexpected == 0 ? 0 : 1;
}
