#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "icelab/error.hpp"
#include "icelab/experiment.hpp"

using namespace icelab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("icelab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

ExperimentConfig small_variance(const fs::path& out) {
  auto c = ExperimentConfig::defaults(ExperimentKind::variance);
  c.N_list = {4, 6, 8};
  c.samples_per_N = 256;
  c.seed = 11;
  c.burn_in = 40;
  c.thinning = 2;
  c.params["rounds_per_chain"] = 1;
  c.output_dir = out;
  return c;
}

const SummaryRow* find_row(const std::vector<SummaryRow>& rows, const std::string& stat, std::optional<int> N) {
  for (const auto& r : rows) {
    if (r.statistic == stat && r.N == N) return &r;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("config parsing and validation errors") {
  CHECK_THROWS_AS(parse_experiment("nope"), ConfigError);
  CHECK(parse_experiment("coupling_failure") == ExperimentKind::coupling_failure);
  for (auto k : all_experiments()) {
    CHECK(parse_experiment(to_string(k)) == k);
    CHECK_NOTHROW(ExperimentConfig::defaults(k).validate());
    const auto round = ExperimentConfig::from_json(ExperimentConfig::defaults(k).to_json());
    CHECK(round.to_json() == ExperimentConfig::defaults(k).to_json());
  }
  auto bad = [](const std::string& text) {
    CHECK_THROWS_AS(ExperimentConfig::from_json(Json::parse(text)).validate(), ConfigError);
  };
  bad(R"({"N_list": [8]})");
  bad(R"({"experiment": "variance", "bogus": 1})");
  bad(R"({"experiment": "variance", "params": {"bogus": 1}})");
  bad(R"({"experiment": "variance", "N_list": []})");
  bad(R"({"experiment": "variance", "N_list": [8, 8]})");
  bad(R"({"experiment": "variance", "N_list": [1]})");
  bad(R"({"experiment": "variance", "samples_per_N": 0})");
  bad(R"({"experiment": "variance", "workers": 0})");
  bad(R"({"experiment": "variance", "sampler": "metropolis"})");
  bad(R"({"experiment": "variance", "sampler": "cftp", "N_list": [16]})");
  bad(R"({"experiment": "variance", "thinning": "sometimes"})");
  bad(R"({"experiment": "variance", "N_list": "8"})");
  bad(R"({"experiment": "variance", "targets": [[1.5, 0]]})");
  bad(R"({"experiment": "rsw", "N_list": [50]})");
  bad(R"({"experiment": "fkg", "targets": [[0, 0]]})");
  bad(R"({"experiment": "loops", "N_list": [16]})");
  bad(R"({"experiment": "coupling_failure", "params": {"r_in_fractions": [0.1, 0.2]}})");
  bad(R"({"experiment": "ballot", "params": {"n_max": 3}})");
  bad(R"({"experiment": "ballot", "params": {"steps": [{"support": [1, 2], "weights": [1, 1]}]}})");
  CHECK_NOTHROW(
      ExperimentConfig::from_json(Json::parse(R"({"experiment": "variance", "sampler": "cftp", "N_list": [4, 8]})"))
          .validate());
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  auto ca = small_variance(a);
  auto cb = small_variance(b);
  cb.workers = 2;
  const auto ra = run_experiment(ca);
  const auto rb = run_experiment(cb);
  CHECK(slurp(ra.records) == slurp(rb.records));
  CHECK(slurp(ra.summary) == slurp(rb.summary));
  CHECK(ra.exit_code == rb.exit_code);

  ca.seed = 12;
  const auto c = scratch("det_c");
  ca.output_dir = c;
  CHECK(slurp(run_experiment(ca).records) != slurp(ra.records));
}

TEST_CASE("records layout and replay") {
  const auto dir = scratch("replay");
  const auto res = run_experiment(small_variance(dir));
  CHECK(res.records == dir / "variance.records.jsonl");
  CHECK(res.summary == dir / "variance.summary.csv");
  const auto recs = read_records(res.records);
  REQUIRE(recs.size() == 1 + 3 * 256);
  CHECK(recs.front()["record_type"] == "run");
  CHECK(recs.front()["schema_version"] == kSchemaVersion);
  CHECK(recs.front()["config"]["seed"] == 11);
  CHECK_FALSE(recs.front()["config"].contains("workers"));
  const auto& s = recs[1];
  CHECK(s["record_type"] == "sample");
  for (const char* key : {"N", "chain_id", "sample_index", "seed", "burn_in", "thinning", "phi_at_targets", "timing"}) {
    CHECK(s.contains(key));
  }
  // Every sample of a chain shares its seed; chains are numbered globally.
  std::set<std::int64_t> chains;
  for (std::size_t i = 1; i < recs.size(); ++i) chains.insert(recs[i]["chain_id"].get<std::int64_t>());
  CHECK(chains.size() == 12);

  const auto again = replay(res.records, "", dir / "again.csv");
  CHECK(slurp(dir / "again.csv") == slurp(res.summary));
  CHECK(again.exit_code == res.exit_code);
  CHECK(summary_csv(again.rows) == slurp(res.summary));
  CHECK(summary_csv(res.rows).rfind("criterion,experiment,N,statistic,value,std_error,n,gate,threshold,pass\n", 0) == 0);
  CHECK_THROWS_AS(replay(res.records, "clt", dir / "clt.csv"), FormatError);
  CHECK_THROWS_AS(replay(res.records, "nope", dir / "x.csv"), ConfigError);
}

TEST_CASE("merged record files pool their samples") {
  const auto a = scratch("merge_a");
  const auto b = scratch("merge_b");
  auto ca = small_variance(a);
  auto cb = small_variance(b);
  cb.seed = 99;
  const auto ra = run_experiment(ca);
  const auto rb = run_experiment(cb);
  const auto merged = a / "merged.jsonl";
  spit(merged, slurp(ra.records) + slurp(rb.records));
  const auto rm = replay(merged, "", a / "merged.csv");
  const auto* one = find_row(ra.rows, "var_phi", 8);
  const auto* both = find_row(rm.rows, "var_phi", 8);
  REQUIRE(one);
  REQUIRE(both);
  CHECK(both->n == 2 * one->n);

  auto cc = small_variance(b);
  cc.params["max_rel_residual"] = 0.5;
  cc.output_dir = scratch("merge_c");
  const auto rc = run_experiment(cc);
  spit(merged, slurp(ra.records) + slurp(rc.records));
  CHECK_THROWS_AS(replay(merged, "", a / "merged.csv"), FormatError);
}

TEST_CASE("corrupt, truncated and foreign record files") {
  const auto dir = scratch("corrupt");
  const auto res = run_experiment(small_variance(dir));
  const auto text = slurp(res.records);
  std::vector<std::string> lines;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) lines.push_back(l);
  auto join = [](const std::vector<std::string>& ls) {
    std::string s;
    for (const auto& l : ls) s += l + "\n";
    return s;
  };
  auto row_of = [](const fs::path& p) -> std::size_t {
    try {
      read_records(p);
    } catch (const FormatError& e) {
      return e.row();
    }
    return 0;
  };
  const auto p = dir / "bad.jsonl";

  auto broken = lines;
  broken[4] = "{\"schema_version\": 1, \"record_type\": \"sample\", ";
  spit(p, join(broken));
  CHECK(row_of(p) == 5);

  spit(p, text.substr(0, text.size() - 1));
  CHECK(row_of(p) == lines.size());
  spit(p, text.substr(0, text.size() - 40));
  CHECK(row_of(p) == lines.size());

  broken = lines;
  auto j = Json::parse(broken[7]);
  j["schema_version"] = 2;
  broken[7] = j.dump();
  spit(p, join(broken));
  CHECK(row_of(p) == 8);

  broken = lines;
  j = Json::parse(broken[2]);
  j.erase("schema_version");
  broken[2] = j.dump();
  spit(p, join(broken));
  CHECK(row_of(p) == 3);

  broken = lines;
  j = Json::parse(broken[9]);
  j["record_type"] = "mystery";
  broken[9] = j.dump();
  spit(p, join(broken));
  CHECK(row_of(p) == 10);

  spit(p, join(std::vector<std::string>(lines.begin() + 1, lines.end())));
  CHECK(row_of(p) == 1);

  broken = lines;
  j = Json::parse(broken[6]);
  j.erase("phi_at_targets");
  broken[6] = j.dump();
  spit(p, join(broken));
  CHECK_NOTHROW(read_records(p));
  CHECK_THROWS_AS(replay(p, "", dir / "x.csv"), FormatError);

  spit(p, "");
  CHECK_THROWS_AS(read_records(p), FormatError);
  CHECK_THROWS_AS(read_records(dir / "missing.jsonl"), IoError);
}

TEST_CASE("small runs of every sampled experiment complete") {
  struct Small {
    ExperimentKind kind;
    std::vector<int> N;
  };
  for (const auto& [kind, N] : std::vector<Small>{{ExperimentKind::uniformity, {1}},
                                                   {ExperimentKind::clt, {4, 8}},
                                                   {ExperimentKind::rsw, {12}},
                                                   {ExperimentKind::loops, {16}},
                                                   {ExperimentKind::fkg, {8}},
                                                   {ExperimentKind::decoupling, {16}},
                                                   {ExperimentKind::coupling_failure, {16}},
                                                   {ExperimentKind::multipoint, {16}}}) {
    CAPTURE(to_string(kind));
    auto c = ExperimentConfig::defaults(kind);
    c.N_list = N;
    c.samples_per_N = 128;
    c.burn_in = 30;
    c.thinning = 2;
    c.params["rounds_per_chain"] = 1;
    if (kind == ExperimentKind::rsw) c.params["rho"] = 1;
    if (kind == ExperimentKind::loops) c.params["a"] = Json::array({1, 2});
    c.output_dir = scratch("small_" + to_string(kind));
    c.validate();
    const auto r = run_experiment(c);
    CHECK(fs::exists(r.records));
    CHECK(fs::exists(r.summary));
    CHECK_FALSE(r.rows.empty());
    for (const auto& row : r.rows) CHECK(row.experiment == to_string(kind));
    CHECK(r.exit_code == exit_code_for(r.rows));
    CHECK(summary_csv(replay(r.records, "", c.output_dir / "re.csv").rows) == slurp(r.summary));
  }
}

TEST_CASE("ballot experiment checks exact values") {
  auto c = ExperimentConfig::defaults(ExperimentKind::ballot);
  c.output_dir = scratch("ballot");
  const auto r = run_experiment(c);
  CHECK(r.exit_code == 0);
  const auto* p5 = find_row(r.rows, "step[-1:1_1:1]:p_5", std::nullopt);
  REQUIRE(p5);
  CHECK(p5->value == doctest::Approx(3.0 / 16.0));
  CHECK(p5->pass == true);
  const auto* mism = find_row(r.rows, "step[-2:1_1:2]:enumeration_mismatches", std::nullopt);
  REQUIRE(mism);
  CHECK(mism->value == 0);
  CHECK(mism->n == 12);
}

TEST_CASE("exit codes follow the gates") {
  std::vector<SummaryRow> rows(2);
  rows[0].pass = true;
  CHECK(exit_code_for(rows) == 0);
  rows[1].pass = false;
  CHECK(exit_code_for(rows) == 1);
  rows[1].pass = std::nullopt;
  CHECK(exit_code_for(rows) == 0);
}
