// icelab <experiment> [--config FILE] [overrides]   run an experiment
// icelab replay RECORDS [--analysis NAME] [--out FILE]

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icelab/error.hpp"
#include "icelab/experiment.hpp"

namespace {

struct RunArgs {
  std::string config;
  std::vector<int> N;
  std::optional<std::int64_t> samples;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> sampler;
  std::optional<std::string> out;
  std::optional<std::string> burn_in;
  std::optional<std::string> thinning;
};

icelab::Json load_config(const std::string& path, const std::string& experiment) {
  icelab::Json j = icelab::Json::object();
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw icelab::ConfigError("cannot open config " + path);
    try {
      j = icelab::Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw icelab::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw icelab::ConfigError("config must be a JSON object");
    if (j.contains("experiment") && j["experiment"] != experiment) {
      throw icelab::ConfigError("config is for experiment " + j["experiment"].dump() + ", not " + experiment);
    }
  }
  j["experiment"] = experiment;
  return j;
}

icelab::Json auto_or_int(const std::string& s) {
  if (s == "auto") return "auto";
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw icelab::ConfigError("expected an integer or auto, got '" + s + "'");
  }
}

int run(const std::string& experiment, const RunArgs& a) {
  auto j = load_config(a.config, experiment);
  if (!a.N.empty()) j["N_list"] = a.N;
  if (a.samples) j["samples_per_N"] = *a.samples;
  if (a.seed) j["seed"] = *a.seed;
  if (a.workers) j["workers"] = *a.workers;
  if (a.sampler) j["sampler"] = *a.sampler;
  if (a.out) j["output_dir"] = *a.out;
  if (a.burn_in) j["burn_in"] = auto_or_int(*a.burn_in);
  if (a.thinning) j["thinning"] = auto_or_int(*a.thinning);
  const auto cfg = icelab::ExperimentConfig::from_json(j);
  const auto res = icelab::run_experiment(cfg);
  std::cout << icelab::summary_csv(res.rows);
  std::cerr << "records: " << res.records.string() << "\nsummary: " << res.summary.string() << "\n";
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Square-ice height function experiments"};
  app.require_subcommand(1);

  RunArgs args;
  std::string chosen;
  for (auto kind : icelab::all_experiments()) {
    const auto name = icelab::to_string(kind);
    auto* sub = app.add_subcommand(name, "run the " + name + " experiment");
    sub->add_option("--config", args.config, "JSON config file");
    sub->add_option("--N", args.N, "radii, e.g. --N 8,16,32")->delimiter(',');
    sub->add_option("--samples", args.samples, "samples per N");
    sub->add_option("--seed", args.seed, "64-bit seed");
    sub->add_option("--workers", args.workers, "worker threads");
    sub->add_option("--sampler", args.sampler, "glauber or cftp");
    sub->add_option("--out", args.out, "output directory");
    sub->add_option("--burn-in", args.burn_in, "sweeps or auto");
    sub->add_option("--thinning", args.thinning, "sweeps or auto");
    sub->callback([&chosen, name] { chosen = name; });
  }

  std::string records;
  std::string analysis;
  std::string summary;
  auto* rep = app.add_subcommand("replay", "recompute a summary from a records file");
  rep->add_option("records", records, "records file (JSON Lines)")->required();
  rep->add_option("--analysis", analysis, "experiment name; defaults to the one in the file");
  rep->add_option("--out", summary, "summary CSV path; defaults to RECORDS with .summary.csv");
  rep->callback([&chosen] { chosen = "replay"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (chosen == "replay") {
      if (summary.empty()) {
        summary = records;
        const auto dot = summary.rfind(".records.jsonl");
        if (dot != std::string::npos) summary.erase(dot);
        summary += ".replay.summary.csv";
      }
      const auto res = icelab::replay(records, analysis, summary);
      std::cout << icelab::summary_csv(res.rows);
      return res.exit_code;
    }
    return run(chosen, args);
  } catch (const icelab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const icelab::FormatError& e) {
    std::cerr << "corrupt records: " << e.what() << "\n";
    return 3;
  } catch (const icelab::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
