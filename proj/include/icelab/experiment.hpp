#pragma once

// Experiment orchestration: configuration, seeded chains, JSON-Lines sample
// records and CSV summaries with one gated row per checked quantity.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace icelab {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

enum class ExperimentKind {
  uniformity,
  variance,
  clt,
  rsw,
  loops,
  fkg,
  decoupling,
  coupling_failure,
  ballot,
  multipoint,
};

std::string to_string(ExperimentKind kind);
/// Throws ConfigError on an unknown name.
ExperimentKind parse_experiment(const std::string& name);
const std::vector<ExperimentKind>& all_experiments();

enum class SamplerKind { glauber, cftp };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::variance;
  std::vector<int> N_list;
  std::int64_t samples_per_N = 1;
  std::uint64_t seed = 1;
  int workers = 1;
  SamplerKind sampler = SamplerKind::glauber;
  std::optional<std::int64_t> burn_in;   // nullopt = auto
  std::optional<std::int64_t> thinning;  // nullopt = auto
  std::vector<std::array<double, 2>> targets;  // fractions of N
  std::filesystem::path output_dir = "out";
  Json params = Json::object();

  /// Defaults for `kind`, including its params.
  static ExperimentConfig defaults(ExperimentKind kind);
  /// Missing keys take the experiment's defaults; unknown keys are rejected.
  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;

  /// Throws ConfigError.
  void validate() const;
};

struct SummaryRow {
  int criterion = 0;
  std::string experiment;
  std::optional<int> N;
  std::string statistic;
  double value = 0;
  double std_error = 0;
  std::int64_t n = 0;
  std::string gate;  // empty for informational rows
  double threshold = 0;
  std::optional<bool> pass;
};

struct ExperimentResult {
  std::filesystem::path records;
  std::filesystem::path summary;
  std::vector<SummaryRow> rows;
  int exit_code = 0;
};

/// Samples, writes <output_dir>/<experiment>.records.jsonl, analyzes the file
/// it just wrote and writes <output_dir>/<experiment>.summary.csv.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Recomputes the summary of a records file. `analysis` may be empty, in
/// which case the experiment named in the file is used.
ExperimentResult replay(const std::filesystem::path& records, const std::string& analysis,
                        const std::filesystem::path& summary);

/// Parses and checks every line of a records file. Throws FormatError with
/// the 1-based row on the first bad line.
std::vector<Json> read_records(const std::filesystem::path& records);

/// Rows from parsed records (run headers and samples, in file order).
std::vector<SummaryRow> analyze(ExperimentKind kind, const std::vector<Json>& records);

void write_summary(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);
/// 0 when no gated row fails, 1 otherwise.
int exit_code_for(const std::vector<SummaryRow>& rows);

}  // namespace icelab
