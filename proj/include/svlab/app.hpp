#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "svlab/config.hpp"
#include "svlab/verify.hpp"

namespace svlab::app {

inline constexpr const char* kArtifactVersion = "1.0.0";
/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "SVLAB_OUT_DIR";

/// Default output directory: $SVLAB_OUT_DIR, else "runs".
std::filesystem::path default_out_dir();

/// Parses "0,2,5" and ranges like "0-4" (inclusive), or mixes of both.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

struct TrainOptions {
  std::vector<std::uint64_t> seeds;  // empty: the config's seed
  std::filesystem::path out_dir;
  bool deterministic = false;  // single-threaded rollouts, seeds run one after another
  std::filesystem::path config_path;  // recorded in the manifest
};

/// Trains one run per seed and writes
///   <out>/seed_<s>.csv, <out>/seed_<s>_checkpoint.json,
///   <out>/seed_<s>_grid.csv (when snapshot_every > 0 on a grid MDP),
///   <out>/manifest.json.
/// Returns the manifest. A run aborted by a non-finite loss is recorded in the
/// manifest rather than thrown.
nlohmann::json cmd_train(const ExperimentConfig& cfg, const TrainOptions& opts);

/// Runs suites ("all" runs every suite). Returns the JSON report; `ok` is set
/// to false on any violation.
nlohmann::json cmd_verify(const std::string& suite, std::size_t instances, std::uint64_t seed,
                          bool& ok);

/// Writes learning-curve, diff-vs-threshold, TV/value-error and paired CSVs
/// plus SVG renderings for one or more manifests. Returns the written paths.
std::vector<std::filesystem::path> cmd_plotdata(const std::vector<std::filesystem::path>& manifests,
                                                const std::filesystem::path& out_dir);

/// Minimal CSV table: header plus string cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws if missing
  double number(std::size_t row, const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace svlab::app
