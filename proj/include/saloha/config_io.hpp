#pragma once

// JSON run configuration shared by the analytic and simulation pipelines,
// run manifests and CSV output.

#include "saloha/aloha_model.hpp"
#include "saloha/dmap.hpp"
#include "saloha/simulator.hpp"
#include "saloha/stability.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace saloha {

inline constexpr const char* kToolVersion = "0.3.0";

struct ArrivalSpec {
  bool is_dmap = false;
  double rate = 0.0;  // Bernoulli rate
  DmapSpec dmap;

  double average() const;
};

struct SweepSpec {
  double delta_lambda = 0.01;
  double r_from = 1.0;
  double r_to = 8.0;
  double r_step = 0.5;
  Metric metric = Metric::volume;
  bool use_symmetry = true;
};

struct SimulationSpec {
  std::int64_t horizon = 2'000'000;
  std::int64_t warmup = 100'000;
  std::uint64_t seed = 1;
  int replications = 5;
  double delta = 0.01;
  double resolution = 0.002;
};

struct RunConfig {
  NetworkConfig network;  // lambda holds the average rate of every source
  std::vector<ArrivalSpec> arrivals;
  SweepSpec sweep;
  SimulationSpec simulation;

  bool has_dmap() const;
  SimConfig sim_config() const;
  /// Every source as a D-MAP (Bernoulli ones as c = 1).
  std::vector<DmapSpec> dmaps() const;
};

/// Throws ConfigError with the offending field path, e.g. "network.p[1]".
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

struct RunManifest {
  std::string config_path;
  std::string subcommand;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  std::string timestamp;

  /// Timestamp from SOURCE_DATE_EPOCH when set (reproducible builds), else now.
  static std::string current_timestamp();
  nlohmann::json to_json() const;
};

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

using CsvCell = std::variant<double, std::int64_t, std::string>;

/// Manifest as '#' comment lines, then the header row, then data rows.
void write_csv(std::ostream& os, const RunManifest& manifest, const std::vector<std::string>& header,
               const std::vector<std::vector<CsvCell>>& rows);
void write_csv_file(const std::string& path, const RunManifest& manifest, const std::vector<std::string>& header,
                    const std::vector<std::vector<CsvCell>>& rows);
void write_json_file(const std::string& path, const nlohmann::json& doc);

nlohmann::json to_json(const SimResult& result);

}  // namespace saloha
