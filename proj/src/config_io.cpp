#include "saloha/config_io.hpp"

#include "saloha/error.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

namespace saloha {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) bad(path + "." + key, "missing");
  return obj.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  return j.get<std::int64_t>();
}

Matrix matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) bad(path, "expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Matrix m(rows, rows);
  for (Eigen::Index u = 0; u < rows; ++u) {
    const json& row = j[static_cast<std::size_t>(u)];
    const std::string rp = path + "[" + std::to_string(u) + "]";
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) bad(rp, "rows must form a square matrix");
    for (Eigen::Index v = 0; v < rows; ++v) {
      m(u, v) = number(row[static_cast<std::size_t>(v)], rp + "[" + std::to_string(v) + "]");
    }
  }
  return m;
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index u = 0; u < m.rows(); ++u) {
    json row = json::array();
    for (Eigen::Index v = 0; v < m.cols(); ++v) row.push_back(m(u, v));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_cell(std::ostream& os, const CsvCell& c) {
  if (const auto* d = std::get_if<double>(&c)) {
    os << format_double(*d);
  } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
    os << *i;
  } else {
    os << std::get<std::string>(c);
  }
}

}  // namespace

double ArrivalSpec::average() const { return is_dmap ? stationary_and_rate(dmap).lambda_avg : rate; }

bool RunConfig::has_dmap() const {
  for (const ArrivalSpec& a : arrivals) {
    if (a.is_dmap) return true;
  }
  return false;
}

SimConfig RunConfig::sim_config() const {
  SimConfig s;
  s.network = network;
  if (has_dmap()) {
    for (const ArrivalSpec& a : arrivals) {
      s.dmap.push_back(a.is_dmap ? std::optional<DmapSpec>(a.dmap) : std::nullopt);
    }
  }
  s.horizon = simulation.horizon;
  s.warmup = simulation.warmup;
  s.seed = simulation.seed;
  s.replications = simulation.replications;
  return s;
}

std::vector<DmapSpec> RunConfig::dmaps() const {
  std::vector<DmapSpec> out;
  for (const ArrivalSpec& a : arrivals) out.push_back(a.is_dmap ? a.dmap : DmapSpec::bernoulli(a.rate));
  return out;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) bad("config", "expected a JSON object");
  RunConfig cfg;

  const json& net = require(doc, "network", "config");
  const std::int64_t n = integer(require(net, "n", "network"), "network.n");
  if (n < 2 || n > kMaxNodes) bad("network.n", "must be in [2, " + std::to_string(kMaxNodes) + "]");
  cfg.network.n = static_cast<int>(n);
  const json& p = require(net, "p", "network");
  if (p.is_number()) {
    cfg.network.p.assign(static_cast<std::size_t>(n), p.get<double>());
  } else if (p.is_array()) {
    if (static_cast<std::int64_t>(p.size()) != n) bad("network.p", "expected " + std::to_string(n) + " entries");
    for (std::size_t k = 0; k < p.size(); ++k) cfg.network.p.push_back(number(p[k], "network.p[" + std::to_string(k) + "]"));
  } else {
    bad("network.p", "expected a number or an array");
  }
  cfg.network.r = number(require(net, "r", "network"), "network.r");
  cfg.network.K = static_cast<int>(integer(require(net, "K", "network"), "network.K"));

  const json& arr = require(doc, "arrivals", "config");
  if (!arr.is_array() || static_cast<std::int64_t>(arr.size()) != n) {
    bad("arrivals", "expected an array with one entry per node");
  }
  for (std::size_t k = 0; k < arr.size(); ++k) {
    const std::string path = "arrivals[" + std::to_string(k) + "]";
    const json& a = arr[k];
    ArrivalSpec spec;
    if (a.is_number()) {
      spec.rate = a.get<double>();
    } else if (a.is_object() && a.contains("bernoulli")) {
      spec.rate = number(a.at("bernoulli"), path + ".bernoulli");
    } else if (a.is_object() && a.contains("dmap")) {
      const json& d = a.at("dmap");
      spec.is_dmap = true;
      spec.dmap.d0 = matrix(require(d, "d0", path + ".dmap"), path + ".dmap.d0");
      spec.dmap.d1 = matrix(require(d, "d1", path + ".dmap"), path + ".dmap.d1");
      try {
        spec.dmap.validate();
      } catch (const ConfigError& e) {
        bad(path, e.what());
      }
    } else {
      bad(path, "expected {\"bernoulli\": rate} or {\"dmap\": {\"d0\": ..., \"d1\": ...}}");
    }
    if (!spec.is_dmap && !(spec.rate >= 0.0 && spec.rate <= 1.0)) bad(path, "rate must lie in [0, 1]");
    cfg.network.lambda.push_back(spec.average());
    cfg.arrivals.push_back(std::move(spec));
  }
  cfg.network.validate();

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    if (!s.is_object()) bad("sweep", "expected an object");
    if (s.contains("delta_lambda")) cfg.sweep.delta_lambda = number(s.at("delta_lambda"), "sweep.delta_lambda");
    if (!(cfg.sweep.delta_lambda > 0.0 && cfg.sweep.delta_lambda <= 1.0)) bad("sweep.delta_lambda", "must lie in (0, 1]");
    if (s.contains("r")) {
      const json& r = s.at("r");
      cfg.sweep.r_from = number(require(r, "from", "sweep.r"), "sweep.r.from");
      cfg.sweep.r_to = number(require(r, "to", "sweep.r"), "sweep.r.to");
      cfg.sweep.r_step = number(require(r, "step", "sweep.r"), "sweep.r.step");
    }
    if (!(cfg.sweep.r_from >= 1.0 && cfg.sweep.r_to >= cfg.sweep.r_from && cfg.sweep.r_step > 0.0)) {
      bad("sweep.r", "need 1 <= from <= to and step > 0");
    }
    if (s.contains("metric")) {
      const json& m = s.at("metric");
      if (m == "volume") {
        cfg.sweep.metric = Metric::volume;
      } else if (m == "throughput") {
        cfg.sweep.metric = Metric::throughput;
      } else {
        bad("sweep.metric", "expected \"volume\" or \"throughput\"");
      }
    }
    if (s.contains("symmetry")) {
      if (!s.at("symmetry").is_boolean()) bad("sweep.symmetry", "expected true or false");
      cfg.sweep.use_symmetry = s.at("symmetry").get<bool>();
    }
  }

  if (doc.contains("simulation")) {
    const json& s = doc.at("simulation");
    if (!s.is_object()) bad("simulation", "expected an object");
    SimulationSpec& sim = cfg.simulation;
    if (s.contains("horizon")) sim.horizon = integer(s.at("horizon"), "simulation.horizon");
    if (s.contains("warmup")) sim.warmup = integer(s.at("warmup"), "simulation.warmup");
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) bad("simulation.seed", "expected a nonnegative integer");
      sim.seed = s.at("seed").get<std::uint64_t>();
    }
    if (s.contains("replications")) sim.replications = static_cast<int>(integer(s.at("replications"), "simulation.replications"));
    if (s.contains("delta")) sim.delta = number(s.at("delta"), "simulation.delta");
    if (s.contains("resolution")) sim.resolution = number(s.at("resolution"), "simulation.resolution");
    if (sim.horizon <= sim.warmup || sim.warmup < 0) bad("simulation.horizon", "need horizon > warmup >= 0");
    if (sim.replications < 1) bad("simulation.replications", "must be >= 1");
    if (!(sim.delta > 0.0 && sim.delta < 1.0)) bad("simulation.delta", "must lie in (0, 1)");
    if (!(sim.resolution > 0.0)) bad("simulation.resolution", "must be positive");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
  json doc;
  doc["network"] = {{"n", cfg.network.n}, {"p", cfg.network.p}, {"r", cfg.network.r}, {"K", cfg.network.K}};
  json arr = json::array();
  for (const ArrivalSpec& a : cfg.arrivals) {
    if (a.is_dmap) {
      arr.push_back({{"dmap", {{"d0", matrix_json(a.dmap.d0)}, {"d1", matrix_json(a.dmap.d1)}}}});
    } else {
      arr.push_back({{"bernoulli", a.rate}});
    }
  }
  doc["arrivals"] = std::move(arr);
  doc["sweep"] = {{"delta_lambda", cfg.sweep.delta_lambda},
                  {"r", {{"from", cfg.sweep.r_from}, {"to", cfg.sweep.r_to}, {"step", cfg.sweep.r_step}}},
                  {"metric", cfg.sweep.metric == Metric::volume ? "volume" : "throughput"},
                  {"symmetry", cfg.sweep.use_symmetry}};
  doc["simulation"] = {{"horizon", cfg.simulation.horizon},   {"warmup", cfg.simulation.warmup},
                       {"seed", cfg.simulation.seed},         {"replications", cfg.simulation.replications},
                       {"delta", cfg.simulation.delta},       {"resolution", cfg.simulation.resolution}};
  return doc;
}

std::string RunManifest::current_timestamp() {
  std::time_t t = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(env, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json RunManifest::to_json() const {
  return {{"config", config_path}, {"subcommand", subcommand}, {"overrides", overrides}, {"output_dir", output_dir},
          {"seed", seed},          {"tool_version", tool_version}, {"timestamp", timestamp}};
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(std::ostream& os, const RunManifest& manifest, const std::vector<std::string>& header,
               const std::vector<std::vector<CsvCell>>& rows) {
  const json m = manifest.to_json();
  for (auto it = m.begin(); it != m.end(); ++it) {
    os << "# " << it.key() << ": " << (it->is_string() ? it->get<std::string>() : it->dump()) << "\n";
  }
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << ",";
      write_cell(os, row[c]);
    }
    os << "\n";
  }
}

void write_csv_file(const std::string& path, const RunManifest& manifest, const std::vector<std::string>& header,
                    const std::vector<std::vector<CsvCell>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot open for writing");
  write_csv(out, manifest, header, rows);
}

void write_json_file(const std::string& path, const json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot open for writing");
  out << doc.dump(2) << "\n";
}

json to_json(const SimResult& result) {
  json nodes = json::array();
  for (const NodeStats& nd : result.nodes) {
    nodes.push_back({{"arrivals", nd.arrivals},
                     {"successes", nd.successes},
                     {"collisions", nd.collisions},
                     {"attempts", nd.attempts},
                     {"stability_ratio", nd.ratio},
                     {"ratio_half_width", nd.ratio_half_width},
                     {"queue_slope", nd.slope},
                     {"queue_slope_se", nd.slope_se},
                     {"queue_histogram", nd.queue_histogram},
                     {"backoff_occupancy", nd.backoff_occupancy},
                     {"arrival_state_visits", nd.state_visits},
                     {"arrival_state_arrivals", nd.state_arrivals}});
  }
  return {{"slots", result.slots},
          {"successes", result.successes},
          {"arrivals", result.arrivals},
          {"stability_ratio", result.stability_ratio},
          {"throughput", result.throughput},
          {"throughput_half_width", result.throughput_half_width},
          {"multi_success_slots", result.multi_success_slots},
          {"backoff_violations", result.backoff_violations},
          {"nodes", std::move(nodes)}};
}

}  // namespace saloha
