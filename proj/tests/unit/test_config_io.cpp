#include "saloha/config_io.hpp"
#include "saloha/error.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace saloha;
using nlohmann::json;

namespace {

json base_doc() {
  return json::parse(R"({
    "network": {"n": 2, "p": [0.8, 0.6], "r": 2, "K": 1},
    "arrivals": [0.1, {"bernoulli": 0.15}]
  })");
}

std::string error_of(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

TEST_SUITE("config_io") {

TEST_CASE("minimal config and defaults") {
  const RunConfig c = parse_config(base_doc());
  CHECK(c.network.n == 2);
  CHECK(c.network.p == std::vector<double>{0.8, 0.6});
  CHECK(c.network.lambda == std::vector<double>{0.1, 0.15});
  CHECK_FALSE(c.has_dmap());
  CHECK(c.sweep.use_symmetry);
  CHECK(c.sweep.metric == Metric::volume);
  const SimConfig s = c.sim_config();
  CHECK(s.seed == c.simulation.seed);
  CHECK(s.dmap.empty());
}

TEST_CASE("scalar p is broadcast") {
  json doc = base_doc();
  doc["network"]["p"] = 0.5;
  CHECK(parse_config(doc).network.p == std::vector<double>{0.5, 0.5});
}

TEST_CASE("parse, emit, parse is a fixed point") {
  for (const char* name : {"two_node_k0.json", "backoff_checkpoint.json", "dmap_two_node.json", "three_node.json",
                           "four_node_throughput.json"}) {
    INFO(name);
    const RunConfig a = load_config(std::string(SALOHA_CONFIG_DIR) + "/" + name);
    const json emitted = to_json(a);
    const RunConfig b = parse_config(emitted);
    CHECK(to_json(b) == emitted);
    CHECK(b.network.lambda == a.network.lambda);
    CHECK(b.simulation.seed == a.simulation.seed);
  }
}

TEST_CASE("D-MAP arrivals keep their matrices and average") {
  const RunConfig c = load_config(std::string(SALOHA_CONFIG_DIR) + "/dmap_two_node.json");
  REQUIRE(c.has_dmap());
  CHECK(c.arrivals[0].is_dmap);
  CHECK(c.arrivals[0].dmap.d0.rows() == 2);
  CHECK(c.network.lambda[0] == doctest::Approx(0.1).epsilon(1e-12));
  const SimConfig s = c.sim_config();
  REQUIRE(s.dmap.size() == 2);
  CHECK(s.dmap[0].has_value());
  CHECK_FALSE(s.dmap[1].has_value());
  CHECK(c.dmaps()[1].d1(0, 0) == doctest::Approx(c.network.lambda[1]));
}

TEST_CASE("errors name the offending field") {
  json p = base_doc();
  p["network"]["p"][1] = 1.2;
  CHECK(starts_with(error_of(p), "network.p[1]"));

  json missing = base_doc();
  missing["network"].erase("K");
  CHECK(starts_with(error_of(missing), "network.K"));

  json count = base_doc();
  count["arrivals"].push_back(0.1);
  CHECK(starts_with(error_of(count), "arrivals"));

  json rate = base_doc();
  rate["arrivals"][1] = json{{"bernoulli", "fast"}};
  CHECK(starts_with(error_of(rate), "arrivals[1].bernoulli"));

  json dmap = base_doc();
  dmap["arrivals"][0] = json::parse(R"({"dmap": {"d0": [[0.5, 0.5], [0.5, 0.5]], "d1": [[0.1, 0], [0, 0]]}})");
  CHECK(starts_with(error_of(dmap), "arrivals[0]"));

  json ragged = base_doc();
  ragged["arrivals"][0] = json::parse(R"({"dmap": {"d0": [[0.5, 0.4], [0.5]], "d1": [[0.1, 0], [0, 0]]}})");
  CHECK(starts_with(error_of(ragged), "arrivals[0].dmap.d0[1]"));

  json metric = base_doc();
  metric["sweep"] = json{{"metric", "latency"}};
  CHECK(starts_with(error_of(metric), "sweep.metric"));

  json seed = base_doc();
  seed["simulation"] = json{{"seed", -3}};
  CHECK(starts_with(error_of(seed), "simulation.seed"));

  json horizon = base_doc();
  horizon["simulation"] = json{{"horizon", 100}, {"warmup", 200}};
  CHECK(starts_with(error_of(horizon), "simulation.horizon"));

  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 0.151875, 1e-300, 123456789.125, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("CSV starts with the manifest, then the header") {
  RunManifest m;
  m.config_path = "cfg.json";
  m.subcommand = "region";
  m.seed = 7;
  m.timestamp = "1970-01-01T00:00:00Z";
  std::ostringstream os;
  write_csv(os, m, {"a", "b", "c"}, {{0.25, std::int64_t{3}, std::string("x")}});
  std::istringstream in(os.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() >= 3);
  std::size_t k = 0;
  while (k < lines.size() && starts_with(lines[k], "# ")) ++k;
  CHECK(k >= 5);
  CHECK(os.str().find("# seed: 7\n") != std::string::npos);
  CHECK(os.str().find("# subcommand: region\n") != std::string::npos);
  REQUIRE(k + 2 == lines.size());
  CHECK(lines[k] == "a,b,c");
  CHECK(lines[k + 1] == "0.25,3,x");
}

TEST_CASE("timestamp follows SOURCE_DATE_EPOCH") {
  ::setenv("SOURCE_DATE_EPOCH", "86400", 1);
  CHECK(RunManifest::current_timestamp() == "1970-01-02T00:00:00Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  CHECK(RunManifest::current_timestamp().size() == 20);
}

TEST_CASE("simulation result serializes every node") {
  SimConfig s;
  s.network = NetworkConfig{2, {0.5, 0.5}, 1, 0, {0.1, 0.1}};
  s.horizon = 20'000;
  s.warmup = 1'000;
  s.replications = 1;
  const json j = to_json(run(s));
  REQUIRE(j.at("nodes").size() == 2);
  CHECK(j.at("slots").get<std::uint64_t>() > 0);
  for (const char* key : {"arrivals", "successes", "stability_ratio", "queue_histogram", "backoff_occupancy"}) {
    CHECK(j.at("nodes")[0].contains(key));
  }
}

TEST_CASE("JSON file ends with a newline") {
  const std::filesystem::path path = std::filesystem::temp_directory_path() / "saloha_config_io_test.json";
  write_json_file(path.string(), json{{"a", 1}});
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.back() == '\n');
  CHECK(json::parse(text) == json{{"a", 1}});
  std::filesystem::remove(path);
}

}  // TEST_SUITE
