#include "cli.hpp"

#include "saloha/config_io.hpp"
#include "saloha/coupled.hpp"
#include "saloha/dmap.hpp"
#include "saloha/error.hpp"
#include "saloha/simulator.hpp"
#include "saloha/stability.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace saloha::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double parse_number(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(what + ": '" + s + "' is not a number");
  }
}

int parse_node(std::string s, int n, const std::string& what) {
  if (s.rfind("node=", 0) == 0) s.erase(0, 5);
  const double v = parse_number(s, what);
  if (v != std::floor(v) || v < 1 || v > n) {
    throw ConfigError(what + ": node must be an integer in [1, " + std::to_string(n) + "]");
  }
  return static_cast<int>(v) - 1;
}

std::string node_label(int k) { return "lambda_" + std::to_string(k + 1); }

RunManifest make_manifest(const std::string& config, const std::string& sub, const std::vector<std::string>& overrides,
                          const std::string& out_dir, std::uint64_t seed) {
  RunManifest m;
  m.config_path = config;
  m.subcommand = sub;
  m.overrides = overrides;
  m.output_dir = out_dir;
  m.seed = seed;
  m.timestamp = RunManifest::current_timestamp();
  return m;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError(dir + ": cannot create output directory (" + ec.message() + ")");
}

// ---- region ---------------------------------------------------------------

struct RegionArgs {
  std::string config;
  std::optional<double> delta;
  std::string out = ".";
  bool no_symmetry = false;
};

int cmd_region(const RegionArgs& a, const std::vector<std::string>& overrides, std::ostream& out,
               std::ostream& err) {
  const RunConfig cfg = load_config(a.config);
  const double delta = a.delta.value_or(cfg.sweep.delta_lambda);
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("--delta-lambda: must lie in (0, 1]");
  SweepOptions opts;
  opts.use_symmetry = cfg.sweep.use_symmetry && !a.no_symmetry;

  const RegionSweep sweep = sweep_region(cfg.network, delta, opts);
  const double volume = region_volume(sweep);
  const RunManifest manifest = make_manifest(a.config, "region", overrides, a.out, cfg.simulation.seed);
  ensure_dir(a.out);

  std::size_t unconverged = 0;
  json files = json::array();
  for (const StabilityBoundary& s : sweep.surfaces) {
    std::vector<std::string> header;
    for (int j : s.peers) header.push_back(node_label(j));
    header.push_back(node_label(s.node) + "_sr");
    header.push_back("feasible");
    std::vector<std::vector<CsvCell>> rows;
    rows.reserve(s.points.size());
    for (std::size_t f = 0; f < s.points.size(); ++f) {
      const std::vector<int> idx = s.unflat(f);
      std::vector<CsvCell> row;
      for (int v : idx) row.emplace_back(sweep.grid.rate(v));
      const BoundaryPoint& bp = s.points[f];
      row.emplace_back(bp.value);
      row.emplace_back(std::int64_t{bp.feasible ? 1 : 0});
      rows.push_back(std::move(row));
      if (!bp.converged) ++unconverged;
    }
    const std::string name = "boundary_node" + std::to_string(s.node + 1) + ".csv";
    write_csv_file((fs::path(a.out) / name).string(), manifest, header, rows);
    files.push_back(name);
  }

  json summary;
  summary["manifest"] = manifest.to_json();
  summary["config"] = to_json(cfg);
  summary["delta_lambda"] = delta;
  summary["symmetry"] = opts.use_symmetry;
  summary["volume"] = volume;
  summary["solves"] = sweep.solves;
  summary["unconverged_points"] = unconverged;
  summary["grid_points"] = sweep.grid.counts;
  summary["boundary_files"] = files;
  write_json_file((fs::path(a.out) / "region.json").string(), summary);

  out << "volume " << format_double(volume) << " (" << sweep.solves << " boundary solves)\n";
  if (unconverged > 0) {
    err << "error: " << unconverged << " boundary points did not converge\n";
    return kConvergence;
  }
  return kOk;
}

// ---- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> horizon;
  std::optional<int> replications;
  std::string boundary;
  std::string vary;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& overrides, std::ostream& out) {
  RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.simulation.seed = *a.seed;
  if (a.horizon) cfg.simulation.horizon = *a.horizon;
  if (a.replications) cfg.simulation.replications = *a.replications;
  if (cfg.simulation.horizon <= cfg.simulation.warmup) throw ConfigError("--horizon: must exceed simulation.warmup");
  if (cfg.simulation.replications < 1) throw ConfigError("--replications: must be >= 1");
  SimConfig sim = cfg.sim_config();
  sim.validate();
  const RunManifest manifest = make_manifest(a.config, "simulate", overrides, a.out, cfg.simulation.seed);

  if (a.boundary.empty()) {
    if (!a.vary.empty()) throw ConfigError("--vary: only valid together with --boundary");
    const SimResult result = run(sim);
    const StabilityCheck check = classify(result, cfg.simulation.delta);
    json doc;
    doc["manifest"] = manifest.to_json();
    doc["config"] = to_json(cfg);
    doc["stable"] = check.stable;
    doc["min_node_ratio"] = check.min_ratio;
    doc["worst_node"] = check.worst_node + 1;
    doc["result"] = to_json(result);
    if (a.out.empty()) {
      out << doc.dump(2) << "\n";
    } else {
      ensure_dir(a.out);
      write_json_file((fs::path(a.out) / "simulation.json").string(), doc);
    }
    return kOk;
  }

  const int n = cfg.network.n;
  const int i = parse_node(a.boundary, n, "--boundary");
  if (cfg.arrivals[i].is_dmap) throw ConfigError("--boundary: the probe node must have Bernoulli arrivals");
  std::optional<int> j;
  std::vector<double> values;
  if (!a.vary.empty()) {
    const auto eq = a.vary.find('=');
    if (eq == std::string::npos) throw ConfigError("--vary: expected j=a:b:step");
    j = parse_node(a.vary.substr(0, eq), n, "--vary");
    if (*j == i) throw ConfigError("--vary: cannot vary the probe node");
    if (cfg.arrivals[*j].is_dmap) throw ConfigError("--vary: the varied node must have Bernoulli arrivals");
    values = parse_range(a.vary.substr(eq + 1));
    for (double v : values) {
      if (v < 0.0 || v > 1.0) throw ConfigError("--vary: rates must lie in [0, 1]");
    }
  } else {
    values.push_back(0.0);
  }

  std::vector<std::string> header;
  for (int k = 0; k < n; ++k) {
    if (k != i) header.push_back(node_label(k));
  }
  for (const char* h : {"_max", "_lo", "_hi"}) header.push_back(node_label(i) + h);
  header.push_back("half_width");
  header.push_back("probes");
  std::vector<std::vector<CsvCell>> rows;
  for (double v : values) {
    SimConfig s = sim;
    if (j) s.network.lambda[*j] = v;
    const EmpiricalBoundary b = estimate_boundary(i, s, cfg.simulation.resolution, cfg.simulation.delta);
    std::vector<CsvCell> row;
    for (int k = 0; k < n; ++k) {
      if (k != i) row.emplace_back(s.network.lambda[k]);
    }
    row.emplace_back(b.estimate);
    row.emplace_back(b.lo);
    row.emplace_back(b.hi);
    row.emplace_back(b.half_width);
    row.emplace_back(std::int64_t{b.probes});
    rows.push_back(std::move(row));
  }
  if (a.out.empty()) {
    write_csv(out, manifest, header, rows);
  } else {
    ensure_dir(a.out);
    write_csv_file((fs::path(a.out) / ("sim_boundary_node" + std::to_string(i + 1) + ".csv")).string(), manifest,
                   header, rows);
  }
  return kOk;
}

// ---- metrics --------------------------------------------------------------

struct MetricsArgs {
  std::string config;
  std::string metric;
  std::string sweep;
  std::optional<double> delta;
  std::string out;
};

int cmd_metrics(const MetricsArgs& a, const std::vector<std::string>& overrides, std::ostream& out) {
  const RunConfig cfg = load_config(a.config);
  Metric metric = cfg.sweep.metric;
  if (a.metric == "volume") {
    metric = Metric::volume;
  } else if (a.metric == "throughput") {
    metric = Metric::throughput;
  } else if (!a.metric.empty()) {
    throw ConfigError("--metric: expected volume or throughput");
  }
  double from = cfg.sweep.r_from;
  double to = cfg.sweep.r_to;
  double step = cfg.sweep.r_step;
  if (!a.sweep.empty()) {
    std::string text = a.sweep;
    if (text.rfind("r=", 0) == 0) text = text.substr(2);
    const std::vector<double> rs = parse_range(text);
    from = rs.front();
    to = rs.back();
    step = rs.size() > 1 ? rs[1] - rs[0] : 1.0;
  }
  if (from < 1.0) throw ConfigError("--sweep: backoff factor must be >= 1");
  const double delta = a.delta.value_or(cfg.sweep.delta_lambda);
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("--delta-lambda: must lie in (0, 1]");

  SweepOptions opts;
  opts.use_symmetry = cfg.sweep.use_symmetry;
  const BackoffOptimum best = optimize_backoff(cfg.network, metric, from, to, step, delta, opts);
  const RunManifest manifest = make_manifest(a.config, "metrics", overrides, a.out, cfg.simulation.seed);
  std::vector<std::vector<CsvCell>> rows;
  for (const BackoffPoint& pt : best.curve) rows.push_back({pt.r, pt.value});
  const std::vector<std::string> header{"r", metric == Metric::volume ? "volume" : "throughput"};
  if (a.out.empty()) {
    write_csv(out, manifest, header, rows);
  } else {
    ensure_dir(a.out);
    write_csv_file((fs::path(a.out) / "metrics.csv").string(), manifest, header, rows);
    out << "r_opt " << format_double(best.r_opt) << " value " << format_double(best.value) << "\n";
  }
  return kOk;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
  std::string config;
  double tolerance = 1e-9;
  bool simulate = false;
  bool inject_fault = false;
};

constexpr double kKroneckerTol = 1e-12;
constexpr double kAggregationTol = 1e-10;
constexpr double kFault = 1e-6;

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.config);
  const NetworkConfig& net = cfg.network;
  int failures = 0;
  auto report = [&](bool ok, const std::string& name, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": ") << detail << "\n";
    if (!ok) ++failures;
  };
  auto sci = [](double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
  };

  const CoupledSolution coupled = solve_coupled(net);
  for (int i = 0; i < net.n; ++i) {
    const std::string name = "chain node " + std::to_string(i + 1);
    NodeChain nc = assemble_chain(i, net, coupled.coupling, working_space(net, i));
    if (a.inject_fault && i == 0) nc.chain.a1(0, 0) += kFault;
    try {
      nc.chain.validate();
      report(true, name, "blocks stochastic, m0 = " + std::to_string(nc.space.m0()) +
                             ", m = " + std::to_string(nc.space.m()));
    } catch (const ConfigError& e) {
      report(false, name, e.what());
    }
  }

  if (net.n == 2 && net.K == 0) {
    const SweepGrid grid = SweepGrid::make(net, 0.01);
    double worst = 0.0;
    std::string where = "none";
    std::size_t checked = 0;
    for (int i = 0; i < 2; ++i) {
      const int j = 1 - i;
      for (int v = 0; v < grid.counts[j]; ++v) {
        NetworkConfig c = net;
        c.lambda[j] = grid.rate(v);
        const BoundaryPoint bp = lambda_sr(i, c);
        if (!bp.feasible) continue;
        ++checked;
        const double diff = std::abs(bp.value - closed_form_boundary(net.p[i], c.lambda[j]));
        if (diff > worst) {
          worst = diff;
          where = node_label(i) + "_sr at " + node_label(j) + " = " + format_double(c.lambda[j]);
        }
      }
    }
    report(worst <= a.tolerance, "closed form",
           "max deviation " + sci(worst) + " over " + std::to_string(checked) + " points (at " + where +
               "), tolerance " + sci(a.tolerance));
  } else {
    out << "SKIP closed form: needs n = 2 and K = 0\n";
  }

  for (int i = 0; i < net.n; ++i) {
    if (!cfg.arrivals[i].is_dmap) continue;
    const DmapSpec& spec = cfg.arrivals[i].dmap;
    const std::string tag = " node " + std::to_string(i + 1);
    const CouplingState z = solve_coupled(net, i).coupling;
    const NodeChain base = assemble_chain(i, net, z, working_space(net, i));
    DmapChain ext = assemble_dmap_chain(i, net, spec, z);
    if (a.inject_fault) ext.chain.a1(0, 0) += kFault;
    const Matrix a_base = base.chain.a0 + base.chain.a1 + base.chain.a2;
    const Matrix a_ext = ext.chain.a0 + ext.chain.a1 + ext.chain.a2;
    const KroneckerReport k = verify_kronecker(a_base, a_ext, spec, kKroneckerTol);
    std::string detail = "max |A^D - A (x) D| = " + sci(k.max_discrepancy);
    if (k.row >= 0) detail += " at (" + std::to_string(k.row) + ", " + std::to_string(k.col) + ")";
    report(k.ok, "kronecker" + tag, detail + ", tolerance " + sci(kKroneckerTol));

    const RowVector alpha_base = drift(base.chain).alpha;
    const RowVector alpha_ext = drift(ext.chain).alpha;
    const double agg = block_aggregation_error(alpha_ext, alpha_base, spec.c());
    report(agg <= kAggregationTol, "aggregation" + tag,
           "max block error " + sci(agg) + ", tolerance " + sci(kAggregationTol));
  }

  if (a.simulate) {
    const bool analytic = region_contains(net);
    const SimResult res = run(cfg.sim_config());
    const StabilityCheck check = classify(res, cfg.simulation.delta);
    report(analytic == check.stable, "simulator membership",
           std::string("analytic ") + (analytic ? "inside" : "outside") + ", simulated " +
               (check.stable ? "stable" : "unstable") + " (min node ratio " + format_double(check.min_ratio) + ")");
  }

  out << (failures == 0 ? "verify: all checks passed\n" : "verify: " + std::to_string(failures) + " check(s) failed\n");
  return failures == 0 ? kOk : kVerifyFailed;
}

}  // namespace

std::vector<double> parse_range(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.size() != 3) throw ConfigError("range '" + text + "': expected a:b:step");
  const double from = parse_number(parts[0], "range start");
  const double to = parse_number(parts[1], "range end");
  const double step = parse_number(parts[2], "range step");
  if (!(step > 0.0) || to < from) throw ConfigError("range '" + text + "': need a <= b and step > 0");
  const auto count = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
  std::vector<double> out(count);
  for (std::size_t k = 0; k < count; ++k) out[k] = from + static_cast<double>(k) * step;
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stability regions of buffered slotted Aloha with exponential backoff", "saloha"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  RegionArgs region;
  auto* reg = app.add_subcommand("region", "sweep the stability region, write boundary CSVs and region.json");
  reg->add_option("config", region.config, "JSON config")->required();
  reg->add_option("--delta-lambda", region.delta, "grid step of the peer rates");
  reg->add_option("--out", region.out, "output directory");
  reg->add_flag("--no-symmetry", region.no_symmetry, "solve every grid point even when all p are equal");

  SimulateArgs sim;
  auto* simc = app.add_subcommand("simulate", "slot simulation, or empirical boundary with --boundary");
  simc->add_option("config", sim.config, "JSON config")->required();
  simc->add_option("--seed", sim.seed, "override simulation.seed");
  simc->add_option("--horizon", sim.horizon, "override simulation.horizon (slots per replication)");
  simc->add_option("--replications", sim.replications, "override simulation.replications");
  simc->add_option("--boundary", sim.boundary, "estimate the boundary of node i (1-based, 'i' or 'node=i')");
  simc->add_option("--vary", sim.vary, "j=a:b:step, rates of node j to scan in boundary mode");
  simc->add_option("--out", sim.out, "output directory (default: stdout)");

  MetricsArgs met;
  auto* metc = app.add_subcommand("metrics", "region metric as a function of the backoff factor");
  metc->add_option("config", met.config, "JSON config")->required();
  metc->add_option("--metric", met.metric, "volume or throughput");
  metc->add_option("--sweep", met.sweep, "r=a:b:step");
  metc->add_option("--delta-lambda", met.delta, "grid step for the volume");
  metc->add_option("--out", met.out, "output directory (default: stdout)");

  VerifyArgs ver;
  auto* verc = app.add_subcommand("verify", "internal consistency checks with PASS/FAIL lines");
  verc->add_option("config", ver.config, "JSON config")->required();
  verc->add_option("--tolerance", ver.tolerance, "closed-form tolerance");
  verc->add_flag("--simulate", ver.simulate, "also compare analytic membership with the simulator");
  verc->add_flag("--inject-fault", ver.inject_fault, "corrupt one block entry to exercise the failure path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kValidation;
  }

  std::vector<std::string> overrides;
  for (const std::string& s : args) {
    if (s.rfind("--", 0) == 0) overrides.push_back(s);
  }
  // Attach option values to their flags so the manifest records them.
  for (std::size_t k = 0; k + 1 < args.size(); ++k) {
    if (args[k].rfind("--", 0) == 0 && args[k].find('=') == std::string::npos &&
        args[k + 1].rfind("--", 0) != 0) {
      auto it = std::find(overrides.begin(), overrides.end(), args[k]);
      if (it != overrides.end() && args[k] != "--no-symmetry" && args[k] != "--simulate" &&
          args[k] != "--inject-fault") {
        *it += "=" + args[k + 1];
      }
    }
  }

  try {
    if (*reg) return cmd_region(region, overrides, out, err);
    if (*simc) return cmd_simulate(sim, overrides, out);
    if (*metc) return cmd_metrics(met, overrides, out);
    return cmd_verify(ver, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const ConvergenceError& e) {
    err << "convergence failure: " << e.what() << "\n";
    return kConvergence;
  } catch (const IrreducibilityError& e) {
    err << "convergence failure: " << e.what() << "\n";
    return kConvergence;
  }
}

}  // namespace saloha::cli
