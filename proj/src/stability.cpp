#include "saloha/stability.hpp"

#include "saloha/error.hpp"
#include "saloha/parallel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

namespace saloha {

namespace {

constexpr double kInsideMargin = 1e-9;

bool symmetric_p(const NetworkConfig& config) {
  return std::all_of(config.p.begin(), config.p.end(), [&](double v) { return v == config.p[0]; });
}

// Canonical evaluation key: (node, peer indices). In a symmetric network every
// surface is the surface of node 0 with its arguments sorted.
std::vector<int> canonical_key(int node, std::vector<int> peer_index, bool symmetric) {
  if (symmetric) {
    std::sort(peer_index.begin(), peer_index.end());
    node = 0;
  }
  peer_index.insert(peer_index.begin(), node);
  return peer_index;
}

BoundaryPoint evaluate_key(const NetworkConfig& base, const SweepGrid& grid, const std::vector<int>& key,
                           const CoupledOptions& opts) {
  NetworkConfig cfg = base;
  const int node = key[0];
  int slot = 1;
  for (int j = 0; j < cfg.n; ++j) {
    cfg.lambda[j] = j == node ? 0.0 : grid.rate(key[slot++]);
  }
  return lambda_sr(node, cfg, opts);
}

}  // namespace

BoundaryPoint lambda_sr(int i, const NetworkConfig& config, const CoupledOptions& opts) {
  if (i < 0 || i >= config.n) throw ConfigError("probe node out of range");
  const CoupledSolution cs = solve_coupled(config, i, opts);
  BoundaryPoint out;
  out.saturated_peers = cs.unstable_nodes();
  out.feasible = out.saturated_peers.empty();
  out.converged = cs.converged;
  out.iterations = cs.iterations;
  if (config.p[i] == 0.0) return out;  // never transmits

  const PhaseSpace space = working_space(config, i);
  const NodeChain nc = assemble_chain(i, config, cs.coupling, space);
  const DriftResult d = drift(nc.chain);
  const std::vector<double> succ = success_vector(config, space);

  for (std::size_t h = 0; h < succ.size(); ++h) out.value += d.alpha(static_cast<Eigen::Index>(h)) * succ[h];
  return out;
}

double closed_form_boundary(double p_i, double lambda_j) {
  if (p_i >= 1.0) return lambda_j > 0.0 ? 0.0 : p_i;
  return std::max(0.0, p_i * (1.0 - lambda_j / (1.0 - p_i)));
}

TwoNodeRegion closed_form_two_node(double p1, double p2, double lambda1, double lambda2) {
  TwoNodeRegion out;
  out.boundary1 = closed_form_boundary(p1, lambda2);
  out.boundary2 = closed_form_boundary(p2, lambda1);
  // a node without traffic is trivially stable
  out.inside = (lambda1 == 0.0 || lambda1 < out.boundary1) && (lambda2 == 0.0 || lambda2 < out.boundary2);
  return out;
}

bool region_contains(const NetworkConfig& config, double margin, const CoupledOptions& opts) {
  config.validate();
  for (int k = 0; k < config.n; ++k) {
    if (!(config.lambda[k] < lambda_sr(k, config, opts).value - margin)) return false;
  }
  return true;
}

double region_boundary(int i, const NetworkConfig& config, double tol, const CoupledOptions& opts) {
  config.validate();
  NetworkConfig cfg = config;
  auto peers_inside = [&](double li) {
    cfg.lambda[i] = li;
    for (int k = 0; k < cfg.n; ++k) {
      if (k == i) continue;
      if (!(cfg.lambda[k] < lambda_sr(k, cfg, opts).value)) return false;
    }
    return true;
  };
  const double own = std::min(lambda_sr(i, cfg, opts).value, config.p[i]);
  if (!peers_inside(0.0)) return 0.0;
  if (peers_inside(own)) return own;
  double lo = 0.0;
  double hi = own;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    (peers_inside(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SweepGrid SweepGrid::make(const NetworkConfig& config, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("sweep.delta_lambda must be positive");
  SweepGrid g;
  g.delta = delta;
  for (double pj : config.p) g.counts.push_back(static_cast<int>(std::floor(pj / delta + 1e-9)) + 1);
  return g;
}

std::size_t SweepGrid::points_per_surface(int i) const {
  std::size_t v = 1;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (static_cast<int>(j) != i) v *= static_cast<std::size_t>(counts[j]);
  }
  return v;
}

std::size_t StabilityBoundary::flat(std::span<const int> peer_index) const {
  std::size_t f = 0;
  for (std::size_t s = 0; s < dims.size(); ++s) f = f * static_cast<std::size_t>(dims[s]) + peer_index[s];
  return f;
}

std::vector<int> StabilityBoundary::unflat(std::size_t flat_index) const {
  std::vector<int> idx(dims.size());
  for (std::size_t s = dims.size(); s-- > 0;) {
    idx[s] = static_cast<int>(flat_index % static_cast<std::size_t>(dims[s]));
    flat_index /= static_cast<std::size_t>(dims[s]);
  }
  return idx;
}

bool RegionSweep::contains(std::span<const int> index) const {
  std::vector<int> peer_index;
  for (const StabilityBoundary& s : surfaces) {
    peer_index.clear();
    for (int j : s.peers) peer_index.push_back(index[j]);
    if (!(grid.rate(index[s.node]) < s.at(peer_index).value - kInsideMargin)) return false;
  }
  return true;
}

RegionSweep sweep_region(const NetworkConfig& config, double delta, const SweepOptions& opts) {
  config.validate();
  RegionSweep out;
  out.config = config;
  out.grid = SweepGrid::make(config, delta);
  const bool symmetric = opts.use_symmetry && symmetric_p(config);

  std::map<std::vector<int>, std::size_t> task_of;
  std::vector<std::vector<int>> tasks;
  std::vector<std::vector<std::size_t>> assignment(static_cast<std::size_t>(config.n));

  for (int i = 0; i < config.n; ++i) {
    StabilityBoundary s;
    s.node = i;
    for (int j = 0; j < config.n; ++j) {
      if (j == i) continue;
      s.peers.push_back(j);
      s.dims.push_back(out.grid.counts[j]);
    }
    const std::size_t total = out.grid.points_per_surface(i);
    s.points.resize(total);
    auto& assign = assignment[i];
    assign.resize(total);
    for (std::size_t f = 0; f < total; ++f) {
      std::vector<int> key = canonical_key(i, s.unflat(f), symmetric);
      auto [it, inserted] = task_of.emplace(key, tasks.size());
      if (inserted) tasks.push_back(std::move(key));
      assign[f] = it->second;
    }
    out.surfaces.push_back(std::move(s));
  }

  std::vector<BoundaryPoint> results(tasks.size());
  parallel_for(
      tasks.size(), [&](std::size_t t) { results[t] = evaluate_key(config, out.grid, tasks[t], opts.coupled); },
      opts.workers);

  for (int i = 0; i < config.n; ++i) {
    for (std::size_t f = 0; f < assignment[i].size(); ++f) out.surfaces[i].points[f] = results[assignment[i][f]];
  }
  out.solves = tasks.size();
  return out;
}

double region_volume(const RegionSweep& sweep) {
  const int n = sweep.config.n;
  const std::vector<int>& counts = sweep.grid.counts;
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  std::size_t inside = 0;
  for (;;) {
    if (sweep.contains(idx)) ++inside;
    int k = n - 1;
    while (k >= 0 && ++idx[k] == counts[k]) idx[k--] = 0;
    if (k < 0) break;
  }
  return static_cast<double>(inside) * std::pow(sweep.grid.delta, n);
}

VolumeResult region_volume_lazy(const NetworkConfig& config, double delta, const SweepOptions& opts) {
  config.validate();
  const int n = config.n;
  const SweepGrid grid = SweepGrid::make(config, delta);
  const bool symmetric = opts.use_symmetry && symmetric_p(config);
  std::map<std::vector<int>, double> memo;

  auto surface = [&](int i, const std::vector<int>& idx) {
    std::vector<int> peer_index;
    for (int j = 0; j < n; ++j) {
      if (j != i) peer_index.push_back(idx[j]);
    }
    std::vector<int> key = canonical_key(i, std::move(peer_index), symmetric);
    auto it = memo.find(key);
    if (it == memo.end()) it = memo.emplace(key, evaluate_key(config, grid, key, opts.coupled).value).first;
    return it->second;
  };
  auto peers_inside = [&](const std::vector<int>& idx) {
    for (int j = 1; j < n; ++j) {
      if (!(grid.rate(idx[j]) < surface(j, idx) - kInsideMargin)) return false;
    }
    return true;
  };

  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  std::size_t inside = 0;
  for (;;) {
    idx[0] = 0;
    if (peers_inside(idx)) {
      const double own = surface(0, idx);
      for (int k = 0; k < grid.counts[0]; ++k) {
        idx[0] = k;
        if (!(grid.rate(k) < own - kInsideMargin)) break;
        if (k > 0 && !peers_inside(idx)) break;
        ++inside;
      }
    }
    int k = n - 1;
    while (k >= 1 && ++idx[k] == grid.counts[k]) idx[k--] = 0;
    if (k < 1) break;
  }
  return {static_cast<double>(inside) * std::pow(delta, n), memo.size()};
}

double saturation_throughput(const NetworkConfig& config) {
  if (config.n < 1 || config.n > kMaxNodes || static_cast<int>(config.p.size()) != config.n) {
    throw ConfigError("network: n and p disagree");
  }
  const int n = config.n;
  const int stages = config.K + 1;
  std::size_t states = 1;
  for (int k = 0; k < n; ++k) states *= static_cast<std::size_t>(stages);

  auto decode = [&](std::size_t s) {
    std::vector<int> b(static_cast<std::size_t>(n));
    for (int k = n - 1; k >= 0; --k) {
      b[k] = static_cast<int>(s % static_cast<std::size_t>(stages));
      s /= static_cast<std::size_t>(stages);
    }
    return b;
  };
  auto encode = [&](const std::vector<int>& b) {
    std::size_t s = 0;
    for (int k = 0; k < n; ++k) s = s * static_cast<std::size_t>(stages) + static_cast<std::size_t>(b[k]);
    return s;
  };

  const auto m = static_cast<Eigen::Index>(states);
  Matrix P = Matrix::Zero(m, m);
  Vector single = Vector::Zero(m);
  for (std::size_t s = 0; s < states; ++s) {
    const std::vector<int> b = decode(s);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
      double pr = 1.0;
      for (int k = 0; k < n; ++k) {
        const double t = config.attempt_probability(k, b[k]);
        pr *= (mask >> k & 1u) ? t : 1.0 - t;
      }
      if (pr == 0.0) continue;
      const int attempts = std::popcount(mask);
      std::vector<int> nb = b;
      for (int k = 0; k < n; ++k) {
        if (mask >> k & 1u) nb[k] = attempts == 1 ? 0 : std::min(b[k] + 1, config.K);
      }
      P(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(encode(nb))) += pr;
      if (attempts == 1) single(static_cast<Eigen::Index>(s)) += pr;
    }
  }
  const RowVector pi = stationary_vector(P);
  return pi * single;
}

BackoffOptimum optimize_backoff(const NetworkConfig& base, Metric metric, double r_min, double r_max,
                                double step, double delta, const SweepOptions& opts) {
  if (!(step > 0.0) || !(r_min >= 1.0) || !(r_max >= r_min)) {
    throw ConfigError("sweep: need 1 <= r_min <= r_max and step > 0");
  }
  BackoffOptimum out;
  bool first = true;
  for (int k = 0;; ++k) {
    const double r = r_min + k * step;
    if (r > r_max + 1e-9) break;
    NetworkConfig cfg = base;
    cfg.r = r;
    const double value = metric == Metric::throughput ? saturation_throughput(cfg)
                                                      : region_volume_lazy(cfg, delta, opts).volume;
    out.curve.push_back({r, value});
    if (first || value > out.value + 1e-12) {
      out.r_opt = r;
      out.value = value;
      first = false;
    }
  }
  return out;
}

}  // namespace saloha
