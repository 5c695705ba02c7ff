#include "saloha/simulator.hpp"

#include "saloha/error.hpp"
#include "saloha/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace saloha {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Two-sided 95% Student t quantiles, dof 1..30.
double t_quantile(int dof) {
  static constexpr std::array<double, 30> table{
      12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
      2.120,  2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (dof < 1) return 0.0;
  if (dof <= 30) return table[static_cast<std::size_t>(dof - 1)];
  return 1.96;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

// Cumulative table over (arrival, next state) outcomes of one source state:
// first the d1 row, then the d0 row.
struct Source {
  bool dmap = false;
  double lambda = 0.0;
  int c = 1;
  std::vector<std::vector<double>> cumulative;  // per state, 2c entries
  std::vector<double> initial;                  // cumulative stationary law
};

Source make_source(const SimConfig& sim, int k) {
  Source s;
  const bool has_dmap = !sim.dmap.empty() && sim.dmap[k].has_value();
  if (!has_dmap) {
    s.lambda = sim.network.lambda[k];
    return s;
  }
  const DmapSpec& spec = *sim.dmap[k];
  s.dmap = true;
  s.c = spec.c();
  for (int u = 0; u < s.c; ++u) {
    std::vector<double> row;
    double acc = 0.0;
    for (int v = 0; v < s.c; ++v) row.push_back(acc += spec.d1(u, v));
    for (int v = 0; v < s.c; ++v) row.push_back(acc += spec.d0(u, v));
    row.back() = 1.0 + 1e-12;
    s.cumulative.push_back(std::move(row));
  }
  const RowVector pi = stationary_vector(spec.generator());
  double acc = 0.0;
  for (int u = 0; u < s.c; ++u) s.initial.push_back(acc += pi(u));
  s.initial.back() = 1.0 + 1e-12;
  return s;
}

int draw(const std::vector<double>& cumulative, double x) {
  return static_cast<int>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
}

struct RepNode {
  std::uint64_t arrivals = 0, successes = 0, collisions = 0, attempts = 0;
  std::vector<std::uint64_t> hist, boff, visits, state_arrivals;
  double slope = 0.0;
};

struct RepOut {
  std::vector<RepNode> nodes;
  std::uint64_t slots = 0;
  std::uint64_t multi = 0;
  std::uint64_t violations = 0;
};

RepOut replicate(const SimConfig& sim, const std::vector<Source>& sources, int rep) {
  const NetworkConfig& net = sim.network;
  const int n = net.n;
  const int K = net.K;
  std::mt19937_64 g = replication_engine(sim.seed, rep);

  std::array<std::array<double, 8>, kMaxNodes> tp{};
  for (int k = 0; k < n; ++k) {
    for (int b = 0; b <= K; ++b) tp[k][b] = net.attempt_probability(k, b);
  }

  std::array<std::int64_t, kMaxNodes> q{};
  std::array<int, kMaxNodes> b{};
  std::array<int, kMaxNodes> state{};
  std::array<bool, kMaxNodes> sat{};
  std::array<bool, kMaxNodes> tx{};
  for (int k = 0; k < n; ++k) {
    sat[k] = sim.is_saturated(k);
    if (sources[k].dmap) state[k] = draw(sources[k].initial, u01(g));
  }

  RepOut out;
  out.nodes.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    out.nodes[k].hist.assign(static_cast<std::size_t>(sim.histogram_levels), 0);
    out.nodes[k].boff.assign(static_cast<std::size_t>(K + 1), 0);
    out.nodes[k].visits.assign(static_cast<std::size_t>(sources[k].c), 0);
    out.nodes[k].state_arrivals.assign(static_cast<std::size_t>(sources[k].c), 0);
  }

  const std::int64_t half = sim.warmup + (sim.horizon - sim.warmup) / 2;
  // Running sums for the least-squares queue slope over the second half.
  std::array<double, kMaxNodes> sq{}, stq{};
  double st = 0.0, stt = 0.0, cnt = 0.0;

  for (std::int64_t slot = 0; slot < sim.horizon; ++slot) {
    const bool measure = slot >= sim.warmup;
    int transmitters = 0;
    int winner = -1;
    for (int k = 0; k < n; ++k) {
      tx[k] = false;
      if (sat[k] || q[k] > 0) {
        if (u01(g) < tp[k][b[k]]) {
          tx[k] = true;
          ++transmitters;
          winner = k;
        }
      }
    }
    int slot_successes = 0;
    if (transmitters == 1) {
      if (!sat[winner]) --q[winner];
      b[winner] = 0;
      ++slot_successes;
      if (measure) ++out.nodes[winner].successes;
    } else if (transmitters > 1) {
      for (int k = 0; k < n; ++k) {
        if (!tx[k]) continue;
        b[k] = std::min(b[k] + 1, K);
        if (measure) ++out.nodes[k].collisions;
      }
    }
    for (int k = 0; k < n; ++k) {
      if (sat[k]) continue;
      const Source& src = sources[k];
      bool arrived = false;
      if (src.dmap) {
        const int from = state[k];
        const int outcome = draw(src.cumulative[from], u01(g));
        arrived = outcome < src.c;
        state[k] = arrived ? outcome : outcome - src.c;
        if (measure) {
          ++out.nodes[k].visits[from];
          if (arrived) ++out.nodes[k].state_arrivals[from];
        }
      } else {
        arrived = u01(g) < src.lambda;
      }
      if (arrived) {
        ++q[k];
        if (measure) ++out.nodes[k].arrivals;
      }
    }
    if (!measure) continue;

    ++out.slots;
    if (slot_successes > 1) ++out.multi;
    for (int k = 0; k < n; ++k) {
      RepNode& nd = out.nodes[k];
      if (tx[k]) ++nd.attempts;
      if (b[k] < 0 || b[k] > K || (tx[k] && transmitters == 1 && b[k] != 0)) ++out.violations;
      ++nd.boff[b[k]];
      if (!sat[k]) ++nd.hist[std::min<std::int64_t>(q[k], sim.histogram_levels - 1)];
    }
    if (slot >= half) {
      const double t = static_cast<double>(slot - half);
      st += t;
      stt += t * t;
      cnt += 1.0;
      for (int k = 0; k < n; ++k) {
        sq[k] += static_cast<double>(q[k]);
        stq[k] += t * static_cast<double>(q[k]);
      }
    }
  }
  const double denom = cnt * stt - st * st;
  for (int k = 0; k < n; ++k) {
    if (denom > 0.0 && !sat[k]) out.nodes[k].slope = (cnt * stq[k] - st * sq[k]) / denom;
  }
  return out;
}

}  // namespace

void SimConfig::validate() const {
  network.validate();
  if (horizon <= warmup || warmup < 0) throw ConfigError("simulation: need horizon > warmup >= 0");
  if (replications < 1) throw ConfigError("simulation.replications must be >= 1");
  if (histogram_levels < 2) throw ConfigError("simulation: histogram needs at least 2 levels");
  if (!dmap.empty()) {
    if (static_cast<int>(dmap.size()) != network.n) throw ConfigError("arrivals: one entry per node");
    for (const auto& d : dmap) {
      if (d) d->validate();
    }
  }
  if (!saturated.empty() && static_cast<int>(saturated.size()) != network.n) {
    throw ConfigError("simulation.saturated: one flag per node");
  }
}

std::mt19937_64 replication_engine(std::uint64_t seed, int replication) {
  return std::mt19937_64(splitmix64(seed + static_cast<std::uint64_t>(replication)));
}

SimResult run(const SimConfig& sim) {
  sim.validate();
  const int n = sim.network.n;
  std::vector<Source> sources;
  for (int k = 0; k < n; ++k) sources.push_back(make_source(sim, k));

  std::vector<RepOut> reps(static_cast<std::size_t>(sim.replications));
  parallel_for(
      reps.size(), [&](std::size_t r) { reps[r] = replicate(sim, sources, static_cast<int>(r)); }, sim.workers);

  SimResult res;
  res.nodes.resize(static_cast<std::size_t>(n));
  std::vector<double> rep_throughput;
  for (const RepOut& rep : reps) {
    res.slots += rep.slots;
    res.multi_success_slots += rep.multi;
    res.backoff_violations += rep.violations;
    std::uint64_t rep_succ = 0;
    for (int k = 0; k < n; ++k) {
      const RepNode& src = rep.nodes[k];
      NodeStats& dst = res.nodes[k];
      dst.arrivals += src.arrivals;
      dst.successes += src.successes;
      dst.collisions += src.collisions;
      dst.attempts += src.attempts;
      auto add = [](std::vector<std::uint64_t>& to, const std::vector<std::uint64_t>& from) {
        if (to.size() < from.size()) to.resize(from.size(), 0);
        for (std::size_t x = 0; x < from.size(); ++x) to[x] += from[x];
      };
      add(dst.queue_histogram, src.hist);
      add(dst.backoff_occupancy, src.boff);
      add(dst.state_visits, src.visits);
      add(dst.state_arrivals, src.state_arrivals);
      dst.rep_ratio.push_back(src.arrivals ? static_cast<double>(src.successes) / static_cast<double>(src.arrivals)
                                           : 1.0);
      dst.rep_slope.push_back(src.slope);
      rep_succ += src.successes;
    }
    rep_throughput.push_back(static_cast<double>(rep_succ) / static_cast<double>(rep.slots));
  }
  const double tq = t_quantile(sim.replications - 1);
  for (NodeStats& nd : res.nodes) {
    res.successes += nd.successes;
    res.arrivals += nd.arrivals;
    nd.ratio = nd.arrivals ? static_cast<double>(nd.successes) / static_cast<double>(nd.arrivals) : 1.0;
    nd.ratio_half_width = tq * mean_se(nd.rep_ratio).se;
    const MeanSe s = mean_se(nd.rep_slope);
    nd.slope = s.mean;
    nd.slope_se = s.se;
  }
  res.stability_ratio = res.arrivals ? static_cast<double>(res.successes) / static_cast<double>(res.arrivals) : 1.0;
  res.throughput = static_cast<double>(res.successes) / static_cast<double>(res.slots);
  res.throughput_half_width = tq * mean_se(rep_throughput).se;
  return res;
}

SimResult saturated_run(const SimConfig& sim) {
  SimConfig s = sim;
  s.saturated.assign(static_cast<std::size_t>(sim.network.n), true);
  return run(s);
}

StabilityCheck classify(const SimResult& result, double delta) {
  StabilityCheck out;
  for (std::size_t k = 0; k < result.nodes.size(); ++k) {
    const NodeStats& nd = result.nodes[k];
    if (nd.arrivals == 0) continue;
    // A material growth rate: a tenth of the deficit the ratio test needs.
    const double rate = static_cast<double>(nd.arrivals) / static_cast<double>(result.slots);
    const bool growing = nd.slope > 3.0 * nd.slope_se && nd.slope > 0.1 * delta * rate;
    if (nd.ratio < out.min_ratio) {
      out.min_ratio = nd.ratio;
      out.worst_node = static_cast<int>(k);
    }
    if (nd.ratio < 1.0 - delta || growing) {
      out.stable = false;
      if (out.worst_node < 0) out.worst_node = static_cast<int>(k);
    }
  }
  return out;
}

EmpiricalBoundary estimate_boundary(int i, const SimConfig& sim, double resolution, double delta) {
  sim.validate();
  if (i < 0 || i >= sim.network.n) throw ConfigError("boundary node out of range");
  if (!(resolution > 0.0)) throw ConfigError("boundary resolution must be positive");

  EmpiricalBoundary out;
  auto stable_at = [&](double rate) {
    SimConfig s = sim;
    s.network.lambda[i] = rate;
    s.seed = splitmix64(sim.seed ^ (0xD1B54A32D192ED03ull * static_cast<std::uint64_t>(++out.probes)));
    return classify(run(s), delta).stable;
  };

  double lo = 0.0;
  double hi = std::min(1.0, sim.network.p[i]);
  if (stable_at(hi)) {
    out.lo = out.hi = out.estimate = hi;
    return out;
  }
  while ((hi - lo) / 2.0 > resolution) {
    const double mid = 0.5 * (lo + hi);
    (stable_at(mid) ? lo : hi) = mid;
  }
  out.estimate = 0.5 * (lo + hi);
  // Fresh-seed confirmation of both ends; noisy ends widen the bracket.
  for (int attempt = 0; attempt < 3; ++attempt) {
    const double width = hi - lo;
    bool changed = false;
    if (lo > 0.0 && !stable_at(lo)) {
      lo = std::max(0.0, lo - width);
      changed = true;
    }
    if (hi < sim.network.p[i] && stable_at(hi)) {
      hi = std::min(sim.network.p[i], hi + width);
      changed = true;
    }
    if (!changed) break;
    out.widened = true;
  }
  out.lo = lo;
  out.hi = hi;
  out.half_width = 0.5 * (hi - lo);
  return out;
}

}  // namespace saloha
