#pragma once

// Slot-level Monte-Carlo simulation of the full network: every node keeps
// its real queue, backoff stage and (for D-MAP sources) arrival state.
//
// Per slot: each nonempty node transmits with probability p_k / r^b_k; a lone
// transmitter departs just before the slot boundary and resets to stage 0,
// colliders move to min(b + 1, K); arrivals join just after the boundary.

#include "saloha/aloha_model.hpp"
#include "saloha/dmap.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace saloha {

struct SimConfig {
  NetworkConfig network;                   // lambda drives Bernoulli sources
  std::vector<std::optional<DmapSpec>> dmap;  // per-node override; empty = all Bernoulli
  std::vector<bool> saturated;             // nodes that never run dry; empty = none
  std::int64_t horizon = 2'000'000;        // slots per replication, warmup included
  std::int64_t warmup = 100'000;
  std::uint64_t seed = 1;
  int replications = 5;
  int histogram_levels = 64;  // queue-length bins; the last one collects the tail
  int workers = 0;

  void validate() const;
  bool is_saturated(int k) const { return !saturated.empty() && saturated[k]; }
};

/// Replication r draws from mt19937_64 seeded with splitmix64(seed + r).
std::mt19937_64 replication_engine(std::uint64_t seed, int replication);
/// 53-bit uniform in [0, 1).
inline double u01(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

struct NodeStats {
  std::uint64_t arrivals = 0;
  std::uint64_t successes = 0;
  std::uint64_t collisions = 0;
  std::uint64_t attempts = 0;
  std::vector<std::uint64_t> queue_histogram;  // slots spent at each level
  std::vector<std::uint64_t> backoff_occupancy;  // slots spent at each stage
  std::vector<std::uint64_t> state_visits;     // arrival-chain occupancy
  std::vector<std::uint64_t> state_arrivals;   // arrivals by source state
  double ratio = 1.0;            // successes / arrivals over all replications
  double ratio_half_width = 0.0;  // 95% over replications
  double slope = 0.0;            // queue growth per slot, second half, mean over replications
  double slope_se = 0.0;         // standard error of that mean
  std::vector<double> rep_ratio;
  std::vector<double> rep_slope;
};

struct SimResult {
  std::vector<NodeStats> nodes;
  std::uint64_t slots = 0;  // measured slots summed over replications
  std::uint64_t successes = 0;
  std::uint64_t arrivals = 0;
  double stability_ratio = 1.0;  // aggregate successes / arrivals
  double throughput = 0.0;       // successes per measured slot
  double throughput_half_width = 0.0;
  // Sanity counters; both stay 0 for a correct engine.
  std::uint64_t multi_success_slots = 0;
  std::uint64_t backoff_violations = 0;
};

SimResult run(const SimConfig& sim);

/// Empirical sum saturation throughput: every node saturated.
SimResult saturated_run(const SimConfig& sim);

struct StabilityCheck {
  bool stable = true;
  double min_ratio = 1.0;
  int worst_node = -1;
};
/// Unstable when a node's ratio falls below 1 - delta, or its queue slope is
/// above three standard errors and above 0.1 * delta * (its arrival rate).
StabilityCheck classify(const SimResult& result, double delta = 0.01);

struct EmpiricalBoundary {
  double estimate = 0.0;
  double lo = 0.0;  // last rate classified stable
  double hi = 0.0;  // first rate classified unstable
  double half_width = 0.0;
  int probes = 0;
  bool widened = false;
};

/// Bisection on lambda_i (others fixed in sim.network.lambda) until the
/// bracket half-width is at most `resolution`. Each probe reseeds from
/// sim.seed and the probe index. Both ends are then re-probed with fresh
/// seeds; a flip widens [lo, hi] (the estimate stays at the bisection
/// midpoint).
EmpiricalBoundary estimate_boundary(int i, const SimConfig& sim, double resolution = 0.002, double delta = 0.01);

}  // namespace saloha
