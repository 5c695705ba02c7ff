#pragma once

// Boundary rates, swept stability regions and the region metrics (volume,
// sum saturation throughput, backoff-factor optimum).

#include "saloha/aloha_model.hpp"
#include "saloha/coupled.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace saloha {

struct BoundaryPoint {
  double value = 0.0;  // lambda_i^SR
  // False when some peer cannot keep up even with its own queue: such peers
  // are treated as saturated, which they are in steady state.
  bool feasible = true;
  bool converged = true;
  int iterations = 0;
  std::vector<int> saturated_peers;
};

/// Boundary rate of node i given the peers' rates in config.lambda
/// (config.lambda[i] is ignored): node i saturated, peers solved jointly, then
/// sum_h alpha(h) p_suc(h) over the saturated chain of node i.
BoundaryPoint lambda_sr(int i, const NetworkConfig& config, const CoupledOptions& opts = {});

/// p_i (1 - lambda_j / (1 - p_i)), clipped at 0; p_i = 1 gives 0 unless
/// lambda_j = 0.
double closed_form_boundary(double p_i, double lambda_j);

struct TwoNodeRegion {
  bool inside = false;
  double boundary1 = 0.0;  // lambda_1^SR(lambda_2)
  double boundary2 = 0.0;  // lambda_2^SR(lambda_1)
};
/// Exact two-node region without backoff (K = 0). A node with lambda = 0
/// counts as stable whatever its boundary value.
TwoNodeRegion closed_form_two_node(double p1, double p2, double lambda1, double lambda2);

/// True when lambda_k < lambda_k^SR(lambda_-k) - margin for every node.
bool region_contains(const NetworkConfig& config, double margin = 0.0, const CoupledOptions& opts = {});

/// Largest lambda_i (peers fixed at config.lambda) that keeps the whole
/// rate vector inside the region; bisection to `tol`. 0 when the peers are
/// already outside at lambda_i = 0.
double region_boundary(int i, const NetworkConfig& config, double tol = 1e-10,
                       const CoupledOptions& opts = {});

struct SweepGrid {
  double delta = 0.01;
  std::vector<int> counts;  // points per axis: floor(p_j / delta) + 1

  static SweepGrid make(const NetworkConfig& config, double delta);
  double rate(int index) const { return index * delta; }
  /// V_i = prod_{j != i} counts[j]
  std::size_t points_per_surface(int i) const;
};

struct StabilityBoundary {
  int node = 0;
  std::vector<int> peers;  // node ids of the axes, increasing
  std::vector<int> dims;   // grid points along each axis
  std::vector<BoundaryPoint> points;

  /// Flat index of the peer grid point (first peer most significant).
  std::size_t flat(std::span<const int> peer_index) const;
  const BoundaryPoint& at(std::span<const int> peer_index) const { return points[flat(peer_index)]; }
  std::vector<int> unflat(std::size_t flat_index) const;
};

struct SweepOptions {
  // Reuse solves across permutation-equivalent points when all p are equal.
  bool use_symmetry = true;
  int workers = 0;
  CoupledOptions coupled{};
};

struct RegionSweep {
  NetworkConfig config;
  SweepGrid grid;
  std::vector<StabilityBoundary> surfaces;
  std::size_t solves = 0;  // boundary evaluations actually performed

  /// Grid point (indices for all n nodes) strictly inside every surface.
  bool contains(std::span<const int> index) const;
};

RegionSweep sweep_region(const NetworkConfig& config, double delta, const SweepOptions& opts = {});

/// Lattice Riemann sum: grid points strictly inside the region times delta^n
/// (each point is the lower-left corner of its cell).
double region_volume(const RegionSweep& sweep);

struct VolumeResult {
  double volume = 0.0;
  std::size_t solves = 0;
};
/// Same sum as region_volume(sweep_region(...)) but evaluates boundary points
/// on demand, walking each line along node 0 until the first point outside.
/// Relies on the boundaries being nonincreasing in the peers' rates.
VolumeResult region_volume_lazy(const NetworkConfig& config, double delta, const SweepOptions& opts = {});

/// Sum of success rates with every node saturated, from the Markov chain of
/// the backoff-stage vector.
double saturation_throughput(const NetworkConfig& config);

enum class Metric { volume, throughput };

struct BackoffPoint {
  double r = 1.0;
  double value = 0.0;
};
struct BackoffOptimum {
  double r_opt = 1.0;
  double value = 0.0;
  std::vector<BackoffPoint> curve;
};

/// Grid search over r in [r_min, r_max] with the given step; ties (within
/// 1e-12) go to the smaller r. `delta` is the volume grid step.
BackoffOptimum optimize_backoff(const NetworkConfig& base, Metric metric, double r_min, double r_max,
                                double step, double delta = 0.01, const SweepOptions& opts = {});

}  // namespace saloha
