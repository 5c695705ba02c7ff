#pragma once

// Discrete-time Markovian arrival processes and the extended per-node chain
// whose phases also carry the arrival state of the modeled node.

#include "saloha/aloha_model.hpp"
#include "saloha/coupled.hpp"
#include "saloha/qbd.hpp"

#include <vector>

namespace saloha {

struct DmapSpec {
  Matrix d0;  // transitions without an arrival
  Matrix d1;  // transitions with an arrival

  int c() const { return static_cast<int>(d0.rows()); }
  /// Nonnegative entries, D = d0 + d1 row-stochastic within 1e-12 and
  /// irreducible. Throws ConfigError.
  void validate() const;

  static DmapSpec bernoulli(double lambda);
  /// Markov-modulated Bernoulli: state chain `p`, arrival probability
  /// rates(u) in state u; d1 = diag(rates) p, d0 = diag(1 - rates) p.
  static DmapSpec modulated(const Matrix& p, const Vector& rates);

  ArrivalChain chain() const { return {d0, d1}; }
  Vector rates() const { return d1.rowwise().sum(); }
  Matrix generator() const { return d0 + d1; }
};

struct DmapStationary {
  RowVector pi_a;
  Vector lambda_per_state;
  double lambda_avg = 0.0;
};

DmapStationary stationary_and_rate(const DmapSpec& spec);

struct DmapChain {
  PhaseSpace space;  // base phases; each is refined by c arrival states
  int c = 1;
  QbdChain chain;

  /// Base phase of an extended upper-level phase.
  std::size_t base_of(Eigen::Index h) const { return static_cast<std::size_t>(h / c); }
};

/// Extended chain of node i: its own arrivals follow `spec`, peers are
/// Bernoulli at config.lambda with coupling z.
DmapChain assemble_dmap_chain(int i, const NetworkConfig& config, const DmapSpec& spec, const CouplingState& z);

struct KroneckerReport {
  bool ok = false;
  double max_discrepancy = 0.0;
  Eigen::Index row = -1;  // location of the largest discrepancy
  Eigen::Index col = -1;
};

/// Compares a_ext against kron(a_base, D).
KroneckerReport verify_kronecker(const Matrix& a_base, const Matrix& a_ext, const DmapSpec& spec,
                                 double tol = 1e-12);

/// max_k |sum over block k of alpha_ext - alpha_base(k)| with blocks of c.
double block_aggregation_error(const RowVector& alpha_ext, const RowVector& alpha_base, int c);

struct DmapDrift {
  double mu = 0.0;            // alpha^D (A0 - A2) 1
  double arrival_term = 0.0;  // sum alpha^D(h) lambda(u(h))
  double service_term = 0.0;  // sum alpha^D(h) p_suc(base(h))
  RowVector alpha;
};

DmapDrift drift_dmap(const DmapChain& chain, const DmapSpec& spec, const NetworkConfig& config);

/// Service capacity of node i with its own D-MAP: node i saturated, peers
/// Bernoulli at their average rates in config.lambda.
DmapDrift saturated_dmap_drift(int i, const NetworkConfig& config, const DmapSpec& spec,
                               const CoupledOptions& opts = {});

struct DmapBoundary {
  double scale = 0.0;      // boundary multiplier of the direction
  double rate = 0.0;       // average rate of the probe at the boundary
  Vector state_rates;      // lambda_i(u) at the boundary
  int evaluations = 0;
};

/// Every node keeps its D-MAP except node i, whose arrival probabilities
/// become scale * direction(u) on the state chain `state_chain`. Returns the
/// largest scale with all extended chains positive recurrent (bisection).
DmapBoundary dmap_boundary_search(int i, const NetworkConfig& config, const std::vector<DmapSpec>& arrivals,
                                  const Matrix& state_chain, const Vector& direction, double tol = 1e-10,
                                  const CoupledOptions& opts = {});

}  // namespace saloha
