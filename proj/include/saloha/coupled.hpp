#pragma once

// Fixed point of the z-coupling between the n per-node chains.

#include "saloha/aloha_model.hpp"
#include "saloha/qbd.hpp"

#include <optional>
#include <vector>

namespace saloha {

struct CoupledOptions {
  RSolveOptions r_opts{RMethod::logarithmic_reduction, 1e-12, 10000};
  double z_tol = 1e-10;
  int max_outer = 500;
  // Starting z for the non-saturated nodes; defaults to all ones.
  std::optional<std::vector<double>> z_init;
};

struct NodeResult {
  double mu = 0.0;
  bool unstable = false;
  std::optional<NodeChain> chain;     // absent for the saturated probe
  std::optional<QbdSolution> solution;  // present only for stable nodes
};

struct CoupledSolution {
  CouplingState coupling;
  std::vector<NodeResult> nodes;
  int iterations = 0;
  bool converged = false;

  /// True when every non-saturated node is positive recurrent.
  bool stable() const;
  std::vector<int> unstable_nodes() const;
};

/// Phase space used when solving the chain of `node`: the saturated node is
/// pinned nonempty, peers without arrivals are fixed empty.
PhaseSpace working_space(const NetworkConfig& config, int node, std::optional<int> saturated = std::nullopt);

/// z_j = pi_j(1) / (1 - pi_j(0)); 1 when node j is empty with probability 1.
double coupling_from_solution(const QbdSolution& sol);

/// Iterates z -> (solve every chain given z) -> z. A node whose chain is not
/// positive recurrent keeps a growing queue, so it never empties and its z is
/// 0; it is re-tested on every sweep. With `saturated`, that node is pinned
/// nonempty in all chains and is not solved.
CoupledSolution solve_coupled(const NetworkConfig& config, std::optional<int> saturated = std::nullopt,
                              const CoupledOptions& opts = {});

}  // namespace saloha
