#include "saloha/coupled.hpp"

#include "saloha/error.hpp"

#include <algorithm>
#include <cmath>

namespace saloha {

bool CoupledSolution::stable() const {
  return std::none_of(nodes.begin(), nodes.end(), [](const NodeResult& r) { return r.unstable; });
}

std::vector<int> CoupledSolution::unstable_nodes() const {
  std::vector<int> out;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (nodes[j].unstable) out.push_back(static_cast<int>(j));
  }
  return out;
}

PhaseSpace working_space(const NetworkConfig& config, int node, std::optional<int> saturated) {
  std::vector<int> pins;
  std::vector<int> idle;
  for (int j = 0; j < config.n; ++j) {
    if (j == node) continue;
    // Nodes that never transmit (no traffic, or p = 0) are fixed empty.
    const bool silent = config.lambda[j] == 0.0 || config.p[j] == 0.0;
    if (saturated && j == *saturated && config.p[j] > 0.0) {
      pins.push_back(j);
    } else if (silent || (saturated && j == *saturated)) {
      idle.push_back(j);
    }
  }
  return PhaseSpace(config.n, config.K, node, std::move(pins), std::move(idle));
}

double coupling_from_solution(const QbdSolution& sol) {
  const double p0 = sol.pi0.sum();
  const double p1 = sol.pi1.sum();
  const double busy = 1.0 - p0;
  if (busy <= 1e-14) return 1.0;
  return std::clamp(p1 / busy, 0.0, 1.0);
}

CoupledSolution solve_coupled(const NetworkConfig& config, std::optional<int> saturated,
                              const CoupledOptions& opts) {
  config.validate();
  const int n = config.n;
  if (saturated && (*saturated < 0 || *saturated >= n)) throw ConfigError("saturated node out of range");

  CoupledSolution out;
  out.coupling = CouplingState::initial(n, saturated);
  out.nodes.resize(static_cast<std::size_t>(n));
  if (opts.z_init) {
    if (static_cast<int>(opts.z_init->size()) != n) throw ConfigError("z_init must have one entry per node");
    for (int j = 0; j < n; ++j) {
      if (!out.coupling.saturated[j]) out.coupling.z[j] = (*opts.z_init)[j];
    }
  }
  out.coupling.validate(n);

  std::vector<int> flips(static_cast<std::size_t>(n), 0);
  std::vector<double> last_step(static_cast<std::size_t>(n), 0.0);
  bool damped = false;

  for (int it = 1; it <= opts.max_outer; ++it) {
    std::vector<double> next = out.coupling.z;
    for (int j = 0; j < n; ++j) {
      if (out.coupling.saturated[j]) continue;
      NodeResult& res = out.nodes[j];
      res = NodeResult{};
      if (config.lambda[j] == 0.0) {
        // Starts empty and never receives a packet.
        next[j] = 1.0;
        continue;
      }
      if (config.p[j] == 0.0) {
        // Never transmits, so its queue only grows.
        res.mu = config.lambda[j];
        res.unstable = true;
        next[j] = 0.0;
        continue;
      }
      PhaseSpace space = working_space(config, j, saturated);
      NodeChain nc = assemble_chain(j, config, out.coupling, space);
      const DriftResult d = drift(nc.chain);
      res.mu = d.mu;
      if (!d.stable()) {
        res.unstable = true;
        next[j] = 0.0;
      } else {
        RResult rr = solve_r(nc.chain, opts.r_opts);
        BoundaryVectors bv = solve_boundary(nc.chain, rr.r);
        QbdSolution sol{std::move(rr.r), std::move(bv.pi0), std::move(bv.pi1), true, rr.iterations};
        next[j] = coupling_from_solution(sol);
        res.solution = std::move(sol);
      }
      res.chain = std::move(nc);
    }

    double worst = 0.0;
    for (int j = 0; j < n; ++j) {
      if (out.coupling.saturated[j]) continue;
      const double step = next[j] - out.coupling.z[j];
      worst = std::max(worst, std::abs(step));
      if (step * last_step[j] < 0.0 && ++flips[j] >= 2) damped = true;
      if (step != 0.0) last_step[j] = step;
    }
    for (int j = 0; j < n; ++j) {
      if (out.coupling.saturated[j]) continue;
      out.coupling.z[j] = damped ? out.coupling.z[j] + 0.5 * (next[j] - out.coupling.z[j]) : next[j];
    }
    out.iterations = it;
    if (worst < opts.z_tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace saloha
