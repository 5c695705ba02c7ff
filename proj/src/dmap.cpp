#include "saloha/dmap.hpp"

#include "saloha/error.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace saloha {

namespace {

// Every state reaches state 0 and is reached from it.
bool strongly_connected(const Matrix& d) {
  const Eigen::Index c = d.rows();
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<bool> seen(static_cast<std::size_t>(c), false);
    std::vector<Eigen::Index> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      const Eigen::Index u = stack.back();
      stack.pop_back();
      for (Eigen::Index v = 0; v < c; ++v) {
        const double w = pass == 0 ? d(u, v) : d(v, u);
        if (w > 0.0 && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    for (bool s : seen) {
      if (!s) return false;
    }
  }
  return true;
}

}  // namespace

void DmapSpec::validate() const {
  const Eigen::Index n = d0.rows();
  if (n < 1 || d0.cols() != n || d1.rows() != n || d1.cols() != n) {
    throw ConfigError("dmap: d0 and d1 must be square matrices of the same order");
  }
  for (Eigen::Index u = 0; u < n; ++u) {
    for (Eigen::Index v = 0; v < n; ++v) {
      if (!(d0(u, v) >= 0.0) || !(d1(u, v) >= 0.0) || !std::isfinite(d0(u, v)) || !std::isfinite(d1(u, v))) {
        std::ostringstream os;
        os << "dmap: entry (" << u << "," << v << ") is negative or not finite";
        throw ConfigError(os.str());
      }
    }
    const double row = d0.row(u).sum() + d1.row(u).sum();
    if (std::abs(row - 1.0) > 1e-12) {
      std::ostringstream os;
      os.precision(17);
      os << "dmap: row " << u << " of d0 + d1 sums to " << row;
      throw ConfigError(os.str());
    }
  }
  if (!strongly_connected(d0 + d1)) throw ConfigError("dmap: arrival chain d0 + d1 is reducible");
}

DmapSpec DmapSpec::bernoulli(double lambda) {
  return {Matrix::Constant(1, 1, 1.0 - lambda), Matrix::Constant(1, 1, lambda)};
}

DmapSpec DmapSpec::modulated(const Matrix& p, const Vector& rates) {
  if (p.rows() != p.cols() || rates.size() != p.rows()) {
    throw ConfigError("dmap: modulating chain and rate vector disagree in size");
  }
  DmapSpec s;
  s.d1 = rates.asDiagonal() * p;
  s.d0 = (Vector::Ones(rates.size()) - rates).asDiagonal() * p;
  return s;
}

DmapStationary stationary_and_rate(const DmapSpec& spec) {
  spec.validate();
  DmapStationary out;
  out.pi_a = stationary_vector(spec.generator());
  out.lambda_per_state = spec.rates();
  out.lambda_avg = out.pi_a * out.lambda_per_state;
  return out;
}

DmapChain assemble_dmap_chain(int i, const NetworkConfig& config, const DmapSpec& spec, const CouplingState& z) {
  spec.validate();
  PhaseSpace space = working_space(config, i);
  QbdChain chain = assemble_extended(space, config, z, spec.chain());
  return {std::move(space), spec.c(), std::move(chain)};
}

KroneckerReport verify_kronecker(const Matrix& a_base, const Matrix& a_ext, const DmapSpec& spec, double tol) {
  const Matrix d = spec.generator();
  const Eigen::Index c = d.rows();
  KroneckerReport rep;
  if (a_ext.rows() != a_base.rows() * c || a_ext.cols() != a_base.cols() * c) {
    rep.max_discrepancy = INFINITY;
    return rep;
  }
  for (Eigen::Index h = 0; h < a_base.rows(); ++h) {
    for (Eigen::Index k = 0; k < a_base.cols(); ++k) {
      for (Eigen::Index u = 0; u < c; ++u) {
        for (Eigen::Index v = 0; v < c; ++v) {
          const double diff = std::abs(a_ext(h * c + u, k * c + v) - a_base(h, k) * d(u, v));
          if (diff > rep.max_discrepancy) {
            rep.max_discrepancy = diff;
            rep.row = h * c + u;
            rep.col = k * c + v;
          }
        }
      }
    }
  }
  rep.ok = rep.max_discrepancy < tol;
  return rep;
}

double block_aggregation_error(const RowVector& alpha_ext, const RowVector& alpha_base, int c) {
  if (alpha_ext.size() != alpha_base.size() * c) return INFINITY;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < alpha_base.size(); ++k) {
    worst = std::max(worst, std::abs(alpha_ext.segment(k * c, c).sum() - alpha_base(k)));
  }
  return worst;
}

DmapDrift drift_dmap(const DmapChain& chain, const DmapSpec& spec, const NetworkConfig& config) {
  const DriftResult d = drift(chain.chain);
  const Vector rates = spec.rates();
  const std::vector<double> succ = success_vector(config, chain.space);
  DmapDrift out;
  out.mu = d.mu;
  out.alpha = d.alpha;
  for (Eigen::Index h = 0; h < d.alpha.size(); ++h) {
    out.arrival_term += d.alpha(h) * rates(h % chain.c);
    out.service_term += d.alpha(h) * succ[chain.base_of(h)];
  }
  return out;
}

DmapDrift saturated_dmap_drift(int i, const NetworkConfig& config, const DmapSpec& spec, const CoupledOptions& opts) {
  const CoupledSolution cs = solve_coupled(config, i, opts);
  return drift_dmap(assemble_dmap_chain(i, config, spec, cs.coupling), spec, config);
}

DmapBoundary dmap_boundary_search(int i, const NetworkConfig& config, const std::vector<DmapSpec>& arrivals,
                                  const Matrix& state_chain, const Vector& direction, double tol,
                                  const CoupledOptions& opts) {
  if (static_cast<int>(arrivals.size()) != config.n) throw ConfigError("dmap: one arrival process per node");
  if (i < 0 || i >= config.n) throw ConfigError("dmap: probe node out of range");
  if (direction.size() != state_chain.rows() || direction.minCoeff() < 0.0 || direction.maxCoeff() <= 0.0) {
    throw ConfigError("dmap: direction must be nonnegative, nonzero and match the state chain");
  }

  DmapBoundary out;
  std::vector<DmapSpec> specs = arrivals;
  NetworkConfig cfg = config;
  auto set_scale = [&](double s) {
    specs[i] = DmapSpec::modulated(state_chain, s * direction);
    for (int k = 0; k < cfg.n; ++k) cfg.lambda[k] = stationary_and_rate(specs[k]).lambda_avg;
  };
  auto inside = [&](double s) {
    ++out.evaluations;
    set_scale(s);
    for (int k = 0; k < cfg.n; ++k) {
      const DmapDrift d = saturated_dmap_drift(k, cfg, specs[k], opts);
      if (!(d.arrival_term < d.service_term)) return false;
    }
    return true;
  };

  const double s_max = 1.0 / direction.maxCoeff();
  double lo = 0.0;
  double hi = s_max;
  if (!inside(0.0)) {
    hi = 0.0;
  } else if (inside(s_max)) {
    lo = s_max;
  } else {
    while (hi - lo > tol) {
      const double mid = 0.5 * (lo + hi);
      (inside(mid) ? lo : hi) = mid;
    }
  }
  out.scale = 0.5 * (lo + hi);
  set_scale(out.scale);
  out.rate = cfg.lambda[i];
  out.state_rates = out.scale * direction;
  return out;
}

}  // namespace saloha
