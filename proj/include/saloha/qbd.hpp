#pragma once

// Homogeneous discrete-time quasi-birth-death chains:
//
//        | B1 B0          |
//   P =  | B2 A1 A0       |
//        |    A2 A1 A0    |
//        |       .  .  .  |
//
// A0 moves one level up, A2 one level down, A1 stays. Level 0 has m0
// phases, every other level has m.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace saloha {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct QbdChain {
  Matrix a0, a1, a2;
  Matrix b0, b1, b2;

  Eigen::Index m() const { return a1.rows(); }
  Eigen::Index m0() const { return b1.rows(); }

  /// Throws ConfigError when block shapes disagree, an entry leaves [0,1]
  /// or a row of (B1|B0), (B2|A1|A0), (A2|A1|A0) misses 1 by more than tol.
  void validate(double tol = 1e-12) const;
};

struct QbdSolution {
  Matrix r;
  RowVector pi0;
  RowVector pi1;
  bool converged = false;
  int iterations = 0;
};

enum class Recurrence { positive, boundary, non_positive };

/// |mu| at or below this value is reported as Recurrence::boundary.
inline constexpr double kDriftBand = 1e-9;

struct DriftResult {
  Matrix a_matrix;
  RowVector alpha;
  double mu = 0.0;

  Recurrence classify(double band = kDriftBand) const;
  bool stable(double band = kDriftBand) const { return classify(band) == Recurrence::positive; }
};

enum class RMethod { successive_substitution, logarithmic_reduction };

struct RSolveOptions {
  RMethod method = RMethod::successive_substitution;
  double tol = 1e-12;
  int max_iter = 100000;
};

struct RResult {
  Matrix r;
  int iterations = 0;
};

/// Minimal nonnegative solution of A0 + R A1 + R^2 A2 = R.
/// Throws ConvergenceError if max_iter is exhausted.
RResult solve_r(const QbdChain& chain, const RSolveOptions& opts = {});

inline Matrix solve_r_matrix(const QbdChain& chain, double tol = 1e-12, int max_iter = 100000) {
  return solve_r(chain, {RMethod::successive_substitution, tol, max_iter}).r;
}

/// max |A0 + R A1 + R^2 A2 - R|
double r_residual(const QbdChain& chain, const Matrix& r);

struct BoundaryVectors {
  RowVector pi0;
  RowVector pi1;
};

/// Boundary probabilities pi(0), pi(1) given the chain's R.
/// Throws ConvergenceError("boundary system degenerate") on a singular system.
BoundaryVectors solve_boundary(const QbdChain& chain, const Matrix& r);

/// Drift check, then R and boundary vectors. Throws ConvergenceError when the
/// chain is not positive recurrent.
QbdSolution solve(const QbdChain& chain, const RSolveOptions& opts = {});

/// pi(l) = pi_l * 1 for l = 0..max_level.
std::vector<double> level_marginals(const QbdSolution& sol, std::size_t max_level);

/// Stationary vector of A = A0 + A1 + A2 and mu = alpha (A0 - A2) 1.
DriftResult drift(const QbdChain& chain);

/// Unique stationary row vector of a row-stochastic matrix. Transient states
/// are allowed; several closed classes raise IrreducibilityError.
RowVector stationary_vector(const Matrix& p);

double spectral_radius(const Matrix& m);

}  // namespace saloha
