#include "saloha/qbd.hpp"

#include "saloha/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace saloha {

namespace {

void check_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "block " << name << " is " << m.rows() << "x" << m.cols() << ", expected " << rows << "x"
       << cols;
    throw ConfigError(os.str());
  }
}

void check_entries(const Matrix& m, double tol, const char* name) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (!(v >= -tol && v <= 1.0 + tol)) {
        std::ostringstream os;
        os << "block " << name << "(" << i << "," << j << ") = " << v << " is not a probability";
        throw ConfigError(os.str());
      }
    }
  }
}

void check_rows(const Vector& sums, double tol, const char* what) {
  for (Eigen::Index i = 0; i < sums.size(); ++i) {
    if (std::abs(sums(i) - 1.0) > tol) {
      std::ostringstream os;
      os.precision(17);
      os << "row " << i << " of " << what << " sums to " << sums(i);
      throw ConfigError(os.str());
    }
  }
}

// Solves x * [system] = 0 subject to x * norm = 1, where `system` is square
// and has a one-dimensional left null space. Returns an empty vector when the
// stacked system is rank deficient.
RowVector left_null_normalized(const Matrix& system, const Vector& norm) {
  const Eigen::Index n = system.rows();
  Matrix stacked(n + 1, n);
  stacked.topRows(n) = system.transpose();
  stacked.row(n) = norm.transpose();
  Vector rhs = Vector::Zero(n + 1);
  rhs(n) = 1.0;

  Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
  qr.setThreshold(1e-11);
  if (qr.rank() < n) return {};
  Vector x = qr.solve(rhs);
  if ((stacked * x - rhs).cwiseAbs().maxCoeff() > 1e-8) return {};
  return x.transpose();
}

Matrix right_solve(const Matrix& lhs, const Matrix& denom) {
  // lhs * denom^{-1}
  return denom.transpose().partialPivLu().solve(lhs.transpose()).transpose();
}

RResult successive_substitution(const QbdChain& c, const RSolveOptions& opts) {
  const Eigen::Index m = c.m();
  Matrix r = Matrix::Zero(m, m);
  Matrix next(m, m);
  for (int it = 1; it <= opts.max_iter; ++it) {
    next.noalias() = c.a0;
    next.noalias() += r * c.a1;
    next.noalias() += r * (r * c.a2);
    const double step = m == 0 ? 0.0 : (next - r).cwiseAbs().maxCoeff();
    r.swap(next);
    if (step < opts.tol) return {std::move(r), it};
  }
  throw ConvergenceError("R iteration did not converge: not positive recurrent or tolerance unreachable");
}

RResult logarithmic_reduction(const QbdChain& c, const RSolveOptions& opts) {
  const Eigen::Index m = c.m();
  const Matrix eye = Matrix::Identity(m, m);
  Eigen::PartialPivLU<Matrix> local(eye - c.a1);
  Matrix up = local.solve(c.a0);
  Matrix down = local.solve(c.a2);
  Matrix g = down;
  Matrix t = up;
  int it = 1;
  for (; it <= opts.max_iter; ++it) {
    const Matrix mix = up * down + down * up;
    Eigen::PartialPivLU<Matrix> lu(eye - mix);
    const Matrix up2 = lu.solve(up * up);
    const Matrix down2 = lu.solve(down * down);
    up = up2;
    down = down2;
    const Matrix inc = t * down;
    g += inc;
    t = t * up;
    // Remaining increments are bounded by T times substochastic factors; in
    // the transient case T stays positive but the down factor vanishes.
    const double inc_norm = m == 0 ? 0.0 : inc.rowwise().sum().maxCoeff();
    if (it >= 2 && inc_norm < opts.tol * 1e-3) break;
  }
  if (it > opts.max_iter) {
    throw ConvergenceError("logarithmic reduction did not converge: not positive recurrent or tolerance unreachable");
  }
  Matrix r = right_solve(c.a0, eye - c.a1 - c.a0 * g);
  return {std::move(r), it};
}

}  // namespace

void QbdChain::validate(double tol) const {
  const Eigen::Index mm = m();
  const Eigen::Index mm0 = m0();
  check_shape(a0, mm, mm, "A0");
  check_shape(a1, mm, mm, "A1");
  check_shape(a2, mm, mm, "A2");
  check_shape(b1, mm0, mm0, "B1");
  check_shape(b0, mm0, mm, "B0");
  check_shape(b2, mm, mm0, "B2");
  check_entries(a0, tol, "A0");
  check_entries(a1, tol, "A1");
  check_entries(a2, tol, "A2");
  check_entries(b0, tol, "B0");
  check_entries(b1, tol, "B1");
  check_entries(b2, tol, "B2");
  check_rows(b1.rowwise().sum() + b0.rowwise().sum(), tol, "(B1|B0)");
  check_rows(b2.rowwise().sum() + a1.rowwise().sum() + a0.rowwise().sum(), tol, "(B2|A1|A0)");
  check_rows(a2.rowwise().sum() + a1.rowwise().sum() + a0.rowwise().sum(), tol, "(A2|A1|A0)");
}

Recurrence DriftResult::classify(double band) const {
  if (mu < -band) return Recurrence::positive;
  if (mu > band) return Recurrence::non_positive;
  return Recurrence::boundary;
}

RResult solve_r(const QbdChain& chain, const RSolveOptions& opts) {
  if (chain.a0.rows() != chain.a1.rows() || chain.a2.rows() != chain.a1.rows() ||
      chain.a0.cols() != chain.a1.cols() || chain.a2.cols() != chain.a1.cols() ||
      chain.a1.rows() != chain.a1.cols()) {
    throw ConfigError("R solve: A blocks must be square and of equal order");
  }
  switch (opts.method) {
    case RMethod::successive_substitution:
      return successive_substitution(chain, opts);
    case RMethod::logarithmic_reduction:
      return logarithmic_reduction(chain, opts);
  }
  throw ConfigError("unknown R method");
}

double r_residual(const QbdChain& chain, const Matrix& r) {
  const Matrix res = chain.a0 + r * chain.a1 + r * r * chain.a2 - r;
  return res.size() == 0 ? 0.0 : res.cwiseAbs().maxCoeff();
}

BoundaryVectors solve_boundary(const QbdChain& chain, const Matrix& r) {
  const Eigen::Index m0 = chain.m0();
  const Eigen::Index m = chain.m();
  const Eigen::Index n = m0 + m;
  Matrix system(n, n);
  system.topLeftCorner(m0, m0) = chain.b1 - Matrix::Identity(m0, m0);
  system.topRightCorner(m0, m) = chain.b0;
  system.bottomLeftCorner(m, m0) = chain.b2;
  system.bottomRightCorner(m, m) = chain.a1 + r * chain.a2 - Matrix::Identity(m, m);

  Vector norm(n);
  norm.head(m0).setOnes();
  norm.tail(m) = (Matrix::Identity(m, m) - r).partialPivLu().solve(Vector::Ones(m));

  RowVector x = left_null_normalized(system, norm);
  if (x.size() == 0) {
    std::ostringstream os;
    os << "boundary system degenerate (m0=" << m0 << ", m=" << m
       << ", spectral radius of R=" << spectral_radius(r) << ")";
    throw ConvergenceError(os.str());
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (x(k) < 0.0 && x(k) > -1e-10) x(k) = 0.0;
  }
  return {x.head(m0), x.tail(m)};
}

QbdSolution solve(const QbdChain& chain, const RSolveOptions& opts) {
  const DriftResult d = drift(chain);
  if (!d.stable()) {
    std::ostringstream os;
    os.precision(12);
    os << "chain is not positive recurrent (mu = " << d.mu << ")";
    throw ConvergenceError(os.str());
  }
  RResult rr = solve_r(chain, opts);
  BoundaryVectors bv = solve_boundary(chain, rr.r);
  return {std::move(rr.r), std::move(bv.pi0), std::move(bv.pi1), true, rr.iterations};
}

std::vector<double> level_marginals(const QbdSolution& sol, std::size_t max_level) {
  std::vector<double> out;
  out.reserve(max_level + 1);
  out.push_back(sol.pi0.sum());
  RowVector level = sol.pi1;
  for (std::size_t l = 1; l <= max_level; ++l) {
    out.push_back(level.sum());
    level = level * sol.r;
  }
  return out;
}

RowVector stationary_vector(const Matrix& p) {
  const Eigen::Index n = p.rows();
  if (p.cols() != n) throw ConfigError("stationary_vector: matrix is not square");
  RowVector x = left_null_normalized(p - Matrix::Identity(n, n), Vector::Ones(n));
  if (x.size() == 0) {
    throw IrreducibilityError("irreducibility violated: stationary vector is not unique");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (x(k) < 0.0) {
      if (x(k) < -1e-9) throw IrreducibilityError("stationary solve produced a negative mass");
      x(k) = 0.0;
    }
  }
  x /= x.sum();
  return x;
}

DriftResult drift(const QbdChain& chain) {
  DriftResult out;
  out.a_matrix = chain.a0 + chain.a1 + chain.a2;
  out.alpha = stationary_vector(out.a_matrix);
  out.mu = out.alpha * ((chain.a0 - chain.a2) * Vector::Ones(chain.m()));
  return out;
}

double spectral_radius(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace saloha
