#pragma once

// Reference solvers that share no code with the library's matrix-analytic
// path: the chain is cut at a finite level and solved directly.

#include "saloha/qbd.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using saloha::Matrix;
using saloha::QbdChain;
using saloha::RowVector;
using saloha::Vector;

/// Dense transition matrix of the chain on levels 0..L; the up-moves out of
/// level L are folded back into level L.
inline Matrix truncated_matrix(const QbdChain& c, int L) {
  const Eigen::Index m0 = c.m0();
  const Eigen::Index m = c.m();
  const Eigen::Index size = m0 + L * m;
  Matrix p = Matrix::Zero(size, size);
  auto off = [&](int l) { return l == 0 ? Eigen::Index{0} : m0 + (l - 1) * m; };
  p.block(0, 0, m0, m0) = c.b1;
  p.block(0, off(1), m0, m) = c.b0;
  for (int l = 1; l <= L; ++l) {
    const Eigen::Index o = off(l);
    if (l == 1) {
      p.block(o, 0, m, m0) = c.b2;
    } else {
      p.block(o, off(l - 1), m, m) = c.a2;
    }
    if (l < L) {
      p.block(o, o, m, m) = c.a1;
      p.block(o, off(l + 1), m, m) = c.a0;
    } else {
      p.block(o, o, m, m) = c.a1 + c.a0;
    }
  }
  return p;
}

/// Stationary vector by a dense LU solve of pi (P - I) = 0 with one equation
/// replaced by the normalization.
inline RowVector dense_stationary(const Matrix& p) {
  const Eigen::Index n = p.rows();
  Matrix a = (p - Matrix::Identity(n, n)).transpose();
  a.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  const Vector x = a.partialPivLu().solve(rhs);
  return x.transpose();
}

/// Level marginals of the truncated chain, dense solve (small L * m only).
inline std::vector<double> dense_marginals(const QbdChain& c, int L) {
  const RowVector pi = dense_stationary(truncated_matrix(c, L));
  std::vector<double> out(static_cast<std::size_t>(L) + 1);
  out[0] = pi.head(c.m0()).sum();
  for (int l = 1; l <= L; ++l) out[l] = pi.segment(c.m0() + (l - 1) * c.m(), c.m()).sum();
  return out;
}

/// Per-level stationary vectors of the truncated chain by block elimination
/// from the top level down (exact for the finite chain, O(L m^3)).
inline std::vector<RowVector> truncated_levels(const QbdChain& c, int L) {
  const Eigen::Index m = c.m();
  const Matrix I = Matrix::Identity(m, m);
  // pi_l = pi_{l-1} G[l]
  std::vector<Matrix> g(static_cast<std::size_t>(L) + 1);
  Matrix below = c.a1 + c.a0;  // diagonal block of level L
  for (int l = L; l >= 1; --l) {
    const Matrix& up = (l == 1) ? c.b0 : c.a0;
    g[l] = up * (I - below).inverse();
    below = c.a1 + g[l] * c.a2;
  }
  // level 0: pi_0 = pi_0 (B1 + G[1] B2)
  const Matrix p0 = c.b1 + g[1] * c.b2;
  std::vector<RowVector> levels(static_cast<std::size_t>(L) + 1);
  levels[0] = dense_stationary(p0);
  for (int l = 1; l <= L; ++l) levels[l] = levels[l - 1] * g[l];
  double total = 0.0;
  for (const RowVector& v : levels) total += v.sum();
  for (RowVector& v : levels) v /= total;
  return levels;
}

inline std::vector<double> truncated_marginals(const QbdChain& c, int L) {
  std::vector<double> out;
  for (const RowVector& v : truncated_levels(c, L)) out.push_back(v.sum());
  return out;
}

/// Positive recurrence read off the truncated chain: a normalizable chain
/// keeps almost no mass in the top tenth of the levels.
inline bool looks_positive_recurrent(const QbdChain& c, int L, double threshold = 0.05) {
  const std::vector<double> marg = truncated_marginals(c, L);
  double top = 0.0;
  for (int l = L - L / 10; l <= L; ++l) top += marg[l];
  return top < threshold;
}

/// Random QBD with row-stochastic (B1|B0), (B2|A1|A0), (A2|A1|A0), all
/// entries positive so that the chain is irreducible. `up_bias` scales the
/// upward mass relative to the downward mass.
inline QbdChain random_chain(std::mt19937_64& g, int m0, int m, double up_bias) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  auto fill = [&](Eigen::Index r, Eigen::Index cols) {
    Matrix x(r, cols);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) x(i, j) = u(g);
    return x;
  };
  QbdChain c;
  c.a0 = fill(m, m) * up_bias;
  c.a1 = fill(m, m);
  c.a2 = fill(m, m);
  const Vector up_rows = c.a0.rowwise().sum();
  const Vector mid_rows = c.a1.rowwise().sum();
  // A2 rows are shared with B2 rows so that both row families sum to 1
  Matrix b2_raw = fill(m, m0);
  const Vector down_rows = c.a2.rowwise().sum();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double total = up_rows(i) + mid_rows(i) + down_rows(i);
    c.a0.row(i) /= total;
    c.a1.row(i) /= total;
    c.a2.row(i) /= total;
    b2_raw.row(i) *= c.a2.row(i).sum() / b2_raw.row(i).sum();
  }
  c.b2 = b2_raw;
  c.b1 = fill(m0, m0);
  c.b0 = fill(m0, m) * up_bias;
  for (Eigen::Index i = 0; i < m0; ++i) {
    const double total = c.b1.row(i).sum() + c.b0.row(i).sum();
    c.b1.row(i) /= total;
    c.b0.row(i) /= total;
  }
  return c;
}

}  // namespace oracle
