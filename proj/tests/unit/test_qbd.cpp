#include "saloha/error.hpp"
#include "saloha/qbd.hpp"

#include "support/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace saloha;

namespace {

QbdChain scalar_chain(double a0, double a1, double a2, double b1, double b0, double b2) {
  QbdChain c;
  c.a0 = Matrix::Constant(1, 1, a0);
  c.a1 = Matrix::Constant(1, 1, a1);
  c.a2 = Matrix::Constant(1, 1, a2);
  c.b1 = Matrix::Constant(1, 1, b1);
  c.b0 = Matrix::Constant(1, 1, b0);
  c.b2 = Matrix::Constant(1, 1, b2);
  return c;
}

QbdChain example_scalar() { return scalar_chain(0.2, 0.3, 0.5, 0.8, 0.2, 0.5); }

}  // namespace

TEST_SUITE("qbd") {

TEST_CASE("scalar R is the minimal root lambda / mu") {
  const QbdChain c = example_scalar();
  const Matrix r = solve_r_matrix(c);
  CHECK(r(0, 0) == doctest::Approx(0.4).epsilon(1e-11));
  CHECK(r_residual(c, r) < 1e-12);
  const RResult lr = solve_r(c, {RMethod::logarithmic_reduction, 1e-14, 100});
  CHECK(lr.r(0, 0) == doctest::Approx(0.4).epsilon(1e-13));
}

TEST_CASE("no up-moves gives R = 0") {
  QbdChain c;
  c.a0 = Matrix::Zero(2, 2);
  c.a2 = Matrix::Zero(2, 2);
  c.a1 = (Matrix(2, 2) << 0.3, 0.7, 0.6, 0.4).finished();
  c.b1 = Matrix::Identity(2, 2);
  c.b0 = Matrix::Zero(2, 2);
  c.b2 = Matrix::Zero(2, 2);
  const Matrix r = solve_r_matrix(c);
  CHECK(r.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scalar boundary vectors and geometric levels") {
  const QbdChain c = example_scalar();
  const QbdSolution sol = solve(c);
  // pi0 = 0.8 pi0 + 0.5 pi1 and pi0 + pi1 / 0.6 = 1
  CHECK(sol.pi0(0) == doctest::Approx(0.6).epsilon(1e-11));
  CHECK(sol.pi1(0) == doctest::Approx(0.24).epsilon(1e-11));
  const std::vector<double> lv = level_marginals(sol, 10);
  for (std::size_t l = 2; l <= 10; ++l) CHECK(lv[l] / lv[l - 1] == doctest::Approx(0.4).epsilon(1e-10));
}

TEST_CASE("no arrivals: all mass at level 0") {
  QbdChain c = scalar_chain(0.0, 0.5, 0.5, 1.0, 0.0, 0.5);
  const Matrix r = solve_r_matrix(c);
  const BoundaryVectors bv = solve_boundary(c, r);
  CHECK(bv.pi0.sum() == doctest::Approx(1.0));
  CHECK(bv.pi1.cwiseAbs().maxCoeff() < 1e-15);
  QbdSolution sol{r, bv.pi0, bv.pi1, true, 0};
  const std::vector<double> lv = level_marginals(sol, 5);
  CHECK(lv[0] == doctest::Approx(1.0));
  for (std::size_t l = 1; l <= 5; ++l) CHECK(lv[l] < 1e-15);
}

TEST_CASE("symmetric scalar walk sits on the drift boundary") {
  const QbdChain c = scalar_chain(0.3, 0.4, 0.3, 0.7, 0.3, 0.3);
  const DriftResult d = drift(c);
  CHECK(std::abs(d.mu) <= kDriftBand);
  CHECK(d.classify() == Recurrence::boundary);
  CHECK_FALSE(d.stable());
  CHECK_THROWS_AS(solve(c), ConvergenceError);
}

TEST_CASE("validate rejects broken blocks with a located message") {
  QbdChain c = example_scalar();
  c.a1(0, 0) += 1e-6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  QbdChain d = example_scalar();
  d.b0 = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("successive substitution is monotone from R = 0") {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 10; ++trial) {
    const QbdChain c = oracle::random_chain(g, 3, 4, 0.6);
    Matrix r = Matrix::Zero(4, 4);
    for (int k = 0; k < 200; ++k) {
      const Matrix next = c.a0 + r * c.a1 + r * r * c.a2;
      CHECK((next - r).minCoeff() >= -1e-15);
      r = next;
    }
  }
}

TEST_CASE("SS and LR agree on random chains") {
  std::mt19937_64 g(5);
  int ran = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const QbdChain c = oracle::random_chain(g, 3, 4, 0.5 + 0.05 * trial);
    if (!drift(c).stable()) continue;
    ++ran;
    const Matrix ss = solve_r(c, {RMethod::successive_substitution, 1e-13, 1000000}).r;
    const Matrix lr = solve_r(c, {RMethod::logarithmic_reduction, 1e-14, 100}).r;
    CHECK((ss - lr).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r_residual(c, lr) < 1e-12);
  }
  CHECK(ran >= 5);
}

TEST_CASE("drift sign and R spectral radius are consistent") {
  std::mt19937_64 g(21);
  int stable = 0;
  int unstable = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const QbdChain c = oracle::random_chain(g, 4, 4, 0.4 + 0.03 * trial);
    const DriftResult d = drift(c);
    if (d.mu < -1e-6) {
      ++stable;
      const Matrix r = solve_r_matrix(c, 1e-12, 1000000);
      CHECK(r_residual(c, r) < 1e-10);
      CHECK(spectral_radius(r) < 1.0);
    } else if (d.mu > 1e-6) {
      ++unstable;
      bool diverged = false;
      try {
        diverged = spectral_radius(solve_r_matrix(c, 1e-12, 200000)) >= 1.0 - 1e-6;
      } catch (const ConvergenceError&) {
        diverged = true;
      }
      CHECK(diverged);
      CHECK_THROWS_AS(solve(c), ConvergenceError);
    }
  }
  CHECK(stable > 5);
  CHECK(unstable > 5);
}

TEST_CASE("random 4-phase chains: drift sign matches the truncated chain") {
  std::mt19937_64 g(99);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const QbdChain c = oracle::random_chain(g, 4, 4, 0.5 + 0.025 * trial);
    const double mu = drift(c).mu;
    if (std::abs(mu) < 2e-3) continue;
    ++checked;
    CHECK((mu < 0) == oracle::looks_positive_recurrent(c, 500));
  }
  CHECK(checked >= 20);
}

TEST_CASE("level marginals match the truncated dense solve") {
  std::mt19937_64 g(3);
  int ran = 0;
  for (int trial = 0; trial < 15; ++trial) {
    const QbdChain c = oracle::random_chain(g, 2 + trial % 3, 3 + trial % 4, 0.5);
    if (drift(c).mu > -1e-3) continue;
    const QbdSolution sol = solve(c, {RMethod::logarithmic_reduction, 1e-14, 100});
    const int L = 200;
    if (std::pow(spectral_radius(sol.r), L) > 1e-12) continue;
    ++ran;
    const std::vector<double> ref = oracle::dense_marginals(c, L);
    const std::vector<double> got = level_marginals(sol, 40);
    for (std::size_t l = 0; l <= 40; ++l) CHECK(std::abs(ref[l] - got[l]) < 1e-8);
  }
  CHECK(ran >= 5);
}

TEST_CASE("block elimination oracle equals the dense oracle") {
  std::mt19937_64 g(8);
  const QbdChain c = oracle::random_chain(g, 3, 5, 0.7);
  const std::vector<double> a = oracle::dense_marginals(c, 120);
  const std::vector<double> b = oracle::truncated_marginals(c, 120);
  for (std::size_t l = 0; l < a.size(); ++l) CHECK(std::abs(a[l] - b[l]) < 1e-12);
}

TEST_CASE("stationary_vector: unique law, reducible input rejected") {
  const Matrix p = (Matrix(2, 2) << 0.9, 0.1, 0.4, 0.6).finished();
  const RowVector pi = stationary_vector(p);
  CHECK(pi(0) == doctest::Approx(0.8));
  CHECK(pi(1) == doctest::Approx(0.2));
  const Matrix two_classes = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(stationary_vector(two_classes), IrreducibilityError);
  // a transient state is fine
  const Matrix transient = (Matrix(2, 2) << 1.0, 0.0, 0.5, 0.5).finished();
  const RowVector t = stationary_vector(transient);
  CHECK(t(0) == doctest::Approx(1.0));
}

}  // TEST_SUITE
