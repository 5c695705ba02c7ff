#include "saloha/coupled.hpp"
#include "saloha/error.hpp"

#include <doctest.h>

#include <cmath>

using namespace saloha;

namespace {

NetworkConfig net(int n, std::vector<double> p, double r, int K, std::vector<double> lambda) {
  return NetworkConfig{n, std::move(p), r, K, std::move(lambda)};
}

}  // namespace

TEST_SUITE("coupled") {

TEST_CASE("two nodes, node 1 saturated: z_2 = 2/3") {
  const CoupledSolution cs = solve_coupled(net(2, {0.5, 0.5}, 1, 0, {0.0, 0.1}), 0);
  CHECK(cs.converged);
  CHECK(cs.coupling.z[0] == 0.0);
  CHECK(cs.coupling.z[1] == doctest::Approx((0.25 - 0.1) / (0.9 * 0.25)).epsilon(1e-12));
}

TEST_CASE("no traffic anywhere: z = 1 by convention") {
  for (int K : {0, 1}) {
    const CoupledSolution cs = solve_coupled(net(3, {0.5, 0.5, 0.5}, 2, K, {0, 0, 0}));
    CHECK(cs.converged);
    CHECK(cs.stable());
    for (double z : cs.coupling.z) CHECK(z == 1.0);
  }
}

TEST_CASE("z from a solved chain") {
  const CoupledSolution cs = solve_coupled(net(2, {0.5, 0.5}, 1, 0, {0.1, 0.1}));
  REQUIRE(cs.stable());
  for (int j = 0; j < 2; ++j) {
    const QbdSolution& sol = *cs.nodes[j].solution;
    CHECK(coupling_from_solution(sol) == doctest::Approx(sol.pi1.sum() / (1.0 - sol.pi0.sum())));
    CHECK(cs.coupling.z[j] == doctest::Approx(coupling_from_solution(sol)).epsilon(1e-9));
  }
}

TEST_CASE("fixed point does not depend on the starting z") {
  struct Case {
    NetworkConfig cfg;
    std::optional<int> sat;
  };
  const std::vector<Case> cases{
      {net(2, {0.8, 0.8}, 2, 1, {0.0, 0.1}), 0},
      {net(2, {0.8, 0.8}, 2, 1, {0.0, 0.4}), 0},
      {net(2, {0.8, 0.8}, 2, 1, {0.2, 0.25}), std::nullopt},
      {net(3, {0.8, 0.8, 0.8}, 2, 1, {0.1, 0.1, 0.0}), 2},
      {net(3, {0.5, 0.5, 0.5}, 1.5, 1, {0.05, 0.07, 0.06}), std::nullopt},
  };
  for (const Case& c : cases) {
    CoupledOptions zeros;
    zeros.z_init = std::vector<double>(static_cast<std::size_t>(c.cfg.n), 0.0);
    CoupledOptions ones;
    ones.z_init = std::vector<double>(static_cast<std::size_t>(c.cfg.n), 1.0);
    const CoupledSolution a = solve_coupled(c.cfg, c.sat, zeros);
    const CoupledSolution b = solve_coupled(c.cfg, c.sat, ones);
    CHECK(a.converged);
    CHECK(b.converged);
    for (int k = 0; k < c.cfg.n; ++k) CHECK(std::abs(a.coupling.z[k] - b.coupling.z[k]) < 1e-8);
  }
}

TEST_CASE("overloaded peer is detected and treated as never empty") {
  // node 2 gets more traffic than it can ever serve next to a saturated node 1
  const CoupledSolution cs = solve_coupled(net(2, {0.5, 0.5}, 1, 0, {0.0, 0.4}), 0);
  CHECK(cs.converged);
  CHECK_FALSE(cs.stable());
  REQUIRE(cs.unstable_nodes() == std::vector<int>{1});
  CHECK(cs.coupling.z[1] == 0.0);
  CHECK(cs.nodes[1].mu > 0.0);
  CHECK_FALSE(cs.nodes[1].solution.has_value());
}

TEST_CASE("working space pins the probe and idles silent peers") {
  const NetworkConfig c = net(3, {0.5, 0.5, 0.5}, 2, 1, {0.1, 0.0, 0.2});
  const PhaseSpace sp = working_space(c, 2, 0);
  CHECK(sp.pinned() == std::vector<int>{0});
  CHECK(sp.idle() == std::vector<int>{1});
  // b_self (2) x node 0 busy (2 stages) x node 1 empty
  CHECK(sp.m() == 4);
}

TEST_CASE("p = 1, r = 1 with a silent peer stays solvable") {
  const CoupledSolution cs = solve_coupled(net(3, {1, 1, 1}, 1, 1, {0.0, 0.0, 0.0}), 0);
  CHECK(cs.converged);
  CHECK(cs.stable());
}

}  // TEST_SUITE
