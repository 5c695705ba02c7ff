#include "saloha/coupled.hpp"
#include "saloha/stability.hpp"

#include <doctest.h>

#include <cmath>

using namespace saloha;

namespace {

NetworkConfig net(int n, std::vector<double> p, double r, int K, std::vector<double> lambda) {
  return NetworkConfig{n, std::move(p), r, K, std::move(lambda)};
}

void check_monotone(const RegionSweep& sw) {
  for (const StabilityBoundary& s : sw.surfaces) {
    for (std::size_t f = 0; f < s.points.size(); ++f) {
      std::vector<int> idx = s.unflat(f);
      for (std::size_t a = 0; a < idx.size(); ++a) {
        if (idx[a] + 1 >= s.dims[a]) continue;
        ++idx[a];
        CHECK(s.at(idx).value <= s.points[f].value + 1e-9);
        --idx[a];
      }
    }
  }
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("two-node boundary rate without backoff") {
  CHECK(lambda_sr(0, net(2, {0.5, 0.5}, 1, 0, {0, 0.1})).value == doctest::Approx(0.4).epsilon(1e-12));
  for (double p1 : {0.2, 0.5, 0.8}) {
    CHECK(lambda_sr(0, net(2, {p1, 0.5}, 1, 0, {0, 0})).value == doctest::Approx(p1).epsilon(1e-12));
  }
}

TEST_CASE("closed-form two-node region") {
  const TwoNodeRegion in = closed_form_two_node(0.5, 0.5, 0.2, 0.2);
  CHECK(in.inside);
  CHECK(in.boundary1 == doctest::Approx(0.3));
  CHECK_FALSE(closed_form_two_node(0.5, 0.5, 0.3, 0.3).inside);
  for (double p : {0.3, 0.7}) {
    CHECK(closed_form_two_node(p, p, 0.0, p - 0.01).inside);
    CHECK_FALSE(closed_form_two_node(p, p, 0.0, p).inside);
  }
  CHECK(closed_form_boundary(0.5, 0.6) == 0.0);
  CHECK(closed_form_boundary(1.0, 0.1) == 0.0);
  CHECK(closed_form_boundary(1.0, 0.0) == 1.0);
}

TEST_CASE("swept two-node surfaces equal the closed form") {
  for (double p1 : {0.2, 0.5, 0.8}) {
    for (double p2 : {0.2, 0.5, 0.8}) {
      const NetworkConfig c = net(2, {p1, p2}, 1, 0, {0, 0});
      const RegionSweep sw = sweep_region(c, 0.01);
      for (const StabilityBoundary& s : sw.surfaces) {
        const int j = s.peers[0];
        for (std::size_t f = 0; f < s.points.size(); ++f) {
          if (!s.points[f].feasible) continue;
          const double lj = sw.grid.rate(static_cast<int>(f));
          CHECK(std::abs(s.points[f].value - closed_form_boundary(c.p[s.node], lj)) < 1e-9);
        }
        (void)j;
      }
      check_monotone(sw);
    }
  }
}

TEST_CASE("backoff checkpoint: lambda_2 boundary near 0.51 at lambda_1 = 0.1") {
  const NetworkConfig c = net(2, {0.8, 0.8}, 2, 1, {0.1, 0});
  const double b = region_boundary(1, c);
  CHECK(std::abs(b - 0.51) / 0.51 < 0.03);
  CHECK(lambda_sr(1, c).value == doctest::Approx(b).epsilon(1e-8));
}

TEST_CASE("symmetric network: surfaces are permutations of each other") {
  const NetworkConfig c = net(3, {0.6, 0.6, 0.6}, 2, 1, {0, 0, 0});
  SweepOptions opts;
  opts.use_symmetry = false;
  const RegionSweep sw = sweep_region(c, 0.1, opts);
  const StabilityBoundary& s0 = sw.surfaces[0];
  for (int i = 1; i < 3; ++i) {
    const StabilityBoundary& si = sw.surfaces[i];
    for (std::size_t f = 0; f < si.points.size(); ++f) {
      // peers of node i are in increasing order; map them onto node 0's peers
      // (the two other nodes play identical roles, keep their order)
      const std::vector<int> idx = si.unflat(f);
      CHECK(si.points[f].value == doctest::Approx(s0.at(idx).value).epsilon(1e-9));
    }
  }
  check_monotone(sw);
  // the symmetric shortcut gives the same surfaces
  const RegionSweep fast = sweep_region(c, 0.1);
  CHECK(fast.solves < sw.solves);
  for (int i = 0; i < 3; ++i) {
    for (std::size_t f = 0; f < sw.surfaces[i].points.size(); ++f) {
      CHECK(fast.surfaces[i].points[f].value == doctest::Approx(sw.surfaces[i].points[f].value).epsilon(1e-12));
    }
  }
}

TEST_CASE("monotone surfaces with backoff and asymmetric p") {
  check_monotone(sweep_region(net(2, {0.9, 0.6}, 2.5, 2, {0, 0}), 0.02));
  check_monotone(sweep_region(net(3, {0.7, 0.5, 0.9}, 2, 1, {0, 0, 0}), 0.1));
}

TEST_CASE("volume: two nodes without backoff") {
  const double p = 2.0 / 3.0;
  const double v = region_volume(sweep_region(net(2, {p, p}, 1, 0, {0, 0}), 0.005));
  CHECK(std::abs(v - p * p * (1 - p)) < 0.005);
  CHECK(region_volume(sweep_region(net(2, {0.0, 0.5}, 1, 0, {0, 0}), 0.01)) == 0.0);
  CHECK(region_volume_lazy(net(3, {0.5, 0.0, 0.5}, 2, 1, {0, 0, 0}), 0.05).volume == 0.0);
}

TEST_CASE("lazy volume equals the full-sweep volume") {
  for (const NetworkConfig& c : {net(2, {0.8, 0.8}, 2, 1, {0, 0}), net(2, {0.9, 0.4}, 3, 2, {0, 0}),
                                 net(3, {0.6, 0.6, 0.6}, 2, 1, {0, 0, 0}), net(3, {0.5, 0.7, 0.9}, 1.5, 1, {0, 0, 0})}) {
    const double delta = c.n == 2 ? 0.01 : 0.05;
    const RegionSweep sw = sweep_region(c, delta);
    const VolumeResult lazy = region_volume_lazy(c, delta);
    CHECK(lazy.volume == doctest::Approx(region_volume(sw)).epsilon(1e-12));
  }
}

TEST_CASE("volume converges when the grid is halved") {
  for (const NetworkConfig& c : {net(2, {0.8, 0.8}, 2, 1, {0, 0}), net(3, {0.6, 0.6, 0.6}, 2, 1, {0, 0, 0})}) {
    const double delta = c.n == 2 ? 0.02 : 0.05;
    const double coarse = region_volume_lazy(c, delta).volume;
    const double fine = region_volume_lazy(c, delta / 2).volume;
    CHECK(std::abs(coarse - fine) < 2.0 * c.n * delta);
  }
}

TEST_CASE("drift test agrees with the boundary rate at +-1e-3") {
  const std::vector<NetworkConfig> cases{net(2, {0.8, 0.8}, 2, 1, {0, 0.2}), net(2, {0.5, 0.7}, 1, 0, {0, 0.1}),
                                         net(3, {0.8, 0.8, 0.8}, 2, 1, {0, 0.1, 0.1}),
                                         net(3, {0.6, 0.5, 0.7}, 3, 2, {0, 0.05, 0.1})};
  for (const NetworkConfig& base : cases) {
    const BoundaryPoint bp = lambda_sr(0, base);
    REQUIRE(bp.feasible);
    const CoupledSolution sat = solve_coupled(base, 0);
    for (double eps : {-1e-3, 1e-3}) {
      NetworkConfig c = base;
      c.lambda[0] = bp.value + eps;
      // drift test on node 0 with the saturated coupling of its peers
      const NodeChain nc = assemble_chain(0, c, sat.coupling, working_space(c, 0));
      CHECK(drift(nc.chain).stable() == (eps < 0));
      // and the full coupled solve without saturation
      const CoupledSolution cs = solve_coupled(c);
      CHECK(cs.nodes[0].unstable == (eps > 0));
    }
  }
}

TEST_CASE("saturation throughput without backoff: n p (1 - p)^(n - 1)") {
  for (int n = 2; n <= 4; ++n) {
    for (int k = 1; k <= 9; ++k) {
      const double p = 0.1 * k;
      const double t = saturation_throughput(net(n, std::vector<double>(n, p), 1, 0, std::vector<double>(n, 0)));
      CHECK(std::abs(t - n * p * std::pow(1 - p, n - 1)) < 1e-12);
    }
  }
  CHECK(saturation_throughput(net(2, {1, 1}, 1, 0, {0, 0})) == 0.0);
}

TEST_CASE("optimize_backoff: K = 0 is flat, smallest r wins ties") {
  const BackoffOptimum t = optimize_backoff(net(3, {0.5, 0.5, 0.5}, 1, 0, {0, 0, 0}), Metric::throughput, 1, 4, 0.5);
  CHECK(t.r_opt == 1.0);
  REQUIRE(t.curve.size() == 7);
  for (const BackoffPoint& pt : t.curve) CHECK(pt.value == doctest::Approx(t.curve[0].value).epsilon(1e-12));
  const BackoffOptimum v = optimize_backoff(net(2, {0.6, 0.6}, 1, 0, {0, 0}), Metric::volume, 1, 3, 1, 0.02);
  CHECK(v.r_opt == 1.0);
  for (const BackoffPoint& pt : v.curve) CHECK(pt.value == doctest::Approx(v.curve[0].value).epsilon(1e-12));
}

TEST_CASE("two-node volume optimum at p = 1 near r = 2.6") {
  const BackoffOptimum v = optimize_backoff(net(2, {1, 1}, 1, 1, {0, 0}), Metric::volume, 2.0, 3.2, 0.1, 0.01);
  CHECK(std::abs(v.r_opt - 2.6) <= 0.2 + 1e-9);
  CHECK(std::abs(v.value - 0.213) < 0.01);
}

}  // TEST_SUITE
