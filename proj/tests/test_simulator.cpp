#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mfatlas/errors.hpp"
#include "mfatlas/simulator.hpp"

using namespace mfatlas;
using CF = CoefficientFunction;

namespace {

MarketModel ex31(double s2 = 1.0, InitialDistribution m = InitialDistribution::gaussian(0.0, 1.0)) {
  return MarketModel(CF::example31(), CF::constant(s2), std::move(m));
}

// two-sample Kolmogorov-Smirnov statistic
double ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("normal stream moments and reproducibility") {
  NormalStream a(42), b(42);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double x = a();
    REQUIRE(x == b());
    s += x;
    s2 += x * x;
  }
  CHECK(std::abs(s / n) < 4.0 / std::sqrt(double(n)));
  CHECK(s2 / n == doctest::Approx(1.0).epsilon(0.02));
  NormalStream c(1);
  for (int k = 0; k < 1000; ++k) {
    const double u = c.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
  }
  CHECK(derive_seed(5, 0) != derive_seed(5, 1));
  CHECK(derive_seed(5, 0) != derive_seed(6, 0));
}

TEST_CASE("sample_initial") {
  const std::size_t n = 100000;
  const auto y = sample_initial(InitialDistribution::gaussian(0.0, 1.0), n, 3);
  CHECK(std::abs(y.mean()) < 4.0 / std::sqrt(double(n)));
  CHECK(y == sample_initial(InitialDistribution::gaussian(0.0, 1.0), n, 3));
  CHECK(y != sample_initial(InitialDistribution::gaussian(0.0, 1.0), n, 4));

  const auto uni = sample_initial(InitialDistribution::uniform(-1.0, 3.0), n, 3);
  CHECK(uni.minCoeff() >= -1.0);
  CHECK(uni.maxCoeff() <= 3.0);
  CHECK(uni.mean() == doctest::Approx(1.0).epsilon(0.02));

  const auto ex = sample_initial(InitialDistribution::shifted_exponential(2.0, 1.0, -1), n, 3);
  CHECK(ex.maxCoeff() <= 1.0);
  CHECK(ex.mean() == doctest::Approx(0.5).epsilon(0.02));

  Eigen::VectorXd qu(3), qy(3);
  qu << 0.0, 0.5, 1.0;
  qy << -1.0, 0.0, 3.0;
  const auto tab = sample_initial(InitialDistribution(init::TabulatedQuantile{qu, qy}), n, 3);
  CHECK(tab.minCoeff() >= -1.0);
  CHECK(tab.maxCoeff() <= 3.0);
  CHECK(tab.mean() == doctest::Approx(0.5).epsilon(0.02));

  const auto m = ex31(1.0, InitialDistribution::equilibrium());
  CHECK_THROWS_AS(sample_initial(m.m(), 10, 1), ConfigError);
  const auto eq = build_equilibrium(m);
  Eigen::VectorXd e = sample_initial(m.m(), 20001, 9, &eq);
  std::sort(e.data(), e.data() + e.size());
  CHECK(std::abs(e[10000] - (-eq.ybar())) < 0.02);
}

TEST_CASE("euler step examples") {
  // n = 1, no noise: y(t) = y(0) + gamma(1) t
  const MarketModel lone(CF::linear(2.0, -3.0), CF::constant(0.0), InitialDistribution::gaussian(0.0, 1.0));
  ParticleEnsemble one(lone, Eigen::VectorXd::Constant(1, 0.25), 1);
  for (int k = 0; k < 1000; ++k) one.step(1e-3);
  CHECK(one.y()[0] == doctest::Approx(0.25 - 1.0).epsilon(1e-12));

  const MarketModel still(CF::example31(), CF::constant(0.0), InitialDistribution::gaussian(0.0, 1.0));
  Eigen::VectorXd y0(2);
  y0 << 0.0, 1.0;
  const auto two = step(ParticleEnsemble(still, y0, 1), 0.01);
  CHECK(two.y()[0] == 0.0);
  CHECK(two.y()[1] == doctest::Approx(0.99).epsilon(1e-15));

  // identities keep their coordinates when ranks cross
  Eigen::VectorXd y1(2);
  y1 << 1.0, 0.0;
  const auto swapped = step(ParticleEnsemble(still, y1, 1), 0.01);
  CHECK(swapped.y()[0] == doctest::Approx(0.99));
  CHECK(swapped.y()[1] == 0.0);
  CHECK(swapped.order() == std::vector<std::uint32_t>{1, 0});

  // ties broken by identity
  ParticleEnsemble tie(still, Eigen::VectorXd::Zero(3), 1);
  CHECK(tie.order() == std::vector<std::uint32_t>{0, 1, 2});

  CHECK_THROWS_AS(ParticleEnsemble(still, y0, 1).step(0.0), DomainError);
  const MarketModel wild(CF::constant(1e305), CF::constant(0.0), InitialDistribution::gaussian(0.0, 1.0));
  ParticleEnsemble boom(wild, Eigen::VectorXd::Zero(2), 1);
  CHECK_THROWS_AS(boom.step(100.0), NumericalBlowup);
}

TEST_CASE("drift identity without noise") {
  const MarketModel m(CF::atlas_alpha(1.0, 3.0), CF::constant(0.0), InitialDistribution::gaussian(0.0, 1.0));
  const std::size_t n = 37;
  const auto y0 = sample_initial(m.m(), n, 5);
  ParticleEnsemble ens(m, y0, 2);
  const auto dn = discrete_stability(m, n);
  double gn = 0.0;
  for (std::size_t j = 1; j <= n; ++j) gn += m.gamma()(double(j) / n);
  gn /= n;
  for (int k = 0; k < 500; ++k) ens.step(2e-3);
  CHECK(ens.y().mean() - y0.mean() == doctest::Approx(gn * 1.0).epsilon(1e-11));
  CHECK(dn.g_n == doctest::Approx(gn).epsilon(1e-12));
}

TEST_CASE("run: snapshots, determinism, draw count") {
  const auto m = ex31();
  SimConfig cfg;
  cfg.n = 50;
  cfg.dt = 0.01;
  cfg.t_end = 0.0;
  cfg.seed = 17;
  const auto s0 = run(cfg, m);
  REQUIRE(s0.snapshots.size() == 1);
  Eigen::VectorXd init = sample_initial(m.m(), 50, derive_seed(17, 0));
  std::sort(init.data(), init.data() + init.size());
  CHECK(s0.snapshots[0].sorted == init);
  CHECK(s0.normal_draws == 0);

  cfg.t_end = 1.0;
  cfg.snapshot_times = {0.0, 0.5, 1.0};
  const auto a = run(cfg, m);
  const auto b = run(cfg, m);
  REQUIRE(a.snapshots.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(a.snapshots[k].sorted == b.snapshots[k].sorted);
    CHECK(a.snapshots[k].order == b.snapshots[k].order);
  }
  CHECK(a.normal_draws == 50 * 100);
  for (const auto& s : a.snapshots) {
    CHECK(std::is_sorted(s.sorted.data(), s.sorted.data() + s.sorted.size()));
    auto o = s.order;
    std::sort(o.begin(), o.end());
    for (std::uint32_t i = 0; i < o.size(); ++i) REQUIRE(o[i] == i);
  }

  SimConfig dense = cfg;
  dense.snapshot_times = {0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  const auto d = run(dense, m);
  CHECK(d.at(0.5).sorted == a.at(0.5).sorted);
  CHECK(d.at(1.0).sorted == a.at(1.0).sorted);

  cfg.seed = 18;
  CHECK(run(cfg, m).at(1.0).sorted != a.at(1.0).sorted);

  SimConfig bad = cfg;
  bad.snapshot_times = {0.333};
  CHECK_THROWS_AS(run(bad, m), ConfigError);
  bad.snapshot_times = {0.5, 0.2};
  CHECK_THROWS_AS(run(bad, m), ConfigError);
  bad.snapshot_times = {};
  bad.dt = 0.0;
  CHECK_THROWS_AS(run(bad, m), ConfigError);
  bad.dt = 0.01;
  bad.n = 0;
  CHECK_THROWS_AS(run(bad, m), ConfigError);
}

TEST_CASE("fluctuations shift by g t") {
  SnapshotSet s;
  s.n = 3;
  Eigen::VectorXd y(3);
  y << -1.0, 0.0, 2.0;
  s.snapshots.push_back({2.0, y, {0, 1, 2}});
  CHECK(fluctuations(s, 0.0).snapshots[0].sorted == y);
  const Eigen::VectorXd shifted = fluctuations(s, 1.0).snapshots[0].sorted;
  CHECK((shifted - (y.array() - 2.0).matrix()).norm() == 0.0);
}

TEST_CASE("mean identity over replicas") {
  for (const auto& m : {ex31(), MarketModel(CF::atlas_alpha(1.0, 3.0), CF::constant(1.0),
                                            InitialDistribution::gaussian(0.0, 1.0))}) {
    SimConfig cfg;
    cfg.n = 200;
    cfg.dt = 1e-2;
    cfg.t_end = 1.0;
    cfg.snapshot_times = {0.0, 1.0};
    std::vector<double> drift;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      cfg.seed = seed;
      const auto s = run(cfg, m);
      drift.push_back(s.at(1.0).sorted.mean() - s.at(0.0).sorted.mean());
    }
    const double mean = std::accumulate(drift.begin(), drift.end(), 0.0) / drift.size();
    double var = 0.0;
    for (double d : drift) var += (d - mean) * (d - mean);
    const double se = std::sqrt(var / (drift.size() - 1) / drift.size());
    CHECK(std::abs(mean - m.g()) <= 3.0 * se);
  }
}

TEST_CASE("exchangeability in distribution") {
  const auto m = ex31();
  std::vector<double> a, b;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Eigen::VectorXd y0 = sample_initial(m.m(), 40, derive_seed(seed, 0));
    Eigen::VectorXd rev = y0.reverse();
    ParticleEnsemble e1(m, y0, derive_seed(seed, 1));
    ParticleEnsemble e2(m, rev, derive_seed(seed + 1000, 1));
    for (int k = 0; k < 200; ++k) {
      e1.step(2.5e-3);
      e2.step(2.5e-3);
    }
    // top order statistic and spread
    a.push_back(e1.sorted()[39] - e1.sorted()[0]);
    b.push_back(e2.sorted()[39] - e2.sorted()[0]);
  }
  // 1% critical value for two samples of 100
  CHECK(ks(a, b) < 1.63 * std::sqrt(2.0 / 100.0));
}
