#include <doctest.h>

#include <cmath>
#include <random>

#include "mfatlas/errors.hpp"
#include "mfatlas/measures.hpp"

using namespace mfatlas;
using CF = CoefficientFunction;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

MarketModel ex31(double s2 = 1.0) {
  return MarketModel(CF::example31(), CF::constant(s2), InitialDistribution::gaussian(0.0, 1.0));
}

}  // namespace

TEST_CASE("capital measure examples") {
  const auto y = vec({0.0, std::log(3.0)});
  const auto m0 = capital_measure(y, 0.0);
  CHECK(m0.w[0] == 0.5);
  CHECK(m0.w[1] == 0.5);
  const auto m1 = capital_measure(y, 1.0);
  CHECK(m1.u[0] == 0.5);
  CHECK(m1.u[1] == 1.0);
  CHECK(m1.w[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(m1.w[1] == doctest::Approx(0.75).epsilon(1e-15));
  for (double p : {0.5, 3.0, 40.0}) {
    const auto eq = capital_measure(Eigen::VectorXd::Constant(7, 2.5), p);
    for (Eigen::Index j = 0; j < 7; ++j) CHECK(eq.w[j] == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  }
  CHECK(measure_integral(m1, [](double) { return 1.0; }) == doctest::Approx(1.0));
  CHECK(measure_integral(m1, [](double u) { return u; }) == doctest::Approx(0.875).epsilon(1e-15));
  const auto four = capital_measure(vec({-3.0, 1.0, 2.0, 8.0}), 0.0);
  CHECK(measure_integral(four, [](double u) { return u; }) == doctest::Approx(0.625).epsilon(1e-15));
  CHECK_THROWS_AS(capital_measure(Eigen::VectorXd(), 1.0), InsufficientData);
}

TEST_CASE("weights sum to one for extreme states") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> big(-700.0, 700.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd y(200);
    for (auto& v : y) v = big(rng);
    std::sort(y.data(), y.data() + y.size());
    for (double p : {0.0, 0.5, 1.0, 5.0, 100.0}) {
      const auto m = capital_measure(y, p);
      REQUIRE(m.w.allFinite());
      CHECK(std::abs(m.w.sum() - 1.0) <= 1e-12);
      CHECK(m.w.minCoeff() >= 0.0);
    }
    CHECK(std::abs(market_weights(y).mu_desc.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("<id, Pi^p> is nondecreasing in p") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd y(10);
    for (auto& v : y) v = 2.0 * nd(rng);
    std::sort(y.data(), y.data() + y.size());
    double prev = -1.0;
    for (int k = 0; k <= 60; ++k) {
      const double v = measure_integral(capital_measure(y, 0.1 * k), [](double u) { return u; });
      REQUIRE(v >= prev - 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("market weights") {
  const auto mw = market_weights(vec({0.0, std::log(3.0)}));
  CHECK(mw.mu_desc[0] == doctest::Approx(0.75));
  CHECK(mw.mu_desc[1] == doctest::Approx(0.25));
  const auto flat = market_weights(Eigen::VectorXd::Constant(4, -1.0));
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(flat.mu_desc[k] == 0.25);

  // sum of the top n v weights equals the p = 1 mass of [1 - v, 1]
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  Eigen::VectorXd y(100);
  for (auto& v : y) v = nd(rng);
  std::sort(y.data(), y.data() + y.size());
  const auto mu = market_weights(y).mu_desc;
  const auto pi = capital_measure(y, 1.0);
  for (double v : {0.1, 0.25, 0.5, 0.9}) {
    const int top = static_cast<int>(std::floor(100 * v));
    const double lhs = mu.head(top).sum();
    const double rhs = measure_integral(pi, [&](double u) { return u > 1.0 - v + 1e-12 ? 1.0 : 0.0; });
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
  CHECK(std::is_sorted(mu.data(), mu.data() + mu.size(), std::greater<>()));
}

TEST_CASE("empirical capital curve") {
  const auto flat = empirical_capital_curve(Eigen::VectorXd::Constant(5, 3.0));
  REQUIRE(flat.points.size() == 5);
  for (const auto& [lu, lm] : flat.points) CHECK(lm == doctest::Approx(std::log(0.2)));
  const auto two = empirical_capital_curve(vec({0.0, std::log(3.0)}));
  CHECK(two.points[0].first == doctest::Approx(std::log(0.5)));
  CHECK(two.points[0].second == doctest::Approx(std::log(0.75)));
  CHECK(two.points[1].first == 0.0);
  CHECK(two.points[1].second == doctest::Approx(std::log(0.25)));
  const auto under = empirical_capital_curve(vec({-1000.0, 0.0}));
  CHECK(under.dropped == 1);
  CHECK(under.points.size() == 1);
}

TEST_CASE("portfolio rates") {
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(2, 0.5);
  const Eigen::VectorXd gamma = vec({1.0, -1.0});
  const Eigen::VectorXd sigma = Eigen::VectorXd::Ones(2);
  const auto r = portfolio_rates(w, gamma, sigma);
  CHECK(r.excess == doctest::Approx(0.25));
  CHECK(r.growth == doctest::Approx(0.25));
  CHECK(r.qv_rate == doctest::Approx(0.5));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd y(20), s(20), g(20);
    for (Eigen::Index j = 0; j < 20; ++j) {
      y[j] = 3.0 * unif(rng);
      s[j] = unif(rng);
      g[j] = unif(rng) - 0.5;
    }
    std::sort(y.data(), y.data() + y.size());
    const Eigen::VectorXd wt = softmax_weights(y, 4.0 * unif(rng));
    const auto rr = portfolio_rates(wt, g, s);
    const double s2w = (wt.array() * s.array().square()).sum();
    CHECK(rr.excess >= 0.0);
    CHECK(rr.excess == doctest::Approx(0.5 * s2w - 0.5 * rr.qv_rate).epsilon(1e-12));
    CHECK(rr.qv_rate <= s.array().square().maxCoeff() * wt.maxCoeff() + 1e-15);
  }
  // p = 0: sum w^2 sigma2 = (1/n) <sigma2, uniform>, vanishing like 1/n
  for (int n : {100, 1000}) {
    Eigen::VectorXd sg(n);
    for (int j = 0; j < n; ++j) sg[j] = std::sqrt(1.5 - double(j + 1) / n);
    const auto rr = portfolio_rates(Eigen::VectorXd::Constant(n, 1.0 / n), Eigen::VectorXd::Zero(n), sg);
    CHECK(rr.qv_rate == doctest::Approx(sg.array().square().mean() / n).epsilon(1e-12));
  }
}

TEST_CASE("portfolio tracker and path from dense snapshots agree") {
  const auto m = ex31();
  SimConfig cfg;
  cfg.n = 30;
  cfg.dt = 0.01;
  cfg.t_end = 2.0;
  cfg.seed = 4;
  for (int k = 0; k <= 200; ++k) cfg.snapshot_times.push_back(k * 0.01);
  PortfolioTracker tracker({0.0, 1.0, 3.0});
  const auto snaps = run(cfg, m, nullptr, {&tracker});
  REQUIRE(tracker.paths().size() == 3);
  for (const auto& tp : tracker.paths()) {
    const auto pp = portfolio_path(snaps, m, tp.p, cfg.dt);
    REQUIRE(pp.size() == tp.size());
    CHECK(tp.log_wealth_drift.front() == 0.0);
    CHECK(tp.log_wealth_sf.front() == 0.0);
    for (std::size_t k = 0; k < tp.size(); ++k) {
      CHECK(pp.growth_rate[k] == doctest::Approx(tp.growth_rate[k]).epsilon(1e-12));
      CHECK(pp.log_wealth_sf[k] == doctest::Approx(tp.log_wealth_sf[k]).epsilon(1e-9));
      CHECK(tp.excess_growth[k] >= 0.0);
      if (k > 0) CHECK(tp.quad_variation[k] >= tp.quad_variation[k - 1]);
    }
    const double gap = std::abs(tp.log_wealth_drift.back() - tp.log_wealth_sf.back());
    CHECK(gap <= 3.0 * std::sqrt(tp.quad_variation.back()));
  }
  SnapshotSet sparse = snaps;
  sparse.snapshots.erase(sparse.snapshots.begin() + 1);
  CHECK_THROWS_AS(portfolio_path(sparse, m, 1.0, cfg.dt), ConfigError);

  // no noise: excess and qv vanish
  const MarketModel still(CF::example31(), CF::constant(0.0), InitialDistribution::gaussian(0.0, 1.0));
  PortfolioTracker calm({0.0, 1.0}, 10);
  cfg.snapshot_times.clear();
  run(cfg, still, nullptr, {&calm});
  for (const auto& p : calm.paths()) {
    CHECK(p.size() == 21);
    for (std::size_t k = 0; k < p.size(); ++k) {
      CHECK(p.excess_growth[k] == 0.0);
      CHECK(p.quad_variation[k] == 0.0);
      CHECK(p.log_wealth_sf[k] == doctest::Approx(p.log_wealth_drift[k]).epsilon(1e-12));
    }
  }
  // p = 0 with two equal particles and unit variance
  PortfolioTracker pair({0.0});
  ParticleEnsemble ens(ex31(), Eigen::VectorXd::Zero(2), 1);
  pair.start(ens);
  CHECK(pair.paths()[0].excess_growth[0] == doctest::Approx(0.25));
}

TEST_CASE("wasserstein to equilibrium") {
  const auto m = ex31();
  const auto eq = build_equilibrium(m);
  Eigen::VectorXd y = sample_initial(InitialDistribution::equilibrium(), 100000, 8, &eq);
  std::sort(y.data(), y.data() + y.size());
  CHECK(wasserstein_to_equilibrium(y, eq, 0.0, 0.0) < 0.02);
  CHECK(wasserstein_to_equilibrium(y, eq, 0.0, 7.0) == wasserstein_to_equilibrium(y, eq, 0.0, 0.0));
  // a shift by c moves W1 by about |c|
  const Eigen::VectorXd shifted = (y.array() + 1.0).matrix();
  CHECK(wasserstein_to_equilibrium(shifted, eq, 0.5, 2.0) < 0.02);
  CHECK(wasserstein_to_equilibrium(shifted, eq, 0.0, 2.0) == doctest::Approx(1.0).epsilon(0.03));
}
