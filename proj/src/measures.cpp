#include "mfatlas/measures.hpp"

#include <algorithm>
#include <cmath>

#include "mfatlas/errors.hpp"
#include "mfatlas/io.hpp"

namespace mfatlas {

WeightedCapitalMeasure capital_measure(const Eigen::Ref<const Eigen::VectorXd>& sorted, double p) {
  const Eigen::Index n = sorted.size();
  if (n < 1) throw InsufficientData("capital_measure: empty state");
  WeightedCapitalMeasure m;
  m.p = p;
  m.u = Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(n)) / static_cast<double>(n);
  m.w = softmax_weights(sorted, p);
  return m;
}

double measure_integral(const WeightedCapitalMeasure& meas, const std::function<double(double)>& f) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < meas.w.size(); ++j) acc += meas.w[j] * f(meas.u[j]);
  return acc;
}

MarketWeights market_weights(const Eigen::Ref<const Eigen::VectorXd>& sorted) {
  return {softmax_weights(sorted, 1.0).reverse()};
}

CapitalCurve empirical_capital_curve(const Eigen::Ref<const Eigen::VectorXd>& sorted) {
  const Eigen::VectorXd mu = market_weights(sorted).mu_desc;
  const double n = static_cast<double>(mu.size());
  CapitalCurve c;
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    if (mu[k] > 0.0) {
      c.points.emplace_back(std::log(static_cast<double>(k + 1) / n), std::log(mu[k]));
    } else {
      ++c.dropped;
    }
  }
  return c;
}

PortfolioRates portfolio_rates(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::VectorXd>& gamma_rank,
                               const Eigen::Ref<const Eigen::VectorXd>& sigma_rank) {
  const Eigen::ArrayXd s2 = sigma_rank.array().square();
  PortfolioRates r;
  r.qv_rate = (w.array().square() * s2).sum();
  // 1/2 sum w (1 - w) sigma2, never negative
  r.excess = 0.5 * (w.array() * (1.0 - w.array()) * s2).sum();
  r.growth = w.dot(gamma_rank) + r.excess;
  return r;
}

double PortfolioPath::mean_growth(double t0, double t1) const {
  double acc = 0.0;
  std::size_t count = 0;
  const double eps = 1e-12 * std::max(1.0, std::abs(t1));
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] >= t0 - eps && times[k] <= t1 + eps) {
      acc += growth_rate[k];
      ++count;
    }
  }
  if (count == 0) throw InsufficientData("mean_growth: no samples in window");
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------

PortfolioTracker::PortfolioTracker(std::vector<double> ps, std::size_t record_every)
    : ps_(std::move(ps)), every_(std::max<std::size_t>(record_every, 1)) {}

void PortfolioTracker::freeze(const ParticleEnsemble& ens) {
  const Eigen::VectorXd sorted = ens.sorted();
  const auto& order = ens.order();
  for (std::size_t i = 0; i < ps_.size(); ++i) {
    const Eigen::VectorXd w = softmax_weights(sorted, ps_[i]);
    rates_[i] = portfolio_rates(w, ens.gamma_by_rank(), ens.sigma_by_rank());
    auto& by_id = w_by_id_[i];
    for (std::size_t j = 0; j < order.size(); ++j) by_id[order[j]] = w[static_cast<Eigen::Index>(j)];
  }
  for (std::size_t j = 0; j < order.size(); ++j) sigma_by_id_[order[j]] = ens.sigma_by_rank()[static_cast<Eigen::Index>(j)];
}

void PortfolioTracker::record(double t) {
  for (std::size_t i = 0; i < ps_.size(); ++i) {
    auto& path = paths_[i];
    path.times.push_back(t);
    path.growth_rate.push_back(rates_[i].growth);
    path.excess_growth.push_back(rates_[i].excess);
    path.log_wealth_drift.push_back(lz_drift_[i]);
    path.log_wealth_sf.push_back(lz_sf_[i]);
    path.quad_variation.push_back(qv_[i]);
  }
}

void PortfolioTracker::start(const ParticleEnsemble& ens) {
  const auto n = static_cast<Eigen::Index>(ens.n());
  paths_.assign(ps_.size(), {});
  for (std::size_t i = 0; i < ps_.size(); ++i) paths_[i].p = ps_[i];
  w_by_id_.assign(ps_.size(), Eigen::VectorXd(n));
  rates_.assign(ps_.size(), {});
  lz_drift_.assign(ps_.size(), 0.0);
  lz_sf_.assign(ps_.size(), 0.0);
  qv_.assign(ps_.size(), 0.0);
  sigma_by_id_.resize(n);
  step_ = 0;
  freeze(ens);
  record(ens.t());
}

void PortfolioTracker::after_step(const ParticleEnsemble& ens, double dt) {
  const Eigen::ArrayXd shock = sigma_by_id_.array() * ens.last_noise().array() * std::sqrt(dt);
  for (std::size_t i = 0; i < ps_.size(); ++i) {
    lz_drift_[i] += rates_[i].growth * dt;
    lz_sf_[i] += rates_[i].growth * dt + (w_by_id_[i].array() * shock).sum();
    qv_[i] += rates_[i].qv_rate * dt;
  }
  ++step_;
  freeze(ens);
  if (step_ % every_ == 0) record(ens.t());
}

PortfolioPath portfolio_path(const SnapshotSet& dense, const MarketModel& model, double p, double dt) {
  if (dense.snapshots.empty()) throw InsufficientData("portfolio_path: no snapshots");
  const auto n = static_cast<Eigen::Index>(dense.n);
  Eigen::VectorXd gamma(n), sigma(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double u = static_cast<double>(j + 1) / static_cast<double>(n);
    gamma[j] = model.gamma()(u);
    sigma[j] = std::sqrt(model.sigma2()(u));
  }
  PortfolioPath path;
  path.p = p;
  double lz_d = 0.0;
  double lz_sf = 0.0;
  double qv = 0.0;
  for (std::size_t k = 0; k < dense.snapshots.size(); ++k) {
    const auto& s = dense.snapshots[k];
    if (s.order.size() != dense.n) throw ConfigError("portfolio_path: snapshot lacks its rank order");
    const Eigen::VectorXd w = softmax_weights(s.sorted, p);
    const PortfolioRates r = portfolio_rates(w, gamma, sigma);
    path.times.push_back(s.t);
    path.growth_rate.push_back(r.growth);
    path.excess_growth.push_back(r.excess);
    path.log_wealth_drift.push_back(lz_d);
    path.log_wealth_sf.push_back(lz_sf);
    path.quad_variation.push_back(qv);
    if (k + 1 == dense.snapshots.size()) break;
    const auto& next = dense.snapshots[k + 1];
    if (std::abs(next.t - s.t - dt) > 1e-9 * dt) throw ConfigError("portfolio_path: snapshot spacing differs from dt");
    Eigen::VectorXd y_next(n);
    for (Eigen::Index j = 0; j < n; ++j) y_next[next.order[static_cast<std::size_t>(j)]] = next.sorted[j];
    double martingale = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto id = s.order[static_cast<std::size_t>(j)];
      martingale += w[j] * (y_next[id] - s.sorted[j] - gamma[j] * dt);
    }
    lz_d += r.growth * dt;
    lz_sf += r.growth * dt + martingale;
    qv += r.qv_rate * dt;
  }
  return path;
}

double wasserstein_to_equilibrium(const Eigen::Ref<const Eigen::VectorXd>& sorted, const EquilibriumModel& eq, double g,
                                  double t, double q) {
  const Eigen::Index n = sorted.size();
  if (n < 1) throw InsufficientData("wasserstein_to_equilibrium: empty state");
  const auto emp = EmpiricalDistribution((sorted.array() - g * t).matrix());
  const QuantileFunction law{[&eq](double u) { return eq.quantile(u); }};
  // grid a multiple of n so the empirical step function is integrated exactly
  WassersteinOptions opt;
  const Eigen::Index per_atom = std::max<Eigen::Index>(4, (8192 + n - 1) / n);
  opt.grid = static_cast<int>(n * per_atom);
  opt.richardson = false;
  return wasserstein(q, emp, law, opt);
}

// ---------------------------------------------------------------------------

void write_measure_csv(const std::vector<std::pair<double, WeightedCapitalMeasure>>& rows,
                       const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"t", "p", "u", "w"});
  for (const auto& [t, m] : rows) {
    for (Eigen::Index j = 0; j < m.w.size(); ++j) csv.row({t, m.p, m.u[j], m.w[j]});
  }
  csv.close();
}

void write_portfolio_csv(const std::vector<PortfolioPath>& paths, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"t", "p", "growth", "excess", "log_wealth_drift", "log_wealth_sf", "qv"});
  for (const auto& p : paths) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      csv.row({p.times[k], p.p, p.growth_rate[k], p.excess_growth[k], p.log_wealth_drift[k], p.log_wealth_sf[k],
               p.quad_variation[k]});
    }
  }
  csv.close();
}

void write_curve_csv(const CapitalCurve& curve, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"log_u", "log_mu"});
  for (const auto& [lu, lm] : curve.points) csv.row({lu, lm});
  csv.close();
}

void write_diag_csv(const std::vector<DiagRow>& rows, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"t", "n", "seed", "W1"});
  for (const auto& r : rows) csv.row({r.t, static_cast<std::uint64_t>(r.n), r.seed, r.w1});
  csv.close();
}

}  // namespace mfatlas
