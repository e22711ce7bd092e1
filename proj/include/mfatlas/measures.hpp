#pragma once

// Empirical side: weighted capital measures of a sorted state, market
// weights, p-diversity portfolio accounting and distances to equilibrium.
// Rank levels are u_j = j/n increasing; market weights and capital curves use
// the decreasing order [k] = n - k + 1.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "mfatlas/coefficients.hpp"
#include "mfatlas/equilibrium.hpp"
#include "mfatlas/simulator.hpp"

namespace mfatlas {

struct WeightedCapitalMeasure {
  double p = 0.0;
  /// u_j = j/n.
  Eigen::VectorXd u;
  /// w_j, summing to one.
  Eigen::VectorXd w;
};

/// Softmax of p Y^(j) with max-shift; p = 0 gives exact uniform weights.
template <class Derived>
Eigen::VectorXd softmax_weights(const Eigen::MatrixBase<Derived>& y, double p) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = y.size();
  if (p == 0.0) return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  const Scalar top = p > 0.0 ? y.maxCoeff() : y.minCoeff();
  // std::exp rather than Eigen's vectorised exp, which clamps instead of
  // underflowing to zero
  Eigen::VectorXd w = (p * (y.template cast<double>().array() - static_cast<double>(top)))
                          .unaryExpr([](double x) { return std::exp(x); })
                          .matrix();
  return w / w.sum();
}

WeightedCapitalMeasure capital_measure(const Eigen::Ref<const Eigen::VectorXd>& sorted, double p);
double measure_integral(const WeightedCapitalMeasure& meas, const std::function<double(double)>& f);

struct MarketWeights {
  /// mu^[1] >= ... >= mu^[n].
  Eigen::VectorXd mu_desc;
};
MarketWeights market_weights(const Eigen::Ref<const Eigen::VectorXd>& sorted);

struct CapitalCurve {
  /// (log(k/n), log mu^[k]) for atoms whose weight did not underflow.
  std::vector<std::pair<double, double>> points;
  std::size_t dropped = 0;
};
CapitalCurve empirical_capital_curve(const Eigen::Ref<const Eigen::VectorXd>& sorted);

/// Rates of the p-diversity weighted portfolio at one state:
/// excess = 1/2 <sigma2, Pi> - 1/2 sum w_j^2 sigma2(j/n), growth = <gamma, Pi> + excess.
struct PortfolioRates {
  double growth = 0.0;
  double excess = 0.0;
  /// sum w_j^2 sigma2(j/n), the quadratic-variation rate.
  double qv_rate = 0.0;
};
PortfolioRates portfolio_rates(const Eigen::Ref<const Eigen::VectorXd>& w, const Eigen::Ref<const Eigen::VectorXd>& gamma_rank,
                               const Eigen::Ref<const Eigen::VectorXd>& sigma_rank);

struct PortfolioPath {
  double p = 0.0;
  /// Recorded times; every series entry belongs to the state at times[k].
  std::vector<double> times;
  std::vector<double> growth_rate;
  std::vector<double> excess_growth;
  /// log Z at times[k]; both start at 0.
  std::vector<double> log_wealth_drift;
  std::vector<double> log_wealth_sf;
  std::vector<double> quad_variation;

  std::size_t size() const { return times.size(); }
  /// Time average of growth_rate over samples with t in [t0, t1].
  double mean_growth(double t0, double t1) const;
};

/// Streaming p-diversity portfolio accounting, one path per p. Weights and
/// rates are frozen at the start of every step; wealth is accumulated both
/// by the drift integral and by the self-financing increment using the
/// step's noise. Every `record_every`-th state is stored.
class PortfolioTracker : public StepObserver {
 public:
  explicit PortfolioTracker(std::vector<double> ps, std::size_t record_every = 1);
  void start(const ParticleEnsemble& ens) override;
  void after_step(const ParticleEnsemble& ens, double dt) override;
  const std::vector<PortfolioPath>& paths() const { return paths_; }

 private:
  void freeze(const ParticleEnsemble& ens);
  void record(double t);
  std::vector<double> ps_;
  std::size_t every_;
  std::vector<PortfolioPath> paths_;
  // per p, frozen at the current state
  std::vector<Eigen::VectorXd> w_by_id_;
  std::vector<PortfolioRates> rates_;
  std::vector<double> lz_drift_, lz_sf_, qv_;
  Eigen::VectorXd sigma_by_id_;
  std::size_t step_ = 0;
};

/// Portfolio path from a dense snapshot series (spacing dt, orders present).
/// The self-financing increment uses realised moves minus drift, which is
/// sum_j w_j sigma(j/n) dB_j. ConfigError if spacing differs from dt.
PortfolioPath portfolio_path(const SnapshotSet& dense, const MarketModel& model, double p, double dt);

/// W_q between the empirical law of y - g t and the equilibrium law.
double wasserstein_to_equilibrium(const Eigen::Ref<const Eigen::VectorXd>& sorted, const EquilibriumModel& eq, double g,
                                  double t, double q = 1.0);

// CSV emitters.
void write_measure_csv(const std::vector<std::pair<double, WeightedCapitalMeasure>>& rows,
                       const std::filesystem::path& path);
void write_portfolio_csv(const std::vector<PortfolioPath>& paths, const std::filesystem::path& path);
void write_curve_csv(const CapitalCurve& curve, const std::filesystem::path& path);

struct DiagRow {
  double t;
  std::size_t n;
  std::uint64_t seed;
  double w1;
};
void write_diag_csv(const std::vector<DiagRow>& rows, const std::filesystem::path& path);

}  // namespace mfatlas
