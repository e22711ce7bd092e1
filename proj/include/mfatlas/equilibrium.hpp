#pragma once

// Closed-form side of the model: the potential Psi, the equilibrium law of
// the fluctuation process, the long-term weighted capital measures, the
// capital density and long-term portfolio growth rates.
//
// Psi is tabulated in the logit coordinate z = log(u / (1 - u)), where
//   dPsi/dz = sigma2(u) u (1 - u) / (2 (Gamma(u) - g u))
// tends to 1/q_c as z -> -inf and 1/p_c as z -> +inf. Uniform z-knots are
// the tanh-clustered u-grid; both endpoints stay resolvable down to
// distances of about 1e-300.

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "mfatlas/coefficients.hpp"
#include "mfatlas/numerics.hpp"

namespace mfatlas {

enum class Phase { Subcritical, Critical, Supercritical };
std::string_view to_string(Phase phase);

/// Z-bar^p, finite or divergent.
struct Zbar {
  bool finite = true;
  double value = 1.0;
  double error = 0.0;
  /// For a divergent value: whether the divergence was also observed by
  /// the quadrature (as opposed to being implied by the phase alone).
  bool numerically_confirmed = true;
};

/// A number or, at criticality, the interval the limit points lie in.
struct Bracket {
  double lo = 0.0;
  double hi = 0.0;
  double error = 0.0;

  static Bracket point(double v, double err = 0.0) { return {v, v, err}; }
  static Bracket between(double a, double b, double err = 0.0) { return {std::min(a, b), std::max(a, b), err}; }
  bool is_point() const { return lo == hi; }
  /// Throws PhaseError for a proper interval.
  double value() const;
  double mid() const { return 0.5 * (lo + hi); }
};

struct EquilibriumOptions {
  /// Uniform logit knots on [-logit_range, logit_range].
  std::size_t grid = 4097;
  double logit_range = 40.0;
  QuadratureSpec quad{};
  /// |p - p_c| <= critical_tol (1 + p_c) counts as critical.
  double critical_tol = 1e-9;
};

class EquilibriumModel;

namespace detail {
struct EquilibriumImpl;
}

/// Long-term weighted capital measure Pi-bar^p.
class LongTermCapitalMeasure {
 public:
  double p() const { return p_; }
  Phase phase() const { return phase_; }
  const Zbar& zbar() const { return zbar_; }

  /// Subcritical, or critical with finite Z-bar: exp(p Psi(u)) / Z-bar^p.
  bool has_density() const;
  double density(double u) const;
  double density(double u, double ubar) const;
  double log_density(double u, double ubar) const;
  /// Pi-bar^p([0, u]); PhaseError without a density.
  double cdf(double u) const;

  const detail::EquilibriumImpl* impl_for_integrals() const { return impl_.get(); }

 private:
  friend class EquilibriumModel;
  LongTermCapitalMeasure(std::shared_ptr<const detail::EquilibriumImpl> impl, double p, Phase phase, Zbar z);
  std::shared_ptr<const detail::EquilibriumImpl> impl_;
  double p_;
  Phase phase_;
  Zbar zbar_;
};

struct CapitalCurvePoint {
  double u;
  double mu_bar;
  double log_u;
  double log_mu;
};

struct GrowthRates {
  double p;
  Phase phase;
  Bracket G;
  Bracket Gstar;
};

enum class Monotonicity { Nondecreasing, Nonincreasing, Constant, None };
std::string_view to_string(Monotonicity m);

struct MonotonicityReport {
  Monotonicity b_shape = Monotonicity::None;
  Monotonicity sigma2_shape = Monotonicity::None;
  std::vector<GrowthRates> rows;
  /// Adjacent grid pairs (p_k, p_{k+1}) where G (resp. G*) moves against the
  /// direction implied by the shape of b (resp. sigma2).
  std::vector<std::pair<double, double>> g_violations;
  std::vector<std::pair<double, double>> gstar_violations;
  /// Grid point with the largest G (bracket midpoint at criticality).
  double argmax_p = 0.0;
};

class EquilibriumModel {
 public:
  const MarketModel& model() const;
  /// Psi on the logit knots (xs = z, ys = Psi).
  const MonotoneGridFunction& psi_grid() const;
  double ybar() const;
  /// Integral of Psi over [0, 1].
  double psi_mean() const;
  double p_c() const;
  double q_c() const;

  /// Psi(u); -inf at 0, +inf at 1.
  double psi(double u) const;
  /// Psi with an exact complement ubar = 1 - u, needed near u = 1.
  double psi(double u, double ubar) const;
  double psi_logit(double z) const;
  /// dPsi/dz.
  double psi_logit_derivative(double z) const;
  /// Logit of Psi^{-1}(y).
  double psi_inverse_logit(double y) const;
  double psi_inverse(double y) const;

  /// Quantile of the equilibrium law: Psi(u) - ybar.
  double quantile(double u) const;
  /// Equilibrium CDF: Psi^{-1}(y + ybar).
  double cdf(double y) const;

  Phase classify(double p) const;
  Zbar zbar(double p) const;
  LongTermCapitalMeasure long_term_measure(double p) const;

  const EquilibriumOptions& options() const;

 private:
  friend EquilibriumModel build_equilibrium(const MarketModel&, const EquilibriumOptions&);
  explicit EquilibriumModel(std::shared_ptr<const detail::EquilibriumImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const detail::EquilibriumImpl> impl_;
};

/// Throws ValidationError when UE, E1 or E2 fails.
EquilibriumModel build_equilibrium(const MarketModel& model, const EquilibriumOptions& options = {});

inline Zbar zbar(const EquilibriumModel& eq, double p) { return eq.zbar(p); }
inline LongTermCapitalMeasure long_term_measure(const EquilibriumModel& eq, double p) {
  return eq.long_term_measure(p);
}

/// <f, Pi-bar^p>: a point except at criticality with finite Z-bar, where the
/// limit points are only known to lie between f(1) and <f, Pi-bar^{p_c}>.
Bracket measure_integral(const LongTermCapitalMeasure& meas, const std::function<double(double)>& f);

/// mu-bar(u) = exp(Psi(1 - u)) / Z-bar^1. PhaseError unless p = 1 is subcritical.
double capital_density(const EquilibriumModel& eq, double u);
std::vector<CapitalCurvePoint> capital_curve(const EquilibriumModel& eq, const std::vector<double>& us);

GrowthRates growth_rates(const EquilibriumModel& eq, double p);
/// |G^p - ((1 - min(p, p_c)) G^p_* + g)|, maximised over bracket ends.
double reduction_check(const EquilibriumModel& eq, double p);
MonotonicityReport monotonicity_report(const EquilibriumModel& eq, const std::vector<double>& ps);

void write_psi_csv(const EquilibriumModel& eq, const std::filesystem::path& path);
void write_pibar_csv(const EquilibriumModel& eq, const std::vector<double>& ps, const std::vector<double>& us,
                     const std::filesystem::path& path);
void write_capital_curve_csv(const std::vector<CapitalCurvePoint>& curve, const std::filesystem::path& path);
void write_growth_csv(const EquilibriumModel& eq, const std::vector<double>& ps, const std::filesystem::path& path);

}  // namespace mfatlas
