#pragma once

// Model ingredients of the mean-field Atlas market: growth rate gamma(u),
// variance sigma2(u) on the relative rank u in [0,1], and the law m of the
// initial log-capitalizations.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mfatlas/errors.hpp"

namespace mfatlas {

namespace coef {
struct Constant {
  double c = 0.0;
};
/// a + b u
struct Linear {
  double a = 0.0;
  double b = 0.0;
};
/// g (alpha + 1) (1 - u)^alpha, mean-field approximation of the Atlas model.
struct AtlasAlpha {
  double g = 1.0;
  double alpha = 1.0;
};
/// 1 - 2u
struct Example31 {};
/// 2 (C + u - g (alpha + 1) (1 - u)^alpha) with C = 1 + g (alpha + 1); makes
/// the rate of return C + u increasing.
struct Example51Sigma2 {
  double g = 1.0;
  double alpha = 3.0;
};
/// Piecewise-linear through (u_k, v_k); u strictly increasing from 0 to 1.
struct Tabulated {
  Eigen::VectorXd u;
  Eigen::VectorXd v;
};
}  // namespace coef

using CoefficientSpec =
    std::variant<coef::Constant, coef::Linear, coef::AtlasAlpha, coef::Example31, coef::Example51Sigma2, coef::Tabulated>;

/// A continuous function on [0,1]. Immutable; evaluation is pure.
class CoefficientFunction {
 public:
  explicit CoefficientFunction(CoefficientSpec spec);

  static CoefficientFunction constant(double c) { return CoefficientFunction(coef::Constant{c}); }
  static CoefficientFunction linear(double a, double b) { return CoefficientFunction(coef::Linear{a, b}); }
  static CoefficientFunction atlas_alpha(double g, double alpha) {
    return CoefficientFunction(coef::AtlasAlpha{g, alpha});
  }
  static CoefficientFunction example31() { return CoefficientFunction(coef::Example31{}); }
  static CoefficientFunction example51_sigma2(double g, double alpha) {
    return CoefficientFunction(coef::Example51Sigma2{g, alpha});
  }
  static CoefficientFunction tabulated(Eigen::VectorXd u, Eigen::VectorXd v) {
    return CoefficientFunction(coef::Tabulated{std::move(u), std::move(v)});
  }

  /// Throws DomainError outside [0,1].
  double operator()(double u) const;

  /// Exact integral over [a, b] subset of [0,1].
  double integral(double a, double b) const;
  /// Integral over [0, u].
  double head_integral(double u) const;
  /// Integral over [1 - d, 1], computed from d without forming 1 - d where
  /// the closed form allows it.
  double tail_integral(double d) const;

  std::string_view kind() const;
  const CoefficientSpec& spec() const { return spec_; }

  /// Knots of a tabulated function (empty for analytic presets).
  std::vector<double> knots() const;

  /// Whether the preset is known to be C^2 with Hoelder second derivative
  /// (resp. C^1 with Hoelder first derivative when `order` is 1).
  bool regular_by_preset(int order) const;

 private:
  CoefficientSpec spec_;
};

/// Free-function form of CoefficientFunction::operator().
inline double eval(const CoefficientFunction& f, double u) { return f(u); }

namespace init {
struct Gaussian {
  double mean = 0.0;
  double sd = 1.0;
};
struct Uniform {
  double lo = 0.0;
  double hi = 1.0;
};
/// shift + sign * E / rate with E ~ Exp(1). sign = +1 puts the exponential
/// tail on the right, which violates (H) for p >= rate.
struct ShiftedExponential {
  double rate = 1.0;
  double shift = 0.0;
  int sign = -1;
};
/// Equilibrium law of the fluctuation process, shifted to have the given
/// mean. Resolved against an EquilibriumModel when sampled.
struct Equilibrium {
  double mean = 0.0;
};
/// Piecewise-linear quantile function through (u_k, y_k).
struct TabulatedQuantile {
  Eigen::VectorXd u;
  Eigen::VectorXd y;
};
}  // namespace init

using InitialSpec =
    std::variant<init::Gaussian, init::Uniform, init::ShiftedExponential, init::Equilibrium, init::TabulatedQuantile>;

class InitialDistribution {
 public:
  explicit InitialDistribution(InitialSpec spec);

  static InitialDistribution gaussian(double mean, double sd) { return InitialDistribution(init::Gaussian{mean, sd}); }
  static InitialDistribution uniform(double lo, double hi) { return InitialDistribution(init::Uniform{lo, hi}); }
  static InitialDistribution shifted_exponential(double rate, double shift, int sign) {
    return InitialDistribution(init::ShiftedExponential{rate, shift, sign});
  }
  static InitialDistribution equilibrium(double mean = 0.0) { return InitialDistribution(init::Equilibrium{mean}); }

  std::string_view kind() const;
  const InitialSpec& spec() const { return spec_; }
  double mean() const;
  /// Assumption (H): all exponential moments finite. Decided per preset.
  bool satisfies_h() const;

 private:
  InitialSpec spec_;
};

struct CriticalIndices {
  double p_c = 0.0;
  double q_c = 0.0;
};

/// (gamma, sigma2, m) with the derived constants g, p_c, q_c.
class MarketModel {
 public:
  MarketModel(CoefficientFunction gamma, CoefficientFunction sigma2, InitialDistribution m);

  const CoefficientFunction& gamma() const { return gamma_; }
  const CoefficientFunction& sigma2() const { return sigma2_; }
  const InitialDistribution& m() const { return m_; }

  /// Market mean growth rate, integral of gamma over [0,1].
  double g() const { return g_; }
  /// NaN when sigma2 vanishes at the corresponding endpoint.
  double p_c() const { return p_c_; }
  double q_c() const { return q_c_; }

  MarketModel with_initial(InitialDistribution m) const { return MarketModel(gamma_, sigma2_, std::move(m)); }

 private:
  CoefficientFunction gamma_;
  CoefficientFunction sigma2_;
  InitialDistribution m_;
  double g_;
  double p_c_;
  double q_c_;
};

/// Gamma(u) = integral of gamma over [0, u].
double big_gamma(const MarketModel& model, double u);
double mean_growth_rate(const MarketModel& model);
/// Throws ValidationError if sigma2 is not positive at 0 or 1.
CriticalIndices critical_indices(const MarketModel& model);
/// b(u) = gamma(u) + sigma2(u) / 2.
double rate_of_return(const MarketModel& model, double u);

/// Gamma(u) - g u, evaluated from whichever end is closer so that the
/// O(u) and O(1 - u) behaviour at the ends is kept to full relative
/// precision. `ubar` must equal 1 - u (it is used as given near u = 1).
double size_effect_gap(const MarketModel& model, double u, double ubar);
inline double size_effect_gap(const MarketModel& model, double u) { return size_effect_gap(model, u, 1.0 - u); }

struct AssumptionCheck {
  std::string name;
  bool passed = false;
  /// u at which the check failed (NaN if not pointwise or passed).
  double witness = 0.0;
  std::string detail;
};

struct DiscreteStability {
  std::size_t n = 0;
  bool passed = false;
  /// First k with sum_{j<=k} (gamma(j/n) - g_n) <= 0 (0 when passed).
  std::size_t first_failing_k = 0;
  double g_n = 0.0;
};

struct ValidationReport {
  AssumptionCheck ue;
  AssumptionCheck e1;
  AssumptionCheck e2;
  AssumptionCheck h;
  /// gamma(0) > g > gamma(1), sufficient for E2 under E1.
  bool e2_sufficient = false;
  std::optional<DiscreteStability> discrete;
  /// Regularity hypotheses of the equilibrium theorem, asserted per preset.
  bool gamma_regular_asserted = false;
  bool sigma2_regular_asserted = false;
  std::vector<std::string> warnings;

  bool ok() const { return ue.passed && e1.passed && e2.passed && h.passed; }
  /// First failing check in the order UE, E1, E2, H; nullptr if all pass.
  const AssumptionCheck* first_failure() const;
};

struct ValidationOptions {
  std::size_t grid_size = 4097;
  double tol = 1e-12;
  /// Also check the finite-n stability condition for this n.
  std::optional<std::size_t> n;
};

ValidationReport validate_model(const MarketModel& model, const ValidationOptions& options = {});
/// validate_model, throwing ValidationError on the first violated assumption.
ValidationReport require_valid(const MarketModel& model, const ValidationOptions& options = {});

DiscreteStability discrete_stability(const MarketModel& model, std::size_t n);

}  // namespace mfatlas
