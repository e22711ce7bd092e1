#pragma once

// Shared numerical kernels: adaptive Gauss-Kronrod quadrature with endpoint
// singularities, monotone grid functions and their pseudo-inverse, empirical
// distributions, quantile-form Wasserstein distances and log-log slope fits.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "mfatlas/errors.hpp"

namespace mfatlas {

/// Exponents (a0, a1) declaring f(u) ~ (u-lo)^{-a0} near lo and
/// (hi-u)^{-a1} near hi. Negative exponents describe integrands that vanish.
struct EndpointExponents {
  double a0 = 0.0;
  double a1 = 0.0;
};

struct QuadratureSpec {
  double abs_tol = 1e-13;
  double rel_tol = 1e-12;
  std::size_t max_subdivisions = 4000;
  std::optional<EndpointExponents> endpoint_exponents;
  /// |estimate| beyond which a non-shrinking endpoint panel is reported as a
  /// divergence instead of a refinement failure.
  double blowup_threshold = 1e12;
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  std::size_t subdivisions = 0;
  std::size_t evaluations = 0;
};

namespace detail {

// 21-point Kronrod extension of the 10-point Gauss rule on [-1, 1].
inline constexpr std::array<double, 11> kKronrodNodes = {
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.0};
inline constexpr std::array<double, 11> kKronrodWeights = {
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077958109831074, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821};
inline constexpr std::array<double, 5> kGaussWeights = {
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338};

struct Panel {
  double a = 0.0;
  double b = 0.0;
  double value = 0.0;
  double error = 0.0;
  int side = 0;  // which mapped half the panel belongs to
};

/// One Gauss-Kronrod 21 panel of g over [a, b]; error estimate as in QUADPACK.
template <class G>
Panel gk21(const G& g, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = g(centre);
  double kronrod = fc * kKronrodWeights[10];
  double gauss = 0.0;
  double resabs = std::abs(kronrod);
  std::array<double, 10> f1{};
  std::array<double, 10> f2{};
  for (int j = 0; j < 10; ++j) {
    const double dx = half * kKronrodNodes[j];
    f1[j] = g(centre - dx);
    f2[j] = g(centre + dx);
    const double sum = f1[j] + f2[j];
    kronrod += kKronrodWeights[j] * sum;
    resabs += kKronrodWeights[j] * (std::abs(f1[j]) + std::abs(f2[j]));
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * sum;
  }
  const double mean = 0.5 * kronrod;
  double resasc = kKronrodWeights[10] * std::abs(fc - mean);
  for (int j = 0; j < 10; ++j) {
    resasc += kKronrodWeights[j] * (std::abs(f1[j] - mean) + std::abs(f2[j] - mean));
  }
  const double scale = std::abs(half);
  double err = std::abs((kronrod - gauss) * half);
  resasc *= scale;
  resabs *= scale;
  if (resasc != 0.0 && err != 0.0) {
    err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  }
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50.0 * eps)) {
    err = std::max(50.0 * eps * resabs, err);
  }
  Panel p;
  p.a = a;
  p.b = b;
  p.value = kronrod * half;
  p.error = err;
  return p;
}

/// Calls f(u) or f(u, hi - u) depending on what f accepts.
template <class F>
double call_endpoint_aware(const F& f, double u, double complement) {
  if constexpr (std::invocable<const F&, double, double>) {
    return f(u, complement);
  } else {
    return f(u);
  }
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integral of f over (lo, hi).
///
/// f may take either `u` or `(u, hi - u)`; the second form receives the
/// distance to `hi` without cancellation near the upper end, which matters
/// for integrands built from log(1 - u).
///
/// When endpoint exponents are declared the interval is split at its midpoint
/// and each half is mapped by u = lo + L s^{1/(1-a0)} (mirrored at hi), which
/// turns a power singularity into a bounded integrand before refinement.
///
/// Throws DivergenceDetected if the integrand is non-finite on the open
/// interval or if the running estimate exceeds `blowup_threshold` while the
/// panel at a singular end keeps growing; ToleranceNotMet if the subdivision
/// budget runs out.
template <class F>
QuadratureResult integrate(const F& f, double lo, double hi, const QuadratureSpec& spec = {}) {
  QuadratureResult out;
  if (!(hi > lo)) {
    if (hi == lo) return out;
    QuadratureResult r = integrate(f, hi, lo, spec);
    r.value = -r.value;
    return r;
  }

  struct Half {
    double origin;    // endpoint the half is anchored at (s = 0)
    double length;    // signed length toward the midpoint
    double power;     // u - origin = length * s^power
    bool upper;       // anchored at hi
  };
  std::vector<Half> halves;
  if (spec.endpoint_exponents) {
    const auto [a0, a1] = *spec.endpoint_exponents;
    if (!(a0 < 1.0) || !(a1 < 1.0)) {
      throw DivergenceDetected("integrate: declared endpoint exponent >= 1 is not integrable");
    }
    const double mid = lo + 0.5 * (hi - lo);
    halves.push_back({lo, mid - lo, 1.0 / (1.0 - a0), false});
    halves.push_back({hi, hi - mid, 1.0 / (1.0 - a1), true});
  } else {
    halves.push_back({lo, hi - lo, 1.0, false});
  }

  std::size_t evaluations = 0;
  bool non_finite = false;
  auto mapped = [&](int side) {
    const Half h = halves[static_cast<std::size_t>(side)];
    return [&, h](double s) {
      ++evaluations;
      const double sp = h.power == 1.0 ? s : std::pow(s, h.power);
      const double offset = h.length * sp;
      const double jac = h.power == 1.0 ? h.length : h.length * h.power * std::pow(s, h.power - 1.0);
      double u;
      double complement;
      if (h.upper) {
        u = h.origin - offset;
        complement = offset;
      } else {
        u = h.origin + offset;
        complement = hi - u;
      }
      // A node that collapsed onto an endpoint sits in a panel narrower than
      // double resolution; its contribution is dropped.
      if (offset == 0.0) return 0.0;
      if constexpr (!std::invocable<const F&, double, double>) {
        if (u <= lo || u >= hi) return 0.0;
      }
      const double v = detail::call_endpoint_aware(f, u, complement) * jac;
      if (!std::isfinite(v)) non_finite = true;
      return v;
    };
  };

  std::vector<detail::Panel> panels;
  for (int side = 0; side < static_cast<int>(halves.size()); ++side) {
    auto g = mapped(side);
    detail::Panel p = detail::gk21(g, 0.0, 1.0);
    p.side = side;
    panels.push_back(p);
  }
  // Panels that can carry an endpoint singularity: s = 0 of a mapped half, or
  // either end of the single unmapped half.
  auto touches_end = [&](const detail::Panel& p) { return p.a == 0.0 || (halves.size() == 1 && p.b == 1.0); };
  auto by_error = [](const detail::Panel& x, const detail::Panel& y) { return x.error < y.error; };
  std::make_heap(panels.begin(), panels.end(), by_error);

  auto totals = [&]() {
    double v = 0.0;
    double e = 0.0;
    for (const auto& p : panels) {
      v += p.value;
      e += p.error;
    }
    return std::pair{v, e};
  };

  std::size_t subdivisions = 0;
  auto [value, error] = totals();
  while (true) {
    if (non_finite) {
      throw DivergenceDetected("integrate: integrand is not finite on the open interval");
    }
    if (error <= std::max(spec.abs_tol, spec.rel_tol * std::abs(value))) break;
    if (subdivisions >= spec.max_subdivisions) {
      throw ToleranceNotMet("integrate: subdivision budget exhausted", value, error);
    }
    std::pop_heap(panels.begin(), panels.end(), by_error);
    const detail::Panel worst = panels.back();
    panels.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    if (!(mid > worst.a && mid < worst.b)) {
      throw ToleranceNotMet("integrate: panel width reached double resolution", value, error);
    }
    auto g = mapped(worst.side);
    detail::Panel left = detail::gk21(g, worst.a, mid);
    detail::Panel right = detail::gk21(g, mid, worst.b);
    left.side = right.side = worst.side;
    panels.push_back(left);
    std::push_heap(panels.begin(), panels.end(), by_error);
    panels.push_back(right);
    std::push_heap(panels.begin(), panels.end(), by_error);
    ++subdivisions;

    std::tie(value, error) = totals();
    if (std::abs(value) > spec.blowup_threshold && touches_end(worst)) {
      const detail::Panel& edge = touches_end(left) ? left : right;
      if (std::abs(edge.value) >= std::abs(worst.value)) {
        throw DivergenceDetected("integrate: estimate exceeds blow-up threshold with a non-shrinking endpoint panel");
      }
    }
  }
  out.value = value;
  out.error = error;
  out.subdivisions = subdivisions;
  out.evaluations = evaluations;
  return out;
}

/// Integral over (lo, hi) of an integrand whose endpoint behaviour is not
/// known in closed form. Each half is mapped to a logarithmic tail variable
/// w = -log(distance to the endpoint / half length) and integrated over
/// doubling windows of w; the window increments decide convergence.
/// A sequence of non-shrinking increments (ratio >= `divergence_ratio`) is
/// reported as DivergenceDetected; this is a heuristic and cannot separate
/// e.g. 1/w from 1/w^{1.01} tails.
struct SingularQuadratureSpec {
  QuadratureSpec inner{};
  double divergence_ratio = 0.95;
  double max_log_depth = 700.0;
};

QuadratureResult integrate_singular(const std::function<double(double, double)>& f, double lo, double hi,
                                    const SingularQuadratureSpec& spec = {});

// ---------------------------------------------------------------------------
// Monotone grid functions.

enum class Extrapolation { Clamp, Error };

/// Piecewise-linear function through (xs[k], ys[k]); xs strictly increasing,
/// ys nondecreasing.
class MonotoneGridFunction {
 public:
  MonotoneGridFunction(Eigen::VectorXd xs, Eigen::VectorXd ys, Extrapolation left = Extrapolation::Clamp,
                       Extrapolation right = Extrapolation::Clamp);

  double operator()(double x) const;

  const Eigen::VectorXd& xs() const { return xs_; }
  const Eigen::VectorXd& ys() const { return ys_; }
  Extrapolation left() const { return left_; }
  Extrapolation right() const { return right_; }
  Eigen::Index size() const { return xs_.size(); }

 private:
  Eigen::VectorXd xs_;
  Eigen::VectorXd ys_;
  Extrapolation left_;
  Extrapolation right_;
};

/// inf{x : g(x) > u} over the interpolated grid function. Outside the range
/// of g the extrapolation policy applies: Clamp returns the first/last knot,
/// Error throws DomainError.
double pseudo_inverse(const MonotoneGridFunction& g, double u);

/// Elementwise quantile evaluation; sorted uniforms give sorted samples.
Eigen::VectorXd inverse_transform_sample(const MonotoneGridFunction& quantile,
                                         const Eigen::Ref<const Eigen::VectorXd>& uniforms);

// ---------------------------------------------------------------------------
// Empirical distributions and Wasserstein distances.

class EmpiricalDistribution {
 public:
  /// Samples are sorted on construction.
  explicit EmpiricalDistribution(Eigen::VectorXd samples);
  static EmpiricalDistribution from_sorted(Eigen::VectorXd sorted);

  const Eigen::VectorXd& sorted_samples() const { return sorted_; }
  Eigen::Index size() const { return sorted_.size(); }

  /// inf{y : F(y) > u}, i.e. the order statistic of index floor(n u) (0-based).
  double quantile(double u) const;
  double cdf(double y) const;
  double mean() const { return sorted_.mean(); }

 private:
  struct Sorted {};
  EmpiricalDistribution(Eigen::VectorXd sorted, Sorted);
  Eigen::VectorXd sorted_;
};

/// Quantile function wrapper for continuous laws given in closed form.
struct QuantileFunction {
  std::function<double(double)> fn;
  double quantile(double u) const { return fn(u); }
};

/// A MonotoneGridFunction used as a CDF; its quantile is the pseudo-inverse.
struct GridCdf {
  const MonotoneGridFunction& cdf;
  double quantile(double u) const { return pseudo_inverse(cdf, u); }
};

template <class T>
concept QuantileSource = requires(const T& t, double u) {
  { t.quantile(u) } -> std::convertible_to<double>;
};

struct WassersteinOptions {
  int grid = 4096;
  bool richardson = true;
};

struct WassersteinEstimate {
  double value = 0.0;
  /// |W(grid) - W(grid/2)|, reported as the discretisation tolerance.
  double richardson_delta = 0.0;
};

namespace detail {
template <QuantileSource A, QuantileSource B>
double wasserstein_midpoint(double q, const A& a, const B& b, int grid) {
  double acc = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double u = (k + 0.5) / grid;
    const double d = std::abs(a.quantile(u) - b.quantile(u));
    acc += q == 1.0 ? d : std::pow(d, q);
  }
  acc /= grid;
  return q == 1.0 ? acc : std::pow(acc, 1.0 / q);
}
}  // namespace detail

/// W_q via the quantile coupling, midpoint rule on a uniform u-grid.
template <QuantileSource A, QuantileSource B>
WassersteinEstimate wasserstein_estimate(double q, const A& a, const B& b, const WassersteinOptions& opt = {}) {
  if (!(q >= 1.0)) throw DomainError("wasserstein: q must be >= 1");
  WassersteinEstimate est;
  est.value = detail::wasserstein_midpoint(q, a, b, opt.grid);
  if (opt.richardson && opt.grid >= 4) {
    est.richardson_delta = std::abs(est.value - detail::wasserstein_midpoint(q, a, b, opt.grid / 2));
  }
  return est;
}

template <QuantileSource A, QuantileSource B>
double wasserstein(double q, const A& a, const B& b, const WassersteinOptions& opt = {}) {
  return wasserstein_estimate(q, a, b, opt).value;
}

/// Exact W_q between two empirical laws: both quantile functions are step
/// functions, integrated over the merged breakpoints.
double wasserstein(double q, const EmpiricalDistribution& a, const EmpiricalDistribution& b);

// ---------------------------------------------------------------------------

struct LogSlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double slope_stderr = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares of y on x (no logarithms); slope_stderr is the
/// usual OLS standard error.
LogSlopeFit fit_linear(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y);

/// Ordinary least squares of log y on log x.
template <class DerivedX, class DerivedY>
LogSlopeFit fit_log_slope(const Eigen::DenseBase<DerivedX>& x, const Eigen::DenseBase<DerivedY>& y) {
  if (x.size() != y.size()) throw DomainError("fit_log_slope: x and y differ in length");
  if (x.size() < 3) throw InsufficientData("fit_log_slope: need at least 3 points");
  const Eigen::ArrayXd ax = x.derived().array().template cast<double>();
  const Eigen::ArrayXd ay = y.derived().array().template cast<double>();
  if ((ax <= 0.0).any() || (ay <= 0.0).any()) throw DomainError("fit_log_slope: x and y must be positive");
  return fit_linear(ax.log(), ay.log());
}

LogSlopeFit fit_log_slope(const std::vector<std::pair<double, double>>& points);

/// Chebyshev-Lobatto points on [0, 1], clustered at both ends.
Eigen::VectorXd chebyshev_grid(Eigen::Index size);

}  // namespace mfatlas
