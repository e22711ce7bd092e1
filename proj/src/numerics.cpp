#include "mfatlas/numerics.hpp"

#include <numbers>
#include <string>

namespace mfatlas {

QuadratureResult integrate_singular(const std::function<double(double, double)>& f, double lo, double hi,
                                    const SingularQuadratureSpec& spec) {
  if (!(hi > lo)) throw DomainError("integrate_singular: need lo < hi");
  const double mid = lo + 0.5 * (hi - lo);
  QuadratureResult total;

  for (const bool upper : {false, true}) {
    const double len = upper ? hi - mid : mid - lo;
    auto g = [&](double w) {
      const double d = len * std::exp(-w);
      const double u = upper ? hi - d : lo + d;
      const double complement = upper ? d : hi - u;
      return f(u, complement) * d;
    };

    double side = 0.0;
    double prev = std::numeric_limits<double>::quiet_NaN();
    double last = 0.0;
    int growing = 0;
    bool converged = false;
    double wa = 0.0;
    double wb = 1.0;
    while (true) {
      const QuadratureResult piece = integrate(g, wa, wb, spec.inner);
      total.evaluations += piece.evaluations;
      total.subdivisions += piece.subdivisions;
      total.error += piece.error;
      side += piece.value;
      last = piece.value;
      if (!std::isnan(prev) && prev != 0.0) {
        const double ratio = std::abs(piece.value / prev);
        growing = (ratio >= spec.divergence_ratio && wb >= 8.0) ? growing + 1 : 0;
        if (growing >= 3) {
          throw DivergenceDetected("integrate_singular: tail increments do not shrink near " +
                                   std::string(upper ? "upper" : "lower") + " endpoint");
        }
      }
      if (wb >= 4.0 &&
          std::abs(piece.value) <= spec.inner.abs_tol + spec.inner.rel_tol * std::abs(side)) {
        converged = true;
        break;
      }
      if (wb >= spec.max_log_depth) break;
      prev = piece.value;
      wa = wb;
      wb = std::min(2.0 * wb, spec.max_log_depth);
    }
    if (!converged) {
      // Geometric extrapolation of the remaining tail.
      const double ratio = std::isnan(prev) || prev == 0.0 ? 0.0 : std::abs(last / prev);
      if (ratio >= spec.divergence_ratio) {
        throw DivergenceDetected("integrate_singular: tail does not converge within the representable depth");
      }
      const double tail = last * ratio / (1.0 - ratio);
      side += tail;
      total.error += std::abs(tail);
    }
    total.value += side;
  }
  return total;
}

// ---------------------------------------------------------------------------

MonotoneGridFunction::MonotoneGridFunction(Eigen::VectorXd xs, Eigen::VectorXd ys, Extrapolation left,
                                           Extrapolation right)
    : xs_(std::move(xs)), ys_(std::move(ys)), left_(left), right_(right) {
  if (xs_.size() != ys_.size() || xs_.size() < 2) {
    throw DomainError("MonotoneGridFunction: need len(xs) == len(ys) >= 2");
  }
  for (Eigen::Index k = 1; k < xs_.size(); ++k) {
    if (!(xs_[k] > xs_[k - 1])) throw DomainError("MonotoneGridFunction: xs must be strictly increasing");
    if (!(ys_[k] >= ys_[k - 1])) throw DomainError("MonotoneGridFunction: ys must be nondecreasing");
  }
}

double MonotoneGridFunction::operator()(double x) const {
  const Eigen::Index n = xs_.size();
  if (x <= xs_[0]) {
    if (x < xs_[0] && left_ == Extrapolation::Error) throw DomainError("MonotoneGridFunction: x below grid");
    return ys_[0];
  }
  if (x >= xs_[n - 1]) {
    if (x > xs_[n - 1] && right_ == Extrapolation::Error) throw DomainError("MonotoneGridFunction: x above grid");
    return ys_[n - 1];
  }
  const auto it = std::upper_bound(xs_.data(), xs_.data() + n, x);
  const Eigen::Index k = it - xs_.data();
  const double t = (x - xs_[k - 1]) / (xs_[k] - xs_[k - 1]);
  return ys_[k - 1] + t * (ys_[k] - ys_[k - 1]);
}

double pseudo_inverse(const MonotoneGridFunction& g, double u) {
  const auto& xs = g.xs();
  const auto& ys = g.ys();
  const Eigen::Index n = xs.size();
  if (u < ys[0]) {
    if (g.left() == Extrapolation::Error) throw DomainError("pseudo_inverse: level below the range of g");
    return xs[0];
  }
  if (u >= ys[n - 1]) {
    if (g.right() == Extrapolation::Error) throw DomainError("pseudo_inverse: level at or above the range of g");
    return xs[n - 1];
  }
  const auto it = std::upper_bound(ys.data(), ys.data() + n, u);
  const Eigen::Index k = it - ys.data();  // ys[k-1] <= u < ys[k]
  const double t = (u - ys[k - 1]) / (ys[k] - ys[k - 1]);
  return xs[k - 1] + t * (xs[k] - xs[k - 1]);
}

Eigen::VectorXd inverse_transform_sample(const MonotoneGridFunction& quantile,
                                         const Eigen::Ref<const Eigen::VectorXd>& uniforms) {
  Eigen::VectorXd out(uniforms.size());
  for (Eigen::Index i = 0; i < uniforms.size(); ++i) {
    const double u = uniforms[i];
    if (!(u >= 0.0 && u <= 1.0)) throw DomainError("inverse_transform_sample: uniform outside [0,1]");
    out[i] = quantile(u);
  }
  return out;
}

// ---------------------------------------------------------------------------

EmpiricalDistribution::EmpiricalDistribution(Eigen::VectorXd samples) : sorted_(std::move(samples)) {
  if (sorted_.size() == 0) throw DomainError("EmpiricalDistribution: no samples");
  std::sort(sorted_.data(), sorted_.data() + sorted_.size());
}

EmpiricalDistribution::EmpiricalDistribution(Eigen::VectorXd sorted, Sorted) : sorted_(std::move(sorted)) {
  if (sorted_.size() == 0) throw DomainError("EmpiricalDistribution: no samples");
}

EmpiricalDistribution EmpiricalDistribution::from_sorted(Eigen::VectorXd sorted) {
  if (!std::is_sorted(sorted.data(), sorted.data() + sorted.size())) {
    throw DomainError("EmpiricalDistribution::from_sorted: samples are not sorted");
  }
  return EmpiricalDistribution(std::move(sorted), Sorted{});
}

double EmpiricalDistribution::quantile(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("EmpiricalDistribution::quantile: u outside [0,1]");
  const Eigen::Index n = sorted_.size();
  const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(u * static_cast<double>(n))), n - 1);
  return sorted_[k];
}

double EmpiricalDistribution::cdf(double y) const {
  const auto it = std::upper_bound(sorted_.data(), sorted_.data() + sorted_.size(), y);
  return static_cast<double>(it - sorted_.data()) / static_cast<double>(sorted_.size());
}

double wasserstein(double q, const EmpiricalDistribution& a, const EmpiricalDistribution& b) {
  if (!(q >= 1.0)) throw DomainError("wasserstein: q must be >= 1");
  const auto& xa = a.sorted_samples();
  const auto& xb = b.sorted_samples();
  const auto n = static_cast<long long>(xa.size());
  const auto m = static_cast<long long>(xb.size());
  long long i = 0;
  long long j = 0;
  double acc = 0.0;
  double u0 = 0.0;
  while (i < n && j < m) {
    // Next breakpoint is min((i+1)/n, (j+1)/m), compared in integers.
    const long long lhs = (i + 1) * m;
    const long long rhs = (j + 1) * n;
    const double u1 = lhs <= rhs ? static_cast<double>(i + 1) / static_cast<double>(n)
                                 : static_cast<double>(j + 1) / static_cast<double>(m);
    const double d = std::abs(xa[i] - xb[j]);
    acc += (u1 - u0) * (q == 1.0 ? d : std::pow(d, q));
    u0 = u1;
    if (lhs <= rhs) ++i;
    if (rhs <= lhs) ++j;
  }
  return q == 1.0 ? acc : std::pow(acc, 1.0 / q);
}

// ---------------------------------------------------------------------------

LogSlopeFit fit_log_slope(const std::vector<std::pair<double, double>>& points) {
  Eigen::ArrayXd x(static_cast<Eigen::Index>(points.size()));
  Eigen::ArrayXd y(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) {
    x[static_cast<Eigen::Index>(k)] = points[k].first;
    y[static_cast<Eigen::Index>(k)] = points[k].second;
  }
  return fit_log_slope(x, y);
}

LogSlopeFit fit_linear(const Eigen::Ref<const Eigen::ArrayXd>& x, const Eigen::Ref<const Eigen::ArrayXd>& y) {
  const Eigen::Index n = x.size();
  if (n != y.size()) throw DomainError("fit_linear: x and y differ in length");
  if (n < 3) throw InsufficientData("fit_linear: need at least 3 points");
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x - mx).square().sum();
  const double sxy = ((x - mx) * (y - my)).sum();
  const double syy = (y - my).square().sum();
  if (sxx == 0.0) throw InsufficientData("fit_linear: x values are all equal");
  LogSlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double sse = (y - fit.intercept - fit.slope * x).square().sum();
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  fit.slope_stderr = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  fit.points = static_cast<std::size_t>(n);
  return fit;
}

Eigen::VectorXd chebyshev_grid(Eigen::Index size) {
  if (size < 2) throw DomainError("chebyshev_grid: need at least 2 points");
  Eigen::VectorXd u(size);
  for (Eigen::Index k = 0; k < size; ++k) {
    const double s = std::sin(std::numbers::pi * static_cast<double>(k) / (2.0 * static_cast<double>(size - 1)));
    u[k] = s * s;
  }
  u[size - 1] = 1.0;
  return u;
}

}  // namespace mfatlas
