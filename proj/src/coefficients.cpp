#include "mfatlas/coefficients.hpp"

#include <cstdio>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mfatlas/numerics.hpp"

namespace mfatlas {

namespace {

std::string short_num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_unit(double u, const char* what) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError(std::string(what) + ": u outside [0,1]");
}

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw DomainError(std::string(what) + ": parameter is not finite");
}

// 1 - (1 - u)^k without cancellation for small u.
double one_minus_pow_complement(double u, double k) { return -std::expm1(k * std::log1p(-u)); }

void check_knots(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const char* what) {
  if (u.size() != v.size() || u.size() < 2) throw DomainError(std::string(what) + ": need at least two knots");
  if (u[0] != 0.0 || u[u.size() - 1] != 1.0) throw DomainError(std::string(what) + ": knots must start at 0 and end at 1");
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    require_finite(v[k], what);
    if (k > 0 && !(u[k] > u[k - 1])) throw DomainError(std::string(what) + ": knots must be strictly increasing");
  }
}

double tabulated_eval(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double u) {
  const Eigen::Index n = xs.size();
  if (u >= xs[n - 1]) return ys[n - 1];
  const Eigen::Index k = std::upper_bound(xs.data(), xs.data() + n, u) - xs.data();
  const double t = (u - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + t * (ys[k] - ys[k - 1]);
}

double tabulated_head(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double u) {
  double acc = 0.0;
  for (Eigen::Index k = 1; k < xs.size(); ++k) {
    if (u <= xs[k - 1]) break;
    const double b = std::min(u, xs[k]);
    const double vb = tabulated_eval(xs, ys, b);
    acc += 0.5 * (ys[k - 1] + vb) * (b - xs[k - 1]);
  }
  return acc;
}

// Integral over [1 - d, 1], accumulated from the upper end in the
// coordinate s = 1 - u so that small d keeps full relative precision.
double tabulated_tail(const Eigen::VectorXd& xs, const Eigen::VectorXd& ys, double d) {
  double acc = 0.0;
  for (Eigen::Index k = xs.size() - 1; k >= 1; --k) {
    const double s_lo = 1.0 - xs[k];
    const double s_hi = 1.0 - xs[k - 1];
    if (d <= s_lo) break;
    const double b = std::min(d, s_hi);
    const double vb = ys[k] + (ys[k - 1] - ys[k]) * (b - s_lo) / (s_hi - s_lo);
    acc += 0.5 * (ys[k] + vb) * (b - s_lo);
  }
  return acc;
}

}  // namespace

CoefficientFunction::CoefficientFunction(CoefficientSpec spec) : spec_(std::move(spec)) {
  std::visit(overloaded{
                 [](const coef::Constant& s) { require_finite(s.c, "constant"); },
                 [](const coef::Linear& s) {
                   require_finite(s.a, "linear");
                   require_finite(s.b, "linear");
                 },
                 [](const coef::AtlasAlpha& s) {
                   require_finite(s.g, "atlas_alpha");
                   require_finite(s.alpha, "atlas_alpha");
                   if (!(s.alpha >= 0.0)) throw DomainError("atlas_alpha: alpha must be >= 0");
                 },
                 [](const coef::Example31&) {},
                 [](const coef::Example51Sigma2& s) {
                   require_finite(s.g, "example51_sigma2");
                   require_finite(s.alpha, "example51_sigma2");
                   if (!(s.alpha >= 0.0)) throw DomainError("example51_sigma2: alpha must be >= 0");
                 },
                 [](const coef::Tabulated& s) { check_knots(s.u, s.v, "tabulated"); },
             },
             spec_);
}

double CoefficientFunction::operator()(double u) const {
  require_unit(u, "CoefficientFunction");
  return std::visit(overloaded{
                        [](const coef::Constant& s) { return s.c; },
                        [u](const coef::Linear& s) { return s.a + s.b * u; },
                        [u](const coef::AtlasAlpha& s) { return s.g * (s.alpha + 1.0) * std::pow(1.0 - u, s.alpha); },
                        [u](const coef::Example31&) { return 1.0 - 2.0 * u; },
                        [u](const coef::Example51Sigma2& s) {
                          const double c = 1.0 + s.g * (s.alpha + 1.0);
                          return 2.0 * (c + u - s.g * (s.alpha + 1.0) * std::pow(1.0 - u, s.alpha));
                        },
                        [u](const coef::Tabulated& s) { return tabulated_eval(s.u, s.v, u); },
                    },
                    spec_);
}

double CoefficientFunction::head_integral(double u) const {
  require_unit(u, "head_integral");
  return std::visit(overloaded{
                        [u](const coef::Constant& s) { return s.c * u; },
                        [u](const coef::Linear& s) { return u * (s.a + 0.5 * s.b * u); },
                        [u](const coef::AtlasAlpha& s) { return s.g * one_minus_pow_complement(u, s.alpha + 1.0); },
                        [u](const coef::Example31&) { return u * (1.0 - u); },
                        [u](const coef::Example51Sigma2& s) {
                          const double c = 1.0 + s.g * (s.alpha + 1.0);
                          return 2.0 * (c * u + 0.5 * u * u - s.g * one_minus_pow_complement(u, s.alpha + 1.0));
                        },
                        [u](const coef::Tabulated& s) { return tabulated_head(s.u, s.v, u); },
                    },
                    spec_);
}

double CoefficientFunction::tail_integral(double d) const {
  require_unit(d, "tail_integral");
  return std::visit(overloaded{
                        [d](const coef::Constant& s) { return s.c * d; },
                        [d](const coef::Linear& s) { return d * (s.a + s.b * (1.0 - 0.5 * d)); },
                        [d](const coef::AtlasAlpha& s) { return s.g * std::pow(d, s.alpha + 1.0); },
                        [d](const coef::Example31&) { return -d * (1.0 - d); },
                        [d](const coef::Example51Sigma2& s) {
                          const double c = 1.0 + s.g * (s.alpha + 1.0);
                          return 2.0 * (c * d + d * (1.0 - 0.5 * d) - s.g * std::pow(d, s.alpha + 1.0));
                        },
                        [d](const coef::Tabulated& s) { return tabulated_tail(s.u, s.v, d); },
                    },
                    spec_);
}

double CoefficientFunction::integral(double a, double b) const {
  require_unit(a, "integral");
  require_unit(b, "integral");
  if (a == 0.0) return head_integral(b);
  if (b == 1.0) return tail_integral(1.0 - a);
  return head_integral(b) - head_integral(a);
}

std::string_view CoefficientFunction::kind() const {
  return std::visit(overloaded{
                        [](const coef::Constant&) { return std::string_view("constant"); },
                        [](const coef::Linear&) { return std::string_view("linear"); },
                        [](const coef::AtlasAlpha&) { return std::string_view("atlas_alpha"); },
                        [](const coef::Example31&) { return std::string_view("example31"); },
                        [](const coef::Example51Sigma2&) { return std::string_view("example51_sigma2"); },
                        [](const coef::Tabulated&) { return std::string_view("tabulated"); },
                    },
                    spec_);
}

std::vector<double> CoefficientFunction::knots() const {
  if (const auto* t = std::get_if<coef::Tabulated>(&spec_)) return {t->u.data(), t->u.data() + t->u.size()};
  return {};
}

bool CoefficientFunction::regular_by_preset(int order) const {
  // (1 - u)^alpha has a Hoelder derivative of order k when alpha >= k.
  const double need = order;
  return std::visit(overloaded{
                        [](const coef::Constant&) { return true; },
                        [](const coef::Linear&) { return true; },
                        [need](const coef::AtlasAlpha& s) { return s.alpha >= need || s.alpha == 0.0; },
                        [](const coef::Example31&) { return true; },
                        [need](const coef::Example51Sigma2& s) { return s.alpha >= need || s.alpha == 0.0; },
                        [](const coef::Tabulated& s) { return s.u.size() == 2; },
                    },
                    spec_);
}

// ---------------------------------------------------------------------------

InitialDistribution::InitialDistribution(InitialSpec spec) : spec_(std::move(spec)) {
  std::visit(overloaded{
                 [](const init::Gaussian& s) {
                   require_finite(s.mean, "gaussian");
                   if (!(s.sd > 0.0) || !std::isfinite(s.sd)) throw DomainError("gaussian: sd must be > 0");
                 },
                 [](const init::Uniform& s) {
                   require_finite(s.lo, "uniform");
                   require_finite(s.hi, "uniform");
                   if (!(s.lo < s.hi)) throw DomainError("uniform: need lo < hi");
                 },
                 [](const init::ShiftedExponential& s) {
                   require_finite(s.shift, "shifted_exponential");
                   if (!(s.rate > 0.0) || !std::isfinite(s.rate)) throw DomainError("shifted_exponential: rate must be > 0");
                   if (s.sign != 1 && s.sign != -1) throw DomainError("shifted_exponential: sign must be +1 or -1");
                 },
                 [](const init::Equilibrium& s) { require_finite(s.mean, "equilibrium"); },
                 [](const init::TabulatedQuantile& s) {
                   check_knots(s.u, s.y, "tabulated_quantile");
                   for (Eigen::Index k = 1; k < s.y.size(); ++k) {
                     if (!(s.y[k] >= s.y[k - 1])) throw DomainError("tabulated_quantile: values must be nondecreasing");
                   }
                 },
             },
             spec_);
}

std::string_view InitialDistribution::kind() const {
  return std::visit(overloaded{
                        [](const init::Gaussian&) { return std::string_view("gaussian"); },
                        [](const init::Uniform&) { return std::string_view("uniform"); },
                        [](const init::ShiftedExponential&) { return std::string_view("shifted_exponential"); },
                        [](const init::Equilibrium&) { return std::string_view("equilibrium"); },
                        [](const init::TabulatedQuantile&) { return std::string_view("tabulated_quantile"); },
                    },
                    spec_);
}

double InitialDistribution::mean() const {
  return std::visit(overloaded{
                        [](const init::Gaussian& s) { return s.mean; },
                        [](const init::Uniform& s) { return 0.5 * (s.lo + s.hi); },
                        [](const init::ShiftedExponential& s) { return s.shift + s.sign / s.rate; },
                        [](const init::Equilibrium& s) { return s.mean; },
                        [](const init::TabulatedQuantile& s) { return tabulated_head(s.u, s.y, 1.0); },
                    },
                    spec_);
}

bool InitialDistribution::satisfies_h() const {
  if (const auto* e = std::get_if<init::ShiftedExponential>(&spec_)) return e->sign < 0;
  return true;
}

// ---------------------------------------------------------------------------

MarketModel::MarketModel(CoefficientFunction gamma, CoefficientFunction sigma2, InitialDistribution m)
    : gamma_(std::move(gamma)), sigma2_(std::move(sigma2)), m_(std::move(m)) {
  g_ = gamma_.head_integral(1.0);
  const double s1 = sigma2_(1.0);
  const double s0 = sigma2_(0.0);
  p_c_ = s1 > 0.0 ? 2.0 * (g_ - gamma_(1.0)) / s1 : kNaN;
  q_c_ = s0 > 0.0 ? 2.0 * (gamma_(0.0) - g_) / s0 : kNaN;
}

double big_gamma(const MarketModel& model, double u) { return model.gamma().head_integral(u); }

double mean_growth_rate(const MarketModel& model) { return model.g(); }

CriticalIndices critical_indices(const MarketModel& model) {
  if (!(model.sigma2()(0.0) > 0.0)) throw ValidationError("UE", 0.0, "critical_indices: sigma2(0) must be > 0");
  if (!(model.sigma2()(1.0) > 0.0)) throw ValidationError("UE", 1.0, "critical_indices: sigma2(1) must be > 0");
  return {model.p_c(), model.q_c()};
}

double rate_of_return(const MarketModel& model, double u) { return model.gamma()(u) + 0.5 * model.sigma2()(u); }

double size_effect_gap(const MarketModel& model, double u, double ubar) {
  require_unit(u, "size_effect_gap");
  if (u <= 0.5) return model.gamma().head_integral(u) - model.g() * u;
  return model.g() * ubar - model.gamma().tail_integral(ubar);
}

// ---------------------------------------------------------------------------

const AssumptionCheck* ValidationReport::first_failure() const {
  for (const AssumptionCheck* c : {&ue, &e1, &e2, &h}) {
    if (!c->passed) return c;
  }
  return nullptr;
}

DiscreteStability discrete_stability(const MarketModel& model, std::size_t n) {
  if (n < 2) throw DomainError("discrete_stability: need n >= 2");
  DiscreteStability out;
  out.n = n;
  std::vector<double> gam(n);
  double scale = 0.0;
  double sum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    gam[j - 1] = model.gamma()(static_cast<double>(j) / static_cast<double>(n));
    scale = std::max(scale, std::abs(gam[j - 1]));
    sum += gam[j - 1];
  }
  out.g_n = sum / static_cast<double>(n);
  const double floor = 1e-12 * std::max(scale, 1.0);
  double partial = 0.0;
  out.passed = true;
  for (std::size_t k = 1; k < n; ++k) {
    partial += gam[k - 1] - out.g_n;
    if (!(partial > floor)) {
      out.passed = false;
      out.first_failing_k = k;
      break;
    }
  }
  return out;
}

ValidationReport validate_model(const MarketModel& model, const ValidationOptions& options) {
  if (options.grid_size < 16) throw DomainError("validate_model: grid_size must be >= 16");
  const auto& gamma = model.gamma();
  const auto& sigma2 = model.sigma2();

  // Chebyshev points with exact complements, plus every tabulated knot.
  std::vector<std::pair<double, double>> grid;
  const std::size_t n = options.grid_size;
  for (std::size_t k = 0; k < n; ++k) {
    const double theta = std::numbers::pi * static_cast<double>(k) / (2.0 * static_cast<double>(n - 1));
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    grid.emplace_back(k + 1 == n ? 1.0 : s * s, k + 1 == n ? 0.0 : c * c);
  }
  for (const auto* f : {&gamma, &sigma2}) {
    for (double u : f->knots()) grid.emplace_back(u, 1.0 - u);
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](const auto& a, const auto& b) { return a.first == b.first; }),
             grid.end());

  ValidationReport r;
  r.ue.name = "UE";
  r.e1.name = "E1";
  r.e2.name = "E2";
  r.h.name = "H";

  double min_s2 = std::numeric_limits<double>::infinity();
  double at_s2 = kNaN;
  for (const auto& [u, ubar] : grid) {
    const double v = sigma2(u);
    if (!(v >= min_s2)) {
      min_s2 = v;
      at_s2 = u;
    }
  }
  r.ue.passed = min_s2 > options.tol;
  r.ue.witness = r.ue.passed ? kNaN : at_s2;
  r.ue.detail = "min sigma2 on grid = " + short_num(min_s2) + " at u = " + short_num(at_s2);

  double min_e = std::numeric_limits<double>::infinity();
  double at_e = kNaN;
  for (const auto& [u, ubar] : grid) {
    if (u <= 0.0 || u >= 1.0) continue;
    const double e = size_effect_gap(model, u, ubar);
    if (!(e >= min_e)) {
      min_e = e;
      at_e = u;
    }
  }
  r.e1.passed = min_e > 0.0;
  r.e1.witness = r.e1.passed ? kNaN : at_e;
  r.e1.detail = "min of Gamma(u) - g u on interior grid = " + short_num(min_e) + " at u = " + short_num(at_e);

  r.e2_sufficient = gamma(0.0) > model.g() && model.g() > gamma(1.0);
  r.e2.witness = kNaN;
  if (!r.e1.passed) {
    r.e2.passed = false;
    r.e2.detail = "not evaluated: E1 fails";
  } else {
    auto integrand = [&](double u, double ubar) {
      const double e = size_effect_gap(model, u, ubar);
      return (u <= 0.5 ? u : ubar) / e;
    };
    try {
      const auto res = integrate_singular(integrand, 0.0, 1.0);
      r.e2.passed = std::isfinite(res.value);
      r.e2.detail = "integral of u/E near 0 plus (1-u)/E near 1 = " + short_num(res.value);
    } catch (const DivergenceDetected& e) {
      r.e2.passed = false;
      r.e2.detail = e.what();
    } catch (const ToleranceNotMet& e) {
      r.e2.passed = false;
      r.e2.detail = e.what();
    }
  }

  r.h.passed = model.m().satisfies_h();
  r.h.witness = kNaN;
  r.h.detail = r.h.passed ? "finite exponential moments for preset " + std::string(model.m().kind())
                          : "right exponential tail of shifted_exponential violates (H) for p >= rate";
  if (model.m().kind() == "equilibrium") {
    r.warnings.push_back(
        "m = equilibrium has an exponential right tail of index p_c; its exponential moments are finite only "
        "for p < p_c");
  }

  r.gamma_regular_asserted = gamma.regular_by_preset(1);
  r.sigma2_regular_asserted = sigma2.regular_by_preset(2);
  if (gamma.kind() == "tabulated") {
    r.warnings.push_back("gamma is tabulated: Hoelder regularity of gamma' is not verified");
  } else if (!r.gamma_regular_asserted) {
    r.warnings.push_back("gamma is not C^1 with Hoelder derivative for this preset");
  }
  if (sigma2.kind() == "tabulated" && !r.sigma2_regular_asserted) {
    r.warnings.push_back("sigma2 is tabulated: C^2 regularity is not verified");
  } else if (!r.sigma2_regular_asserted) {
    r.warnings.push_back("sigma2 is not C^2 with Hoelder second derivative for this preset");
  }

  if (options.n) r.discrete = discrete_stability(model, *options.n);
  return r;
}

ValidationReport require_valid(const MarketModel& model, const ValidationOptions& options) {
  ValidationReport r = validate_model(model, options);
  if (const AssumptionCheck* f = r.first_failure()) {
    throw ValidationError(f->name, f->witness, "assumption " + f->name + " violated: " + f->detail);
  }
  return r;
}

}  // namespace mfatlas
