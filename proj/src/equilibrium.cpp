#include "mfatlas/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include "mfatlas/io.hpp"

namespace mfatlas {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Knot table reaches |z| = 705, i.e. distances to an endpoint of ~1e-306,
// still normal doubles.
constexpr double kLogitMax = 705.0;

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double log_logistic(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

// Breakpoints for integrals over the logit line: unit steps across the core,
// doubling outside.
std::vector<double> logit_breakpoints(double core) {
  std::vector<double> pos;
  for (double z = 1.0; z < core; z += 1.0) pos.push_back(z);
  for (double z = core; z < kLogitMax; z *= 2.0) pos.push_back(z);
  pos.push_back(kLogitMax);
  std::vector<double> out;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) out.push_back(-*it);
  out.push_back(0.0);
  out.insert(out.end(), pos.begin(), pos.end());
  return out;
}

template <class F>
QuadratureResult integrate_pieces(const F& f, const std::vector<double>& bps, double lo, double hi,
                                  const QuadratureSpec& quad) {
  QuadratureResult total;
  QuadratureSpec spec = quad;
  spec.abs_tol = quad.abs_tol / static_cast<double>(bps.size());
  double a = lo;
  auto it = std::upper_bound(bps.begin(), bps.end(), lo);
  while (a < hi) {
    const double b = (it != bps.end() && *it < hi) ? *it++ : hi;
    const auto r = integrate(f, a, b, spec);
    total.value += r.value;
    total.error += r.error;
    total.evaluations += r.evaluations;
    total.subdivisions += r.subdivisions;
    a = b;
  }
  return total;
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Subcritical:
      return "subcritical";
    case Phase::Critical:
      return "critical";
    case Phase::Supercritical:
      return "supercritical";
  }
  return "?";
}

std::string_view to_string(Monotonicity m) {
  switch (m) {
    case Monotonicity::Nondecreasing:
      return "nondecreasing";
    case Monotonicity::Nonincreasing:
      return "nonincreasing";
    case Monotonicity::Constant:
      return "constant";
    case Monotonicity::None:
      return "none";
  }
  return "?";
}

double Bracket::value() const {
  if (!is_point()) throw PhaseError("value at criticality is only bracketed");
  return lo;
}

namespace detail {

struct EquilibriumImpl {
  EquilibriumImpl(const MarketModel& m, const EquilibriumOptions& o) : model(m), opt(o) {}

  MarketModel model;
  EquilibriumOptions opt;
  std::vector<double> z;
  std::vector<double> psi;
  std::optional<MonotoneGridFunction> grid;
  std::vector<double> bps;
  double ybar = 0.0;
  double psi_mean = 0.0;
  double p_c = 0.0;
  double q_c = 0.0;

  mutable std::mutex cache_mutex;
  mutable std::map<double, Zbar> zbar_cache;

  double dpsi(double zz) const {
    const double u = logistic(zz);
    const double ubar = logistic(-zz);
    const double e = size_effect_gap(model, u, ubar);
    return model.sigma2()(u) * u * ubar / (2.0 * e);
  }

  double psi_z(double zz) const {
    if (zz == 0.0) return 0.0;
    if (std::isnan(zz)) throw DomainError("psi: NaN argument");
    auto f = [this](double x) { return dpsi(x); };
    if (zz >= z.back()) return psi.back() + integrate(f, z.back(), zz, opt.quad).value;
    if (zz <= z.front()) return psi.front() - integrate(f, zz, z.front(), opt.quad).value;
    auto it = std::upper_bound(z.begin(), z.end(), zz);
    std::size_t k = static_cast<std::size_t>(it - z.begin());
    if (zz - z[k - 1] < z[k] - zz) --k;
    return psi[k] + integrate(f, z[k], zz, opt.quad).value;
  }

  double psi_u(double u, double ubar) const {
    if (u <= 0.0) return -kInf;
    if (ubar <= 0.0) return kInf;
    return psi_z(std::log(u) - std::log(ubar));
  }

  Phase classify(double p) const {
    if (!(p >= 0.0)) throw DomainError("diversity index p must be >= 0");
    // Pi^0 is the uniform measure whatever p_c is.
    if (p == 0.0) return Phase::Subcritical;
    if (std::abs(p - p_c) <= opt.critical_tol * (1.0 + p_c)) return Phase::Critical;
    return p < p_c ? Phase::Subcritical : Phase::Supercritical;
  }

  // log of exp(p Psi(z)) du/dz
  double log_weight(double p, double zz) const { return p * psi_z(zz) + log_logistic(zz) + log_logistic(-zz); }

  // Integral over (za, zb) of f(u) exp(p Psi) du in logit coordinates, for
  // subcritical p > 0. Infinite ends use the exponential tails of Psi.
  QuadratureResult weighted(double p, const std::function<double(double)>& f, double za, double zb) const {
    const double lo = std::max(za, -kLogitMax);
    const double hi = std::min(zb, kLogitMax);
    QuadratureResult r;
    if (lo < hi) {
      auto integrand = [&](double x) { return f(logistic(x)) * std::exp(log_weight(p, x)); };
      r = integrate_pieces(integrand, bps, lo, hi, opt.quad);
    }
    // Upper tail: Psi(z) ~ Psi(z0) + (z - z0)/p_c and du/dz ~ exp(-z).
    const double z_hi = std::max(zb == kInf ? kLogitMax : zb, kLogitMax);
    if (zb == kInf || zb > kLogitMax) {
      const double tail = f(1.0) * std::exp(p * psi_z(z_hi) - z_hi) / (1.0 - p / p_c);
      r.value += zb == kInf ? tail : 0.0;
    }
    if (za == -kInf) {
      const double z_lo = -kLogitMax;
      r.value += f(0.0) * std::exp(p * psi_z(z_lo) + z_lo) / (1.0 + p / q_c);
    }
    return r;
  }

  std::function<double(double, double)> exp_weight(double p, std::function<double(double)> f) const {
    return [this, p, f = std::move(f)](double u, double ubar) { return f(u) * std::exp(p * psi_u(u, ubar)); };
  }

  Zbar compute_zbar(double p) const {
    const Phase phase = classify(p);
    if (p == 0.0) return {true, 1.0, 0.0, true};
    if (phase == Phase::Subcritical) {
      const auto r = weighted(p, [](double) { return 1.0; }, -kInf, kInf);
      return {true, r.value, r.error, true};
    }
    // Critical or supercritical: decided by the tail-divergence heuristic.
    try {
      const auto r = integrate_singular(exp_weight(p, [](double) { return 1.0; }), 0.0, 1.0);
      if (phase == Phase::Supercritical) return {false, kInf, 0.0, false};
      return {std::isfinite(r.value), r.value, r.error, true};
    } catch (const DivergenceDetected&) {
      return {false, kInf, 0.0, true};
    } catch (const ToleranceNotMet&) {
      return {false, kInf, 0.0, true};
    }
  }

  Zbar zbar(double p) const {
    {
      std::lock_guard<std::mutex> lock(cache_mutex);
      auto it = zbar_cache.find(p);
      if (it != zbar_cache.end()) return it->second;
    }
    const Zbar z = compute_zbar(p);
    std::lock_guard<std::mutex> lock(cache_mutex);
    zbar_cache.emplace(p, z);
    return z;
  }
};

}  // namespace detail

// ---------------------------------------------------------------------------

EquilibriumModel build_equilibrium(const MarketModel& model, const EquilibriumOptions& options) {
  if (options.grid < 17 || options.grid % 2 == 0) throw DomainError("build_equilibrium: grid must be odd and >= 17");
  if (!(options.logit_range > 0.0) || options.logit_range >= kLogitMax) {
    throw DomainError("build_equilibrium: logit_range out of range");
  }
  const ValidationReport report = validate_model(model);
  for (const AssumptionCheck* c : {&report.ue, &report.e1, &report.e2}) {
    if (!c->passed) throw ValidationError(c->name, c->witness, "build_equilibrium: assumption " + c->name + " violated: " + c->detail);
  }

  auto impl = std::make_shared<detail::EquilibriumImpl>(model, options);
  impl->p_c = model.p_c();
  impl->q_c = model.q_c();

  // Uniform knots on [-Z, Z] (z = 0 is the middle knot), then geometrically
  // widening knots out to kLogitMax.
  const double Z = options.logit_range;
  const std::size_t n = options.grid;
  const double h = 2.0 * Z / static_cast<double>(n - 1);
  std::vector<double> pos;
  for (std::size_t k = (n - 1) / 2; k < n; ++k) pos.push_back(k + 1 == n ? Z : -Z + static_cast<double>(k) * h);
  pos.front() = 0.0;
  for (double step = h, zz = Z; zz < kLogitMax;) {
    step *= 1.1;
    zz = std::min(zz + step, kLogitMax);
    pos.push_back(zz);
  }
  auto& z = impl->z;
  for (auto it = pos.rbegin(); it != pos.rend() - 1; ++it) z.push_back(-*it);
  z.insert(z.end(), pos.begin(), pos.end());
  const std::size_t mid = pos.size() - 1;

  auto f = [&](double x) { return impl->dpsi(x); };
  auto& psi = impl->psi;
  psi.assign(z.size(), 0.0);
  for (std::size_t k = mid + 1; k < z.size(); ++k) psi[k] = psi[k - 1] + integrate(f, z[k - 1], z[k], options.quad).value;
  for (std::size_t k = mid; k-- > 0;) psi[k] = psi[k + 1] - integrate(f, z[k], z[k + 1], options.quad).value;
  for (std::size_t k = 1; k < psi.size(); ++k) {
    if (!(psi[k] > psi[k - 1]) || !std::isfinite(psi[k])) {
      throw NumericalBlowup("build_equilibrium: Psi is not finite and strictly increasing on the knot table");
    }
  }
  impl->grid.emplace(Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size())),
                     Eigen::Map<const Eigen::VectorXd>(psi.data(), static_cast<Eigen::Index>(psi.size())));
  impl->bps = logit_breakpoints(Z);

  // Integral of Psi by parts: int_{1/2}^1 (1-u) Psi' du - int_0^{1/2} u Psi' du,
  // in logit form (1-u) Psi' du = ubar dPsi/dz dz.
  auto by_parts = [&](double x) { return (x >= 0.0 ? logistic(-x) : -logistic(x)) * impl->dpsi(x); };
  impl->psi_mean = integrate_pieces(by_parts, impl->bps, -kLogitMax, kLogitMax, options.quad).value;
  impl->ybar = impl->psi_mean - model.m().mean();
  return EquilibriumModel(std::move(impl));
}

const MarketModel& EquilibriumModel::model() const { return impl_->model; }
const MonotoneGridFunction& EquilibriumModel::psi_grid() const { return *impl_->grid; }
double EquilibriumModel::ybar() const { return impl_->ybar; }
double EquilibriumModel::psi_mean() const { return impl_->psi_mean; }
double EquilibriumModel::p_c() const { return impl_->p_c; }
double EquilibriumModel::q_c() const { return impl_->q_c; }
const EquilibriumOptions& EquilibriumModel::options() const { return impl_->opt; }

double EquilibriumModel::psi(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("psi: u outside [0,1]");
  return impl_->psi_u(u, 1.0 - u);
}

double EquilibriumModel::psi(double u, double ubar) const {
  if (!(u >= 0.0 && u <= 1.0) || !(ubar >= 0.0 && ubar <= 1.0)) throw DomainError("psi: u outside [0,1]");
  return impl_->psi_u(u, ubar);
}

double EquilibriumModel::psi_logit(double z) const { return impl_->psi_z(z); }
double EquilibriumModel::psi_logit_derivative(double z) const { return impl_->dpsi(z); }

double EquilibriumModel::psi_inverse_logit(double y) const {
  if (std::isnan(y)) throw DomainError("psi_inverse: NaN argument");
  if (y == 0.0) return 0.0;
  const auto& z = impl_->z;
  const auto& psi = impl_->psi;
  constexpr double kCap = 800.0;
  double lo;
  double hi;
  if (y <= psi.front()) {
    hi = z.front();
    lo = hi;
    double step = 1.0;
    while (impl_->psi_z(lo) > y) {
      hi = lo;
      lo -= step;
      step *= 2.0;
      if (lo < -kCap) return -kInf;
    }
  } else if (y >= psi.back()) {
    lo = z.back();
    hi = lo;
    double step = 1.0;
    while (impl_->psi_z(hi) < y) {
      lo = hi;
      hi += step;
      step *= 2.0;
      if (hi > kCap) return kInf;
    }
  } else {
    const auto it = std::upper_bound(psi.begin(), psi.end(), y);
    const std::size_t k = static_cast<std::size_t>(it - psi.begin());
    lo = z[k - 1];
    hi = z[k];
  }
  // Safeguarded Newton on [lo, hi].
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double fx = impl_->psi_z(x) - y;
    if (fx == 0.0) return x;
    (fx < 0.0 ? lo : hi) = x;
    double next = x - fx / impl_->dpsi(x);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * (1.0 + std::abs(x)) || hi - lo <= 1e-15 * (1.0 + std::abs(x))) return next;
    x = next;
  }
  return x;
}

double EquilibriumModel::psi_inverse(double y) const { return logistic(psi_inverse_logit(y)); }

double EquilibriumModel::quantile(double u) const { return psi(u) - impl_->ybar; }

double EquilibriumModel::cdf(double y) const { return psi_inverse(y + impl_->ybar); }

Phase EquilibriumModel::classify(double p) const { return impl_->classify(p); }

Zbar EquilibriumModel::zbar(double p) const { return impl_->zbar(p); }

LongTermCapitalMeasure EquilibriumModel::long_term_measure(double p) const {
  const Phase phase = impl_->classify(p);
  return LongTermCapitalMeasure(impl_, p, phase, impl_->zbar(p));
}

// ---------------------------------------------------------------------------

LongTermCapitalMeasure::LongTermCapitalMeasure(std::shared_ptr<const detail::EquilibriumImpl> impl, double p,
                                               Phase phase, Zbar z)
    : impl_(std::move(impl)), p_(p), phase_(phase), zbar_(z) {}

bool LongTermCapitalMeasure::has_density() const {
  return phase_ == Phase::Subcritical || (phase_ == Phase::Critical && zbar_.finite);
}

double LongTermCapitalMeasure::log_density(double u, double ubar) const {
  if (!has_density()) throw PhaseError("long-term measure is the point mass at 1 and has no density");
  if (p_ == 0.0) return 0.0;
  return p_ * impl_->psi_u(u, ubar) - std::log(zbar_.value);
}

double LongTermCapitalMeasure::density(double u, double ubar) const {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("density: u outside [0,1]");
  return std::exp(log_density(u, ubar));
}

double LongTermCapitalMeasure::density(double u) const { return density(u, 1.0 - u); }

double LongTermCapitalMeasure::cdf(double u) const {
  if (!has_density()) throw PhaseError("long-term measure is the point mass at 1 and has no density");
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("cdf: u outside [0,1]");
  if (u == 0.0) return 0.0;
  if (u == 1.0) return 1.0;
  if (p_ == 0.0) return u;
  const double z = std::log(u) - std::log1p(-u);
  auto one = [](double) { return 1.0; };
  if (phase_ == Phase::Critical) {
    auto w = impl_->exp_weight(p_, one);
    return integrate_singular([&](double a, double abar) { return a <= u ? w(a, abar) : 0.0; }, 0.0, 1.0).value /
           zbar_.value;
  }
  if (z <= 0.0) return impl_->weighted(p_, one, -kInf, z).value / zbar_.value;
  return 1.0 - impl_->weighted(p_, one, z, kInf).value / zbar_.value;
}

namespace {

// For a critical measure with finite Z-bar: (f(1), <f, Pi-bar^{p_c}>).
std::pair<double, double> critical_ends(const LongTermCapitalMeasure& meas, const detail::EquilibriumImpl& impl,
                                        const std::function<double(double)>& f) {
  const auto r = integrate_singular(impl.exp_weight(meas.p(), f), 0.0, 1.0);
  return {f(1.0), r.value / meas.zbar().value};
}

}  // namespace

Bracket measure_integral(const LongTermCapitalMeasure& meas, const std::function<double(double)>& f) {
  const auto& impl = *meas.impl_for_integrals();
  switch (meas.phase()) {
    case Phase::Supercritical:
      return Bracket::point(f(1.0));
    case Phase::Critical: {
      if (!meas.zbar().finite) return Bracket::point(f(1.0));
      const auto [a, b] = critical_ends(meas, impl, f);
      return Bracket::between(a, b);
    }
    case Phase::Subcritical:
      break;
  }
  if (meas.p() == 0.0) {
    const auto r = integrate(f, 0.0, 1.0, impl.opt.quad);
    return Bracket::point(r.value, r.error);
  }
  const auto r = impl.weighted(meas.p(), f, -kInf, kInf);
  return Bracket::point(r.value / meas.zbar().value, r.error / meas.zbar().value);
}

double capital_density(const EquilibriumModel& eq, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("capital_density: u outside [0,1]");
  if (eq.classify(1.0) != Phase::Subcritical) {
    throw PhaseError("capital density requires p_c > 1; for p_c <= 1 capital concentrates at relative rank 0");
  }
  return std::exp(eq.psi(1.0 - u, u) - std::log(eq.zbar(1.0).value));
}

std::vector<CapitalCurvePoint> capital_curve(const EquilibriumModel& eq, const std::vector<double>& us) {
  if (eq.classify(1.0) != Phase::Subcritical) {
    throw PhaseError("capital density requires p_c > 1; for p_c <= 1 capital concentrates at relative rank 0");
  }
  const double log_z = std::log(eq.zbar(1.0).value);
  std::vector<CapitalCurvePoint> out;
  out.reserve(us.size());
  for (double u : us) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("capital_curve: u must lie in (0,1)");
    const double log_mu = eq.psi(1.0 - u, u) - log_z;
    out.push_back({u, std::exp(log_mu), std::log(u), log_mu});
  }
  return out;
}

namespace {

struct GrowthEnds {
  Phase phase;
  // (G, G*) at the delta_1 end and at the density end; equal off criticality.
  double g_a, gs_a, g_b, gs_b;
};

GrowthEnds growth_ends(const EquilibriumModel& eq, double p) {
  const auto meas = eq.long_term_measure(p);
  const auto& model = eq.model();
  auto b = [&](double u) { return rate_of_return(model, u); };
  auto half_s2 = [&](double u) { return 0.5 * model.sigma2()(u); };
  if (meas.phase() == Phase::Critical && meas.zbar().finite) {
    const auto& impl = *meas.impl_for_integrals();
    const auto [ga, gb] = critical_ends(meas, impl, b);
    const auto [sa, sb] = critical_ends(meas, impl, half_s2);
    return {meas.phase(), ga, sa, gb, sb};
  }
  const double g = measure_integral(meas, b).value();
  const double gs = measure_integral(meas, half_s2).value();
  return {meas.phase(), g, gs, g, gs};
}

}  // namespace

GrowthRates growth_rates(const EquilibriumModel& eq, double p) {
  const GrowthEnds e = growth_ends(eq, p);
  return {p, e.phase, Bracket::between(e.g_a, e.g_b), Bracket::between(e.gs_a, e.gs_b)};
}

double reduction_check(const EquilibriumModel& eq, double p) {
  const GrowthEnds e = growth_ends(eq, p);
  const double factor = 1.0 - std::min(p, eq.p_c());
  const double g = eq.model().g();
  return std::max(std::abs(e.g_a - (factor * e.gs_a + g)), std::abs(e.g_b - (factor * e.gs_b + g)));
}

namespace {

Monotonicity shape_of(const std::function<double(double)>& f) {
  const Eigen::VectorXd grid = chebyshev_grid(4097);
  double scale = 0.0;
  std::vector<double> v(static_cast<std::size_t>(grid.size()));
  for (Eigen::Index k = 0; k < grid.size(); ++k) {
    v[static_cast<std::size_t>(k)] = f(grid[k]);
    scale = std::max(scale, std::abs(v[static_cast<std::size_t>(k)]));
  }
  const double tol = 1e-12 * std::max(scale, 1.0);
  bool up = true;
  bool down = true;
  for (std::size_t k = 1; k < v.size(); ++k) {
    up = up && v[k] >= v[k - 1] - tol;
    down = down && v[k] <= v[k - 1] + tol;
  }
  if (up && down) return Monotonicity::Constant;
  if (up) return Monotonicity::Nondecreasing;
  if (down) return Monotonicity::Nonincreasing;
  return Monotonicity::None;
}

void check_direction(Monotonicity shape, double p0, double p1, double a, double b,
                     std::vector<std::pair<double, double>>& out) {
  constexpr double tol = 1e-9;
  const bool bad = (shape == Monotonicity::Nondecreasing && b < a - tol) ||
                   (shape == Monotonicity::Nonincreasing && b > a + tol) ||
                   (shape == Monotonicity::Constant && std::abs(b - a) > tol);
  if (bad) out.emplace_back(p0, p1);
}

}  // namespace

MonotonicityReport monotonicity_report(const EquilibriumModel& eq, const std::vector<double>& ps) {
  if (!std::is_sorted(ps.begin(), ps.end())) throw DomainError("monotonicity_report: p-grid must be increasing");
  const auto& model = eq.model();
  MonotonicityReport r;
  r.b_shape = shape_of([&](double u) { return rate_of_return(model, u); });
  r.sigma2_shape = shape_of([&](double u) { return model.sigma2()(u); });
  double best = -kInf;
  for (double p : ps) {
    r.rows.push_back(growth_rates(eq, p));
    if (r.rows.back().G.mid() > best) {
      best = r.rows.back().G.mid();
      r.argmax_p = p;
    }
  }
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    const auto& a = r.rows[k - 1];
    const auto& b = r.rows[k];
    check_direction(r.b_shape, a.p, b.p, a.G.mid(), b.G.mid(), r.g_violations);
    check_direction(r.sigma2_shape, a.p, b.p, a.Gstar.mid(), b.Gstar.mid(), r.gstar_violations);
  }
  return r;
}

// ---------------------------------------------------------------------------

void write_psi_csv(const EquilibriumModel& eq, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"u", "psi"});
  const auto& g = eq.psi_grid();
  double prev = -1.0;
  for (Eigen::Index k = 0; k < g.size(); ++k) {
    const double u = logistic(g.xs()[k]);
    if (!(u > prev) || u <= 0.0 || u >= 1.0) continue;
    csv.row({u, g.ys()[k]});
    prev = u;
  }
  csv.close();
}

void write_pibar_csv(const EquilibriumModel& eq, const std::vector<double>& ps, const std::vector<double>& us,
                     const std::filesystem::path& path) {
  std::vector<std::string> header{"u"};
  std::vector<LongTermCapitalMeasure> measures;
  for (double p : ps) {
    header.push_back("p=" + io::format_double(p));
    measures.push_back(eq.long_term_measure(p));
  }
  io::CsvWriter csv(path, header);
  for (double u : us) {
    std::vector<io::CsvCell> row{u};
    for (const auto& m : measures) row.push_back(m.has_density() ? io::CsvCell(m.density(u)) : io::CsvCell::empty());
    csv.row(row);
  }
  csv.close();
}

void write_capital_curve_csv(const std::vector<CapitalCurvePoint>& curve, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"u", "mu_bar", "log_u", "log_mu"});
  for (const auto& c : curve) csv.row({c.u, c.mu_bar, c.log_u, c.log_mu});
  csv.close();
}

void write_growth_csv(const EquilibriumModel& eq, const std::vector<double>& ps, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"p", "phase", "G", "Gstar", "reduction_residual", "G_hi", "Gstar_hi"});
  for (double p : ps) {
    const auto gr = growth_rates(eq, p);
    csv.row({p, std::string(to_string(gr.phase)), gr.G.lo, gr.Gstar.lo, reduction_check(eq, p), gr.G.hi,
             gr.Gstar.hi});
  }
  csv.close();
}

}  // namespace mfatlas
