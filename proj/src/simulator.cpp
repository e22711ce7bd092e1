#include "mfatlas/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mfatlas/errors.hpp"
#include "mfatlas/io.hpp"

namespace mfatlas {

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::EulerRankFrozen:
      return "EulerRankFrozen";
  }
  return "?";
}

NormalStream::NormalStream(std::uint64_t seed) : engine_(seed) {}

double NormalStream::uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

double NormalStream::operator()() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double r = std::sqrt(-2.0 * std::log(uniform()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void NormalStream::fill(Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = (*this)();
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::size_t steps_to(double t, double dt) {
  const double k = std::round(t / dt);
  if (!(k >= 0.0) || std::abs(k * dt - t) > 1e-12 * std::max(1.0, std::abs(t))) {
    throw ConfigError("time " + io::format_double(t) + " is not a multiple of dt = " + io::format_double(dt));
  }
  return static_cast<std::size_t>(k);
}

void validate(const SimConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("sim.n must be >= 1");
  if (cfg.n > 0xFFFFFFFFull) throw ConfigError("sim.n too large");
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) throw ConfigError("sim.dt must be positive");
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) throw ConfigError("sim.t_end must be >= 0");
  steps_to(cfg.t_end, cfg.dt);
  double prev = -1.0;
  for (double t : cfg.snapshot_times) {
    if (!(t > prev)) throw ConfigError("sim.snapshot_times must be strictly increasing");
    if (t < 0.0 || t > cfg.t_end * (1.0 + 1e-12)) throw ConfigError("sim.snapshot_times must lie in [0, t_end]");
    steps_to(t, cfg.dt);
    prev = t;
  }
}

Eigen::VectorXd sample_initial(const InitialDistribution& m, std::size_t n, std::uint64_t seed,
                               const EquilibriumModel* eq) {
  NormalStream rng(seed);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
          if constexpr (std::is_same_v<T, init::Gaussian>) {
            y[i] = s.mean + s.sd * rng();
          } else if constexpr (std::is_same_v<T, init::Uniform>) {
            y[i] = s.lo + (s.hi - s.lo) * rng.uniform();
          } else if constexpr (std::is_same_v<T, init::ShiftedExponential>) {
            y[i] = s.shift - s.sign * std::log(rng.uniform()) / s.rate;
          } else if constexpr (std::is_same_v<T, init::Equilibrium>) {
            if (eq == nullptr) throw ConfigError("equilibrium initial law needs a built equilibrium model");
            const double u = rng.uniform();
            // quantile of the equilibrium law re-centred at the preset mean
            y[i] = eq->psi(u, 1.0 - u) - eq->psi_mean() + s.mean;
          } else {
            const double u = rng.uniform();
            const auto k = std::upper_bound(s.u.data(), s.u.data() + s.u.size(), u) - s.u.data();
            const auto hi = std::clamp<Eigen::Index>(k, 1, s.u.size() - 1);
            const double w = (u - s.u[hi - 1]) / (s.u[hi] - s.u[hi - 1]);
            y[i] = s.y[hi - 1] + w * (s.y[hi] - s.y[hi - 1]);
          }
        }
      },
      m.spec());
  return y;
}

// ---------------------------------------------------------------------------

ParticleEnsemble::ParticleEnsemble(const MarketModel& model, Eigen::VectorXd y0, std::uint64_t noise_seed, double t0)
    : y_(std::move(y0)), rng_(noise_seed), t_(t0) {
  const Eigen::Index n = y_.size();
  if (n < 1) throw ConfigError("ensemble needs at least one particle");
  if (!y_.allFinite()) throw NumericalBlowup("initial state is not finite");
  gamma_rank_.resize(n);
  sigma_rank_.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double u = static_cast<double>(j + 1) / static_cast<double>(n);
    gamma_rank_[j] = model.gamma()(u);
    const double s2 = model.sigma2()(u);
    if (s2 < 0.0) throw DomainError("sigma2 is negative at a rank level");
    sigma_rank_[j] = std::sqrt(s2);
  }
  noise_ = Eigen::VectorXd::Zero(n);
  keys_.resize(static_cast<std::size_t>(n));
  order_.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) keys_[static_cast<std::size_t>(i)] = {y_[i], static_cast<std::uint32_t>(i)};
  sort_ranks();
}

void ParticleEnsemble::sort_ranks() {
  std::sort(keys_.begin(), keys_.end(), [](const Key& a, const Key& b) { return a.y < b.y || (a.y == b.y && a.id < b.id); });
  for (std::size_t j = 0; j < keys_.size(); ++j) order_[j] = keys_[j].id;
}

Eigen::VectorXd ParticleEnsemble::sorted() const {
  Eigen::VectorXd s(y_.size());
  for (std::size_t j = 0; j < keys_.size(); ++j) s[static_cast<Eigen::Index>(j)] = keys_[j].y;
  return s;
}

void ParticleEnsemble::step(double dt) {
  if (!(dt > 0.0)) throw DomainError("step: dt must be positive");
  rng_.fill(noise_);
  const double sq = std::sqrt(dt);
  bool bad = false;
  for (std::size_t j = 0; j < keys_.size(); ++j) {
    const auto id = static_cast<Eigen::Index>(keys_[j].id);
    const auto r = static_cast<Eigen::Index>(j);
    double& v = y_[id];
    v += gamma_rank_[r] * dt + sigma_rank_[r] * sq * noise_[id];
    bad = bad || !(std::abs(v) <= 1e300);
    keys_[j].y = v;
  }
  ++steps_;
  t_ += dt;
  if (bad) throw NumericalBlowup("step: state left [-1e300, 1e300] at t = " + io::format_double(t_));
  sort_ranks();
}

ParticleEnsemble step(ParticleEnsemble ens, double dt) {
  ens.step(dt);
  return ens;
}

const Snapshot& SnapshotSet::at(double t) const {
  for (const auto& s : snapshots) {
    if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, std::abs(t))) return s;
  }
  throw DomainError("no snapshot at t = " + io::format_double(t));
}

ParticleEnsemble initial_ensemble(const SimConfig& cfg, const MarketModel& model, const EquilibriumModel* eq) {
  validate(cfg);
  return ParticleEnsemble(model, sample_initial(model.m(), cfg.n, derive_seed(cfg.seed, 0), eq),
                          derive_seed(cfg.seed, 1));
}

SnapshotSet run(const SimConfig& cfg, const MarketModel& model, const EquilibriumModel* eq,
                const std::vector<StepObserver*>& observers) {
  ParticleEnsemble ens = initial_ensemble(cfg, model, eq);
  return run(ens, cfg, observers);
}

SnapshotSet run(ParticleEnsemble& ens, const SimConfig& cfg, const std::vector<StepObserver*>& observers) {
  validate(cfg);
  const std::size_t total = steps_to(cfg.t_end, cfg.dt);
  std::vector<double> times = cfg.snapshot_times.empty() ? std::vector<double>{cfg.t_end} : cfg.snapshot_times;
  std::vector<std::size_t> at;
  for (double t : times) at.push_back(steps_to(t, cfg.dt));

  SnapshotSet out;
  out.n = ens.n();
  std::size_t next = 0;
  auto take = [&](std::size_t k) {
    while (next < at.size() && at[next] == k) {
      out.snapshots.push_back({times[next], ens.sorted(), ens.order()});
      ++next;
    }
  };
  for (auto* o : observers) o->start(ens);
  take(0);
  for (std::size_t k = 1; k <= total; ++k) {
    for (auto* o : observers) o->before_step(ens, cfg.dt);
    ens.step(cfg.dt);
    out.normal_draws += ens.n();
    for (auto* o : observers) o->after_step(ens, cfg.dt);
    take(k);
  }
  return out;
}

SnapshotSet fluctuations(SnapshotSet snaps, double g) {
  for (auto& s : snaps.snapshots) s.sorted.array() -= g * s.t;
  return snaps;
}

void write_snapshots_csv(const SnapshotSet& snaps, const std::filesystem::path& path) {
  io::CsvWriter csv(path, {"t", "rank", "u", "y_sorted"});
  const double n = static_cast<double>(snaps.n);
  for (const auto& s : snaps.snapshots) {
    for (Eigen::Index j = 0; j < s.sorted.size(); ++j) {
      csv.row({s.t, static_cast<std::int64_t>(j + 1), static_cast<double>(j + 1) / n, s.sorted[j]});
    }
  }
  csv.close();
}

}  // namespace mfatlas
