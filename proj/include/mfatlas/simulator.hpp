#pragma once

// Finite-n rank-based particle system with mean-field coefficients:
//   dY^i = gamma(rank_i / n) dt + sigma(rank_i / n) dB^i,
// discretised by Euler steps with ranks frozen over each step.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string_view>
#include <vector>

#include "mfatlas/coefficients.hpp"
#include "mfatlas/equilibrium.hpp"

namespace mfatlas {

enum class Scheme { EulerRankFrozen };
std::string_view to_string(Scheme s);

/// Name and version of the random stream, pinned in run manifests.
inline constexpr std::string_view kRngName = "mt19937_64+box-muller/v1";

/// Standard normals from mt19937_64 by the Box-Muller transform.
/// Written out rather than std::normal_distribution, whose output is
/// implementation-defined.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed);
  double operator()();
  /// Uniform on (0, 1), never 0 or 1.
  double uniform();
  void fill(Eigen::Ref<Eigen::VectorXd> out);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Independent stream seeds derived from a run seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SimConfig {
  std::size_t n = 1000;
  double dt = 1e-3;
  double t_end = 10.0;
  std::uint64_t seed = 0;
  /// Empty means {t_end}.
  std::vector<double> snapshot_times;
  Scheme scheme = Scheme::EulerRankFrozen;
};

/// ConfigError unless n >= 1, dt > 0, t_end >= 0 and every snapshot time is
/// an increasing multiple of dt in [0, t_end].
void validate(const SimConfig& cfg);
/// Number of Euler steps to reach t, ConfigError if t is not on the dt grid.
std::size_t steps_to(double t, double dt);

/// n i.i.d. draws from m. The equilibrium preset needs `eq`.
Eigen::VectorXd sample_initial(const InitialDistribution& m, std::size_t n, std::uint64_t seed,
                               const EquilibriumModel* eq = nullptr);

class ParticleEnsemble {
 public:
  /// `y0` in identity order; `noise_seed` seeds the Brownian increments.
  ParticleEnsemble(const MarketModel& model, Eigen::VectorXd y0, std::uint64_t noise_seed, double t0 = 0.0);

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  double t() const { return t_; }
  std::uint64_t steps() const { return steps_; }
  /// Log-capitalisations by particle identity.
  const Eigen::VectorXd& y() const { return y_; }
  /// Identities in increasing rank order (ties broken by identity).
  const std::vector<std::uint32_t>& order() const { return order_; }
  /// Y^(1) <= ... <= Y^(n).
  Eigen::VectorXd sorted() const;
  /// gamma(j/n) and sigma(j/n) for ranks j = 1..n (index j - 1).
  const Eigen::VectorXd& gamma_by_rank() const { return gamma_rank_; }
  const Eigen::VectorXd& sigma_by_rank() const { return sigma_rank_; }
  /// Standard normals used by the last step, by identity.
  const Eigen::VectorXd& last_noise() const { return noise_; }

  /// One EulerRankFrozen step. NumericalBlowup if a coordinate leaves
  /// [-1e300, 1e300] or turns non-finite.
  void step(double dt);

 private:
  void sort_ranks();

  Eigen::VectorXd y_;
  Eigen::VectorXd gamma_rank_;
  Eigen::VectorXd sigma_rank_;
  Eigen::VectorXd noise_;
  std::vector<std::uint32_t> order_;
  struct Key {
    double y;
    std::uint32_t id;
  };
  std::vector<Key> keys_;
  NormalStream rng_;
  double t_;
  std::uint64_t steps_ = 0;
};

/// Functional form: returns the stepped copy.
ParticleEnsemble step(ParticleEnsemble ens, double dt);

struct Snapshot {
  double t = 0.0;
  Eigen::VectorXd sorted;
  /// order[j] = identity of the particle of rank j + 1.
  std::vector<std::uint32_t> order;
};

struct SnapshotSet {
  std::vector<Snapshot> snapshots;
  std::size_t n = 0;
  /// Normal draws consumed by the dynamics (n per step).
  std::uint64_t normal_draws = 0;

  const Snapshot& at(double t) const;
};

/// Hook into a running simulation. before_step sees the state the step is
/// frozen on; after_step sees the new state and last_noise().
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void start(const ParticleEnsemble&) {}
  virtual void before_step(const ParticleEnsemble&, double /*dt*/) {}
  virtual void after_step(const ParticleEnsemble&, double /*dt*/) {}
};

/// Ensemble at t = 0 for a run: initial sample from seed stream 0, noise
/// from stream 1.
ParticleEnsemble initial_ensemble(const SimConfig& cfg, const MarketModel& model, const EquilibriumModel* eq = nullptr);

SnapshotSet run(const SimConfig& cfg, const MarketModel& model, const EquilibriumModel* eq = nullptr,
                const std::vector<StepObserver*>& observers = {});
/// Continues `ens` to cfg.t_end, taking snapshots at cfg.snapshot_times.
SnapshotSet run(ParticleEnsemble& ens, const SimConfig& cfg, const std::vector<StepObserver*>& observers = {});

/// Shifts every state by -g t.
SnapshotSet fluctuations(SnapshotSet snaps, double g);

/// t,rank,u,y_sorted
void write_snapshots_csv(const SnapshotSet& snaps, const std::filesystem::path& path);

}  // namespace mfatlas
