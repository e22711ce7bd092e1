#pragma once

// Persisted studies. Each writes <out>/<name>/manifest.json first, then its
// CSVs and summary.json, and reports a list of PASS/FAIL checks.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mfatlas/coefficients.hpp"
#include "mfatlas/equilibrium.hpp"
#include "mfatlas/simulator.hpp"

namespace mfatlas {

enum class ExperimentKind { ChaosConvergence, PhaseScan, CapitalCurve, PortfolioRace, MeanDrift, InterversionProbe };
std::string_view to_string(ExperimentKind k);
/// Accepts the to_string names; DomainError otherwise.
ExperimentKind experiment_kind_from(std::string_view name);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::PhaseScan;
  std::vector<double> p_grid{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0};
  /// Particle counts for the chaos study; other studies use sim.n.
  std::vector<std::size_t> n_grid{200, 2000};
  /// Replica r runs with seed sim.seed + r.
  std::size_t replicas = 10;
  /// Snapshot times for the chaos study.
  std::vector<double> times{0.5, 10.0};
  /// Time-averaging window; default is the second half of the horizon.
  double window_lo = 5.0;
  double window_hi = 10.0;
  /// Portfolio / trace recording stride in Euler steps.
  std::size_t record_every = 10;
  /// Subcritical tolerance for <id, Pi^p> (phase scan, interversion).
  double tolerance = 0.02;
  /// Agreement between simulated and closed-form values in the interversion probe.
  double interversion_tol = 0.03;
  /// Supercritical threshold for <id, Pi^p> at t_end.
  double supercritical_level = 0.9;
  /// Relative-rank ranges for slope fits and the curve comparison.
  double fit_lo = 1e-3;
  double fit_hi = 1e-1;
  double closed_fit_lo = 1e-4;
  double closed_fit_hi = 1e-2;
  double compare_lo = 0.05;
  double compare_hi = 0.95;
  double slope_tol_closed = 0.02;
  double slope_tol_empirical = 0.05;
  double curve_tol = 0.05;
  /// Stationary W1 band for the chaos study (0 disables the check).
  double w1_band = 0.0;
  /// Interversion probe for non-constant sigma2.
  bool exploratory = false;
};

struct Config {
  MarketModel model;
  SimConfig sim;
  EquilibriumOptions equilibrium;
  ExperimentSpec experiment;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  std::string name;
  std::vector<CheckResult> checks;
  nlohmann::json summary;
  std::filesystem::path dir;
  bool passed() const;
};

/// Worker count: explicit value if nonzero, else MFATLAS_THREADS, else the
/// hardware concurrency.
unsigned resolve_threads(unsigned requested);

/// Runs f(0..count-1) on up to `threads` workers. The first exception is
/// rethrown after all workers stop.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& f);

/// Mean, standard error and a two-sided Student-t confidence interval.
struct SampleStats {
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};
SampleStats sample_stats(const std::vector<double>& xs, double level = 0.95);
double median(std::vector<double> xs);

ExperimentResult chaos_convergence(const Config& cfg, const std::filesystem::path& out, unsigned threads);
ExperimentResult phase_scan(const Config& cfg, const std::filesystem::path& out, unsigned threads);
ExperimentResult capital_curve_experiment(const Config& cfg, const std::filesystem::path& out, unsigned threads);
ExperimentResult portfolio_race(const Config& cfg, const std::filesystem::path& out, unsigned threads);
ExperimentResult mean_drift(const Config& cfg, const std::filesystem::path& out, unsigned threads);
ExperimentResult interversion_probe(const Config& cfg, const std::filesystem::path& out, unsigned threads);

/// Dispatch on cfg.experiment.kind.
ExperimentResult run_experiment(const Config& cfg, const std::filesystem::path& out, unsigned threads);

}  // namespace mfatlas
