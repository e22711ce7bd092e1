#include "mfatlas/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "mfatlas/config.hpp"
#include "mfatlas/errors.hpp"
#include "mfatlas/io.hpp"
#include "mfatlas/measures.hpp"

namespace mfatlas {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::ChaosConvergence:
      return "chaos";
    case ExperimentKind::PhaseScan:
      return "phase_scan";
    case ExperimentKind::CapitalCurve:
      return "capital_curve";
    case ExperimentKind::PortfolioRace:
      return "portfolio_race";
    case ExperimentKind::MeanDrift:
      return "mean_drift";
    case ExperimentKind::InterversionProbe:
      return "interversion";
  }
  return "?";
}

ExperimentKind experiment_kind_from(std::string_view name) {
  for (auto k : {ExperimentKind::ChaosConvergence, ExperimentKind::PhaseScan, ExperimentKind::CapitalCurve,
                 ExperimentKind::PortfolioRace, ExperimentKind::MeanDrift, ExperimentKind::InterversionProbe}) {
    if (to_string(k) == name) return k;
  }
  throw DomainError("unknown experiment kind '" + std::string(name) + "'");
}

bool ExperimentResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MFATLAS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& f) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (!stop) {
      const std::size_t i = next++;
      if (i >= count) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        stop = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

SampleStats sample_stats(const std::vector<double>& xs, double level) {
  SampleStats s;
  s.count = xs.size();
  if (xs.empty()) throw InsufficientData("sample_stats: no samples");
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) {
    s.ci_lo = s.ci_hi = s.mean;
    return s;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  s.se = s.sd / std::sqrt(static_cast<double>(xs.size()));
  const boost::math::students_t dist(static_cast<double>(xs.size() - 1));
  const double tq = boost::math::quantile(boost::math::complement(dist, 0.5 * (1.0 - level)));
  s.ci_lo = s.mean - tq * s.se;
  s.ci_hi = s.mean + tq * s.se;
  return s;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw InsufficientData("median: no samples");
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

namespace {

std::string fmt(double x) { return io::format_double(x); }

std::string fmt_short(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// Common run scaffolding: manifest first, summary and checksums last.
class Study {
 public:
  Study(const Config& cfg, const fs::path& out, std::string name)
      : cfg_(cfg), manifest_(out / name, name, config_to_json(cfg)) {
    result_.name = std::move(name);
    result_.dir = manifest_.dir();
    manifest_.set("rng", std::string(kRngName));
    manifest_.set("scheme", std::string(to_string(cfg.sim.scheme)));
  }

  fs::path file(const std::string& name) { return manifest_.file(name); }
  void check(std::string name, bool passed, std::string detail) {
    result_.checks.push_back({std::move(name), passed, std::move(detail)});
  }
  json& summary() { return result_.summary; }

  template <class F>
  ExperimentResult guard(F&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      manifest_.abort(e.what());
      throw;
    }
    json checks = json::array();
    for (const auto& c : result_.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    result_.summary["experiment"] = result_.name;
    result_.summary["checks"] = checks;
    result_.summary["passed"] = result_.passed();
    io::write_json(file("summary.json"), result_.summary);
    manifest_.finish(result_.passed());
    return result_;
  }

 private:
  const Config& cfg_;
  io::RunManifest manifest_;
  ExperimentResult result_;
};

std::uint64_t replica_seed(const Config& cfg, std::size_t r) { return cfg.sim.seed + r; }

bool needs_equilibrium_sampler(const MarketModel& m) {
  return std::holds_alternative<init::Equilibrium>(m.m().spec());
}

// <id, Pi^p_n(t)> for several p, recorded every `every` steps.
class IdentityTrace : public StepObserver {
 public:
  IdentityTrace(std::vector<double> ps, std::size_t every) : ps_(std::move(ps)), every_(every) {}
  void start(const ParticleEnsemble& ens) override {
    values.assign(ps_.size(), {});
    record(ens);
  }
  void after_step(const ParticleEnsemble& ens, double) override {
    if (ens.steps() % every_ == 0) record(ens);
  }
  std::vector<double> times;
  std::vector<std::vector<double>> values;  // [p][time]

 private:
  void record(const ParticleEnsemble& ens) {
    times.push_back(ens.t());
    const Eigen::VectorXd sorted = ens.sorted();
    const double n = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < ps_.size(); ++i) {
      const Eigen::VectorXd w = softmax_weights(sorted, ps_[i]);
      const Eigen::VectorXd u = Eigen::VectorXd::LinSpaced(sorted.size(), 1.0, n) / n;
      values[i].push_back(w.dot(u));
    }
  }
  std::vector<double> ps_;
  std::size_t every_;
};

struct TraceSet {
  std::vector<double> times;
  std::vector<std::vector<std::vector<double>>> per_replica;  // [replica][p][time]
};

TraceSet run_traces(const Config& cfg, const EquilibriumModel* eq, unsigned threads) {
  const auto& x = cfg.experiment;
  TraceSet ts;
  ts.per_replica.resize(x.replicas);
  std::vector<std::vector<double>> times(x.replicas);
  parallel_for(x.replicas, threads, [&](std::size_t r) {
    SimConfig sim = cfg.sim;
    sim.seed = replica_seed(cfg, r);
    sim.snapshot_times = {};
    IdentityTrace trace(x.p_grid, x.record_every);
    run(sim, cfg.model, eq, {&trace});
    ts.per_replica[r] = std::move(trace.values);
    times[r] = std::move(trace.times);
  });
  ts.times = times.front();
  return ts;
}

// Per-replica time average over the window.
double window_mean(const std::vector<double>& times, const std::vector<double>& v, double lo, double hi) {
  double acc = 0.0;
  std::size_t count = 0;
  const double eps = 1e-9;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] >= lo - eps && times[k] <= hi + eps) {
      acc += v[k];
      ++count;
    }
  }
  if (count == 0) throw ConfigError("averaging window contains no recorded time");
  return acc / static_cast<double>(count);
}

void check_window(const Config& cfg) {
  const auto& x = cfg.experiment;
  if (x.window_hi > cfg.sim.t_end + 1e-12 || x.window_lo < 0.0) {
    throw ConfigError("experiment.window must lie inside [0, sim.t_end]");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

ExperimentResult chaos_convergence(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "chaos");
  return st.guard([&] {
    const auto& x = cfg.experiment;
    if (x.n_grid.empty() || x.times.empty()) throw ConfigError("chaos: n_grid and times must be non-empty");
    std::vector<double> times = x.times;
    std::sort(times.begin(), times.end());
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    const double g = cfg.model.g();

    struct Cell {
      std::size_t n;
      std::size_t r;
      std::vector<double> w1;
    };
    std::vector<Cell> cells;
    for (std::size_t n : x.n_grid) {
      for (std::size_t r = 0; r < x.replicas; ++r) cells.push_back({n, r, {}});
    }
    parallel_for(cells.size(), threads, [&](std::size_t i) {
      Cell& c = cells[i];
      SimConfig sim = cfg.sim;
      sim.n = c.n;
      sim.seed = replica_seed(cfg, c.r);
      sim.t_end = times.back();
      sim.snapshot_times = times;
      const auto snaps = fluctuations(run(sim, cfg.model, &eq), 0.0);
      for (const auto& s : snaps.snapshots) c.w1.push_back(wasserstein_to_equilibrium(s.sorted, eq, g, s.t));
    });

    std::vector<DiagRow> rows;
    for (const auto& c : cells) {
      for (std::size_t k = 0; k < times.size(); ++k) rows.push_back({times[k], c.n, replica_seed(cfg, c.r), c.w1[k]});
    }
    write_diag_csv(rows, st.file("diag.csv"));

    auto med = [&](std::size_t n, std::size_t k) {
      std::vector<double> v;
      for (const auto& c : cells) {
        if (c.n == n) v.push_back(c.w1[k]);
      }
      return median(v);
    };
    io::CsvWriter csv(st.file("chaos_summary.csv"), {"n", "t", "median_W1"});
    json table = json::array();
    for (std::size_t n : x.n_grid) {
      for (std::size_t k = 0; k < times.size(); ++k) {
        csv.row({static_cast<std::uint64_t>(n), times[k], med(n, k)});
        table.push_back({{"n", n}, {"t", times[k]}, {"median_W1", med(n, k)}});
      }
    }
    csv.close();
    st.summary()["medians"] = table;

    const std::size_t n_lo = *std::min_element(x.n_grid.begin(), x.n_grid.end());
    const std::size_t n_hi = *std::max_element(x.n_grid.begin(), x.n_grid.end());
    const std::size_t last = times.size() - 1;
    if (n_lo != n_hi) {
      const double a = med(n_hi, last), b = med(n_lo, last);
      st.check("W1 decreases with n at t=" + fmt_short(times[last]), a < b,
               "median W1 n=" + std::to_string(n_hi) + ": " + fmt(a) + ", n=" + std::to_string(n_lo) + ": " + fmt(b));
    }
    if (times.size() >= 2 && !needs_equilibrium_sampler(cfg.model)) {
      const double a = med(n_hi, last), b = med(n_hi, 0);
      st.check("W1 decreases in time at n=" + std::to_string(n_hi), a < b,
               "median W1 t=" + fmt_short(times[last]) + ": " + fmt(a) + ", t=" + fmt_short(times[0]) + ": " + fmt(b));
    }
    if (x.w1_band > 0.0) {
      const double a = med(n_hi, last);
      st.check("W1 inside stationary band", a < x.w1_band, "median W1 " + fmt(a) + " vs band " + fmt(x.w1_band));
    }
  });
}

ExperimentResult phase_scan(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "phase_scan");
  return st.guard([&] {
    check_window(cfg);
    const auto& x = cfg.experiment;
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    const TraceSet ts = run_traces(cfg, &eq, threads);
    const std::size_t R = x.replicas;
    const std::size_t T = ts.times.size();

    io::CsvWriter csv(st.file("phase_scan.csv"), {"p", "t", "mean", "se", "replicas"});
    json cells = json::array();
    for (std::size_t i = 0; i < x.p_grid.size(); ++i) {
      const double p = x.p_grid[i];
      std::vector<double> mean_trace(T);
      std::vector<double> se_trace(T);
      for (std::size_t k = 0; k < T; ++k) {
        std::vector<double> v;
        for (std::size_t r = 0; r < R; ++r) v.push_back(ts.per_replica[r][i][k]);
        const auto s = sample_stats(v);
        mean_trace[k] = s.mean;
        se_trace[k] = s.se;
        csv.row({p, ts.times[k], s.mean, s.se, static_cast<std::uint64_t>(R)});
      }
      std::vector<double> wm;
      for (std::size_t r = 0; r < R; ++r) wm.push_back(window_mean(ts.times, ts.per_replica[r][i], x.window_lo, x.window_hi));
      const auto ws = sample_stats(wm);
      const auto meas = eq.long_term_measure(p);
      const Bracket closed = measure_integral(meas, [](double u) { return u; });
      const Phase phase = meas.phase();
      cells.push_back({{"p", p},
                       {"phase", std::string(to_string(phase))},
                       {"closed_lo", closed.lo},
                       {"closed_hi", closed.hi},
                       {"window_mean", ws.mean},
                       {"window_se", ws.se},
                       {"value_t0", mean_trace.front()},
                       {"value_t_end", mean_trace.back()}});
      const std::string tag = "p=" + fmt_short(p);
      if (phase == Phase::Subcritical) {
        const double err = std::abs(ws.mean - closed.lo);
        st.check(tag + " subcritical window mean", err <= x.tolerance,
                 "window mean " + fmt(ws.mean) + " vs closed " + fmt(closed.lo) + " (|diff| " + fmt(err) + ", tol " +
                     fmt(x.tolerance) + ")");
        if (R >= 2) {
          // time spread of the replica mean over the last quarter vs the replica standard error
          const std::size_t from = T - std::max<std::size_t>(T / 4, 2);
          std::vector<double> tail(mean_trace.begin() + static_cast<std::ptrdiff_t>(from), mean_trace.end());
          double se = 0.0;
          for (std::size_t k = from; k < T; ++k) se += se_trace[k];
          se /= static_cast<double>(T - from);
          const double sd = sample_stats(tail).sd;
          st.check(tag + " stabilizes", sd < 2.0 * se + 1e-12,
                   "last-quarter time sd " + fmt(sd) + " vs 2 x replica se " + fmt(2.0 * se));
        }
      } else if (phase == Phase::Supercritical) {
        const double v0 = mean_trace.front(), v1 = mean_trace.back();
        st.check(tag + " supercritical concentration", v1 > x.supercritical_level && v1 > v0,
                 "value at t_end " + fmt(v1) + " (level " + fmt(x.supercritical_level) + "), at t=0 " + fmt(v0));
      }
    }
    csv.close();
    st.summary()["cells"] = cells;
    st.summary()["p_c"] = eq.p_c();
  });
}

ExperimentResult capital_curve_experiment(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "capital_curve");
  return st.guard([&] {
    const auto& x = cfg.experiment;
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    if (eq.classify(1.0) != Phase::Subcritical) {
      throw PhaseError("capital_curve: p_c = " + fmt(eq.p_c()) +
                       " <= 1, so capital concentrates at relative rank 0 and there is no capital density");
    }
    // closed form on a grid dense at both ends
    std::vector<double> grid;
    for (int k = 0; k <= 100; ++k) grid.push_back(std::pow(10.0, -4.0 + 4.0 * k / 100.0) * 0.5);
    for (int k = 99; k >= 0; --k) grid.push_back(1.0 - std::pow(10.0, -4.0 + 4.0 * k / 100.0) * 0.5);
    write_capital_curve_csv(capital_curve(eq, grid), st.file("capital_curve.csv"));

    const int m = 41;
    std::vector<std::pair<double, double>> top, bottom;
    for (int k = 0; k < m; ++k) {
      const double u = x.closed_fit_lo * std::pow(x.closed_fit_hi / x.closed_fit_lo, double(k) / (m - 1));
      top.emplace_back(u, capital_density(eq, u));
      bottom.emplace_back(u, capital_density(eq, 1.0 - u));
    }
    const double slope_top = fit_log_slope(top).slope;
    const double slope_bottom = fit_log_slope(bottom).slope;
    const double want_top = -1.0 / eq.p_c();
    const double want_bottom = 1.0 / eq.q_c();
    st.check("closed-form slope near rank 0", std::abs(slope_top - want_top) <= x.slope_tol_closed,
             "fitted " + fmt(slope_top) + " vs -1/p_c = " + fmt(want_top));
    if (std::isfinite(want_bottom)) {
      st.check("closed-form slope near rank 1", std::abs(slope_bottom - want_bottom) <= x.slope_tol_closed,
               "fitted " + fmt(slope_bottom) + " vs 1/q_c = " + fmt(want_bottom));
    }

    struct Fit {
      double slope = 0.0;
      double sup = 0.0;
      CapitalCurve curve;
    };
    std::vector<Fit> fits(x.replicas);
    parallel_for(x.replicas, threads, [&](std::size_t r) {
      SimConfig sim = cfg.sim;
      sim.seed = replica_seed(cfg, r);
      sim.snapshot_times = {};
      const auto snaps = run(sim, cfg.model, &eq);
      const auto& state = snaps.snapshots.back().sorted;
      Fit& f = fits[r];
      f.curve = empirical_capital_curve(state);
      const double n = static_cast<double>(state.size());
      std::vector<std::pair<double, double>> pts;
      for (std::size_t k = 0; k < f.curve.points.size(); ++k) {
        const double u = std::exp(f.curve.points[k].first);
        if (u >= x.fit_lo && u <= x.fit_hi) pts.emplace_back(u, std::exp(f.curve.points[k].second));
        if (u >= x.compare_lo && u <= x.compare_hi) {
          // atom mass mu^[k] against the density mu-bar(k/n) / n
          const double d = std::abs(f.curve.points[k].second + std::log(n) - std::log(capital_density(eq, u)));
          f.sup = std::max(f.sup, d);
        }
      }
      f.slope = fit_log_slope(pts).slope;
    });
    write_curve_csv(fits.front().curve, st.file("curve.csv"));
    io::CsvWriter csv(st.file("empirical_fits.csv"), {"seed", "slope", "sup_log_distance", "dropped"});
    std::vector<double> slopes, sups;
    for (std::size_t r = 0; r < fits.size(); ++r) {
      csv.row({replica_seed(cfg, r), fits[r].slope, fits[r].sup, static_cast<std::uint64_t>(fits[r].curve.dropped)});
      slopes.push_back(fits[r].slope);
      sups.push_back(fits[r].sup);
    }
    csv.close();
    const double ms = median(slopes);
    const double md = median(sups);
    st.check("empirical slope near rank 0", std::abs(ms - want_top) <= x.slope_tol_empirical,
             "median fitted " + fmt(ms) + " vs -1/p_c = " + fmt(want_top));
    st.check("empirical curve matches closed form", md < x.curve_tol,
             "median sup |log n mu[k] - log mu_bar(k/n)| = " + fmt(md) + " (tol " + fmt(x.curve_tol) + ")");
    st.summary()["closed_slope_top"] = slope_top;
    st.summary()["closed_slope_bottom"] = slope_bottom;
    st.summary()["empirical_slopes"] = slopes;
    st.summary()["empirical_sup_distance"] = sups;
    st.summary()["p_c"] = eq.p_c();
    st.summary()["q_c"] = eq.q_c();
  });
}

ExperimentResult portfolio_race(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "portfolio_race");
  return st.guard([&] {
    check_window(cfg);
    const auto& x = cfg.experiment;
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    const auto report = monotonicity_report(eq, x.p_grid);

    std::vector<std::vector<PortfolioPath>> paths(x.replicas);
    parallel_for(x.replicas, threads, [&](std::size_t r) {
      SimConfig sim = cfg.sim;
      sim.seed = replica_seed(cfg, r);
      sim.snapshot_times = {};
      PortfolioTracker tracker(x.p_grid, x.record_every);
      run(sim, cfg.model, &eq, {&tracker});
      paths[r] = tracker.paths();
    });
    write_portfolio_csv(paths.front(), st.file("portfolio.csv"));

    const std::size_t P = x.p_grid.size();
    std::vector<std::vector<double>> g_sim(P);  // [p][replica]
    std::vector<std::vector<double>> gs_sim(P);
    for (std::size_t i = 0; i < P; ++i) {
      for (const auto& rp : paths) {
        g_sim[i].push_back(rp[i].mean_growth(x.window_lo, x.window_hi));
        const auto& path = rp[i];
        double acc = 0.0;
        std::size_t c = 0;
        for (std::size_t k = 0; k < path.size(); ++k) {
          if (path.times[k] >= x.window_lo - 1e-9 && path.times[k] <= x.window_hi + 1e-9) {
            acc += path.excess_growth[k];
            ++c;
          }
        }
        gs_sim[i].push_back(acc / static_cast<double>(c));
      }
    }

    io::CsvWriter csv(st.file("portfolio_race.csv"),
                      {"p", "phase", "G_closed", "Gstar_closed", "G_closed_hi", "reduction_residual", "G_sim", "G_sim_ci_lo",
                       "G_sim_ci_hi", "Gstar_sim"});
    json rows = json::array();
    double best_closed = -INFINITY, best_sim = -INFINITY;
    double arg_closed = 0.0, arg_sim = 0.0;
    double worst_residual = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      const auto& row = report.rows[i];
      const double p = x.p_grid[i];
      const auto s = sample_stats(g_sim[i]);
      const auto ss = sample_stats(gs_sim[i]);
      const double residual = reduction_check(eq, p);
      if (row.phase == Phase::Subcritical) worst_residual = std::max(worst_residual, residual);
      csv.row({p, std::string(to_string(row.phase)), row.G.lo, row.Gstar.lo, row.G.hi, residual, s.mean, s.ci_lo, s.ci_hi,
               ss.mean});
      rows.push_back({{"p", p},
                      {"phase", std::string(to_string(row.phase))},
                      {"G_closed", row.G.mid()},
                      {"Gstar_closed", row.Gstar.mid()},
                      {"G_sim", s.mean},
                      {"G_sim_ci", {s.ci_lo, s.ci_hi}},
                      {"Gstar_sim", ss.mean}});
      if (row.G.mid() > best_closed) {
        best_closed = row.G.mid();
        arg_closed = p;
      }
      if (s.mean > best_sim) {
        best_sim = s.mean;
        arg_sim = p;
      }
    }
    csv.close();
    st.summary()["rows"] = rows;
    st.summary()["argmax_closed"] = arg_closed;
    st.summary()["argmax_sim"] = arg_sim;
    st.summary()["argmax_agree"] = arg_closed == arg_sim;
    st.summary()["b_shape"] = std::string(to_string(report.b_shape));
    st.summary()["sigma2_shape"] = std::string(to_string(report.sigma2_shape));
    st.summary()["p_c"] = eq.p_c();

    st.check("reduction formula on subcritical grid points", worst_residual <= 1e-8,
             "max residual " + fmt(worst_residual));
    if (report.b_shape != Monotonicity::None) {
      st.check("closed-form G follows the monotonicity of b", report.g_violations.empty(),
               std::to_string(report.g_violations.size()) + " violations, b " + std::string(to_string(report.b_shape)));
    }
    if (report.sigma2_shape == Monotonicity::Nonincreasing) {
      st.check("nonincreasing sigma2: closed-form argmax at smallest p", arg_closed == x.p_grid.front(),
               "argmax p = " + fmt(arg_closed));
    }
    const auto i0 = std::find(x.p_grid.begin(), x.p_grid.end(), 0.0);
    const auto i1 = std::find(x.p_grid.begin(), x.p_grid.end(), 1.0);
    if (i0 != x.p_grid.end() && i1 != x.p_grid.end()) {
      const std::size_t a = static_cast<std::size_t>(i0 - x.p_grid.begin());
      const std::size_t b = static_cast<std::size_t>(i1 - x.p_grid.begin());
      const double closed = report.rows[b].G.mid() - report.rows[a].G.mid();
      std::vector<double> diff;
      for (std::size_t r = 0; r < x.replicas; ++r) diff.push_back(g_sim[b][r] - g_sim[a][r]);
      const auto s = sample_stats(diff);
      st.summary()["closed_G1_minus_G0"] = closed;
      st.summary()["sim_G1_minus_G0"] = {{"mean", s.mean}, {"ci", {s.ci_lo, s.ci_hi}}, {"se", s.se}};
      if (std::abs(closed) > 1e-12) {
        const bool ok = closed > 0.0 ? s.ci_lo > 0.0 : s.ci_hi < 0.0;
        st.check("simulated G(1) - G(0) has the closed-form sign", ok,
                 "closed " + fmt(closed) + ", simulated " + fmt(s.mean) + " with 95% CI [" + fmt(s.ci_lo) + ", " +
                     fmt(s.ci_hi) + "]");
      }
    }
  });
}

ExperimentResult mean_drift(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "mean_drift");
  return st.guard([&] {
    const auto& x = cfg.experiment;
    const std::size_t n = cfg.sim.n;
    bool still = true;
    double gn = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double u = static_cast<double>(j) / static_cast<double>(n);
      still = still && cfg.model.sigma2()(u) == 0.0;
      gn += cfg.model.gamma()(u);
    }
    gn /= static_cast<double>(n);
    std::unique_ptr<EquilibriumModel> eq;
    if (needs_equilibrium_sampler(cfg.model)) eq = std::make_unique<EquilibriumModel>(build_equilibrium(cfg.model, cfg.equilibrium));

    const std::size_t R = still ? 1 : x.replicas;
    std::vector<double> drift(R);
    parallel_for(R, threads, [&](std::size_t r) {
      SimConfig sim = cfg.sim;
      sim.seed = replica_seed(cfg, r);
      sim.snapshot_times = {0.0, cfg.sim.t_end};
      if (cfg.sim.t_end == 0.0) sim.snapshot_times = {0.0};
      const auto s = run(sim, cfg.model, eq.get());
      drift[r] = s.snapshots.back().sorted.mean() - s.snapshots.front().sorted.mean();
    });
    io::CsvWriter csv(st.file("mean_drift.csv"), {"seed", "drift"});
    for (std::size_t r = 0; r < R; ++r) csv.row({replica_seed(cfg, r), drift[r]});
    csv.close();

    const double t = cfg.sim.t_end;
    if (still) {
      const double err = std::abs(drift[0] - gn * t);
      st.check("deterministic drift equals g_n t", err <= 1e-9 * (1.0 + std::abs(gn * t)),
               "drift " + fmt(drift[0]) + " vs g_n t = " + fmt(gn * t));
      st.summary()["drift"] = drift[0];
      st.summary()["g_n"] = gn;
    } else {
      const auto s = sample_stats(drift);
      const double target = cfg.model.g() * t;
      st.check("pooled drift within 3 SE of g t", std::abs(s.mean - target) <= 3.0 * s.se,
               "drift " + fmt(s.mean) + " +- " + fmt(s.se) + " vs g t = " + fmt(target));
      st.summary()["drift_mean"] = s.mean;
      st.summary()["drift_se"] = s.se;
      st.summary()["g_t"] = target;
    }
    st.summary()["replicas"] = R;
  });
}

ExperimentResult interversion_probe(const Config& cfg, const fs::path& out, unsigned threads) {
  Study st(cfg, out, "interversion");
  return st.guard([&] {
    check_window(cfg);
    const auto& x = cfg.experiment;
    const bool constant = std::holds_alternative<coef::Constant>(cfg.model.sigma2().spec());
    if (!constant && !x.exploratory) {
      throw ConfigError("interversion probe needs a constant sigma2; set experiment.exploratory=true to run it anyway");
    }
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    const TraceSet ts = run_traces(cfg, &eq, threads);
    io::CsvWriter csv(st.file("interversion.csv"), {"p", "phase", "closed_lo", "closed_hi", "sim_window_mean", "sim_se"});
    json rows = json::array();
    for (std::size_t i = 0; i < x.p_grid.size(); ++i) {
      const double p = x.p_grid[i];
      std::vector<double> wm;
      for (const auto& rep : ts.per_replica) wm.push_back(window_mean(ts.times, rep[i], x.window_lo, x.window_hi));
      const auto s = sample_stats(wm);
      const auto meas = eq.long_term_measure(p);
      const Bracket closed = measure_integral(meas, [](double u) { return u; });
      csv.row({p, std::string(to_string(meas.phase())), closed.lo, closed.hi, s.mean, s.se});
      rows.push_back({{"p", p}, {"closed", closed.mid()}, {"sim", s.mean}, {"se", s.se}});
      const std::string tag = "p=" + fmt_short(p);
      if (meas.phase() == Phase::Supercritical) {
        st.check(tag + " both routes near 1", s.mean > x.supercritical_level && closed.lo > x.supercritical_level,
                 "simulated " + fmt(s.mean) + ", closed " + fmt(closed.lo));
      } else if (meas.phase() == Phase::Subcritical) {
        st.check(tag + " routes agree", std::abs(s.mean - closed.lo) <= x.interversion_tol,
                 "simulated " + fmt(s.mean) + " vs closed " + fmt(closed.lo) + " (tol " + fmt(x.interversion_tol) + ")");
      }
    }
    csv.close();
    st.summary()["rows"] = rows;
    st.summary()["exploratory"] = !constant;
  });
}

ExperimentResult run_experiment(const Config& cfg, const fs::path& out, unsigned threads) {
  switch (cfg.experiment.kind) {
    case ExperimentKind::ChaosConvergence:
      return chaos_convergence(cfg, out, threads);
    case ExperimentKind::PhaseScan:
      return phase_scan(cfg, out, threads);
    case ExperimentKind::CapitalCurve:
      return capital_curve_experiment(cfg, out, threads);
    case ExperimentKind::PortfolioRace:
      return portfolio_race(cfg, out, threads);
    case ExperimentKind::MeanDrift:
      return mean_drift(cfg, out, threads);
    case ExperimentKind::InterversionProbe:
      return interversion_probe(cfg, out, threads);
  }
  throw DomainError("unknown experiment kind");
}

}  // namespace mfatlas
