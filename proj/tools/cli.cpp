#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "mfatlas/config.hpp"
#include "mfatlas/errors.hpp"
#include "mfatlas/experiments.hpp"
#include "mfatlas/io.hpp"
#include "mfatlas/measures.hpp"

namespace mfatlas::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFooter = R"(
Config is one JSON document; every key is optional except model.gamma and model.sigma2.
Defaults:
  model.m                      {"kind": "gaussian", "mean": 0, "sd": 1}
  sim                          n=1000 dt=0.001 t_end=10 seed=0 snapshot_times=[] (means [t_end])
  equilibrium                  grid=4097 logit_range=40 critical_tol=1e-9
  experiment.p_grid            [0, 0.5, 1, 1.5, 2, 3, 4]
  experiment.n_grid            [200, 2000]
  experiment.replicas          10 (replica r uses seed sim.seed + r)
  experiment.times             [0.5, 10]
  experiment.window            [5, 10]
  experiment.record_every      10
  experiment.tolerance         0.02      experiment.interversion_tol 0.03
  experiment.supercritical_level 0.9
  experiment.fit_lo/fit_hi     0.001/0.1 experiment.closed_fit_lo/hi 1e-4/0.01
  experiment.compare_lo/hi     0.05/0.95 experiment.curve_tol 0.05
  experiment.slope_tol_closed  0.02      experiment.slope_tol_empirical 0.05
  experiment.w1_band           0 (off)   experiment.exploratory false
The normalized config is echoed into every manifest.json.
Exit codes: 0 ok/PASS, 1 model assumptions fail, 2 runtime error, 3 a check FAILed, 64 usage/config error.
Environment: MFATLAS_THREADS sets the default worker count.)";

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::vector<std::string> sets;
  int verbose = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Config load(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  json doc = normalize_config(parse_json_text(read_file(c.config)));
  doc = apply_overrides(std::move(doc), c.sets);
  if (c.seed) doc["sim"]["seed"] = *c.seed;
  return config_from_json(doc);
}

void print_report(const ValidationReport& r, std::ostream& out) {
  for (const AssumptionCheck* c : {&r.ue, &r.e1, &r.e2, &r.h}) {
    out << (c->passed ? "PASS " : "FAIL ") << c->name;
    if (!c->passed && std::isfinite(c->witness)) out << " (witness u=" << io::format_double(c->witness) << ")";
    if (!c->detail.empty()) out << ": " << c->detail;
    out << "\n";
  }
  if (r.discrete) {
    out << (r.discrete->passed ? "PASS " : "WARN ") << "finite-n stability n=" << r.discrete->n;
    if (!r.discrete->passed) out << " (first failing k=" << r.discrete->first_failing_k << ")";
    out << "\n";
  }
  for (const auto& w : r.warnings) out << "note: " << w << "\n";
}

json report_json(const ValidationReport& r) {
  json checks = json::array();
  for (const AssumptionCheck* c : {&r.ue, &r.e1, &r.e2, &r.h}) {
    json j = {{"name", c->name}, {"passed", c->passed}, {"detail", c->detail}};
    j["witness"] = std::isfinite(c->witness) ? json(c->witness) : json(nullptr);
    checks.push_back(j);
  }
  json out = {{"ok", r.ok()}, {"checks", checks}, {"warnings", r.warnings}};
  if (r.discrete) {
    out["discrete"] = {{"n", r.discrete->n},
                       {"passed", r.discrete->passed},
                       {"first_failing_k", r.discrete->first_failing_k},
                       {"g_n", r.discrete->g_n}};
  }
  return out;
}

int cmd_validate(const Common& c, std::ostream& out, std::ostream& err) {
  const Config cfg = load(c);
  io::RunManifest manifest(fs::path(c.out) / "validate", "validate", config_to_json(cfg));
  ValidationOptions vo;
  vo.n = cfg.sim.n;
  const auto report = validate_model(cfg.model, vo);
  print_report(report, out);
  out << "g=" << io::format_double(cfg.model.g()) << " p_c=" << io::format_double(cfg.model.p_c())
      << " q_c=" << io::format_double(cfg.model.q_c()) << "\n";
  io::write_json(manifest.file("validation.json"), report_json(report));
  manifest.finish(report.ok());
  if (!report.ok()) {
    const auto* f = report.first_failure();
    err << "model fails " << f->name;
    if (std::isfinite(f->witness)) err << " at u=" << io::format_double(f->witness);
    err << ": " << f->detail << "\n";
    return kInvalidModel;
  }
  return kOk;
}

int cmd_equilibrium(const Common& c, std::vector<double> ps, bool strict_density, std::ostream& out) {
  const Config cfg = load(c);
  if (ps.empty()) ps = cfg.experiment.p_grid;
  std::sort(ps.begin(), ps.end());
  for (double p : ps) {
    if (!(p >= 0.0)) throw ConfigError("--p values must be >= 0");
  }
  io::RunManifest manifest(fs::path(c.out) / "equilibrium", "equilibrium", config_to_json(cfg));
  try {
    require_valid(cfg.model);
    const auto eq = build_equilibrium(cfg.model, cfg.equilibrium);
    manifest.set("p_c", eq.p_c());
    manifest.set("q_c", eq.q_c());
    write_psi_csv(eq, manifest.file("psi.csv"));
    {
      io::CsvWriter co(manifest.file("coefficients.csv"), {"u", "gamma", "sigma2", "b"});
      for (int k = 0; k <= 1000; ++k) {
        const double u = k / 1000.0;
        co.row({u, cfg.model.gamma()(u), cfg.model.sigma2()(u), rate_of_return(cfg.model, u)});
      }
      co.close();
    }
    write_growth_csv(eq, ps, manifest.file("growth.csv"));

    std::vector<double> dens;
    io::CsvWriter zc(manifest.file("zbar.csv"), {"p", "phase", "finite", "zbar", "error", "numerically_confirmed"});
    for (double p : ps) {
      const auto z = eq.zbar(p);
      const auto phase = eq.classify(p);
      zc.row({p, std::string(to_string(phase)), z.finite ? 1 : 0, z.finite ? io::CsvCell(z.value) : io::CsvCell::empty(),
              z.error, z.numerically_confirmed ? 1 : 0});
      if (eq.long_term_measure(p).has_density()) {
        dens.push_back(p);
      } else if (strict_density) {
        throw PhaseError("Z-bar diverges at p=" + io::format_double(p) + " (p_c=" + io::format_double(eq.p_c()) +
                         "): the long-term measure is a point mass at u=1 and has no density");
      }
    }
    zc.close();
    std::vector<double> us;
    for (int k = 1; k < 1000; ++k) us.push_back(k / 1000.0);
    if (!dens.empty()) write_pibar_csv(eq, dens, us, manifest.file("pibar.csv"));
    if (eq.classify(1.0) == Phase::Subcritical) {
      std::vector<double> grid;
      // log-spaced toward both ends
      for (int k = 0; k <= 200; ++k) grid.push_back(0.5 * std::pow(10.0, -4.0 + 4.0 * k / 200.0));
      for (int k = 199; k >= 0; --k) grid.push_back(1.0 - 0.5 * std::pow(10.0, -4.0 + 4.0 * k / 200.0));
      write_capital_curve_csv(capital_curve(eq, grid), manifest.file("capital_curve.csv"));
    }

    out << "g=" << io::format_double(cfg.model.g()) << " p_c=" << io::format_double(eq.p_c())
        << " q_c=" << io::format_double(eq.q_c()) << "\n";
    out << "p\tphase\tZbar\tG\tG*\n";
    for (double p : ps) {
      const auto z = eq.zbar(p);
      const auto gr = growth_rates(eq, p);
      out << io::format_double(p) << "\t" << to_string(gr.phase) << "\t"
          << (z.finite ? io::format_double(z.value) : std::string("divergent")) << "\t";
      if (gr.G.is_point()) {
        out << io::format_double(gr.G.lo) << "\t" << io::format_double(gr.Gstar.lo) << "\n";
      } else {
        out << "[" << io::format_double(gr.G.lo) << ", " << io::format_double(gr.G.hi) << "]\t["
            << io::format_double(gr.Gstar.lo) << ", " << io::format_double(gr.Gstar.hi) << "]\n";
      }
    }
  } catch (const std::exception& e) {
    manifest.abort(e.what());
    throw;
  }
  manifest.finish(true);
  return kOk;
}

int cmd_simulate(const Common& c, std::ostream& out) {
  const Config cfg = load(c);
  io::RunManifest manifest(fs::path(c.out) / "simulate", "simulate", config_to_json(cfg));
  try {
    require_valid(cfg.model);
    manifest.set("rng", std::string(kRngName));
    std::optional<EquilibriumModel> eq;
    eq.emplace(build_equilibrium(cfg.model, cfg.equilibrium));
    PortfolioTracker tracker(cfg.experiment.p_grid, cfg.experiment.record_every);
    const auto snaps = run(cfg.sim, cfg.model, &*eq, {&tracker});
    write_snapshots_csv(snaps, manifest.file("snapshots.csv"));
    std::vector<std::pair<double, WeightedCapitalMeasure>> rows;
    std::vector<DiagRow> diag;
    for (const auto& s : snaps.snapshots) {
      for (double p : cfg.experiment.p_grid) rows.emplace_back(s.t, capital_measure(s.sorted, p));
      diag.push_back({s.t, snaps.n, cfg.sim.seed, wasserstein_to_equilibrium(s.sorted, *eq, cfg.model.g(), s.t)});
    }
    write_measure_csv(rows, manifest.file("measure.csv"));
    write_portfolio_csv(tracker.paths(), manifest.file("portfolio.csv"));
    write_diag_csv(diag, manifest.file("diag.csv"));
    write_curve_csv(empirical_capital_curve(snaps.snapshots.back().sorted), manifest.file("curve.csv"));
    out << "n=" << snaps.n << " steps=" << steps_to(cfg.sim.t_end, cfg.sim.dt) << " normal draws=" << snaps.normal_draws
        << "\n";
    for (const auto& d : diag) out << "t=" << io::format_double(d.t) << " W1=" << io::format_double(d.w1) << "\n";
  } catch (const std::exception& e) {
    manifest.abort(e.what());
    throw;
  }
  manifest.finish(true);
  return kOk;
}

int cmd_experiment(const Common& c, ExperimentKind kind, std::ostream& out) {
  Config cfg = load(c);
  cfg.experiment.kind = kind;
  // the experiments check the model themselves through the equilibrium
  // build; mean_drift may run without one
  require_valid(cfg.model);
  const auto r = run_experiment(cfg, c.out, resolve_threads(c.threads));
  for (const auto& chk : r.checks) {
    out << (chk.passed ? "PASS " : "FAIL ") << chk.name;
    if (c.verbose > 0 || !chk.passed) out << ": " << chk.detail;
    out << "\n";
  }
  out << r.name << ": " << (r.passed() ? "PASS" : "FAIL") << " (" << r.dir.string() << ")\n";
  return r.passed() ? kOk : kCheckFailed;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file")->required();
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  sub->add_option("--seed", c.seed, "override sim.seed");
  sub->add_option("--threads", c.threads, "worker threads (0: MFATLAS_THREADS or all cores)");
  sub->add_option("--set", c.sets, "override a config key, key.path=value (repeatable)");
  sub->add_flag("-v,--verbose", c.verbose, "print check details");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mfatlas: mean-field rank-based market model toolkit", "mfatlas"};
  app.footer(kFooter);
  app.require_subcommand(1, 1);

  Common c;
  std::vector<double> ps;
  bool strict_density = false;
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs = {
      {"validate", "check the model assumptions"},
      {"equilibrium", "closed-form equilibrium tables: Psi, Z-bar, densities, growth rates"},
      {"simulate", "one particle run with snapshots, weights, portfolios and W1"},
      {"capital-curve", "capital distribution curve study"},
      {"portfolio", "p-diversity portfolio race"},
      {"phase-scan", "<id, Pi^p_n(t)> over a p grid"},
      {"chaos", "W1 to equilibrium over n and t"},
      {"mean-drift", "E Y(t) = E Y(0) + g t"},
      {"interversion", "large n then large t against the closed form"},
  };
  std::vector<CLI::App*> apps;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, c);
    apps.push_back(sub);
  }
  apps[1]->add_option("--p", ps, "diversity indices (default experiment.p_grid)")->delimiter(',');
  apps[1]->add_flag("--pibar", strict_density, "fail when a requested p has no density (divergent Z-bar)");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    err << "usage: mfatlas {validate|equilibrium|simulate|capital-curve|portfolio|phase-scan|chaos|mean-drift|interversion}"
           " --config PATH [--out DIR] [--seed U64] [--threads N] [--set key=value]... [-v]\n";
    return kUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (name == "validate") return cmd_validate(c, out, err);
    if (name == "equilibrium") return cmd_equilibrium(c, ps, strict_density, out);
    if (name == "simulate") return cmd_simulate(c, out);
    if (name == "capital-curve") return cmd_experiment(c, ExperimentKind::CapitalCurve, out);
    if (name == "portfolio") return cmd_experiment(c, ExperimentKind::PortfolioRace, out);
    if (name == "phase-scan") return cmd_experiment(c, ExperimentKind::PhaseScan, out);
    if (name == "chaos") return cmd_experiment(c, ExperimentKind::ChaosConvergence, out);
    if (name == "mean-drift") return cmd_experiment(c, ExperimentKind::MeanDrift, out);
    if (name == "interversion") return cmd_experiment(c, ExperimentKind::InterversionProbe, out);
  } catch (const ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const SchemaError& e) {
    err << "config error at " << e.key_path() << ": " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    err << "model fails " << e.assumption();
    if (std::isfinite(e.witness())) err << " at u=" << io::format_double(e.witness());
    err << ": " << e.what() << "\n";
    return kInvalidModel;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kUsage;
}

}  // namespace mfatlas::cli
