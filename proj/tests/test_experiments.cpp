#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mfatlas/config.hpp"
#include "mfatlas/errors.hpp"
#include "mfatlas/experiments.hpp"
#include "mfatlas/io.hpp"

using namespace mfatlas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mfatlas_exp_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Config small(const std::string& kind, const std::string& extra_experiment = "") {
  const std::string text = R"({"model": {"gamma": {"kind": "example31"}, "sigma2": {"kind": "constant", "c": 1}},
      "sim": {"n": 60, "dt": 0.01, "t_end": 1, "seed": 3},
      "experiment": {"kind": ")" + kind + R"(", "replicas": 3, "window": [0.5, 1], "record_every": 5,
                     "n_grid": [20, 60], "times": [0.2, 1])" + extra_experiment + "}}";
  return config_from_json(parse_json_text(text));
}

}  // namespace

TEST_CASE("sample statistics") {
  const auto s = sample_stats({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.sd == doctest::Approx(std::sqrt(5.0 / 3.0)));
  CHECK(s.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
  // t quantile with 3 degrees of freedom at 0.975
  CHECK(s.ci_hi - s.mean == doctest::Approx(3.182446305284263 * s.se).epsilon(1e-12));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK_THROWS_AS(median({}), InsufficientData);
  const auto one = sample_stats({7.0});
  CHECK(one.ci_lo == 7.0);
  CHECK(one.ci_hi == 7.0);
}

TEST_CASE("parallel_for covers every index and rethrows") {
  std::vector<int> hits(100, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 7) throw NumericalBlowup("boom");
                  }),
                  NumericalBlowup);
  CHECK(resolve_threads(5) == 5);
  CHECK(resolve_threads(0) >= 1);
}

TEST_CASE("experiment kinds round trip") {
  for (auto k : {ExperimentKind::ChaosConvergence, ExperimentKind::PhaseScan, ExperimentKind::CapitalCurve,
                 ExperimentKind::PortfolioRace, ExperimentKind::MeanDrift, ExperimentKind::InterversionProbe}) {
    CHECK(experiment_kind_from(to_string(k)) == k);
  }
  CHECK_THROWS_AS(experiment_kind_from("nope"), DomainError);
}

TEST_CASE("every experiment writes manifest, csv and summary") {
  const fs::path out = scratch("all");
  for (const char* kind : {"chaos", "phase_scan", "portfolio_race", "mean_drift", "interversion"}) {
    CAPTURE(kind);
    const auto r = run_experiment(small(kind), out, 2);
    REQUIRE(fs::exists(r.dir / "manifest.json"));
    REQUIRE(fs::exists(r.dir / "summary.json"));
    const json manifest = json::parse(slurp(r.dir / "manifest.json"));
    CHECK(manifest["status"] == (r.passed() ? "pass" : "fail"));
    CHECK(manifest["rng"] == std::string(kRngName));
    CHECK(manifest["config"]["experiment"]["kind"] == kind);
    // every checksum matches the file on disk
    for (const auto& [name, sum] : manifest["outputs"].items()) {
      CHECK(io::sha256_file(r.dir / name) == sum["sha256"].get<std::string>());
    }
    CHECK(!r.checks.empty());
    const json summary = json::parse(slurp(r.dir / "summary.json"));
    CHECK(summary["passed"] == r.passed());
  }
  fs::remove_all(out);
}

TEST_CASE("experiment outputs are reproducible byte for byte") {
  const fs::path a = scratch("rep_a");
  const fs::path b = scratch("rep_b");
  const auto ra = phase_scan(small("phase_scan"), a, 1);
  const auto rb = phase_scan(small("phase_scan"), b, 3);
  CHECK(slurp(ra.dir / "phase_scan.csv") == slurp(rb.dir / "phase_scan.csv"));
  Config other = small("phase_scan");
  other.sim.seed = 4;
  const auto rc = phase_scan(other, scratch("rep_c"), 1);
  CHECK(slurp(ra.dir / "phase_scan.csv") != slurp(rc.dir / "phase_scan.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(rc.dir.parent_path());
}

TEST_CASE("zero volatility mean drift is exact") {
  Config cfg = small("mean_drift");
  cfg.model = MarketModel(CoefficientFunction::linear(1.0, -1.0), CoefficientFunction::constant(0.0),
                          InitialDistribution::gaussian(0.0, 1.0));
  const auto r = mean_drift(cfg, scratch("still"), 1);
  REQUIRE(r.checks.size() == 1);
  CHECK(r.checks[0].passed);
  CHECK(r.summary["replicas"] == 1);
  fs::remove_all(r.dir.parent_path());
}

TEST_CASE("experiment error paths") {
  // p_c <= 1: no capital density
  Config cfg = small("capital_curve");
  cfg.model = MarketModel(CoefficientFunction::example31(), CoefficientFunction::constant(4.0),
                          InitialDistribution::gaussian(0.0, 1.0));
  const fs::path out = scratch("err");
  CHECK_THROWS_AS(capital_curve_experiment(cfg, out, 1), PhaseError);
  const json manifest = json::parse(slurp(out / "capital_curve" / "manifest.json"));
  CHECK(manifest["status"] == "error");

  Config nonconst = small("interversion");
  nonconst.model = MarketModel(CoefficientFunction::example31(), CoefficientFunction::linear(1.5, -1.0),
                               InitialDistribution::gaussian(0.0, 1.0));
  CHECK_THROWS_AS(interversion_probe(nonconst, out, 1), ConfigError);

  Config window = small("phase_scan");
  window.experiment.window_hi = 5.0;
  CHECK_THROWS_AS(phase_scan(window, out, 1), ConfigError);

  // n = 1 chaos run completes
  Config one = small("chaos");
  one.experiment.n_grid = {1};
  one.experiment.replicas = 2;
  CHECK_NOTHROW(chaos_convergence(one, out, 1));
  fs::remove_all(out);
}
