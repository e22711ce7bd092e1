// Pilot runs that calibrate the stochastic acceptance thresholds. Output goes
// to tests/golden/ and is committed; the acceptance binary only reads it.
//
//   mfatlas_pilot [--out tests/golden] [--threads N]

#include <algorithm>
#include <cmath>
#include <iostream>

#include "CLI11.hpp"
#include "mfatlas/config.hpp"
#include "mfatlas/experiments.hpp"
#include "mfatlas/io.hpp"
#include "mfatlas/measures.hpp"

using namespace mfatlas;
using nlohmann::json;

namespace {

// type 7 (linear interpolation between order statistics)
double quantile7(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

// W1 of the fluctuations after running from the equilibrium law itself:
// the spread that remains at stationarity for this n.
json stationary_w1_band(unsigned threads) {
  const MarketModel model(CoefficientFunction::example31(), CoefficientFunction::constant(1.0),
                          InitialDistribution::equilibrium(0.0));
  const auto eq = build_equilibrium(model);
  const std::size_t n = 2000;
  const double t = 10.0;
  const std::uint64_t first_seed = 1000;
  const std::size_t count = 20;
  std::vector<double> w1(count);
  parallel_for(count, threads, [&](std::size_t k) {
    SimConfig sim;
    sim.n = n;
    sim.dt = 1e-3;
    sim.t_end = t;
    sim.seed = first_seed + k;
    const auto snaps = fluctuations(run(sim, model, &eq), 0.0);
    w1[k] = wasserstein_to_equilibrium(snaps.snapshots.back().sorted, eq, 0.0, t);
  });
  const double band = quantile7(w1, 0.95);
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < count; ++k) seeds.push_back(first_seed + k);
  return {{"description", "W1 between the centred empirical law and the equilibrium law after evolving an "
                          "equilibrium start; band = 0.95 quantile (type 7) over seeds"},
          {"model", {{"gamma", coefficient_to_json(model.gamma())},
                     {"sigma2", coefficient_to_json(model.sigma2())},
                     {"m", initial_to_json(model.m())}}},
          {"n", n},
          {"dt", 1e-3},
          {"t", t},
          {"seeds", seeds},
          {"w1", w1},
          {"median", median(w1)},
          {"quantile", 0.95},
          {"band", band},
          {"rng", std::string(kRngName)},
          {"code_version", std::string(io::kCodeVersion)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mfatlas_pilot: calibrate acceptance thresholds"};
  std::string out = "tests/golden";
  unsigned threads = 0;
  app.add_option("--out", out, "golden directory")->capture_default_str();
  app.add_option("--threads", threads, "worker threads");
  CLI11_PARSE(app, argc, argv);
  try {
    std::filesystem::create_directories(out);
    const json band = stationary_w1_band(resolve_threads(threads));
    io::write_json(std::filesystem::path(out) / "w1_band.json", band);
    std::cout << "w1 band " << io::format_double(band["band"].get<double>()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
