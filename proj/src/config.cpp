#include "mfatlas/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "mfatlas/errors.hpp"

namespace mfatlas {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Strict reader for one JSON object: every key must be consumed.
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }
  std::string at(const std::string& k) const { return join(path_, k); }

  const json& raw(const std::string& k) {
    used_.insert(k);
    return j_.at(k);
  }

  double num(const std::string& k, std::optional<double> def = std::nullopt) {
    if (!has(k)) {
      if (def) return *def;
      throw SchemaError(at(k), "required key is missing");
    }
    const json& v = raw(k);
    if (!v.is_number()) throw SchemaError(at(k), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw SchemaError(at(k), "expected a finite number");
    return x;
  }

  std::uint64_t uint(const std::string& k, std::uint64_t def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw SchemaError(at(k), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  std::string str(const std::string& k, std::optional<std::string> def = std::nullopt) {
    if (!has(k)) {
      if (def) return *def;
      throw SchemaError(at(k), "required key is missing");
    }
    const json& v = raw(k);
    if (!v.is_string()) throw SchemaError(at(k), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& k, bool def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_boolean()) throw SchemaError(at(k), "expected true or false");
    return v.get<bool>();
  }

  std::vector<double> nums(const std::string& k, std::vector<double> def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_array()) throw SchemaError(at(k), "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw SchemaError(at(k) + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::vector<std::size_t> counts(const std::string& k, std::vector<std::size_t> def) {
    if (!has(k)) return def;
    const json& v = raw(k);
    if (!v.is_array()) throw SchemaError(at(k), "expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_unsigned() && !(v[i].is_number_integer() && v[i].get<std::int64_t>() >= 0)) {
        throw SchemaError(at(k) + "[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
      out.push_back(v[i].get<std::size_t>());
    }
    return out;
  }

  // [[x, y], ...] as two vectors
  std::pair<Eigen::VectorXd, Eigen::VectorXd> knots(const std::string& k) {
    if (!has(k)) throw SchemaError(at(k), "required key is missing");
    const json& v = raw(k);
    if (!v.is_array()) throw SchemaError(at(k), "expected an array of [x, y] pairs");
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size())), y(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
      const json& e = v[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw SchemaError(at(k) + "[" + std::to_string(i) + "]", "expected a pair of numbers");
      }
      x[static_cast<Eigen::Index>(i)] = e[0].get<double>();
      y[static_cast<Eigen::Index>(i)] = e[1].get<double>();
    }
    return {x, y};
  }

  Obj child(const std::string& k) {
    static const json empty = json::object();
    if (!has(k)) return Obj(empty, at(k));
    return Obj(raw(k), at(k));
  }

  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) throw SchemaError(at(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
auto guarded(const std::string& path, F&& make) {
  try {
    return make();
  } catch (const DomainError& e) {
    throw SchemaError(path, e.what());
  }
}

CoefficientFunction parse_coefficient(Obj o, const std::string& path) {
  const std::string kind = o.str("kind");
  auto out = guarded(path, [&]() -> CoefficientFunction {
    if (kind == "constant") return CoefficientFunction::constant(o.num("c"));
    if (kind == "linear") return CoefficientFunction::linear(o.num("a"), o.num("b"));
    if (kind == "atlas_alpha") return CoefficientFunction::atlas_alpha(o.num("g"), o.num("alpha"));
    if (kind == "example31") return CoefficientFunction::example31();
    if (kind == "example51_sigma2") return CoefficientFunction::example51_sigma2(o.num("g"), o.num("alpha"));
    if (kind == "tabulated") {
      auto [u, v] = o.knots("knots");
      return CoefficientFunction::tabulated(u, v);
    }
    throw SchemaError(join(path, "kind"), "unknown coefficient kind '" + kind + "'");
  });
  o.done();
  return out;
}

InitialDistribution parse_initial(Obj o, const std::string& path) {
  const std::string kind = o.str("kind");
  auto out = guarded(path, [&]() -> InitialDistribution {
    if (kind == "gaussian") return InitialDistribution::gaussian(o.num("mean", 0.0), o.num("sd", 1.0));
    if (kind == "uniform") return InitialDistribution::uniform(o.num("lo"), o.num("hi"));
    if (kind == "shifted_exponential") {
      const double sign = o.num("sign", -1.0);
      if (sign != 1.0 && sign != -1.0) throw SchemaError(join(path, "sign"), "must be 1 or -1");
      return InitialDistribution::shifted_exponential(o.num("rate"), o.num("shift", 0.0), static_cast<int>(sign));
    }
    if (kind == "equilibrium") return InitialDistribution::equilibrium(o.num("mean", 0.0));
    if (kind == "tabulated_quantile") {
      auto [u, y] = o.knots("knots");
      return InitialDistribution(init::TabulatedQuantile{u, y});
    }
    throw SchemaError(join(path, "kind"), "unknown initial distribution kind '" + kind + "'");
  });
  o.done();
  return out;
}

json knots_json(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  json a = json::array();
  for (Eigen::Index i = 0; i < x.size(); ++i) a.push_back({x[i], y[i]});
  return a;
}

}  // namespace

json coefficient_to_json(const CoefficientFunction& f) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, coef::Constant>) return {{"kind", "constant"}, {"c", s.c}};
        if constexpr (std::is_same_v<T, coef::Linear>) return {{"kind", "linear"}, {"a", s.a}, {"b", s.b}};
        if constexpr (std::is_same_v<T, coef::AtlasAlpha>) return {{"kind", "atlas_alpha"}, {"g", s.g}, {"alpha", s.alpha}};
        if constexpr (std::is_same_v<T, coef::Example31>) return {{"kind", "example31"}};
        if constexpr (std::is_same_v<T, coef::Example51Sigma2>) {
          return {{"kind", "example51_sigma2"}, {"g", s.g}, {"alpha", s.alpha}};
        }
        if constexpr (std::is_same_v<T, coef::Tabulated>) return {{"kind", "tabulated"}, {"knots", knots_json(s.u, s.v)}};
      },
      f.spec());
}

json initial_to_json(const InitialDistribution& m) {
  return std::visit(
      [](const auto& s) -> json {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, init::Gaussian>) return {{"kind", "gaussian"}, {"mean", s.mean}, {"sd", s.sd}};
        if constexpr (std::is_same_v<T, init::Uniform>) return {{"kind", "uniform"}, {"lo", s.lo}, {"hi", s.hi}};
        if constexpr (std::is_same_v<T, init::ShiftedExponential>) {
          return {{"kind", "shifted_exponential"}, {"rate", s.rate}, {"shift", s.shift}, {"sign", s.sign}};
        }
        if constexpr (std::is_same_v<T, init::Equilibrium>) return {{"kind", "equilibrium"}, {"mean", s.mean}};
        if constexpr (std::is_same_v<T, init::TabulatedQuantile>) {
          return {{"kind", "tabulated_quantile"}, {"knots", knots_json(s.u, s.y)}};
        }
      },
      m.spec());
}

Config config_from_json(const json& raw) {
  Obj root(raw, "");
  Obj jm = root.child("model");
  if (!jm.has("gamma")) throw SchemaError("model.gamma", "required key is missing");
  if (!jm.has("sigma2")) throw SchemaError("model.sigma2", "required key is missing");
  CoefficientFunction gamma = parse_coefficient(jm.child("gamma"), "model.gamma");
  CoefficientFunction sigma2 = parse_coefficient(jm.child("sigma2"), "model.sigma2");
  InitialDistribution m = jm.has("m") ? parse_initial(jm.child("m"), "model.m") : InitialDistribution::gaussian(0.0, 1.0);
  jm.done();

  Config cfg{MarketModel(gamma, sigma2, m), {}, {}, {}};

  Obj js = root.child("sim");
  cfg.sim.n = js.uint("n", cfg.sim.n);
  cfg.sim.dt = js.num("dt", cfg.sim.dt);
  cfg.sim.t_end = js.num("t_end", cfg.sim.t_end);
  cfg.sim.seed = js.uint("seed", cfg.sim.seed);
  cfg.sim.snapshot_times = js.nums("snapshot_times", {});
  if (js.str("scheme", "EulerRankFrozen") != "EulerRankFrozen") throw SchemaError("sim.scheme", "only EulerRankFrozen is available");
  js.done();
  try {
    validate(cfg.sim);
  } catch (const ConfigError& e) {
    throw SchemaError("sim", e.what());
  }

  Obj je = root.child("equilibrium");
  cfg.equilibrium.grid = je.uint("grid", cfg.equilibrium.grid);
  cfg.equilibrium.logit_range = je.num("logit_range", cfg.equilibrium.logit_range);
  cfg.equilibrium.critical_tol = je.num("critical_tol", cfg.equilibrium.critical_tol);
  je.done();
  if (cfg.equilibrium.grid < 17 || cfg.equilibrium.grid % 2 == 0) throw SchemaError("equilibrium.grid", "must be odd and >= 17");
  if (!(cfg.equilibrium.logit_range > 0.0 && cfg.equilibrium.logit_range < 700.0)) {
    throw SchemaError("equilibrium.logit_range", "must lie in (0, 700)");
  }
  if (!(cfg.equilibrium.critical_tol > 0.0)) throw SchemaError("equilibrium.critical_tol", "must be positive");

  Obj jx = root.child("experiment");
  ExperimentSpec& x = cfg.experiment;
  try {
    x.kind = experiment_kind_from(jx.str("kind", std::string(to_string(x.kind))));
  } catch (const DomainError& e) {
    throw SchemaError("experiment.kind", e.what());
  }
  x.p_grid = jx.nums("p_grid", x.p_grid);
  x.n_grid = jx.counts("n_grid", x.n_grid);
  x.replicas = jx.uint("replicas", x.replicas);
  x.times = jx.nums("times", x.times);
  const auto window = jx.nums("window", {x.window_lo, x.window_hi});
  if (window.size() != 2 || !(window[0] <= window[1])) throw SchemaError("experiment.window", "expected [lo, hi] with lo <= hi");
  x.window_lo = window[0];
  x.window_hi = window[1];
  x.record_every = jx.uint("record_every", x.record_every);
  x.tolerance = jx.num("tolerance", x.tolerance);
  x.interversion_tol = jx.num("interversion_tol", x.interversion_tol);
  x.supercritical_level = jx.num("supercritical_level", x.supercritical_level);
  x.fit_lo = jx.num("fit_lo", x.fit_lo);
  x.fit_hi = jx.num("fit_hi", x.fit_hi);
  x.closed_fit_lo = jx.num("closed_fit_lo", x.closed_fit_lo);
  x.closed_fit_hi = jx.num("closed_fit_hi", x.closed_fit_hi);
  x.compare_lo = jx.num("compare_lo", x.compare_lo);
  x.compare_hi = jx.num("compare_hi", x.compare_hi);
  x.slope_tol_closed = jx.num("slope_tol_closed", x.slope_tol_closed);
  x.slope_tol_empirical = jx.num("slope_tol_empirical", x.slope_tol_empirical);
  x.curve_tol = jx.num("curve_tol", x.curve_tol);
  x.w1_band = jx.num("w1_band", x.w1_band);
  x.exploratory = jx.boolean("exploratory", x.exploratory);
  jx.done();
  root.done();

  if (!std::is_sorted(x.p_grid.begin(), x.p_grid.end())) throw SchemaError("experiment.p_grid", "must be sorted");
  for (double p : x.p_grid) {
    if (!(p >= 0.0)) throw SchemaError("experiment.p_grid", "diversity indices must be >= 0");
  }
  if (x.replicas < 1) throw SchemaError("experiment.replicas", "must be >= 1");
  if (x.record_every < 1) throw SchemaError("experiment.record_every", "must be >= 1");
  for (std::size_t n : x.n_grid) {
    if (n < 1) throw SchemaError("experiment.n_grid", "particle counts must be >= 1");
  }
  return cfg;
}

json config_to_json(const Config& cfg) {
  const ExperimentSpec& x = cfg.experiment;
  json j;
  j["model"] = {{"gamma", coefficient_to_json(cfg.model.gamma())},
                {"sigma2", coefficient_to_json(cfg.model.sigma2())},
                {"m", initial_to_json(cfg.model.m())}};
  j["sim"] = {{"n", cfg.sim.n},
              {"dt", cfg.sim.dt},
              {"t_end", cfg.sim.t_end},
              {"seed", cfg.sim.seed},
              {"snapshot_times", cfg.sim.snapshot_times},
              {"scheme", std::string(to_string(cfg.sim.scheme))}};
  j["equilibrium"] = {{"grid", cfg.equilibrium.grid},
                      {"logit_range", cfg.equilibrium.logit_range},
                      {"critical_tol", cfg.equilibrium.critical_tol}};
  j["experiment"] = {{"kind", std::string(to_string(x.kind))},
                     {"p_grid", x.p_grid},
                     {"n_grid", x.n_grid},
                     {"replicas", x.replicas},
                     {"times", x.times},
                     {"window", {x.window_lo, x.window_hi}},
                     {"record_every", x.record_every},
                     {"tolerance", x.tolerance},
                     {"interversion_tol", x.interversion_tol},
                     {"supercritical_level", x.supercritical_level},
                     {"fit_lo", x.fit_lo},
                     {"fit_hi", x.fit_hi},
                     {"closed_fit_lo", x.closed_fit_lo},
                     {"closed_fit_hi", x.closed_fit_hi},
                     {"compare_lo", x.compare_lo},
                     {"compare_hi", x.compare_hi},
                     {"slope_tol_closed", x.slope_tol_closed},
                     {"slope_tol_empirical", x.slope_tol_empirical},
                     {"curve_tol", x.curve_tol},
                     {"w1_band", x.w1_band},
                     {"exploratory", x.exploratory}};
  return j;
}

json normalize_config(const json& raw) { return config_to_json(config_from_json(raw)); }

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // e.byte is the 1-based offset of the offending character
    std::size_t line = 1;
    std::size_t col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError("config: malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col), line,
                     col);
  }
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(parse_json_text(ss.str()));
}

std::string emit_config(const Config& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

json apply_overrides(json doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError(o, "override must look like key.path=value");
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      if (!node->is_object() || !node->contains(part)) throw SchemaError(key, "unknown key");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    *node = value;
  }
  return doc;
}

}  // namespace mfatlas
