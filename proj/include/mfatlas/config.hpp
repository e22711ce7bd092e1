#pragma once

// JSON run configuration. Parsing is strict: unknown keys, wrong types and
// out-of-range values raise SchemaError with the offending key path; broken
// JSON raises ParseError with line and column.
//
// Layout (every key optional except model.gamma and model.sigma2):
//   {
//     "model": {"gamma": COEF, "sigma2": COEF, "m": INIT},
//     "sim": {"n", "dt", "t_end", "seed", "snapshot_times", "scheme"},
//     "equilibrium": {"grid", "logit_range", "critical_tol"},
//     "experiment": {"kind", "p_grid", "n_grid", "replicas", "times", "window", ...}
//   }
// COEF is {"kind": "constant", "c"} | {"kind": "linear", "a", "b"} |
// {"kind": "atlas_alpha", "g", "alpha"} | {"kind": "example31"} |
// {"kind": "example51_sigma2", "g", "alpha"} | {"kind": "tabulated", "knots": [[u, v], ...]}.
// INIT is {"kind": "gaussian", "mean", "sd"} | {"kind": "uniform", "lo", "hi"} |
// {"kind": "shifted_exponential", "rate", "shift", "sign"} |
// {"kind": "equilibrium", "mean"} | {"kind": "tabulated_quantile", "knots": [[u, y], ...]}.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mfatlas/experiments.hpp"

namespace mfatlas {

/// Defaults filled in, keys sorted.
nlohmann::json normalize_config(const nlohmann::json& raw);
Config config_from_json(const nlohmann::json& raw);
nlohmann::json config_to_json(const Config& cfg);

/// Parses text; ParseError carries 1-based line and column.
nlohmann::json parse_json_text(std::string_view text);
Config load_config(const std::filesystem::path& path);
/// Normalized form, pretty-printed with a trailing newline.
std::string emit_config(const Config& cfg);

/// Applies "a.b.c=value" overrides to a normalized document. The value is
/// read as JSON when it parses, else as a string. The key must exist.
nlohmann::json apply_overrides(nlohmann::json doc, const std::vector<std::string>& overrides);

nlohmann::json coefficient_to_json(const CoefficientFunction& f);
nlohmann::json initial_to_json(const InitialDistribution& m);

}  // namespace mfatlas
