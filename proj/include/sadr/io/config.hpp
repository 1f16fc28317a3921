#pragma once

// JSON run configuration: data, family, one formula block per distributional
// parameter, and VA / optimizer / robust settings.
//
//   {
//     "data": "train.csv", "response": "y", "family": "gaussian",
//     "formula": {
//       "mu":    [{"kind": "intercept"}, {"kind": "pspline", "covariates": ["x"], "dim": 10}],
//       "sigma": [{"kind": "intercept"}, {"kind": "linear", "covariates": ["z"]}]
//     },
//     "offset": {"mu": "log_exposure"},
//     "va": {"factors": 5, "hybrid": "auto"},
//     "optimizer": {"draws": 1, "seed": 1, "t0": 1},
//     "robust": {"enabled": false}
//   }

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadr/design.hpp"
#include "sadr/family.hpp"
#include "sadr/fit.hpp"
#include "sadr/io/csv.hpp"
#include "sadr/model.hpp"
#include "sadr/prior.hpp"

namespace sadr::io {

using nlohmann::json;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FormulaTerm {
  TermSpec spec;
  int parameter = 0;
};

struct RunConfig {
  std::string data;
  std::string response = "y";
  std::string family = "gaussian";
  std::vector<FormulaTerm> terms;
  std::vector<std::string> offsets;  // per parameter; empty: none
  FitOptions fit;
  std::string output = ".";
  json source;  // the document as given, echoed into artifacts
};

namespace detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

inline Hyperprior parse_prior(const json& j) {
  if (j.is_null()) return InverseGamma{};
  const std::string type = get_or<std::string>(j, "type", "inverse_gamma");
  Hyperprior h;
  if (type == "inverse_gamma" || type == "ig")
    h = InverseGamma{get_or(j, "a", 0.001), get_or(j, "b", 0.001)};
  else if (type == "weibull" || type == "scale_dependent")
    h = ScaleDependentWeibull{get_or(j, "shape", 0.5), get_or(j, "scale", 0.0088)};
  else if (type == "fixed")
    h = FixedVariance{get_or(j, "tau2", 1.0)};
  else
    throw ConfigError("unknown hyperprior type '" + type + "'");
  try {
    validate(h);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return h;
}

inline MrfGraph parse_graph(const json& j) {
  if (!j.is_object()) throw ConfigError("mrf term needs a 'graph' object mapping region -> neighbour list");
  std::map<std::string, std::vector<std::string>> nb;
  for (auto it = j.begin(); it != j.end(); ++it) nb[it.key()] = it.value().get<std::vector<std::string>>();
  try {
    return MrfGraph::from_neighbours(nb);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline TermSpec parse_term(const json& j) {
  TermSpec s;
  try {
    s.kind = term_kind_from_string(get_or<std::string>(j, "kind", ""));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  s.covariates = get_or(j, "covariates", std::vector<std::string>{});
  if (j.contains("covariate")) s.covariates = {j["covariate"].get<std::string>()};
  if (j.contains("dim")) {
    if (j["dim"].is_array())
      s.basis_dim = j["dim"].get<std::vector<int>>();
    else
      s.basis_dim = {j["dim"].get<int>()};
  }
  s.degree = get_or(j, "degree", 3);
  s.penalty_order = get_or(j, "order", 2);
  const std::string coding = get_or<std::string>(j, "coding", "dummy");
  if (coding == "dummy")
    s.coding = Coding::dummy;
  else if (coding == "effect")
    s.coding = Coding::effect;
  else
    throw ConfigError("unknown coding '" + coding + "'");
  if (j.contains("range")) {
    const auto r = j["range"].get<std::vector<double>>();
    if (r.size() != 2) throw ConfigError("'range' needs two numbers");
    s.cyclic_range = std::make_pair(r[0], r[1]);
  }
  if (s.kind == TermKind::mrf) s.graph = parse_graph(j.value("graph", json()));
  s.hyperprior = parse_prior(j.value("prior", json()));
  s.label = get_or<std::string>(j, "label", "");
  std::size_t need = 0;
  switch (s.kind) {
    case TermKind::intercept: need = 0; break;
    case TermKind::tensor_pspline: need = 2; break;
    default: need = 1;
  }
  if (s.covariates.size() != need)
    throw ConfigError(to_string(s.kind) + " term needs " + std::to_string(need) + " covariate(s)");
  return s;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  RunConfig c;
  c.source = j;
  c.data = detail::get_or<std::string>(j, "data", "");
  c.response = detail::get_or<std::string>(j, "response", "y");
  c.family = detail::get_or<std::string>(j, "family", "gaussian");
  Family fam;
  try {
    fam = Family::from_name(c.family);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!j.contains("formula") || !j["formula"].is_object()) throw ConfigError("config needs a 'formula' object");
  const json& f = j["formula"];
  for (auto it = f.begin(); it != f.end(); ++it) {
    int k = -1;
    for (int q = 0; q < Family::K; ++q)
      if (fam.parameter_name(q) == it.key()) k = q;
    if (k < 0) throw ConfigError("family " + fam.name() + " has no parameter '" + it.key() + "'");
  }
  for (int k = 0; k < Family::K; ++k) {
    const std::string name = fam.parameter_name(k);
    if (!f.contains(name)) continue;
    for (const auto& t : f[name]) c.terms.push_back({detail::parse_term(t), k});
  }

  c.offsets.assign(Family::K, "");
  const json off = j.value("offset", json::object());
  for (auto it = off.begin(); it != off.end(); ++it) {
    int k = -1;
    for (int q = 0; q < Family::K; ++q)
      if (fam.parameter_name(q) == it.key()) k = q;
    if (k < 0) throw ConfigError("family " + fam.name() + " has no parameter '" + it.key() + "'");
    c.offsets[static_cast<std::size_t>(k)] = it.value().get<std::string>();
  }

  const json va = j.value("va", json::object());
  c.fit.factors = detail::get_or<Index>(va, "factors", 5);
  c.fit.d0 = detail::get_or(va, "d0", 0.1);
  c.fit.warm_start = detail::get_or(va, "warm_start", false);
  if (va.contains("hybrid") && !va["hybrid"].is_null()) {
    if (va["hybrid"].is_boolean())
      c.fit.hybrid = va["hybrid"].get<bool>();
    else if (va["hybrid"] != "auto")
      throw ConfigError("va.hybrid must be true, false or \"auto\"");
  }
  if (c.fit.factors < 0 || !(c.fit.d0 != 0.0)) throw ConfigError("va.factors must be >= 0 and va.d0 non-zero");

  const json op = j.value("optimizer", json::object());
  auto& o = c.fit.optimizer;
  o.draws = detail::get_or(op, "draws", 1);
  o.subsample.n_sub = detail::get_or<Index>(op, "n_sub", 0);
  const double t0 = detail::get_or(op, "t0", 1.0);
  if (t0 < 1.0) throw ConfigError("optimizer.t0 must be >= 1");
  if (t0 > 1.0)
    o.anneal = AnnealSchedule{t0, detail::get_or(op, "anneal_interval", 100L), detail::get_or(op, "anneal_end", 9000L)};
  o.max_iterations = detail::get_or(op, "max_iterations", 50000L);
  o.window = detail::get_or<std::size_t>(op, "window", 1000);
  o.tolerance = detail::get_or(op, "tolerance", 1e-4);
  o.seed = detail::get_or<std::uint64_t>(op, "seed", 1);
  if (o.draws < 1 || o.window < 1 || o.max_iterations < 1) throw ConfigError("optimizer settings must be positive");

  const json rb = j.value("robust", json::object());
  if (detail::get_or(rb, "enabled", false)) {
    RobustOptions r;
    r.hyper = {detail::get_or(rb, "a_w", 0.2), detail::get_or(rb, "b_w", 0.01)};
    r.init_weight = detail::get_or(rb, "init_weight", 0.98);
    const std::string scale = detail::get_or<std::string>(rb, "init_scale", "weight");
    if (scale != "weight" && scale != "logit") throw ConfigError("robust.init_scale must be \"weight\" or \"logit\"");
    r.init_weight_scale = scale == "weight";
    r.init_rho = detail::get_or(rb, "init_rho", 1.0);
    if (!(r.hyper.a_w > 0.0 && r.hyper.b_w > 0.0)) throw ConfigError("robust.a_w and robust.b_w must be positive");
    if (r.init_weight_scale && !(r.init_weight > 0.0 && r.init_weight < 1.0))
      throw ConfigError("robust.init_weight must lie in (0, 1) on the weight scale");
    c.fit.robust = r;
  }
  c.output = detail::get_or<std::string>(j, "output", ".");
  if (c.fit.hybrid.value_or(false))
    for (const auto& t : c.terms)
      if (!is_inverse_gamma(t.spec.hyperprior) && !is_fixed(t.spec.hyperprior))
        throw ConfigError("Gibbs path requires inverse gamma hyperpriors");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

/// Checks that every referenced column exists and the response is numeric.
inline void check_columns(const RunConfig& c, const CsvTable& t, bool need_response = true) {
  if (need_response && !t.has(c.response)) throw ConfigError("response column '" + c.response + "' not in data");
  for (const auto& term : c.terms)
    for (const auto& cov : term.spec.covariates)
      if (!t.has(cov)) throw ConfigError("covariate column '" + cov + "' not in data");
  for (const auto& o : c.offsets)
    if (!o.empty() && !t.has(o)) throw ConfigError("offset column '" + o + "' not in data");
}

/// Offset columns per parameter (zeros where none is configured).
inline std::vector<VectorXd> offset_vectors(const std::vector<std::string>& names, const CsvTable& t) {
  std::vector<VectorXd> out(Family::K, VectorXd::Zero(static_cast<Index>(t.rows())));
  for (std::size_t k = 0; k < names.size() && k < out.size(); ++k) {
    if (names[k].empty()) continue;
    const auto v = t.numeric(names[k]);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (std::isnan(v[i])) throw std::invalid_argument("missing offset at row " + std::to_string(i + 1));
      out[k][static_cast<Index>(i)] = v[i];
    }
  }
  return out;
}

/// Covariate columns for one term, owned; data() views them.
struct TermColumns {
  std::vector<std::vector<double>> numeric;
  std::vector<std::string> labels;

  TermData data() const {
    TermData d;
    for (const auto& v : numeric) d.numeric.emplace_back(v);
    d.labels = labels;
    return d;
  }
};

inline TermColumns term_columns(const TermSpec& spec, const CsvTable& t) {
  TermColumns c;
  switch (spec.kind) {
    case TermKind::intercept: c.numeric.push_back(std::vector<double>(t.rows(), 1.0)); break;
    case TermKind::categorical:
    case TermKind::mrf: c.labels = t.text(spec.covariates.at(0)); break;
    default:
      for (const auto& cov : spec.covariates) c.numeric.push_back(t.numeric(cov));
  }
  return c;
}

inline VectorXd response_vector(const RunConfig& c, const CsvTable& t) {
  const auto y = t.numeric(c.response);
  VectorXd out(static_cast<Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::isnan(y[i])) throw std::invalid_argument("missing response at row " + std::to_string(i + 1));
    out[static_cast<Index>(i)] = y[i];
  }
  return out;
}

inline SadrModel build_model(const RunConfig& c, const CsvTable& t) {
  check_columns(c, t);
  std::vector<ModelTerm> terms;
  for (const auto& ft : c.terms) {
    const TermColumns cols = term_columns(ft.spec, t);
    terms.push_back({build_term(ft.spec, cols.data()), ft.spec.hyperprior, ft.parameter});
  }
  return SadrModel(Family::from_name(c.family), response_vector(c, t), std::move(terms), offset_vectors(c.offsets, t));
}

}  // namespace sadr::io
