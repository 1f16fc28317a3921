#pragma once

// Fit artifact: everything needed to predict, score and simulate without the
// training data. Stored as JSON with an embedded format version.

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadr/design.hpp"
#include "sadr/evaluate.hpp"
#include "sadr/family.hpp"
#include "sadr/fit.hpp"
#include "sadr/io/config.hpp"
#include "sadr/io/csv.hpp"
#include "sadr/model.hpp"
#include "sadr/robust.hpp"
#include "sadr/vi.hpp"

namespace sadr::io {

inline constexpr int kFormatVersion = 1;

inline json to_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

inline MatrixXd matrix_from_json(const json& j, Index cols_if_empty = 0) {
  const Index r = static_cast<Index>(j.size());
  const Index c = r ? static_cast<Index>(j[0].size()) : cols_if_empty;
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i) {
    const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Index>(row.size()) != c) throw std::invalid_argument("ragged matrix in artifact");
    for (Index k = 0; k < c; ++k) m(i, k) = row[static_cast<std::size_t>(k)];
  }
  return m;
}

inline json prior_to_json(const Hyperprior& h) {
  if (const auto* ig = std::get_if<InverseGamma>(&h)) return {{"type", "inverse_gamma"}, {"a", ig->a}, {"b", ig->b}};
  if (const auto* w = std::get_if<ScaleDependentWeibull>(&h))
    return {{"type", "weibull"}, {"shape", w->shape}, {"scale", w->scale}};
  return {{"type", "fixed"}, {"tau2", std::get<FixedVariance>(h).tau2}};
}

/// Term metadata in an artifact; `block` carries no design rows.
struct ArtifactTerm {
  DesignBlock block;
  int parameter = 0;
  Index offset = 0;
  Index tau_index = -1;
  Hyperprior prior;
};

struct FitArtifact {
  json config;
  std::uint64_t seed = 1;
  Family family;
  std::string response;
  std::vector<std::string> offsets;
  std::vector<ArtifactTerm> terms;
  Index p_beta = 0;
  Index p_tau = 0;
  bool hybrid = false;
  FactorGaussianVA va;
  std::optional<WeightVA> weights;
  VectorXd fitted_weights;
  std::vector<double> elbo_trace;
  std::vector<double> temperature_trace;
  long iterations = 0;
  bool converged = false;

  /// Design matrices of every term at the rows of a table.
  PredictorMap predictor_map(const CsvTable& t) const {
    PredictorMap m;
    for (const auto& term : terms) {
      TermSpec spec;
      spec.kind = term.block.kind;
      spec.covariates = term.block.covariates;
      for (const auto& cov : spec.covariates)
        if (!t.has(cov)) throw std::invalid_argument("covariate column '" + cov + "' not in data");
      const TermColumns cols = term_columns(spec, t);
      m.blocks.push_back({evaluate_design(term.block, cols.data()), term.parameter, term.offset});
    }
    for (const auto& o : offsets)
      if (!o.empty() && !t.has(o)) throw std::invalid_argument("offset column '" + o + "' not in data");
    const auto off = offset_vectors(offsets, t);
    for (int k = 0; k < Family::K; ++k) m.offsets[k] = off[static_cast<std::size_t>(k)];
    return m;
  }

  /// S draws of beta from the variational posterior.
  MatrixXd beta_draws(Index count, Rng& rng) const {
    MatrixXd out(count, p_beta);
    for (Index s = 0; s < count; ++s)
      out.row(s) = reparam_sample(va, NoiseDraw::draw(rng, va.dim(), va.factors())).head(p_beta).transpose();
    return out;
  }

  VectorXd beta_mean() const { return va.mu.head(p_beta); }
};

inline json artifact_json(const RunConfig& cfg, const SadrModel& model, const FitResult& fit,
                          const VectorXd* fitted_weights = nullptr) {
  json j;
  j["format_version"] = kFormatVersion;
  j["config"] = cfg.source;
  j["seed"] = cfg.fit.optimizer.seed;
  j["family"] = model.family().name();
  j["response"] = cfg.response;
  j["offsets"] = cfg.offsets;
  j["hybrid"] = fit.hybrid;
  j["p_beta"] = model.layout().p_beta;
  j["p_tau"] = model.layout().p_tau();
  json terms = json::array();
  for (std::size_t t = 0; t < model.terms().size(); ++t) {
    const auto& mt = model.terms()[t];
    const auto& b = mt.block;
    json margins = json::array();
    for (const auto& m : b.margins)
      margins.push_back({{"lo", m.lo}, {"hi", m.hi}, {"dim", m.dim}, {"degree", m.degree}, {"order", m.order},
                         {"cyclic", m.cyclic}});
    terms.push_back({{"label", b.label},
                     {"kind", to_string(b.kind)},
                     {"parameter", mt.parameter},
                     {"covariates", b.covariates},
                     {"offset", model.layout().beta[t].offset},
                     {"size", model.layout().beta[t].size},
                     {"tau_index", model.layout().tau_of_term[t]},
                     {"rank", b.rank},
                     {"prior", prior_to_json(mt.prior)},
                     {"margins", margins},
                     {"levels", b.levels},
                     {"coding", b.coding == Coding::dummy ? "dummy" : "effect"},
                     {"transform", to_json(b.transform)}});
  }
  j["terms"] = terms;
  j["va"] = {{"mu", to_json(fit.va.mu)}, {"B", to_json(fit.va.B)}, {"d", to_json(fit.va.d)}};
  if (fit.weights) {
    j["weights"] = {{"mu", to_json(fit.weights->mu)}, {"rho", to_json(fit.weights->rho)}};
    if (fitted_weights) j["weights"]["fitted"] = to_json(*fitted_weights);
  } else {
    j["weights"] = nullptr;
  }
  j["trace"] = {{"elbo", fit.run.elbo_trace}, {"temperature", fit.run.temperature_trace}};
  j["iterations"] = fit.run.iterations;
  j["converged"] = fit.run.converged;
  return j;
}

inline FitArtifact artifact_from_json(const json& j) {
  if (j.value("format_version", 0) != kFormatVersion) throw std::invalid_argument("unsupported artifact format version");
  FitArtifact a;
  a.config = j.at("config");
  a.seed = j.at("seed").get<std::uint64_t>();
  a.family = Family::from_name(j.at("family").get<std::string>());
  a.response = j.at("response").get<std::string>();
  a.offsets = j.at("offsets").get<std::vector<std::string>>();
  a.hybrid = j.at("hybrid").get<bool>();
  a.p_beta = j.at("p_beta").get<Index>();
  a.p_tau = j.at("p_tau").get<Index>();
  for (const auto& t : j.at("terms")) {
    ArtifactTerm at;
    at.block.label = t.at("label").get<std::string>();
    at.block.kind = term_kind_from_string(t.at("kind").get<std::string>());
    at.block.covariates = t.at("covariates").get<std::vector<std::string>>();
    at.block.rank = t.at("rank").get<Index>();
    for (const auto& m : t.at("margins"))
      at.block.margins.push_back({m.at("lo").get<double>(), m.at("hi").get<double>(), m.at("dim").get<int>(),
                                  m.at("degree").get<int>(), m.at("order").get<int>(), m.at("cyclic").get<bool>()});
    at.block.levels = t.at("levels").get<std::vector<std::string>>();
    at.block.coding = t.at("coding").get<std::string>() == "effect" ? Coding::effect : Coding::dummy;
    at.block.transform = matrix_from_json(t.at("transform"));
    at.parameter = t.at("parameter").get<int>();
    at.offset = t.at("offset").get<Index>();
    at.tau_index = t.at("tau_index").get<Index>();
    at.prior = detail::parse_prior(t.at("prior"));
    a.terms.push_back(std::move(at));
  }
  const json& va = j.at("va");
  const VectorXd mu = vector_from_json(va.at("mu"));
  const MatrixXd b = matrix_from_json(va.at("B"));
  a.va = FactorGaussianVA(mu.size(), b.cols(), 0.0);
  a.va.mu = mu;
  a.va.B = b;
  a.va.d = vector_from_json(va.at("d"));
  if (!j.at("weights").is_null()) {
    WeightVA w;
    w.mu = vector_from_json(j["weights"].at("mu"));
    w.rho = vector_from_json(j["weights"].at("rho"));
    a.weights = w;
    if (j["weights"].contains("fitted")) a.fitted_weights = vector_from_json(j["weights"]["fitted"]);
  }
  a.elbo_trace = j.at("trace").at("elbo").get<std::vector<double>>();
  a.temperature_trace = j.at("trace").at("temperature").get<std::vector<double>>();
  a.iterations = j.at("iterations").get<long>();
  a.converged = j.at("converged").get<bool>();
  return a;
}

inline void save_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(1) << '\n';
}

inline FitArtifact load_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open artifact '" + path + "'");
  return artifact_from_json(json::parse(in));
}

}  // namespace sadr::io
