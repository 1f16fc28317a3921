#pragma once

// fit / predict / score / simulate commands. Each one is a pure function of
// its inputs and seed; all randomness comes from named substreams.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sadr/evaluate.hpp"
#include "sadr/fit.hpp"
#include "sadr/io/artifact.hpp"
#include "sadr/io/config.hpp"
#include "sadr/io/csv.hpp"
#include "sadr/robust.hpp"

namespace sadr::cli {

namespace fs = std::filesystem;
using io::json;

struct FitArgs {
  std::string config;
  std::optional<std::string> data;
  std::optional<std::string> output;
  std::optional<std::uint64_t> seed;
  bool robust = false;
  std::optional<double> a_w;
  std::optional<double> b_w;
  std::optional<long> max_iterations;
};

struct PredictArgs {
  std::string fit;
  std::string data;
  std::string output;
  std::vector<double> quantiles{0.05, 0.5, 0.95};
  Index draws = 1000;
  std::optional<std::uint64_t> seed;
};

struct ScoreArgs {
  std::string fit;
  std::string data;
  std::optional<std::string> output;  // stdout when unset
  Index draws = 1000;
  int crps_draws = 100;
  std::optional<std::uint64_t> seed;
};

struct SimulateArgs {
  std::string fit;
  std::string data;
  std::string output;
  std::optional<std::uint64_t> seed;
  bool contaminate = false;
  double shift = 10.0;
  double fraction = 0.05;
};

/// Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("empirical quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline std::string level_name(double p) {
  std::ostringstream s;
  s << p;
  return s.str();
}

/// Reads the config, applies command-line overrides, fits, and writes
/// fit.json, trace.csv and (robust fits) weights.csv into the output directory.
inline json run_fit_command(const FitArgs& args) {
  io::RunConfig cfg = io::load_config(args.config);
  if (args.seed) {
    cfg.fit.optimizer.seed = *args.seed;
    cfg.source["optimizer"]["seed"] = *args.seed;
  }
  if (args.max_iterations) {
    cfg.fit.optimizer.max_iterations = *args.max_iterations;
    cfg.source["optimizer"]["max_iterations"] = *args.max_iterations;
  }
  if (args.robust || args.a_w || args.b_w) {
    RobustOptions r = cfg.fit.robust.value_or(RobustOptions{});
    if (args.a_w) r.hyper.a_w = *args.a_w;
    if (args.b_w) r.hyper.b_w = *args.b_w;
    r.hyper.validate();
    cfg.fit.robust = r;
    cfg.source["robust"]["enabled"] = true;
    cfg.source["robust"]["a_w"] = r.hyper.a_w;
    cfg.source["robust"]["b_w"] = r.hyper.b_w;
  }
  std::string data = args.data.value_or(cfg.data);
  if (data.empty()) throw io::ConfigError("no data file given");
  if (!args.data && fs::path(data).is_relative()) data = (fs::path(args.config).parent_path() / data).string();
  const std::string out_dir = args.output.value_or(cfg.output);

  const io::CsvTable table = io::read_csv(data);
  io::check_columns(cfg, table);
  const SadrModel model = io::build_model(cfg, table);
  const FitResult res = fit(model, cfg.fit);

  std::optional<VectorXd> w;
  if (res.weights) {
    Rng wrng = substream(cfg.fit.optimizer.seed, "weights");
    w = fitted_weights(*res.weights, wrng);
  }
  const json art = io::artifact_json(cfg, model, res, w ? &*w : nullptr);
  fs::create_directories(out_dir);
  io::save_json((fs::path(out_dir) / "fit.json").string(), art);

  io::CsvTable trace;
  std::vector<std::string> it, elbo, temp;
  for (std::size_t t = 0; t < res.run.elbo_trace.size(); ++t) {
    it.push_back(std::to_string(t + 1));
    elbo.push_back(io::format_double(res.run.elbo_trace[t]));
    temp.push_back(io::format_double(res.run.temperature_trace[t]));
  }
  trace.add_column("iteration", std::move(it));
  trace.add_column("elbo", std::move(elbo));
  trace.add_column("temperature", std::move(temp));
  io::write_csv((fs::path(out_dir) / "trace.csv").string(), trace);

  if (w) {
    io::CsvTable wt;
    std::vector<std::string> row, val;
    for (Index i = 0; i < w->size(); ++i) {
      row.push_back(std::to_string(i + 1));
      val.push_back(io::format_double((*w)[i]));
    }
    wt.add_column("row", std::move(row));
    wt.add_column("weight", std::move(val));
    io::write_csv((fs::path(out_dir) / "weights.csv").string(), wt);
  }
  return {{"iterations", res.run.iterations},
          {"converged", res.run.converged},
          {"hybrid", res.hybrid},
          {"elbo", res.final_elbo(cfg.fit.optimizer.window)},
          {"output", (fs::path(out_dir) / "fit.json").string()}};
}

/// Predictive means and quantiles per row with 95% credible intervals.
inline io::CsvTable predict_table(const io::FitArtifact& art, const io::CsvTable& data, const PredictArgs& args) {
  if (args.draws < 1) throw std::invalid_argument("at least one posterior draw is required");
  for (double p : args.quantiles)
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile levels must lie in (0, 1)");
  std::vector<double> levels = args.quantiles;
  std::sort(levels.begin(), levels.end());
  Rng rng = substream(args.seed.value_or(art.seed), "predict");
  const PredictorMap map = art.predictor_map(data);
  const PosteriorSamples ps = PosteriorSamples::from_beta(map, art.beta_draws(args.draws, rng));
  const std::size_t n = data.rows();

  std::vector<std::vector<std::string>> cols(3 + 3 * levels.size());
  std::vector<double> buf(static_cast<std::size_t>(ps.draws()));
  auto summarize = [&](std::size_t c0) {
    double m = 0.0;
    for (double v : buf) m += v;
    m /= static_cast<double>(buf.size());
    cols[c0].push_back(io::format_double(m));
    cols[c0 + 1].push_back(io::format_double(empirical_quantile(buf, 0.025)));
    cols[c0 + 2].push_back(io::format_double(empirical_quantile(buf, 0.975)));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Index>(i);
    for (Index s = 0; s < ps.draws(); ++s) buf[static_cast<std::size_t>(s)] = art.family.mean(ps.at(s, ii));
    summarize(0);
    for (std::size_t q = 0; q < levels.size(); ++q) {
      for (Index s = 0; s < ps.draws(); ++s)
        buf[static_cast<std::size_t>(s)] = art.family.quantile(levels[q], ps.at(s, ii));
      summarize(3 + 3 * q);
    }
  }
  io::CsvTable out;
  std::vector<std::string> row;
  for (std::size_t i = 0; i < n; ++i) row.push_back(std::to_string(i + 1));
  out.add_column("row", std::move(row));
  out.add_column("mean", std::move(cols[0]));
  out.add_column("mean_lower", std::move(cols[1]));
  out.add_column("mean_upper", std::move(cols[2]));
  for (std::size_t q = 0; q < levels.size(); ++q) {
    const std::string name = "q" + level_name(levels[q]);
    out.add_column(name, std::move(cols[3 + 3 * q]));
    out.add_column(name + "_lower", std::move(cols[4 + 3 * q]));
    out.add_column(name + "_upper", std::move(cols[5 + 3 * q]));
  }
  return out;
}

inline void run_predict_command(const PredictArgs& args) {
  const io::FitArtifact art = io::load_artifact(args.fit);
  io::write_csv(args.output, predict_table(art, io::read_csv(args.data), args));
}

/// {ls, crps, waic, l_waic, p_waic, n, draws}; crps is null for discrete families.
inline json score_report(const io::FitArtifact& art, const io::CsvTable& data, const ScoreArgs& args) {
  if (!data.has(art.response)) throw std::invalid_argument("response column '" + art.response + "' not in data");
  Rng rng = substream(args.seed.value_or(art.seed), "scoring");
  const PredictorMap map = art.predictor_map(data);
  const PosteriorSamples ps = PosteriorSamples::from_beta(map, art.beta_draws(args.draws, rng));
  const auto yv = data.numeric(art.response);
  const VectorXd y = Eigen::Map<const VectorXd>(yv.data(), static_cast<Index>(yv.size()));
  const MatrixXd ll = loglik_matrix(art.family, ps, y);
  const WaicResult w = waic(ll);
  json r;
  r["ls"] = log_score(ll);
  if (art.family.discrete())
    r["crps"] = nullptr;
  else
    r["crps"] = crps(art.family, ps, y, args.crps_draws, rng);
  r["waic"] = w.waic;
  r["l_waic"] = w.lppd;
  r["p_waic"] = w.p_waic;
  r["n"] = data.rows();
  r["draws"] = args.draws;
  return r;
}

inline std::string run_score_command(const ScoreArgs& args) {
  const io::FitArtifact art = io::load_artifact(args.fit);
  const std::string text = score_report(art, io::read_csv(args.data), args).dump(1) + "\n";
  if (args.output) {
    std::ofstream out(*args.output, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + *args.output + "'");
    out << text;
  }
  return text;
}

/// Replicate of the source table with the response redrawn from the fitted
/// model at the posterior mean; optionally ceil(fraction * n) rows shifted.
inline io::CsvTable simulate_table(const io::FitArtifact& art, io::CsvTable data, const SimulateArgs& args) {
  if (!(args.fraction >= 0.0 && args.fraction <= 1.0)) throw std::invalid_argument("fraction must lie in [0, 1]");
  Rng rng = substream(args.seed.value_or(art.seed), "simulate");
  const PredictorMap map = art.predictor_map(data);
  const RowMatrixXd eta = map.predictors(art.beta_mean());
  const std::size_t n = data.rows();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Index>(i);
    y[i] = art.family.sample({eta(ii, 0), eta(ii, 1)}, rng);
  }
  std::vector<std::string> flag(n, "0");
  if (args.contaminate) {
    const auto m = static_cast<Index>(std::ceil(args.fraction * static_cast<double>(n) - 1e-9));
    if (m > 0)
      for (Index i : subsample(rng, static_cast<Index>(n), m)) {
        y[static_cast<std::size_t>(i)] += args.shift;
        flag[static_cast<std::size_t>(i)] = "1";
      }
  }
  std::vector<std::string> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = io::format_double(y[i]);
  if (data.has(art.response))
    data.set_column(art.response, std::move(ys));
  else
    data.add_column(art.response, std::move(ys));
  if (args.contaminate) {
    if (data.has("contaminated"))
      data.set_column("contaminated", std::move(flag));
    else
      data.add_column("contaminated", std::move(flag));
  }
  return data;
}

inline void run_simulate_command(const SimulateArgs& args) {
  const io::FitArtifact art = io::load_artifact(args.fit);
  io::write_csv(args.output, simulate_table(art, io::read_csv(args.data), args));
}

}  // namespace sadr::cli
