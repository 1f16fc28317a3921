#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "sadr/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Structured additive distributional regression by stochastic-gradient variational inference"};
  app.require_subcommand(1);

  sadr::cli::FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit a model described by a JSON config");
  fit->add_option("-c,--config", fa.config, "config file")->required()->check(CLI::ExistingFile);
  fit->add_option("--data", fa.data, "training CSV (overrides the config)");
  fit->add_option("-o,--out", fa.output, "output directory (overrides the config)");
  fit->add_option("--seed", fa.seed, "master seed");
  fit->add_option("--max-iter", fa.max_iterations, "iteration cap");
  fit->add_flag("--robust", fa.robust, "robust fitting by data re-weighting");
  fit->add_option("--a-w", fa.a_w, "beta prior a_w for the weights");
  fit->add_option("--b-w", fa.b_w, "beta prior b_w for the weights");

  sadr::cli::PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "predictive means and quantiles for new rows");
  predict->add_option("-f,--fit", pa.fit, "fit artifact")->required()->check(CLI::ExistingFile);
  predict->add_option("-d,--data", pa.data, "covariate CSV")->required()->check(CLI::ExistingFile);
  predict->add_option("-o,--out", pa.output, "output CSV")->required();
  predict->add_option("-q,--quantiles", pa.quantiles, "quantile levels")->delimiter(',');
  predict->add_option("--draws", pa.draws, "posterior draws");
  predict->add_option("--seed", pa.seed, "seed (default: the fit seed)");

  sadr::cli::ScoreArgs sa;
  auto* score = app.add_subcommand("score", "log score, CRPS and WAIC on an evaluation CSV");
  score->add_option("-f,--fit", sa.fit, "fit artifact")->required()->check(CLI::ExistingFile);
  score->add_option("-d,--data", sa.data, "evaluation CSV")->required()->check(CLI::ExistingFile);
  score->add_option("-o,--out", sa.output, "JSON report (default: stdout)");
  score->add_option("--draws", sa.draws, "posterior draws");
  score->add_option("--crps-draws", sa.crps_draws, "predictive draws per posterior draw");
  score->add_option("--seed", sa.seed, "seed (default: the fit seed)");

  sadr::cli::SimulateArgs ma;
  auto* simulate = app.add_subcommand("simulate", "replicate data set from a fitted model");
  simulate->add_option("-f,--fit", ma.fit, "fit artifact")->required()->check(CLI::ExistingFile);
  simulate->add_option("-d,--data", ma.data, "source CSV supplying the covariates")->required()->check(CLI::ExistingFile);
  simulate->add_option("-o,--out", ma.output, "output CSV")->required();
  simulate->add_option("--seed", ma.seed, "seed (default: the fit seed)");
  simulate->add_flag("--contaminate", ma.contaminate, "shift a fraction of responses");
  simulate->add_option("--shift", ma.shift, "contamination shift");
  simulate->add_option("--fraction", ma.fraction, "contaminated fraction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) {
      std::cout << sadr::cli::run_fit_command(fa).dump(1) << '\n';
    } else if (*predict) {
      sadr::cli::run_predict_command(pa);
    } else if (*score) {
      const std::string report = sadr::cli::run_score_command(sa);
      if (!sa.output) std::cout << report;
    } else if (*simulate) {
      sadr::cli::run_simulate_command(ma);
    }
  } catch (const sadr::io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
