#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sadr/cli.hpp"

namespace sadr {
namespace {

namespace fs = std::filesystem;
using io::json;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Temporary working directory with a data set and a config file.
class CliTest : public ::testing::Test {
 protected:
  fs::path dir;
  std::size_t n = 150;
  double ybar = 0.0;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("sadr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    Rng rng = substream(111, "cli");
    io::CsvTable t;
    std::vector<std::string> y, x, ls;
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = std::uniform_real_distribution<double>(0, 1)(rng);
      const double yv = 2.0 + 0.5 * standard_normal(rng);
      ybar += yv / static_cast<double>(n);
      x.push_back(io::format_double(xv));
      y.push_back(io::format_double(yv));
      ls.push_back(io::format_double(std::log(0.5)));
    }
    t.add_column("y", y);
    t.add_column("x", x);
    t.add_column("ls", ls);
    io::write_csv((dir / "data.csv").string(), t);
  }
  void TearDown() override { fs::remove_all(dir); }

  /// Conjugate location model: flat intercept on mu, known sigma through an offset.
  std::string write_config(const json& extra = json::object()) {
    json j = json::parse(R"({
      "data": "data.csv", "response": "y", "family": "gaussian",
      "formula": {"mu": [{"kind": "intercept"}]},
      "offset": {"sigma": "ls"},
      "optimizer": {"draws": 3, "seed": 5, "max_iterations": 6000}
    })");
    j.merge_patch(extra);
    j["output"] = (dir / "out").string();
    const std::string path = (dir / "config.json").string();
    std::ofstream(path) << j.dump(1);
    return path;
  }

  io::FitArtifact fit_once(const json& extra = json::object()) {
    cli::FitArgs a;
    a.config = write_config(extra);
    cli::run_fit_command(a);
    return io::load_artifact((dir / "out" / "fit.json").string());
  }
};

TEST_F(CliTest, FitWritesArtifactAndTrace) {
  cli::FitArgs a;
  a.config = write_config();
  const json r = cli::run_fit_command(a);
  EXPECT_TRUE(fs::exists(dir / "out" / "fit.json"));
  const auto trace = io::read_csv((dir / "out" / "trace.csv").string());
  EXPECT_EQ(trace.header, (std::vector<std::string>{"iteration", "elbo", "temperature"}));
  EXPECT_EQ(static_cast<long>(trace.rows()), r["iterations"].get<long>());
  EXPECT_FALSE(fs::exists(dir / "out" / "weights.csv"));
}

TEST_F(CliTest, FitIsByteIdenticalOnRerun) {
  cli::FitArgs a;
  a.config = write_config();
  cli::run_fit_command(a);
  const std::string first = slurp(dir / "out" / "fit.json");
  const std::string trace = slurp(dir / "out" / "trace.csv");
  cli::run_fit_command(a);
  EXPECT_EQ(slurp(dir / "out" / "fit.json"), first);
  EXPECT_EQ(slurp(dir / "out" / "trace.csv"), trace);
  a.seed = 6;
  cli::run_fit_command(a);
  EXPECT_NE(slurp(dir / "out" / "fit.json"), first);
}

TEST_F(CliTest, SmokeFitHasFlatMedianTail) {
  const io::FitArtifact art = fit_once({{"formula", {{"mu", {{{"kind", "intercept"}}, {{"kind", "pspline"}, {"covariates", {"x"}}}}}}}});
  const auto& tr = art.elbo_trace;
  ASSERT_GE(tr.size(), 2000u);
  auto median = [&](std::size_t from) {
    std::vector<double> v(tr.begin() + static_cast<std::ptrdiff_t>(from), tr.begin() + static_cast<std::ptrdiff_t>(from + 1000));
    std::nth_element(v.begin(), v.begin() + 500, v.end());
    return v[500];
  };
  const double last = median(tr.size() - 1000), before = median(tr.size() - 2000);
  EXPECT_TRUE(std::isfinite(last));
  EXPECT_LT(std::abs(last - before), 1.0);
}

TEST_F(CliTest, InvalidColumnFailsBeforeCompute) {
  cli::FitArgs a;
  a.config = write_config({{"formula", {{"sigma", {{{"kind", "linear"}, {"covariates", {"nope"}}}}}}}});
  EXPECT_THROW(cli::run_fit_command(a), io::ConfigError);
  EXPECT_FALSE(fs::exists(dir / "out" / "fit.json"));
}

TEST_F(CliTest, RobustFitWritesWeights) {
  cli::FitArgs a;
  a.config = write_config({{"optimizer", {{"max_iterations", 200}}}});
  a.robust = true;
  a.b_w = 0.05;
  cli::run_fit_command(a);
  const auto w = io::read_csv((dir / "out" / "weights.csv").string());
  EXPECT_EQ(w.rows(), n);
  for (double v : w.numeric("weight")) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  const auto art = io::load_artifact((dir / "out" / "fit.json").string());
  EXPECT_EQ(art.config["robust"]["b_w"], 0.05);
}

TEST_F(CliTest, PredictIsFiniteMonotoneAndMatchesConjugateMean) {
  const io::FitArtifact art = fit_once();
  const auto data = io::read_csv((dir / "data.csv").string());
  cli::PredictArgs p;
  p.quantiles = {0.9, 0.1, 0.5};
  const io::CsvTable out = cli::predict_table(art, data, p);
  EXPECT_EQ(out.rows(), n);
  EXPECT_EQ(out.header[4], "q0.1");
  const auto q1 = out.numeric("q0.1"), q5 = out.numeric("q0.5"), q9 = out.numeric("q0.9");
  const auto mean = out.numeric("mean"), lo = out.numeric("mean_lower"), hi = out.numeric("mean_upper");
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_TRUE(std::isfinite(mean[i]) && std::isfinite(q1[i]) && std::isfinite(q9[i]));
    EXPECT_LT(q1[i], q5[i]);
    EXPECT_LT(q5[i], q9[i]);
    EXPECT_LE(lo[i], mean[i]);
    EXPECT_LE(mean[i], hi[i]);
  }
  // posterior predictive mean is ybar; Monte Carlo s.e. from the posterior sd sigma / sqrt(n)
  const double post_sd = 0.5 / std::sqrt(static_cast<double>(n));
  EXPECT_LT(std::abs(mean[0] - ybar), 3.0 * post_sd / std::sqrt(1000.0) + 3.0 * post_sd * 0.1);
  EXPECT_THROW(cli::predict_table(art, data, cli::PredictArgs{"", "", "", {1.5}}), std::invalid_argument);
}

TEST_F(CliTest, PredictAndScoreDeterministic) {
  const io::FitArtifact art = fit_once();
  const auto data = io::read_csv((dir / "data.csv").string());
  std::ostringstream a, b;
  io::write_csv(a, cli::predict_table(art, data, {}));
  io::write_csv(b, cli::predict_table(art, data, {}));
  EXPECT_EQ(a.str(), b.str());
  cli::ScoreArgs s;
  s.draws = 200;
  s.crps_draws = 10;
  EXPECT_EQ(cli::score_report(art, data, s).dump(), cli::score_report(art, data, s).dump());
}

TEST_F(CliTest, ScoreReportKeys) {
  const io::FitArtifact art = fit_once();
  const auto data = io::read_csv((dir / "data.csv").string());
  cli::ScoreArgs s;
  s.draws = 100;
  s.crps_draws = 5;
  const json r = cli::score_report(art, data, s);
  for (const char* k : {"ls", "crps", "waic", "l_waic", "p_waic", "n", "draws"}) EXPECT_TRUE(r.contains(k)) << k;
  EXPECT_EQ(r.size(), 7u);
  EXPECT_NEAR(r["waic"].get<double>(), -2.0 * r["l_waic"].get<double>() + 2.0 * r["p_waic"].get<double>(), 1e-9);
  io::CsvTable no_y;
  no_y.add_column("x", data.text("x"));
  no_y.add_column("ls", data.text("ls"));
  EXPECT_THROW(cli::score_report(art, no_y, s), std::invalid_argument);
  io::CsvTable no_offset;
  no_offset.add_column("y", data.text("y"));
  EXPECT_THROW(cli::score_report(art, no_offset, s), std::invalid_argument);
}

TEST_F(CliTest, SimulateReplicatesAndContaminates) {
  const io::FitArtifact art = fit_once();
  const auto data = io::read_csv((dir / "data.csv").string());
  cli::SimulateArgs s;
  const io::CsvTable plain = cli::simulate_table(art, data, s);
  EXPECT_EQ(plain.rows(), n);
  EXPECT_EQ(plain.header, data.header);
  const auto y = plain.numeric("y");
  double m = 0.0;
  for (double v : y) m += v;
  m /= static_cast<double>(n);
  const double implied = art.beta_mean()[0];
  EXPECT_LT(std::abs(m - implied), 3.0 * 0.5 / std::sqrt(static_cast<double>(n)));

  s.contaminate = true;
  const io::CsvTable dirty = cli::simulate_table(art, data, s);
  const auto flag = dirty.numeric("contaminated");
  const auto yd = dirty.numeric("y");
  std::size_t marked = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (flag[i] == 1.0) {
      ++marked;
      EXPECT_NEAR(yd[i] - y[i], 10.0, 1e-9);
    } else {
      EXPECT_EQ(yd[i], y[i]);
    }
  EXPECT_EQ(marked, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n))));
  std::ostringstream a, b;
  io::write_csv(a, dirty);
  io::write_csv(b, cli::simulate_table(art, data, s));
  EXPECT_EQ(a.str(), b.str());
}

TEST(CliHelpers, EmpiricalQuantile) {
  EXPECT_EQ(cli::empirical_quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_EQ(cli::empirical_quantile({0.0, 10.0}, 0.25), 2.5);
  EXPECT_THROW(cli::empirical_quantile({}, 0.5), std::invalid_argument);
  EXPECT_EQ(cli::level_name(0.05), "0.05");
}

}  // namespace
}  // namespace sadr
