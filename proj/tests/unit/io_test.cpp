#include <gtest/gtest.h>

#include <sstream>

#include "helpers.hpp"
#include "sadr/io/artifact.hpp"
#include "sadr/io/config.hpp"
#include "sadr/io/csv.hpp"

namespace sadr {
namespace {

using io::json;

io::CsvTable parse(const std::string& text) {
  std::istringstream in(text);
  return io::read_csv(in);
}

TEST(Csv, QuotingEscapesAndLineEnds) {
  const auto t = parse("\xEF\xBB\xBFname,value\r\n\"a, b\",1.5\r\n\"say \"\"hi\"\"\",NA\n\"two\nlines\",-2e3\n");
  ASSERT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.header[0], "name");
  EXPECT_EQ(t.text("name")[0], "a, b");
  EXPECT_EQ(t.text("name")[1], "say \"hi\"");
  EXPECT_EQ(t.text("name")[2], "two\nlines");
  const auto v = t.numeric("value");
  EXPECT_EQ(v[0], 1.5);
  EXPECT_TRUE(std::isnan(v[1]));
  EXPECT_EQ(v[2], -2000.0);
}

TEST(Csv, RoundTrip) {
  const auto t = parse("a,b\n\"x,1\",2\n\"q\"\"\",\n");
  std::ostringstream out;
  io::write_csv(out, t);
  const auto u = parse(out.str());
  EXPECT_EQ(u.header, t.header);
  EXPECT_EQ(u.columns, t.columns);
}

TEST(Csv, Errors) {
  EXPECT_THROW(parse(""), std::invalid_argument);
  EXPECT_THROW(parse("a,b\n1\n"), std::invalid_argument);
  EXPECT_THROW(parse("a\n\"open\n"), std::invalid_argument);
  EXPECT_THROW(parse("a,a\n1,2\n"), std::invalid_argument);
  EXPECT_THROW(parse("a\nxyz\n").numeric("a"), std::invalid_argument);
  EXPECT_THROW(parse("a\n1\n").text("b"), std::invalid_argument);
}

TEST(Csv, ShortestRoundTripNumbers) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(-3.0), "-3");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(std::stod(io::format_double(v)), v);
  EXPECT_EQ(io::format_double(std::nan("")), "NaN");
}

json base_config() {
  return json::parse(R"({
    "response": "y", "family": "gaussian",
    "formula": {
      "mu": [{"kind": "intercept"}, {"kind": "pspline", "covariates": ["x"], "dim": 8},
             {"kind": "categorical", "covariate": "g", "coding": "effect"}],
      "sigma": [{"kind": "intercept"}, {"kind": "linear", "covariates": ["z"]}]
    },
    "offset": {"mu": "o"},
    "optimizer": {"draws": 2, "seed": 17, "max_iterations": 300, "t0": 5, "anneal_end": 200, "n_sub": 50},
    "robust": {"enabled": true, "a_w": 0.3, "init_weight": 0.9}
  })");
}

io::CsvTable make_table(Rng& rng, std::size_t n) {
  io::CsvTable t;
  std::vector<std::string> y, x, z, g, o;
  const char* levels[] = {"u", "v", "w"};
  for (std::size_t i = 0; i < n; ++i) {
    const double xv = std::uniform_real_distribution<double>(0, 1)(rng);
    const double zv = std::uniform_real_distribution<double>(-1, 1)(rng);
    x.push_back(io::format_double(xv));
    z.push_back(io::format_double(zv));
    g.emplace_back(levels[i % 3]);
    o.push_back("0.1");
    y.push_back(io::format_double(std::sin(4 * xv) + std::exp(0.3 * zv) * 0.3 * standard_normal(rng)));
  }
  t.add_column("y", y);
  t.add_column("x", x);
  t.add_column("z", z);
  t.add_column("g", g);
  t.add_column("o", o);
  return t;
}

TEST(Config, ParsesAllSections) {
  const io::RunConfig c = io::parse_config(base_config());
  ASSERT_EQ(c.terms.size(), 5u);
  EXPECT_EQ(c.terms[1].spec.kind, TermKind::pspline);
  EXPECT_EQ(c.terms[1].spec.basis_dim, std::vector<int>{8});
  EXPECT_EQ(c.terms[2].spec.coding, Coding::effect);
  EXPECT_EQ(c.terms[4].parameter, 1);
  EXPECT_EQ(c.offsets[0], "o");
  EXPECT_EQ(c.fit.optimizer.draws, 2);
  EXPECT_EQ(c.fit.optimizer.seed, 17u);
  ASSERT_TRUE(c.fit.optimizer.anneal.has_value());
  EXPECT_EQ(c.fit.optimizer.anneal->end, 200);
  EXPECT_EQ(c.fit.optimizer.subsample.n_sub, 50);
  ASSERT_TRUE(c.fit.robust.has_value());
  EXPECT_EQ(c.fit.robust->hyper.a_w, 0.3);
  EXPECT_EQ(c.fit.robust->hyper.b_w, 0.01);
  EXPECT_FALSE(c.fit.hybrid.has_value());
}

TEST(Config, Errors) {
  auto expect_error = [](const std::function<void(json&)>& edit) {
    json j = base_config();
    edit(j);
    EXPECT_THROW(io::parse_config(j), io::ConfigError) << j.dump();
  };
  expect_error([](json& j) { j["family"] = "weibull"; });
  expect_error([](json& j) { j.erase("formula"); });
  expect_error([](json& j) { j["formula"]["delta"] = json::array(); });
  expect_error([](json& j) { j["formula"]["mu"][1]["kind"] = "loess"; });
  expect_error([](json& j) { j["formula"]["mu"][1]["covariates"] = json::array(); });
  expect_error([](json& j) { j["formula"]["mu"][2]["coding"] = "helmert"; });
  expect_error([](json& j) { j["formula"]["mu"][1]["prior"] = {{"type", "ig"}, {"a", -1}}; });
  expect_error([](json& j) { j["formula"]["mu"][1]["prior"] = {{"type", "halfcauchy"}}; });
  expect_error([](json& j) {
    j["formula"]["mu"][1]["prior"] = {{"type", "weibull"}};
    j["va"] = {{"hybrid", true}};
  });
  expect_error([](json& j) { j["va"] = {{"hybrid", "sometimes"}}; });
  expect_error([](json& j) { j["optimizer"]["t0"] = 0.5; });
  expect_error([](json& j) { j["optimizer"]["draws"] = 0; });
  expect_error([](json& j) { j["robust"]["init_weight"] = 1.0; });
  expect_error([](json& j) { j["robust"]["b_w"] = 0.0; });
  expect_error([](json& j) { j["optimizer"]["seed"] = "abc"; });
  expect_error([](json& j) {
    j["formula"]["mu"].push_back({{"kind", "mrf"}, {"covariate", "g"}, {"graph", {{"u", {"v"}}, {"v", json::array()}}}});
  });
}

TEST(Config, ColumnChecksHappenBeforeCompute) {
  Rng rng = substream(101, "io");
  const auto t = make_table(rng, 60);
  json j = base_config();
  j["formula"]["sigma"][1]["covariates"] = {"nope"};
  const io::RunConfig c = io::parse_config(j);
  try {
    io::check_columns(c, t);
    FAIL();
  } catch (const io::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("nope"), std::string::npos);
  }
  j = base_config();
  j["offset"]["mu"] = "missing";
  EXPECT_THROW(io::check_columns(io::parse_config(j), t), io::ConfigError);
}

TEST(Config, BuildsModelFromTable) {
  Rng rng = substream(102, "io");
  const auto t = make_table(rng, 90);
  const io::RunConfig c = io::parse_config(base_config());
  test::Quiet q;
  const SadrModel m = io::build_model(c, t);
  EXPECT_EQ(m.n(), 90);
  EXPECT_EQ(m.layout().p_beta, 1 + 7 + 2 + 1 + 1);
  EXPECT_EQ(m.layout().p_tau(), 1);
  EXPECT_EQ(m.offsets()[0][5], 0.1);
}

TEST(Artifact, RoundTripReproducesPredictors) {
  Rng rng = substream(103, "io");
  const auto t = make_table(rng, 120);
  json j = base_config();
  j.erase("robust");
  j["optimizer"] = {{"max_iterations", 400}, {"seed", 3}};
  const io::RunConfig c = io::parse_config(j);
  const SadrModel m = io::build_model(c, t);
  const FitResult r = fit(m, c.fit);
  const json a = io::artifact_json(c, m, r);
  const io::FitArtifact back = io::artifact_from_json(json::parse(a.dump(1)));
  EXPECT_EQ(back.family.name(), "gaussian");
  EXPECT_EQ(back.p_beta, m.layout().p_beta);
  EXPECT_EQ(back.hybrid, r.hybrid);
  EXPECT_EQ(back.va.mu, r.va.mu);
  EXPECT_EQ(back.va.B, r.va.B);
  EXPECT_EQ(back.elbo_trace, r.run.elbo_trace);
  const VectorXd beta = r.va.mu.head(m.layout().p_beta);
  const RowMatrixXd want = m.predictors(beta);
  const RowMatrixXd got = back.predictor_map(t).predictors(back.beta_mean());
  EXPECT_LT((want - got).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Artifact, RobustWeightsAndVersionCheck) {
  Rng rng = substream(104, "io");
  const auto t = make_table(rng, 40);
  json j = base_config();
  j["optimizer"] = {{"max_iterations", 50}};
  const io::RunConfig c = io::parse_config(j);
  const SadrModel m = io::build_model(c, t);
  const FitResult r = fit(m, c.fit);
  Rng wr = substream(1, "weights");
  const VectorXd w = fitted_weights(*r.weights, wr, 100);
  json a = io::artifact_json(c, m, r, &w);
  const io::FitArtifact back = io::artifact_from_json(a);
  ASSERT_TRUE(back.weights.has_value());
  EXPECT_EQ(back.weights->mu, r.weights->mu);
  EXPECT_EQ(back.fitted_weights, w);
  a["format_version"] = 99;
  EXPECT_THROW(io::artifact_from_json(a), std::invalid_argument);
}

TEST(Artifact, PredictorMapNeedsCovariates) {
  Rng rng = substream(105, "io");
  auto t = make_table(rng, 40);
  json j = base_config();
  j.erase("robust");
  j["optimizer"] = {{"max_iterations", 20}};
  const io::RunConfig c = io::parse_config(j);
  const SadrModel m = io::build_model(c, t);
  const io::FitArtifact a = io::artifact_from_json(io::artifact_json(c, m, fit(m, c.fit)));
  io::CsvTable missing;
  missing.add_column("x", t.text("x"));
  EXPECT_THROW(a.predictor_map(missing), std::invalid_argument);
}

}  // namespace
}  // namespace sadr
