#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "repeatlab/metrics.hpp"

using namespace repeatlab;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kInfty = std::numeric_limits<double>::infinity();

MetricsRow row(const std::string& id, long step, double test_acc, long long compute = 100) {
  MetricsRow r;
  r.run_id = id;
  r.step = step;
  r.compute = compute;
  if (std::isfinite(test_acc)) r.test_acc = test_acc;
  r.train_loss = 1.0;
  r.test_loss = 2.0;
  r.norm_ratio = 0.5;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

size_t count_occurrences(const std::string& hay, const std::string& needle) {
  size_t n = 0;
  for (size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

}  // namespace

TEST_CASE("evaluate computes batch losses and parity accuracy", "[metrics]") {
  MlpParams p;
  p.W.resize(2);
  p.W[0].resize(2, 2);
  p.W[0] << 1, -1,
      0.5, 2;
  p.W[1].resize(1, 2);
  p.W[1] << 1, -3;

  LabeledDataset ds;
  ds.task = TaskSpec::parity(2, 1);
  ds.X.resize(2, 2);
  ds.X << 1, 2,
      -2, 1;
  ds.y.resize(2);
  ds.y << 1, -1;  // preds are -13.5 and -3

  EvalResult mse = evaluate(p, ds, LossKind::Mse);
  CHECK(mse.loss == 107.125);
  REQUIRE(mse.acc.has_value());
  CHECK(*mse.acc == 0.5);

  EvalResult corr = evaluate(p, ds, LossKind::Correlation);
  CHECK(corr.loss == 5.25);

  LabeledDataset sim = make_dataset(TaskSpec::sim(2, 1, 1), 3, 1);
  InitScheme s;
  EvalResult er = evaluate(init_mlp(2, {4, 1}, s), sim, LossKind::Mse);
  CHECK_FALSE(er.acc.has_value());

  LabeledDataset empty;
  empty.task = TaskSpec::parity(2, 1);
  empty.X.resize(0, 2);
  empty.y.resize(0);
  CHECK_THROWS_AS(evaluate(p, empty, LossKind::Mse), ConfigError);
}

TEST_CASE("interpolating quantiles", "[metrics]") {
  std::vector<double> v = {3.0, 1.0, 4.0, 2.0};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 4.0);
  CHECK(quantile(v, 0.25) == 1.75);
  CHECK(quantile(v, 0.75) == 3.25);
  CHECK(median(v) == 2.5);
  CHECK(interquartile_range(v) == 1.5);
  CHECK(median({7.0}) == 7.0);
  CHECK_THROWS_AS(quantile({}, 0.5), ConfigError);
}

TEST_CASE("wilson interval matches frozen references", "[metrics]") {
  Interval i = wilson_interval(8, 10);
  CHECK(i.lo == Catch::Approx(0.4901624715366418).margin(1e-12));
  CHECK(i.hi == Catch::Approx(0.9433178485456248).margin(1e-12));
  Interval z = wilson_interval(0, 10);
  CHECK(z.lo == 0.0);
  CHECK(z.hi == Catch::Approx(0.2775327998628892).margin(1e-12));
  Interval o = wilson_interval(10, 10);
  CHECK(o.lo == Catch::Approx(0.7224672001371107).margin(1e-12));
  CHECK(o.hi <= 1.0);
  CHECK_THROWS_AS(wilson_interval(1, 0), ConfigError);
  CHECK_THROWS_AS(wilson_interval(11, 10), ConfigError);
  CHECK_THROWS_AS(wilson_interval(-1, 10), ConfigError);
}

TEST_CASE("geometric buckets", "[metrics]") {
  CHECK(geometric_bucket(1.0) == 0);
  CHECK(geometric_bucket(1000.0, 1.1) == 72);
  CHECK(bucket_representative(0) == 1.0);
  CHECK(bucket_representative(2, 2.0) == 4.0);
  CHECK_THROWS_AS(geometric_bucket(0.0), ConfigError);
  CHECK_THROWS_AS(geometric_bucket(10.0, 1.0), ConfigError);
}

TEST_CASE("aggregation is order independent and counts failures", "[metrics]") {
  std::vector<MetricsRow> rows;
  rows.push_back(row("a", 0, 0.50));
  rows.push_back(row("a", 0, 0.70));
  rows.push_back(row("a", 0, kNan));  // failed seed
  rows.push_back(row("a", 10, 0.995));
  rows.push_back(row("b", 0, 0.20));

  AggregateOptions opt;
  opt.field = MetricField::TestAcc;
  opt.threshold = 0.99;
  auto key = [](const MetricsRow& r) { return r.run_id; };

  std::vector<AggregateRow> agg = aggregate(rows, key, opt);
  REQUIRE(agg.size() == 3);

  // map ordering: ("a",0), ("a",10), ("b",0)
  CHECK(agg[0].group == "a");
  CHECK(agg[0].bucket == 0.0);
  CHECK(agg[0].n_seeds == 3);
  CHECK(agg[0].n_failed == 1);
  CHECK(agg[0].mean == Catch::Approx(0.6));
  CHECK(agg[0].median_v == Catch::Approx(0.6));
  CHECK(agg[0].success_prob == 0.0);

  CHECK(agg[1].bucket == 10.0);
  CHECK(agg[1].success_prob == 1.0);
  CHECK(agg[2].group == "b");

  std::vector<MetricsRow> shuffled = rows;
  std::mt19937 g(5);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(shuffled.begin(), shuffled.end(), g);
    std::vector<AggregateRow> agg2 = aggregate(shuffled, key, opt);
    REQUIRE(agg2.size() == agg.size());
    for (size_t i = 0; i < agg.size(); ++i) {
      CHECK(agg2[i].group == agg[i].group);
      CHECK(agg2[i].bucket == agg[i].bucket);
      CHECK(agg2[i].mean == agg[i].mean);
      CHECK(agg2[i].median_v == agg[i].median_v);
      CHECK(agg2[i].iqr == agg[i].iqr);
      CHECK(agg2[i].n_seeds == agg[i].n_seeds);
      CHECK(agg2[i].n_failed == agg[i].n_failed);
    }
  }

  opt.bucket_by_compute = true;
  std::vector<AggregateRow> byc = aggregate(rows, key, opt);
  for (const AggregateRow& a : byc) CHECK(a.bucket > 0.0);
}

TEST_CASE("threshold summary separates failures", "[metrics]") {
  ThresholdSummary s = steps_to_threshold_summary({10.0, 20.0, kNan, kInfty});
  CHECK(s.defined);
  CHECK(s.median_steps == 15.0);
  CHECK(s.n_success == 2);
  CHECK(s.n_failed == 2);

  ThresholdSummary none = steps_to_threshold_summary({kNan, kNan});
  CHECK_FALSE(none.defined);
  CHECK(none.n_failed == 2);
  CHECK(std::isnan(none.median_steps));
}

TEST_CASE("metrics csv header and round trip", "[metrics]") {
  CHECK(metrics_csv_header(2) ==
        "run_id,seed,phase,step,compute,train_acc,test_acc,train_loss,test_loss,norm_ratio,"
        "layer_norm_0,layer_norm_1");

  std::vector<MetricsRow> rows;
  MetricsRow r;
  r.run_id = "demo:s0";
  r.seed = 1234567891234ull;
  r.phase = 1;
  r.step = 42;
  r.compute = 99999999999ll;
  r.train_acc = 1.0 / 3.0;
  r.train_loss = 0.1;
  r.test_loss = 2e-17;
  r.norm_ratio = 3.14159;
  r.layer_norms = {1.5, 0.25};
  rows.push_back(r);
  MetricsRow r2 = r;
  r2.step = 43;
  r2.test_acc = 0.75;
  rows.push_back(r2);

  const std::string path = "metrics_roundtrip_test.csv";
  write_csv(rows, path);

  std::string text = slurp(path);
  CHECK(text.find(",,") != std::string::npos);  // empty optional cell

  std::vector<MetricsRow> back = read_metrics_csv(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].run_id == "demo:s0");
  CHECK(back[0].seed == 1234567891234ull);
  CHECK(back[0].phase == 1);
  CHECK(back[0].step == 42);
  CHECK(back[0].compute == 99999999999ll);
  REQUIRE(back[0].train_acc.has_value());
  CHECK(*back[0].train_acc == 1.0 / 3.0);  // %.17g survives exactly
  CHECK_FALSE(back[0].test_acc.has_value());
  CHECK(back[0].train_loss == 0.1);
  CHECK(back[0].test_loss == 2e-17);
  CHECK(back[0].norm_ratio == 3.14159);
  REQUIRE(back[0].layer_norms.size() == 2);
  CHECK(back[0].layer_norms[0] == 1.5);
  CHECK(back[1].test_acc.has_value());

  // writing the same rows twice yields identical bytes
  const std::string path2 = "metrics_roundtrip_test2.csv";
  write_csv(rows, path2);
  CHECK(slurp(path) == slurp(path2));

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("csv writer and reader reject malformed input", "[metrics]") {
  std::vector<MetricsRow> rows = {row("a", 0, 0.5)};
  rows[0].layer_norms = {1.0};
  CHECK_THROWS_AS(write_csv(rows, "bad_test.csv", 3), IoError);
  std::remove("bad_test.csv");

  CHECK_THROWS_AS(read_metrics_csv("no_such_file_anywhere.csv"), IoError);

  {
    std::ofstream f("ragged_test.csv");
    f << metrics_csv_header(0) << "\n";
    f << "a,1,0,0\n";
  }
  CHECK_THROWS_AS(read_metrics_csv("ragged_test.csv"), IoError);
  std::remove("ragged_test.csv");
}

TEST_CASE("json reports always carry a schema version", "[metrics]") {
  nlohmann::json j;
  j["answer"] = 42;
  const std::string path = "schema_test.json";
  write_json(j, path);
  nlohmann::json back = nlohmann::json::parse(slurp(path));
  CHECK(back["schema_version"] == kSchemaVersion);
  CHECK(back["answer"] == 42);

  nlohmann::json pre;
  pre["schema_version"] = "keep-me";
  write_json(pre, path);
  back = nlohmann::json::parse(slurp(path));
  CHECK(back["schema_version"] == "keep-me");
  std::remove(path.c_str());
}

TEST_CASE("svg plots contain one polyline per series and a legend", "[metrics]") {
  Series a{"first", {1.0, 2.0, 3.0}, {0.5, 0.25, 0.125}};
  Series b{"second", {1.0, 10.0, 100.0}, {1.0, 2.0, 3.0}};
  AxesSpec axes;
  axes.title = "demo";
  axes.xlabel = "steps";
  axes.ylabel = "value";
  const std::string path = "plot_test.svg";
  plot_series({a, b}, axes, path);
  std::string svg = slurp(path);
  CHECK(count_occurrences(svg, "<polyline") == 2);
  CHECK(svg.find("first") != std::string::npos);
  CHECK(svg.find("second") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);

  plot_series({a, b}, axes, "plot_test_2.svg");
  CHECK(slurp(path) == slurp("plot_test_2.svg"));

  axes.logx = true;
  CHECK_NOTHROW(plot_series({b}, axes, path));

  std::remove(path.c_str());
  std::remove("plot_test_2.svg");
}

TEST_CASE("svg plots reject malformed series", "[metrics]") {
  AxesSpec axes;
  CHECK_THROWS_AS(plot_series({}, axes, "x.svg"), PlotError);
  Series ragged{"r", {1.0, 2.0}, {1.0}};
  CHECK_THROWS_AS(plot_series({ragged}, axes, "x.svg"), PlotError);
  Series nonfinite{"n", {1.0, 2.0}, {1.0, kNan}};
  CHECK_THROWS_AS(plot_series({nonfinite}, axes, "x.svg"), PlotError);
  Series backwards{"b", {2.0, 1.0}, {1.0, 2.0}};
  CHECK_THROWS_AS(plot_series({backwards}, axes, "x.svg"), PlotError);
  Series nonpos{"p", {0.0, 1.0}, {1.0, 2.0}};
  AxesSpec lg;
  lg.logx = true;
  CHECK_THROWS_AS(plot_series({nonpos}, lg, "x.svg"), PlotError);
  Series negy{"q", {1.0, 2.0}, {-1.0, 2.0}};
  AxesSpec ly;
  ly.logy = true;
  CHECK_THROWS_AS(plot_series({negy}, ly, "x.svg"), PlotError);
}
