#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "repeatlab/experiments.hpp"

using namespace repeatlab;

namespace {

constexpr double kInfty = std::numeric_limits<double>::infinity();

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.task = TaskSpec::parity(6, 2);
  cfg.widths = {16, 1};
  cfg.optim.lr = 0.05;
  cfg.schedule.batch = 0;  // full batch
  cfg.schedule.phases = {Phase{32, Phase::Dur::Steps, 20}};
  cfg.eval.eval_every = 5;
  cfg.eval.test_size = 256;
  cfg.max_steps = 20;
  return cfg;
}

bool rows_equal(const MetricsRow& a, const MetricsRow& b) {
  auto opt_eq = [](const std::optional<double>& x, const std::optional<double>& y) {
    if (x.has_value() != y.has_value()) return false;
    return !x || *x == *y;
  };
  return a.run_id == b.run_id && a.seed == b.seed && a.phase == b.phase && a.step == b.step &&
         a.compute == b.compute && opt_eq(a.train_acc, b.train_acc) &&
         opt_eq(a.test_acc, b.test_acc) && a.train_loss == b.train_loss &&
         a.test_loss == b.test_loss && a.norm_ratio == b.norm_ratio &&
         a.layer_norms == b.layer_norms;
}

bool all_rows_equal(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (!rows_equal(a[i], b[i])) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run_training is deterministic with a sane row schema", "[experiments]") {
  RunConfig cfg = tiny_config();
  RunResult a = run_training(cfg, 11);
  RunResult b = run_training(cfg, 11);

  REQUIRE(a.status == RunStatus::Ok);
  REQUIRE(a.rows.size() == 4);  // steps 5, 10, 15, 20
  for (size_t i = 0; i < a.rows.size(); ++i) {
    const MetricsRow& r = a.rows[i];
    CHECK(r.step == static_cast<long>(5 * (i + 1)));
    CHECK(r.phase == 0);
    CHECK(r.run_id == cfg.run_id);
    CHECK(r.seed == 11);
    CHECK(r.train_acc.has_value());
    CHECK(r.test_acc.has_value());
    CHECK(r.layer_norms.size() == 2);
    CHECK(r.compute == 32LL * r.step);
  }
  CHECK(a.last_finite_step == 20);
  CHECK(a.ledger.compute == 32LL * 20);

  REQUIRE(a.phase_end_ratios.size() == 1);
  CHECK(std::get<0>(a.phase_end_ratios[0]) == 0);
  CHECK(std::get<1>(a.phase_end_ratios[0]) == 20);
  CHECK(std::get<2>(a.phase_end_ratios[0]) == a.rows.back().norm_ratio);

  CHECK(a.final_train_loss == a.rows.back().train_loss);
  CHECK(a.final_test_loss == a.rows.back().test_loss);
  CHECK(a.final_test_acc == *a.rows.back().test_acc);
  CHECK(a.final_norm_ratio == a.rows.back().norm_ratio);

  CHECK(all_rows_equal(a.rows, b.rows));
  CHECK(a.steps_to_threshold == b.steps_to_threshold);

  RunResult c = run_training(cfg, 12);
  CHECK(a.rows.front().train_loss != c.rows.front().train_loss);
}

TEST_CASE("run_training with zero budget emits no rows", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.max_steps = 0;
  RunResult r = run_training(cfg, 3);
  CHECK(r.status == RunStatus::Ok);
  CHECK(r.rows.empty());
  CHECK(r.phase_end_ratios.empty());
  CHECK(std::isnan(r.final_test_loss));
  CHECK(std::isnan(r.final_test_acc));
  CHECK(r.steps_to_threshold == kInfty);
  CHECK_FALSE(r.crossed());
}

TEST_CASE("run config validation rejects bad settings", "[experiments]") {
  RunConfig cfg = tiny_config();

  SECTION("online phase must use a step duration") {
    cfg.schedule.batch = 8;
    cfg.schedule.phases = {Phase{kOnline, Phase::Dur::Epochs, 3}};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("whitening is sim-only") {
    cfg.whiten_inputs = true;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("prephase size and duration") {
    cfg.random_label_prephase = RandomPrephase{0, 5};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.random_label_prephase = RandomPrephase{8, -1};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("biased online source size") {
    cfg.biased_online_m = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SECTION("eval cadence and budgets") {
    cfg.eval.eval_every = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.max_steps = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = tiny_config();
    cfg.eval.test_size = -2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("divergence is detected and reported", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.optim.lr = 1e200;
  cfg.max_steps = 10;
  cfg.schedule.phases = {Phase{16, Phase::Dur::Steps, 10}};
  RunResult r = run_training(cfg, 5);
  CHECK(r.status == RunStatus::Diverged);
  CHECK_FALSE(r.crossed());
  CHECK(r.last_finite_step < 10);
}

TEST_CASE("threshold crossing is recorded at the first qualifying eval", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.success_threshold = 0.0;  // any parity accuracy crosses
  cfg.eval.eval_every = 7;
  cfg.schedule.phases = {Phase{32, Phase::Dur::Steps, 100}};
  cfg.max_steps = 100;

  SECTION("stop_at_threshold exits after the crossing eval") {
    cfg.stop_at_threshold = true;
    RunResult r = run_training(cfg, 7);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].step == 7);
    CHECK(r.steps_to_threshold == 7.0);
    CHECK(r.compute_to_threshold == 7.0 * 32.0);
    REQUIRE(r.phase_end_ratios.size() == 1);
    CHECK(std::get<1>(r.phase_end_ratios[0]) == 7);
  }
  SECTION("without early stop the run continues but the crossing step stays") {
    cfg.schedule.phases = {Phase{32, Phase::Dur::Steps, 20}};
    cfg.max_steps = 20;
    RunResult r = run_training(cfg, 7);
    REQUIRE(r.rows.size() == 3);  // steps 7, 14, 20 (phase end)
    CHECK(r.rows[2].step == 20);
    CHECK(r.steps_to_threshold == 7.0);
  }
}

TEST_CASE("forced evals add rows at the requested steps", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.eval.eval_every = 100;
  cfg.forced_evals = {3, 11};
  cfg.schedule.phases = {Phase{16, Phase::Dur::Steps, 12}};
  cfg.max_steps = 12;
  RunResult r = run_training(cfg, 2);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].step == 3);
  CHECK(r.rows[1].step == 11);
  CHECK(r.rows[2].step == 12);  // phase end forces the last eval
}

TEST_CASE("random-label prephase runs as a leading phase", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.random_label_prephase = RandomPrephase{16, 5};
  cfg.schedule.phases = {Phase{32, Phase::Dur::Steps, 10}};
  cfg.max_steps = 15;
  cfg.eval.eval_every = 5;
  RunResult r = run_training(cfg, 9);
  REQUIRE(r.status == RunStatus::Ok);
  REQUIRE(r.rows.size() == 3);  // steps 5, 10, 15
  CHECK(r.rows[0].phase == 0);
  CHECK(r.rows[1].phase == 1);
  CHECK(r.rows[2].phase == 1);
  REQUIRE(r.phase_end_ratios.size() == 2);
  CHECK(std::get<0>(r.phase_end_ratios[0]) == 0);
  CHECK(std::get<1>(r.phase_end_ratios[0]) == 5);
  CHECK(std::get<0>(r.phase_end_ratios[1]) == 1);
  CHECK(std::get<1>(r.phase_end_ratios[1]) == 15);
  CHECK(r.ledger.compute == 5LL * 16 + 10LL * 32);

  // duration zero means no leading phase at all
  cfg.random_label_prephase = RandomPrephase{16, 0};
  cfg.max_steps = 10;
  RunResult r0 = run_training(cfg, 9);
  CHECK(r0.rows.front().phase == 0);
  REQUIRE(r0.phase_end_ratios.size() == 1);
  CHECK(std::get<1>(r0.phase_end_ratios[0]) == 10);
}

TEST_CASE("online phases draw fresh batches each step", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.schedule.batch = 3;
  cfg.schedule.phases = {Phase{kOnline, Phase::Dur::Steps, 5}};
  cfg.eval.eval_every = 5;
  cfg.max_steps = 5;
  RunResult r = run_training(cfg, 4);
  REQUIRE(r.status == RunStatus::Ok);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].step == 5);
  CHECK(r.ledger.compute == 5LL * 3);
  CHECK(r.rows[0].train_acc.has_value());  // minibatch metrics still exist

  RunResult again = run_training(cfg, 4);
  CHECK(all_rows_equal(r.rows, again.rows));
}

TEST_CASE("biased online sampling trains and stays deterministic", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.schedule.batch = 4;
  cfg.schedule.phases = {Phase{kOnline, Phase::Dur::Steps, 6}};
  cfg.biased_online_m = 8;
  cfg.eval.eval_every = 2;
  cfg.max_steps = 6;
  RunResult r = run_training(cfg, 13);
  REQUIRE(r.status == RunStatus::Ok);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.ledger.compute == 6LL * 4);
  RunResult again = run_training(cfg, 13);
  CHECK(all_rows_equal(r.rows, again.rows));
}

TEST_CASE("epoch-duration phases advance on epoch boundaries", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.schedule.batch = 4;
  cfg.schedule.without_replacement = true;
  cfg.schedule.phases = {Phase{12, Phase::Dur::Epochs, 2}};
  cfg.eval.eval_every = 100;
  cfg.max_steps = 100;
  RunResult r = run_training(cfg, 21);
  REQUIRE(r.status == RunStatus::Ok);
  REQUIRE(r.rows.size() == 1);  // only the phase-end eval
  CHECK(r.rows[0].step == 6);   // ceil(12/4) = 3 steps per epoch, 2 epochs
  CHECK(r.ledger.compute == 6LL * 4);
}

TEST_CASE("auto phases stop at the accuracy threshold or the epoch cap", "[experiments]") {
  RunConfig cfg = tiny_config();
  cfg.schedule.batch = 0;
  cfg.schedule.phases = {Phase{8, Phase::Dur::Auto, 0}};
  cfg.eval.eval_every = 100;
  cfg.max_steps = 100;

  SECTION("epoch cap") {
    cfg.schedule.auto_acc_threshold = 1.0;  // effectively unreachable this early
    cfg.schedule.auto_max_epochs = 3;
    RunResult r = run_training(cfg, 31);
    if (r.rows.back().step == 3) {
      REQUIRE(r.rows.size() == 3);  // full batch: one step per epoch, eval per epoch
      CHECK(r.rows[0].step == 1);
      CHECK(r.rows[1].step == 2);
    } else {
      // the tiny net hit 100% train accuracy before the cap; still an auto stop
      CHECK(r.rows.back().step < 3);
    }
  }
  SECTION("accuracy threshold") {
    cfg.schedule.auto_acc_threshold = 0.01;
    cfg.schedule.auto_max_epochs = 50;
    RunResult r = run_training(cfg, 31);
    REQUIRE(r.rows.size() == 1);
    CHECK(r.rows[0].step == 1);
  }
}

TEST_CASE("lr_grid spaces multiplicatively and caps the ratio", "[experiments]") {
  std::vector<double> g = lr_grid(0.1, 0.1 * std::pow(1.2, 5), 6);
  REQUIRE(g.size() == 6);
  CHECK(g[0] == 0.1);
  for (size_t i = 1; i < g.size(); ++i) {
    CHECK(g[i] > g[i - 1]);
    CHECK(g[i] / g[i - 1] <= 1.2 + 1e-9);
  }
  CHECK(lr_grid(0.5, 3.0, 1) == std::vector<double>{0.5});
  CHECK_THROWS_AS(lr_grid(0.1, 0.3, 4), ConfigError);  // ratio 1.44
  CHECK_THROWS_AS(lr_grid(0.1, 0.2, 0), ConfigError);
  CHECK_THROWS_AS(lr_grid(0.0, 0.2, 3), ConfigError);
  CHECK_THROWS_AS(lr_grid(0.3, 0.2, 3), ConfigError);
}

TEST_CASE("summary tables enforce width and write plain csv", "[experiments]") {
  Table t;
  t.cols = {"a", "b"};
  t.add_row({"1", "x"});
  CHECK_THROWS_AS(t.add_row({"only-one"}), ConfigError);
  const std::string path = "table_test.csv";
  t.write(path);
  CHECK(slurp(path) == "a,b\n1,x\n");
  std::remove(path.c_str());
}

TEST_CASE("median_with_failures treats failures as infinite", "[experiments]") {
  CHECK(median_with_failures({3.0, 1.0, kInfty}) == 3.0);
  CHECK(median_with_failures({1.0, kInfty}) == kInfty);
  CHECK(median_with_failures({}) == kInfty);
  CHECK(median_with_failures({2.0, 4.0}) == 3.0);
  CHECK(median_with_failures({kInfty, kInfty, kInfty}) == kInfty);
}

TEST_CASE("sweep_arm realizes the arm size and breaks ties toward the grid front",
          "[experiments]") {
  RunConfig base = tiny_config();
  base.schedule.phases.clear();  // sweep_arm must install the phase itself
  base.success_threshold = 0.0;
  base.max_steps = 20;
  base.eval.eval_every = 10;
  std::vector<double> lrs = {0.05, 0.06};
  std::vector<uint64_t> seeds = {1, 2, 3};

  ArmResult arm = detail::sweep_arm("arm", base, 16, lrs, seeds, 1);
  REQUIRE(arm.cells.size() == 2);
  CHECK(arm.size == 16);
  // every run crosses at its first eval, so both cells tie at 10 steps
  for (const LrCell& c : arm.cells) {
    CHECK(c.selection_metric == 10.0);
    CHECK(c.diverged_frac == 0.0);
    CHECK(c.steps.defined);
    CHECK(c.steps.median_steps == 10.0);
    CHECK(c.steps.n_success == 3);
    REQUIRE(c.runs.size() == 3);
    CHECK(c.runs[0].ledger.compute == 20LL * 16);  // size was installed into the phase
  }
  CHECK(arm.best_index == 0);  // tie goes to the lower grid index
  CHECK(arm.best().lr == 0.05);
  CHECK_FALSE(arm.inconclusive);
  CHECK(arm.cells[1].runs[2].run_id == "arm:lr1:s2");
  CHECK(detail::per_seed_steps(arm.cells[0]) == std::vector<double>{10.0, 10.0, 10.0});

  SECTION("worker count changes nothing") {
    ArmResult arm3 = detail::sweep_arm("arm", base, 16, lrs, seeds, 3);
    REQUIRE(arm3.cells.size() == arm.cells.size());
    CHECK(arm3.best_index == arm.best_index);
    std::vector<MetricsRow> r1, r3;
    detail::collect_rows(arm, r1);
    detail::collect_rows(arm3, r3);
    CHECK(all_rows_equal(r1, r3));
  }
  SECTION("an all-diverged best cell flags the arm inconclusive") {
    RunConfig hot = base;
    ArmResult bad = detail::sweep_arm("hot", hot, 16, {1e200}, {1, 2, 3, 4}, 2);
    REQUIRE(bad.cells.size() == 1);
    CHECK(bad.cells[0].diverged_frac == 1.0);
    CHECK(bad.cells[0].selection_metric == kInfty);
    CHECK(bad.inconclusive);
  }
}

TEST_CASE("gap_sweep emits one summary row per cell and ignores workers", "[experiments]") {
  GapSweepConfig gc;
  gc.base = tiny_config();
  gc.base.success_threshold = 0.0;
  gc.base.max_steps = 20;
  gc.base.eval.eval_every = 10;
  gc.sizes = {16, 64};
  gc.lrs = {0.05, 0.06};
  gc.seeds = {1, 2};
  gc.workers = 1;
  GapReport rep1 = gap_sweep(gc);
  gc.workers = 2;
  GapReport rep2 = gap_sweep(gc);

  REQUIRE(rep1.arms.size() == 2);
  CHECK(rep1.summary.cols ==
        std::vector<std::string>{"arm", "size", "lr", "n_seeds", "n_diverged", "median_steps",
                                 "iqr_steps", "median_compute", "success_rate", "selection",
                                 "best"});
  CHECK(rep1.summary.rows.size() == 4);  // 2 sizes x 2 lrs
  CHECK(rep1.summary.rows == rep2.summary.rows);
  CHECK(all_rows_equal(rep1.rows, rep2.rows));

  // both arms cross at step 10; equal medians mean no strict small win
  CHECK(rep1.arms[0].best().selection_metric == 10.0);
  CHECK(rep1.arms[1].best().selection_metric == 10.0);
  CHECK_FALSE(rep1.small_fewer_steps);
  // compute ratio = large batch / small batch at the same crossing step
  CHECK(rep1.compute_ratio == 4.0);
  CHECK_FALSE(rep1.inconclusive);

  GapSweepConfig empty = gc;
  empty.sizes.clear();
  CHECK_THROWS_AS(gap_sweep(empty), ConfigError);
}

TEST_CASE("init_heatmap scores final-iterate accuracy per scale pair", "[experiments]") {
  HeatmapConfig hc;
  hc.base = tiny_config();
  hc.sizes = {16, 64};
  hc.first_scales = {1.0};
  hc.rest_scales = {0.5, 1.0};
  hc.lrs = {0.05};
  hc.seeds = {1};
  hc.budget_steps = 6;
  hc.base.eval.eval_every = 3;
  HeatmapReport rep = init_heatmap(hc);

  REQUIRE(rep.grid.size() == 2);
  REQUIRE(rep.grid[0].size() == 1);
  REQUIRE(rep.grid[0][0].size() == 2);
  for (size_t zi = 0; zi < 2; ++zi)
    for (const HeatCell& c : rep.grid[zi][0]) {
      CHECK(c.best_lr == 0.05);
      CHECK(c.mean_acc >= 0.0);
      CHECK(c.mean_acc <= 1.0);
    }
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"size", "first_scale", "rest_scale", "best_lr", "mean_acc"});
  CHECK(rep.summary.rows.size() == 4);
  CHECK_FALSE(rep.rows.empty());

  HeatmapConfig bad = hc;
  bad.first_scales.clear();
  CHECK_THROWS_AS(init_heatmap(bad), ConfigError);
}

TEST_CASE("layerwise sweep grids both rates and unions them for the small arm",
          "[experiments]") {
  LayerwiseConfig lc;
  lc.base = tiny_config();
  lc.base.success_threshold = 0.0;
  lc.base.max_steps = 10;
  lc.base.eval.eval_every = 5;
  lc.small_size = 16;
  lc.large_size = 64;
  lc.lr1 = {0.05, 0.06};
  lc.lr2 = {0.05};
  lc.seeds = {1, 2};
  LayerwiseReport rep = layerwise_lr_sweep(lc);

  // all cells cross at step 5; ties resolve to the first grid entry
  CHECK(rep.best_lr1 == 0.05);
  CHECK(rep.best_lr2 == 0.05);
  CHECK(rep.large_best_median == 5.0);
  CHECK(rep.small_best_median == 5.0);
  CHECK(rep.ratio == 1.0);
  CHECK_FALSE(rep.eta1_greater);
  CHECK_FALSE(rep.inconclusive);
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"arm", "lr1", "lr2", "n_seeds", "n_diverged", "median_steps",
                                 "best"});
  CHECK(rep.summary.rows.size() == 3);  // 2 large cells + 1 small row

  bool saw_large_id = false;
  for (const MetricsRow& r : rep.rows)
    if (r.run_id == "large:e1_1:e2_0:s1") saw_large_id = true;
  CHECK(saw_large_id);
}

TEST_CASE("random_label_probe reads the norm ratio at the switch in every arm",
          "[experiments]") {
  ProbeConfig pc;
  pc.base = tiny_config();
  pc.base.schedule.phases = {Phase{64, Phase::Dur::Steps, 12}};
  pc.base.max_steps = 18;
  pc.base.eval.eval_every = 4;
  pc.prephase = RandomPrephase{16, 6};
  pc.seeds = {1, 2};
  ProbeReport rep = random_label_probe(pc);

  CHECK(rep.large_only.name == "large-only");
  CHECK(std::isfinite(rep.large_only.median_switch_ratio));  // forced eval at step 6
  CHECK(std::isfinite(rep.small_true.median_switch_ratio));
  CHECK(std::isfinite(rep.small_random.median_switch_ratio));
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"arm", "n_seeds", "n_success", "median_steps",
                                 "switch_norm_ratio", "diverged_frac"});
  CHECK(rep.summary.rows.size() == 3);
  CHECK_FALSE(rep.rows.empty());

  bool saw_forced = false;
  for (const MetricsRow& r : rep.rows)
    if (r.run_id == "large-only:s0" && r.step == 6) saw_forced = true;
  CHECK(saw_forced);

  ProbeConfig bad = pc;
  bad.prephase.size = 0;
  CHECK_THROWS_AS(random_label_probe(bad), ConfigError);
}

TEST_CASE("bias_refutation compares plain, debiased, and biased-online arms",
          "[experiments]") {
  BiasRefutationConfig bc;
  bc.base = tiny_config();
  bc.base.schedule.batch = 8;
  bc.base.success_threshold = 0.0;
  bc.base.max_steps = 10;
  bc.base.eval.eval_every = 5;
  bc.small_size = 16;
  bc.mode = BiasMode::MeanZero;
  bc.biased_sources = {8};
  bc.seeds = {1, 2};
  BiasReport rep = bias_refutation(bc);

  CHECK(rep.plain_small.steps.median_steps == 5.0);
  CHECK(rep.debiased_small.steps.median_steps == 5.0);
  REQUIRE(rep.biased_online.size() == 1);
  CHECK(rep.biased_online[0].name == "biased-online-m8");
  CHECK(rep.biased_online[0].steps.median_steps == 5.0);
  CHECK(rep.debias_ratio == 1.0);
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"arm", "n_seeds", "n_success", "median_steps",
                                 "diverged_frac"});
  CHECK(rep.summary.rows.size() == 3);

  BiasRefutationConfig bad = bc;
  bad.small_size = 0;
  CHECK_THROWS_AS(bias_refutation(bad), ConfigError);
}

TEST_CASE("scaling_ablation sweeps the axis and reports per-value gaps", "[experiments]") {
  ScalingConfig sc;
  sc.base = tiny_config();
  sc.base.success_threshold = 0.0;
  sc.base.max_steps = 10;
  sc.base.eval.eval_every = 5;
  sc.axis = ScalingAxis::Width;
  sc.values = {8, 16};
  sc.small_size = 16;
  sc.large_size = 64;
  sc.lrs = {0.05};
  sc.seeds = {1, 2};
  ScalingReport rep = scaling_ablation(sc);

  REQUIRE(rep.rows_out.size() == 2);
  for (const ScalingRow& r : rep.rows_out) {
    CHECK(r.small_median == 5.0);
    CHECK(r.large_median == 5.0);
    CHECK(r.gap == 1.0);
    CHECK_FALSE(r.inconclusive);
  }
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"axis_value", "small_median", "large_median", "gap",
                                 "inconclusive"});
  CHECK(rep.summary.rows.size() == 2);

  ScalingConfig bad = sc;
  bad.values.clear();
  CHECK_THROWS_AS(scaling_ablation(bad), ConfigError);
}

TEST_CASE("adam_closure tunes beta2 and lr jointly per arm", "[experiments]") {
  AdamClosureConfig ac;
  ac.base = tiny_config();
  ac.base.success_threshold = 0.0;
  ac.base.max_steps = 10;
  ac.base.eval.eval_every = 5;
  ac.small_size = 16;
  ac.large_size = 64;
  ac.beta2s = {0.999};
  ac.lrs = {0.01};
  ac.seeds = {1, 2};
  AdamReport rep = adam_closure(ac);

  CHECK(rep.small.median_steps == 5.0);
  CHECK(rep.large.median_steps == 5.0);
  CHECK(rep.small.beta2 == 0.999);
  CHECK(rep.small.lr == 0.01);
  CHECK(rep.gap == 1.0);
  CHECK_FALSE(rep.inconclusive);
  CHECK(rep.summary.cols ==
        std::vector<std::string>{"arm", "beta2", "lr", "median_steps", "diverged_frac",
                                 "best"});
  CHECK(rep.summary.rows.size() == 2);  // one cell per arm

  AdamClosureConfig bad = ac;
  bad.lrs.clear();
  CHECK_THROWS_AS(adam_closure(bad), ConfigError);
}
