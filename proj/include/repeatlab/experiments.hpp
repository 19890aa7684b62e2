#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "repeatlab/common.hpp"
#include "repeatlab/metrics.hpp"
#include "repeatlab/model.hpp"
#include "repeatlab/optim.hpp"
#include "repeatlab/parallel.hpp"
#include "repeatlab/rng.hpp"
#include "repeatlab/schedule.hpp"
#include "repeatlab/tasks.hpp"

namespace repeatlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct EvalSpec {
  long test_size = 0;  // 0: task default (4096 parity, 5000 sim)
  long eval_every = 10;
};

struct RandomPrephase {
  long size = 0;
  long duration = 0;  // steps
};

struct RunConfig {
  TaskSpec task = TaskSpec::parity(14, 4);
  std::vector<int> widths = {64, 1};
  InitScheme init;
  OptimConfig optim;
  PhaseSchedule schedule;
  LossKind loss = LossKind::Mse;

  // interventions
  std::optional<BiasMode> bias_removal;  // applied to every fixed subset
  bool whiten_inputs = false;            // sim only, fixed subsets
  std::optional<RandomPrephase> random_label_prephase;
  std::optional<long> biased_online_m;  // online draws use marginals of first m rows

  EvalSpec eval;
  long max_steps = 100000;
  // parity: test accuracy to reach; sim: test loss to reach (downward)
  double success_threshold = 0.99;
  bool stop_at_threshold = false;
  std::vector<long> forced_evals;  // extra global steps to evaluate at
  std::string run_id = "run";

  long test_size() const {
    if (eval.test_size > 0) return eval.test_size;
    return task.kind == TaskKind::Parity ? 4096 : 5000;
  }

  void validate() const {
    task.validate();
    schedule.validate();
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (eval.eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (eval.test_size < 0) throw ConfigError("test_size must be >= 0");
    for (const Phase& ph : schedule.phases)
      if (ph.size == kOnline && ph.dur != Phase::Dur::Steps)
        throw ConfigError("ONLINE phase must use a step-count duration");
    if (random_label_prephase) {
      if (random_label_prephase->size < 1)
        throw ConfigError("random-label prephase needs size >= 1");
      if (random_label_prephase->duration < 0)
        throw ConfigError("random-label prephase duration must be >= 0");
    }
    if (biased_online_m && *biased_online_m < 1)
      throw ConfigError("biased-online source size must be >= 1");
    if (whiten_inputs && task.kind != TaskKind::Sim)
      throw ConfigError("whitening applies to sim tasks only");
  }
};

enum class RunStatus { Ok, Diverged };

struct RunResult {
  RunStatus status = RunStatus::Ok;
  uint64_t seed = 0;
  std::string run_id;
  std::vector<MetricsRow> rows;
  ComputeLedger ledger;
  double steps_to_threshold = kInf;
  double compute_to_threshold = kInf;
  long last_finite_step = 0;
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
  double final_test_loss = std::numeric_limits<double>::quiet_NaN();
  double final_test_acc = std::numeric_limits<double>::quiet_NaN();
  double final_norm_ratio = std::numeric_limits<double>::quiet_NaN();
  // (phase index, global step, norm ratio) at the last step of each phase
  std::vector<std::tuple<int, long, double>> phase_end_ratios;

  bool crossed() const { return std::isfinite(steps_to_threshold); }
};

namespace detail {

struct RealizedPhase {
  bool online = false;
  LabeledDataset subset;  // offline phases
  long batch = 0;
  Phase::Dur dur = Phase::Dur::Steps;
  long amount = 0;
  long spe = 1;  // steps per epoch
};

inline LabeledDataset apply_subset_interventions(LabeledDataset subset, const RunConfig& cfg) {
  if (cfg.bias_removal) subset = remove_input_bias(subset, *cfg.bias_removal);
  if (cfg.whiten_inputs) subset = whiten(subset);
  return subset;
}

}  // namespace detail

// Single training run: init -> phase loop -> per-eval metrics. Pure function
// of (cfg, seed); every stochastic stream is derived from `seed` with a fixed
// label, so reruns are bit-identical.
inline RunResult run_training(const RunConfig& cfg, uint64_t seed) {
  cfg.validate();
  RunResult out;
  out.seed = seed;
  out.run_id = cfg.run_id;

  const uint64_t data_seed = derive_seed(seed, "data");
  const uint64_t init_seed = derive_seed(seed, "init");
  const uint64_t test_seed = derive_seed(seed, "test");
  const uint64_t online_seed = derive_seed(seed, "online");
  const uint64_t label_seed = derive_seed(seed, "labels");

  long master_n = cfg.schedule.max_offline_size();
  if (cfg.random_label_prephase)
    master_n = std::max(master_n, cfg.random_label_prephase->size);
  if (cfg.biased_online_m) master_n = std::max(master_n, *cfg.biased_online_m);

  LabeledDataset master;
  if (master_n > 0) master = make_dataset(cfg.task, master_n, data_seed);

  std::vector<detail::RealizedPhase> phases;
  if (cfg.random_label_prephase && cfg.random_label_prephase->duration > 0) {
    detail::RealizedPhase rp;
    rp.subset = detail::apply_subset_interventions(
        randomize_labels(prefix_view(master, cfg.random_label_prephase->size), label_seed), cfg);
    rp.batch = cfg.schedule.batch == 0 ? rp.subset.n() : cfg.schedule.batch;
    rp.dur = Phase::Dur::Steps;
    rp.amount = cfg.random_label_prephase->duration;
    rp.spe = steps_per_epoch(rp.subset.n(), cfg.schedule.batch);
    phases.push_back(std::move(rp));
  }
  for (size_t pi = 0; pi < cfg.schedule.phases.size(); ++pi) {
    const Phase& ph = cfg.schedule.phases[pi];
    detail::RealizedPhase rp;
    rp.dur = ph.dur;
    rp.amount = ph.amount;
    if (ph.size == kOnline) {
      rp.online = true;
      rp.batch = cfg.schedule.batch;
      rp.spe = 1;
    } else {
      rp.subset = detail::apply_subset_interventions(prefix_view(master, ph.size), cfg);
      rp.batch = cfg.schedule.batch == 0 ? rp.subset.n() : cfg.schedule.batch;
      rp.spe = steps_per_epoch(rp.subset.n(), cfg.schedule.batch);
    }
    phases.push_back(std::move(rp));
  }

  MlpParams params;
  {
    InitScheme scheme = cfg.init;
    scheme.seed = init_seed;
    params = init_mlp(cfg.task.d, cfg.widths, scheme);
  }
  cfg.optim.validate(params.depth());
  AdamState astate;
  if (cfg.optim.kind == OptKind::AdamW) astate = AdamState::init(params);

  const LabeledDataset test_ds = make_dataset(cfg.task, cfg.test_size(), test_seed);

  std::optional<BiasedSampler> sampler;
  if (cfg.biased_online_m)
    sampler = BiasedSampler::from_dataset(prefix_view(master, *cfg.biased_online_m));
  Rng online_rng(online_seed);

  const bool acc_threshold = cfg.task.kind == TaskKind::Parity;
  long gstep = 0;
  bool done = false;

  auto evaluate_state = [&](int phase_idx, const detail::RealizedPhase& rp,
                            const Eigen::MatrixXd& Xb, const Eigen::VectorXd& yb) {
    MetricsRow row;
    row.run_id = cfg.run_id;
    row.seed = seed;
    row.phase = phase_idx;
    row.step = gstep;
    row.compute = out.ledger.compute;
    EvalResult tr = rp.online ? [&] {
      LabeledDataset b;
      b.task = cfg.task;
      b.X = Xb;
      b.y = yb;
      return evaluate(params, b, cfg.loss);
    }()
                              : evaluate(params, rp.subset, cfg.loss);
    row.train_acc = tr.acc;
    row.train_loss = tr.loss;
    EvalResult te = evaluate(params, test_ds, cfg.loss);
    row.test_acc = te.acc;
    row.test_loss = te.loss;
    LayerNorms ln = layer_norms(params);
    row.norm_ratio = ln.ratio;
    row.layer_norms = ln.norms;
    out.rows.push_back(row);

    if (!out.crossed()) {
      const bool hit = acc_threshold ? (te.acc && *te.acc >= cfg.success_threshold)
                                     : (te.loss <= cfg.success_threshold);
      if (hit) {
        out.steps_to_threshold = static_cast<double>(gstep);
        out.compute_to_threshold = static_cast<double>(out.ledger.compute);
      }
    }
    return tr;
  };

  for (size_t pi = 0; pi < phases.size() && !done; ++pi) {
    detail::RealizedPhase& rp = phases[pi];
    BatchCursor cursor(rp.online ? 1 : rp.subset.n(), rp.online ? 0 : cfg.schedule.batch,
                       cfg.schedule.without_replacement,
                       derive_seed(seed, "batch", static_cast<uint64_t>(pi)));
    long steps_in_phase = 0;
    long epochs_done = 0;
    double phase_train_acc = 0.0;
    Eigen::MatrixXd Xb;
    Eigen::VectorXd yb;

    while (!done) {
      if (should_advance(cfg.schedule, Phase{0, rp.dur, rp.amount}, epochs_done, phase_train_acc,
                         steps_in_phase, rp.spe))
        break;
      if (gstep >= cfg.max_steps) {
        done = true;
        break;
      }

      const Eigen::MatrixXd* X = nullptr;
      const Eigen::VectorXd* y = nullptr;
      if (rp.online) {
        Xb.resize(rp.batch, cfg.task.d);
        yb.resize(rp.batch);
        if (sampler) {
          for (long b = 0; b < rp.batch; ++b) {
            auto [x, lab] = biased_online_sample(*sampler, cfg.task, online_rng);
            Xb.row(b) = x.transpose();
            yb(b) = lab;
          }
        } else {
          for (long b = 0; b < rp.batch; ++b)
            yb(b) = detail::sample_row(cfg.task, online_rng, Xb.row(b));
        }
        X = &Xb;
        y = &yb;
      } else if (rp.batch == rp.subset.n() && !cfg.schedule.without_replacement) {
        X = &rp.subset.X;  // full batch: no gather needed
        y = &rp.subset.y;
      } else {
        std::vector<long> idx = cursor.next_indices();
        Xb.resize(static_cast<long>(idx.size()), cfg.task.d);
        yb.resize(static_cast<long>(idx.size()));
        for (size_t b = 0; b < idx.size(); ++b) {
          Xb.row(static_cast<long>(b)) = rp.subset.X.row(idx[b]);
          yb(static_cast<long>(b)) = rp.subset.y(idx[b]);
        }
        X = &Xb;
        y = &yb;
      }

      LossGrad lg = loss_and_grad(params, *X, *y, cfg.loss);
      if (!std::isfinite(lg.loss)) {
        out.status = RunStatus::Diverged;
        done = true;
        break;
      }
      try {
        if (cfg.optim.kind == OptKind::Sgd)
          sgd_step(params, lg.grads, cfg.optim);
        else
          adamw_step(params, astate, lg.grads, cfg.optim);
      } catch (const NumericError&) {
        out.status = RunStatus::Diverged;
        done = true;
        break;
      }
      gstep += 1;
      steps_in_phase += 1;
      out.ledger.record_step(rp.batch, static_cast<int>(pi));
      out.last_finite_step = gstep;

      bool epoch_boundary = rp.spe > 0 && steps_in_phase % rp.spe == 0;
      if (epoch_boundary) epochs_done += 1;

      bool advancing =
          should_advance(cfg.schedule, Phase{0, rp.dur, rp.amount}, epochs_done, phase_train_acc,
                         steps_in_phase, rp.spe);
      // auto phases need fresh train accuracy at epoch boundaries
      bool need_auto_eval = rp.dur == Phase::Dur::Auto && epoch_boundary && !rp.online;
      bool scheduled_eval = gstep % cfg.eval.eval_every == 0 || gstep >= cfg.max_steps ||
                            std::find(cfg.forced_evals.begin(), cfg.forced_evals.end(), gstep) !=
                                cfg.forced_evals.end();
      bool phase_last = advancing || (pi + 1 == phases.size() && gstep >= cfg.max_steps);

      if (scheduled_eval || need_auto_eval || phase_last) {
        EvalResult tr = evaluate_state(static_cast<int>(pi), rp, Xb, yb);
        if (tr.acc) phase_train_acc = *tr.acc;
        if (need_auto_eval || advancing) {
          // re-check with the fresh accuracy
          advancing = should_advance(cfg.schedule, Phase{0, rp.dur, rp.amount}, epochs_done,
                                     phase_train_acc, steps_in_phase, rp.spe);
        }
        if (cfg.stop_at_threshold && out.crossed()) {
          done = true;
          break;
        }
      }
      if (advancing) break;
    }

    if (!out.rows.empty() && out.rows.back().step == gstep) {
      out.phase_end_ratios.emplace_back(static_cast<int>(pi), gstep, out.rows.back().norm_ratio);
    } else if (gstep > 0 && out.status == RunStatus::Ok) {
      // force a phase-boundary eval so the switch diagnostics always exist
      EvalResult tr = evaluate_state(static_cast<int>(pi), rp, Xb, yb);
      (void)tr;
      out.phase_end_ratios.emplace_back(static_cast<int>(pi), gstep, out.rows.back().norm_ratio);
      if (cfg.stop_at_threshold && out.crossed()) done = true;
    }
  }

  if (!out.rows.empty()) {
    const MetricsRow& last = out.rows.back();
    out.final_train_loss = last.train_loss;
    out.final_test_loss = last.test_loss;
    if (last.test_acc) out.final_test_acc = *last.test_acc;
    out.final_norm_ratio = last.norm_ratio;
  }
  return out;
}

// ---- sweep plumbing ---------------------------------------------------------

// Multiplicatively spaced learning-rate grid; spacing ratio capped at 1.2 so
// best-of-grid comparisons are fair across arms.
inline std::vector<double> lr_grid(double lo, double hi, int points) {
  if (points < 1 || !(lo > 0.0) || hi < lo) throw ConfigError("bad learning-rate grid");
  if (points == 1) return {lo};
  const double ratio = std::pow(hi / lo, 1.0 / (points - 1));
  if (ratio > 1.2 + 1e-12)
    throw ConfigError("learning-rate grid ratio exceeds 1.2; add more points");
  std::vector<double> out;
  for (int i = 0; i < points; ++i) out.push_back(lo * std::pow(ratio, i));
  return out;
}

struct Table {
  std::vector<std::string> cols;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> r) {
    if (r.size() != cols.size()) throw ConfigError("summary row width mismatch");
    rows.push_back(std::move(r));
  }

  void write(const std::string& path) const {
    std::ofstream f = detail::open_for_write(path);
    for (size_t i = 0; i < cols.size(); ++i) f << (i ? "," : "") << cols[i];
    f << "\n";
    for (const auto& r : rows) {
      for (size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
      f << "\n";
    }
    if (!f) throw IoError("write failed for '" + path + "'");
  }
};

// Median over seeds where failures count as +inf; used for best-of selection.
inline double median_with_failures(std::vector<double> v) {
  if (v.empty()) return kInf;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  const double a = v[n / 2 - 1], b = v[n / 2];
  if (std::isinf(a) || std::isinf(b)) return kInf;
  return 0.5 * (a + b);
}

struct LrCell {
  double lr = 0.0;
  int lr_index = -1;
  std::vector<RunResult> runs;
  double selection_metric = kInf;        // median steps (parity) or median final loss (sim)
  double diverged_frac = 0.0;
  ThresholdSummary steps;
  ThresholdSummary compute;
};

struct ArmResult {
  std::string name;
  long size = 0;  // kOnline for online arms
  std::vector<LrCell> cells;
  int best_index = -1;
  bool inconclusive = false;

  const LrCell& best() const {
    if (best_index < 0) throw ConfigError("arm has no best cell");
    return cells[static_cast<size_t>(best_index)];
  }
};

namespace detail {

// Run every (lr, seed) job of one arm; selection and tie-breaks are
// deterministic: best metric, then smaller lr, then lower grid index.
inline ArmResult sweep_arm(const std::string& name, const RunConfig& base, long size,
                           const std::vector<double>& lrs, const std::vector<uint64_t>& seeds,
                           int workers) {
  if (lrs.empty() || seeds.empty()) throw ConfigError("sweep needs lrs and seeds");
  ArmResult arm;
  arm.name = name;
  arm.size = size;
  const long n_jobs = static_cast<long>(lrs.size() * seeds.size());
  std::vector<RunResult> results(static_cast<size_t>(n_jobs));
  parallel_for(n_jobs, workers, [&](long j) {
    const size_t li = static_cast<size_t>(j) / seeds.size();
    const size_t si = static_cast<size_t>(j) % seeds.size();
    RunConfig cfg = base;
    cfg.schedule.phases = {Phase{size, Phase::Dur::Steps, cfg.max_steps}};
    cfg.optim.lr = lrs[li];
    cfg.run_id = name + ":lr" + std::to_string(li) + ":s" + std::to_string(si);
    results[static_cast<size_t>(j)] = run_training(cfg, seeds[si]);
  });
  const bool parity = base.task.kind == TaskKind::Parity;
  for (size_t li = 0; li < lrs.size(); ++li) {
    LrCell cell;
    cell.lr = lrs[li];
    cell.lr_index = static_cast<int>(li);
    std::vector<double> sel, steps_v, compute_v;
    long diverged = 0;
    for (size_t si = 0; si < seeds.size(); ++si) {
      RunResult& r = results[li * seeds.size() + si];
      if (r.status == RunStatus::Diverged) ++diverged;
      if (parity) {
        sel.push_back(r.steps_to_threshold);
      } else {
        sel.push_back(std::isfinite(r.final_test_loss) ? r.final_test_loss : kInf);
      }
      steps_v.push_back(r.crossed() ? r.steps_to_threshold
                                    : std::numeric_limits<double>::quiet_NaN());
      compute_v.push_back(r.crossed() ? r.compute_to_threshold
                                      : std::numeric_limits<double>::quiet_NaN());
      cell.runs.push_back(std::move(r));
    }
    cell.selection_metric = median_with_failures(sel);
    cell.diverged_frac = static_cast<double>(diverged) / static_cast<double>(seeds.size());
    cell.steps = steps_to_threshold_summary(steps_v);
    cell.compute = steps_to_threshold_summary(compute_v);
    arm.cells.push_back(std::move(cell));
  }
  for (size_t li = 0; li < arm.cells.size(); ++li) {
    if (arm.best_index < 0 ||
        arm.cells[li].selection_metric < arm.cells[static_cast<size_t>(arm.best_index)].selection_metric)
      arm.best_index = static_cast<int>(li);
  }
  arm.inconclusive = arm.best_index >= 0 &&
                     arm.cells[static_cast<size_t>(arm.best_index)].diverged_frac >= 0.25;
  return arm;
}

inline void collect_rows(const ArmResult& arm, std::vector<MetricsRow>& rows) {
  for (const LrCell& c : arm.cells)
    for (const RunResult& r : c.runs)
      rows.insert(rows.end(), r.rows.begin(), r.rows.end());
}

inline std::vector<double> per_seed_steps(const LrCell& cell) {
  std::vector<double> v;
  for (const RunResult& r : cell.runs) v.push_back(r.steps_to_threshold);
  return v;
}

}  // namespace detail

// ---- recipes ----------------------------------------------------------------

struct GapSweepConfig {
  RunConfig base;
  std::vector<long> sizes;  // fixed-subset sizes, one arm each
  std::vector<double> lrs;
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct GapReport {
  std::vector<ArmResult> arms;  // ordered as sizes
  bool inconclusive = false;
  // set when exactly two sizes are compared (smallest vs largest)
  bool small_fewer_steps = false;
  double compute_ratio = std::numeric_limits<double>::quiet_NaN();  // large/small
  std::vector<MetricsRow> rows;
  Table summary;
};

// Per-size best-of-LR comparison of steps/compute to threshold.
inline GapReport gap_sweep(const GapSweepConfig& gc) {
  if (gc.sizes.empty()) throw ConfigError("gap sweep needs at least one size");
  GapReport rep;
  for (long size : gc.sizes) {
    RunConfig base = gc.base;
    base.schedule.phases = {Phase{size, Phase::Dur::Steps, gc.base.max_steps}};
    ArmResult arm = detail::sweep_arm("n" + std::to_string(size), base, size, gc.lrs, gc.seeds,
                                      gc.workers);
    rep.inconclusive = rep.inconclusive || arm.inconclusive;
    rep.arms.push_back(std::move(arm));
  }
  for (const ArmResult& arm : rep.arms) detail::collect_rows(arm, rep.rows);

  rep.summary.cols = {"arm",          "size",        "lr",          "n_seeds",
                      "n_diverged",   "median_steps", "iqr_steps",  "median_compute",
                      "success_rate", "selection",   "best"};
  for (const ArmResult& arm : rep.arms) {
    for (const LrCell& c : arm.cells) {
      const long n = static_cast<long>(c.runs.size());
      std::vector<double> ok;
      for (const RunResult& r : c.runs)
        if (r.crossed()) ok.push_back(r.steps_to_threshold);
      rep.summary.add_row({arm.name, std::to_string(arm.size), format_g17(c.lr),
                           std::to_string(n),
                           std::to_string(static_cast<long>(std::lround(c.diverged_frac * n))),
                           c.steps.defined ? format_g17(c.steps.median_steps) : "",
                           ok.size() >= 2 ? format_g17(interquartile_range(ok)) : "",
                           c.compute.defined ? format_g17(c.compute.median_steps) : "",
                           format_g17(static_cast<double>(c.steps.n_success) / n),
                           format_g17(c.selection_metric),
                           c.lr_index == arm.best().lr_index ? "1" : "0"});
    }
  }

  if (rep.arms.size() >= 2) {
    const ArmResult& small = rep.arms.front();
    const ArmResult& large = rep.arms.back();
    const LrCell& bs = small.best();
    const LrCell& bl = large.best();
    rep.small_fewer_steps = bs.selection_metric < bl.selection_metric;
    if (bs.compute.defined && bl.compute.defined)
      rep.compute_ratio = bl.compute.median_steps / bs.compute.median_steps;
  }
  return rep;
}

struct HeatmapConfig {
  RunConfig base;
  std::vector<long> sizes;           // typically {small, large}
  std::vector<double> first_scales;  // multiplier grid for layer 0
  std::vector<double> rest_scales;   // multiplier grid for the remaining layers
  std::vector<double> lrs;
  std::vector<uint64_t> seeds;
  long budget_steps = 500;  // fixed budget; final-iterate accuracy is compared
  int workers = 1;
};

struct HeatCell {
  double first_scale = 0.0, rest_scale = 0.0;
  double best_lr = 0.0;
  double mean_acc = 0.0;  // at best lr
};

struct HeatmapReport {
  std::vector<long> sizes;
  // per size: grid[first][rest]
  std::vector<std::vector<std::vector<HeatCell>>> grid;
  std::vector<MetricsRow> rows;
  Table summary;
};

// Final-iterate mean test accuracy per init-scale pair, per dataset size.
inline HeatmapReport init_heatmap(const HeatmapConfig& hc) {
  if (hc.sizes.empty() || hc.first_scales.empty() || hc.rest_scales.empty())
    throw ConfigError("heatmap needs sizes and a scale grid");
  HeatmapReport rep;
  rep.sizes = hc.sizes;
  const size_t nf = hc.first_scales.size(), nr = hc.rest_scales.size(),
               nl = hc.lrs.size(), ns = hc.seeds.size(), nsz = hc.sizes.size();
  const long n_jobs = static_cast<long>(nsz * nf * nr * nl * ns);
  std::vector<double> acc(static_cast<size_t>(n_jobs), 0.0);
  std::vector<RunResult> results(static_cast<size_t>(n_jobs));
  parallel_for(n_jobs, hc.workers, [&](long j) {
    size_t rem = static_cast<size_t>(j);
    const size_t si = rem % ns;
    rem /= ns;
    const size_t li = rem % nl;
    rem /= nl;
    const size_t ri = rem % nr;
    rem /= nr;
    const size_t fi = rem % nf;
    rem /= nf;
    const size_t zi = rem;
    RunConfig cfg = hc.base;
    cfg.max_steps = hc.budget_steps;
    cfg.stop_at_threshold = false;
    cfg.schedule.phases = {Phase{hc.sizes[zi], Phase::Dur::Steps, hc.budget_steps}};
    cfg.optim.lr = hc.lrs[li];
    cfg.init.kind = InitKind::PerLayerConstants;
    cfg.init.layer_scales.assign(cfg.widths.size(), hc.rest_scales[ri]);
    cfg.init.layer_scales[0] = hc.first_scales[fi];
    cfg.run_id = "n" + std::to_string(hc.sizes[zi]) + ":f" + std::to_string(fi) + ":r" +
                 std::to_string(ri) + ":lr" + std::to_string(li) + ":s" + std::to_string(si);
    RunResult r = run_training(cfg, hc.seeds[si]);
    acc[static_cast<size_t>(j)] =
        std::isfinite(r.final_test_acc) ? r.final_test_acc : 0.0;
    results[static_cast<size_t>(j)] = std::move(r);
  });
  for (const RunResult& r : results) rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());

  rep.summary.cols = {"size", "first_scale", "rest_scale", "best_lr", "mean_acc"};
  rep.grid.resize(nsz);
  for (size_t zi = 0; zi < nsz; ++zi) {
    rep.grid[zi].resize(nf);
    for (size_t fi = 0; fi < nf; ++fi) {
      rep.grid[zi][fi].resize(nr);
      for (size_t ri = 0; ri < nr; ++ri) {
        HeatCell cell;
        cell.first_scale = hc.first_scales[fi];
        cell.rest_scale = hc.rest_scales[ri];
        double best = -1.0;
        for (size_t li = 0; li < nl; ++li) {
          double sum = 0.0;
          for (size_t si = 0; si < ns; ++si) {
            size_t j = (((zi * nf + fi) * nr + ri) * nl + li) * ns + si;
            sum += acc[j];
          }
          const double mean = sum / static_cast<double>(ns);
          if (mean > best + 1e-15) {
            best = mean;
            cell.best_lr = hc.lrs[li];
          }
        }
        cell.mean_acc = best;
        rep.grid[zi][fi][ri] = cell;
        rep.summary.add_row({std::to_string(hc.sizes[zi]), format_g17(cell.first_scale),
                             format_g17(cell.rest_scale), format_g17(cell.best_lr),
                             format_g17(cell.mean_acc)});
      }
    }
  }
  return rep;
}

struct LayerwiseConfig {
  RunConfig base;
  long small_size = 0;
  long large_size = 0;  // kOnline allowed
  std::vector<double> lr1;  // first-layer rates
  std::vector<double> lr2;  // output-layer rates
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct LayerwiseReport {
  double best_lr1 = 0.0, best_lr2 = 0.0;
  double large_best_median = kInf;   // steps at best pair (large arm)
  double small_best_median = kInf;   // best global-lr small arm (diagonal of the same grid)
  double small_best_lr = 0.0;
  bool eta1_greater = false;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  bool inconclusive = false;
  std::vector<MetricsRow> rows;
  Table summary;
};

// (eta1, eta2) grid on the large arm vs the best single-lr small arm.
inline LayerwiseReport layerwise_lr_sweep(const LayerwiseConfig& lc) {
  if (lc.lr1.empty() || lc.lr2.empty()) throw ConfigError("layerwise sweep needs both grids");
  LayerwiseReport rep;
  const size_t n1 = lc.lr1.size(), n2 = lc.lr2.size(), ns = lc.seeds.size();
  const long n_jobs = static_cast<long>(n1 * n2 * ns);
  std::vector<RunResult> results(static_cast<size_t>(n_jobs));
  parallel_for(n_jobs, lc.workers, [&](long j) {
    size_t rem = static_cast<size_t>(j);
    const size_t si = rem % ns;
    rem /= ns;
    const size_t i2 = rem % n2;
    const size_t i1 = rem / n2;
    RunConfig cfg = lc.base;
    cfg.schedule.phases = {Phase{lc.large_size, Phase::Dur::Steps, cfg.max_steps}};
    cfg.optim.layer_lrs.assign(cfg.widths.size(), lc.lr2[i2]);
    cfg.optim.layer_lrs[0] = lc.lr1[i1];
    cfg.run_id = "large:e1_" + std::to_string(i1) + ":e2_" + std::to_string(i2) + ":s" +
                 std::to_string(si);
    results[static_cast<size_t>(j)] = run_training(cfg, lc.seeds[si]);
  });

  rep.summary.cols = {"arm", "lr1", "lr2", "n_seeds", "n_diverged", "median_steps", "best"};
  double best_metric = kInf;
  long best_flat = -1;
  std::vector<double> medians(n1 * n2, kInf);
  std::vector<double> divfrac(n1 * n2, 0.0);
  for (size_t i1 = 0; i1 < n1; ++i1)
    for (size_t i2 = 0; i2 < n2; ++i2) {
      std::vector<double> sel;
      long div = 0;
      for (size_t si = 0; si < ns; ++si) {
        const RunResult& r = results[(i1 * n2 + i2) * ns + si];
        sel.push_back(r.steps_to_threshold);
        if (r.status == RunStatus::Diverged) ++div;
      }
      const size_t flat = i1 * n2 + i2;
      medians[flat] = median_with_failures(sel);
      divfrac[flat] = static_cast<double>(div) / static_cast<double>(ns);
      // tie-break: smaller lr1, then smaller lr2 (grid order)
      if (medians[flat] < best_metric) {
        best_metric = medians[flat];
        best_flat = static_cast<long>(flat);
      }
    }
  if (best_flat < 0) throw ConfigError("layerwise sweep produced no cells");
  const size_t b1 = static_cast<size_t>(best_flat) / n2, b2 = static_cast<size_t>(best_flat) % n2;
  rep.best_lr1 = lc.lr1[b1];
  rep.best_lr2 = lc.lr2[b2];
  rep.large_best_median = best_metric;
  rep.eta1_greater = rep.best_lr1 > rep.best_lr2;
  rep.inconclusive = divfrac[static_cast<size_t>(best_flat)] >= 0.25;

  // small arm: single global lr over the union of both grids' values
  std::vector<double> small_lrs = lc.lr1;
  small_lrs.insert(small_lrs.end(), lc.lr2.begin(), lc.lr2.end());
  std::sort(small_lrs.begin(), small_lrs.end());
  small_lrs.erase(std::unique(small_lrs.begin(), small_lrs.end()), small_lrs.end());
  RunConfig small_base = lc.base;
  ArmResult small_arm =
      detail::sweep_arm("small", small_base, lc.small_size, small_lrs, lc.seeds, lc.workers);
  rep.small_best_median = small_arm.best().selection_metric;
  rep.small_best_lr = small_arm.best().lr;
  rep.inconclusive = rep.inconclusive || small_arm.inconclusive;
  rep.ratio = rep.large_best_median / rep.small_best_median;

  for (size_t i1 = 0; i1 < n1; ++i1)
    for (size_t i2 = 0; i2 < n2; ++i2) {
      const size_t flat = i1 * n2 + i2;
      rep.summary.add_row(
          {"large", format_g17(lc.lr1[i1]), format_g17(lc.lr2[i2]),
           std::to_string(static_cast<long>(ns)),
           std::to_string(static_cast<long>(std::lround(divfrac[flat] * ns))),
           format_g17(medians[flat]), static_cast<long>(flat) == best_flat ? "1" : "0"});
    }
  rep.summary.add_row(
      {"small", format_g17(rep.small_best_lr), format_g17(rep.small_best_lr),
       std::to_string(static_cast<long>(ns)),
       std::to_string(static_cast<long>(std::lround(small_arm.best().diverged_frac * ns))),
       format_g17(rep.small_best_median), "1"});
  for (const RunResult& r : results) rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());
  detail::collect_rows(small_arm, rep.rows);
  return rep;
}

struct ProbeConfig {
  RunConfig base;       // schedule holds the large-only arm
  RandomPrephase prephase;  // size + duration of the small stage
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct ProbeArm {
  std::string name;
  ThresholdSummary steps;
  std::vector<double> steps_per_seed;  // +inf where the threshold was never hit
  double median_switch_ratio = std::numeric_limits<double>::quiet_NaN();
  double diverged_frac = 0.0;
};

struct ProbeReport {
  ProbeArm large_only, small_true, small_random;
  std::vector<MetricsRow> rows;
  Table summary;
};

// Three arms: large-only, small-then-large with true labels, and
// small-then-large with random labels. Norm ratio is read at the switch step
// in every arm (the large-only arm is force-evaluated at that step).
inline ProbeReport random_label_probe(const ProbeConfig& pc) {
  if (pc.prephase.size < 1) throw ConfigError("probe needs a prephase size");
  ProbeReport rep;
  const size_t ns = pc.seeds.size();
  const long n_jobs = static_cast<long>(3 * ns);
  std::vector<RunResult> results(static_cast<size_t>(n_jobs));
  parallel_for(n_jobs, pc.workers, [&](long j) {
    const size_t arm = static_cast<size_t>(j) / ns;
    const size_t si = static_cast<size_t>(j) % ns;
    RunConfig cfg = pc.base;
    if (arm == 0) {
      cfg.run_id = "large-only:s" + std::to_string(si);
      if (pc.prephase.duration > 0) cfg.forced_evals.push_back(pc.prephase.duration);
    } else if (arm == 1) {
      std::vector<Phase> ph = cfg.schedule.phases;
      ph.insert(ph.begin(), Phase{pc.prephase.size, Phase::Dur::Steps, pc.prephase.duration});
      cfg.schedule.phases = ph;
      cfg.run_id = "small-true:s" + std::to_string(si);
    } else {
      cfg.random_label_prephase = pc.prephase;
      cfg.run_id = "small-random:s" + std::to_string(si);
    }
    results[static_cast<size_t>(j)] = run_training(cfg, pc.seeds[si]);
  });

  auto summarize = [&](size_t arm, const std::string& name) {
    ProbeArm a;
    a.name = name;
    std::vector<double> steps_v, ratio_v;
    long div = 0;
    for (size_t si = 0; si < ns; ++si) {
      const RunResult& r = results[arm * ns + si];
      if (r.status == RunStatus::Diverged) ++div;
      steps_v.push_back(r.crossed() ? r.steps_to_threshold
                                    : std::numeric_limits<double>::quiet_NaN());
      a.steps_per_seed.push_back(r.steps_to_threshold);
      double ratio = std::numeric_limits<double>::quiet_NaN();
      if (arm == 0) {
        for (const MetricsRow& row : r.rows)
          if (row.step == pc.prephase.duration) ratio = row.norm_ratio;
      } else if (!r.phase_end_ratios.empty()) {
        ratio = std::get<2>(r.phase_end_ratios.front());
      }
      if (std::isfinite(ratio)) ratio_v.push_back(ratio);
    }
    a.steps = steps_to_threshold_summary(steps_v);
    if (!ratio_v.empty()) a.median_switch_ratio = median(ratio_v);
    a.diverged_frac = static_cast<double>(div) / static_cast<double>(ns);
    return a;
  };
  rep.large_only = summarize(0, "large-only");
  rep.small_true = summarize(1, "small-true");
  rep.small_random = summarize(2, "small-random");

  rep.summary.cols = {"arm", "n_seeds", "n_success", "median_steps", "switch_norm_ratio",
                      "diverged_frac"};
  for (const ProbeArm* a : {&rep.large_only, &rep.small_true, &rep.small_random})
    rep.summary.add_row({a->name, std::to_string(static_cast<long>(ns)),
                         std::to_string(a->steps.n_success),
                         a->steps.defined ? format_g17(a->steps.median_steps) : "",
                         format_g17(a->median_switch_ratio), format_g17(a->diverged_frac)});
  for (const RunResult& r : results) rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());
  return rep;
}

struct BiasRefutationConfig {
  RunConfig base;
  long small_size = 0;
  BiasMode mode = BiasMode::MeanZero;
  std::vector<long> biased_sources;  // source sizes m for the biased-online arm
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct BiasArm {
  std::string name;
  ThresholdSummary steps;
  std::vector<double> steps_per_seed;  // +inf where the threshold was never hit
  double diverged_frac = 0.0;
};

struct BiasReport {
  BiasArm plain_small, debiased_small;
  std::vector<BiasArm> biased_online;  // per source size
  double debias_ratio = std::numeric_limits<double>::quiet_NaN();  // debiased/plain medians
  std::vector<MetricsRow> rows;
  Table summary;
};

// Arm A: plain vs bias-removed small set. Arm B: biased-online training with
// the marginals of a size-m subset.
inline BiasReport bias_refutation(const BiasRefutationConfig& bc) {
  if (bc.small_size < 1) throw ConfigError("bias refutation needs a small size");
  BiasReport rep;
  const size_t ns = bc.seeds.size();
  const size_t n_arms = 2 + bc.biased_sources.size();
  const long n_jobs = static_cast<long>(n_arms * ns);
  std::vector<RunResult> results(static_cast<size_t>(n_jobs));
  parallel_for(n_jobs, bc.workers, [&](long j) {
    const size_t arm = static_cast<size_t>(j) / ns;
    const size_t si = static_cast<size_t>(j) % ns;
    RunConfig cfg = bc.base;
    if (arm <= 1) {
      cfg.schedule.phases = {Phase{bc.small_size, Phase::Dur::Steps, cfg.max_steps}};
      if (arm == 1) cfg.bias_removal = bc.mode;
      cfg.run_id = (arm == 0 ? std::string("small-plain") : std::string("small-debiased")) +
                   ":s" + std::to_string(si);
    } else {
      cfg.schedule.phases = {Phase{kOnline, Phase::Dur::Steps, cfg.max_steps}};
      cfg.biased_online_m = bc.biased_sources[arm - 2];
      cfg.run_id = "biased-online-m" + std::to_string(bc.biased_sources[arm - 2]) + ":s" +
                   std::to_string(si);
    }
    results[static_cast<size_t>(j)] = run_training(cfg, bc.seeds[si]);
  });

  auto summarize = [&](size_t arm, const std::string& name) {
    BiasArm a;
    a.name = name;
    std::vector<double> steps_v;
    long div = 0;
    for (size_t si = 0; si < ns; ++si) {
      const RunResult& r = results[arm * ns + si];
      if (r.status == RunStatus::Diverged) ++div;
      steps_v.push_back(r.crossed() ? r.steps_to_threshold
                                    : std::numeric_limits<double>::quiet_NaN());
      a.steps_per_seed.push_back(r.steps_to_threshold);
    }
    a.steps = steps_to_threshold_summary(steps_v);
    a.diverged_frac = static_cast<double>(div) / static_cast<double>(ns);
    return a;
  };
  rep.plain_small = summarize(0, "small-plain");
  rep.debiased_small = summarize(1, "small-debiased");
  for (size_t k = 0; k < bc.biased_sources.size(); ++k)
    rep.biased_online.push_back(
        summarize(2 + k, "biased-online-m" + std::to_string(bc.biased_sources[k])));
  if (rep.plain_small.steps.defined && rep.debiased_small.steps.defined)
    rep.debias_ratio = rep.debiased_small.steps.median_steps / rep.plain_small.steps.median_steps;

  rep.summary.cols = {"arm", "n_seeds", "n_success", "median_steps", "diverged_frac"};
  auto add = [&](const BiasArm& a) {
    rep.summary.add_row({a.name, std::to_string(static_cast<long>(ns)),
                         std::to_string(a.steps.n_success),
                         a.steps.defined ? format_g17(a.steps.median_steps) : "",
                         format_g17(a.diverged_frac)});
  };
  add(rep.plain_small);
  add(rep.debiased_small);
  for (const BiasArm& a : rep.biased_online) add(a);
  for (const RunResult& r : results) rep.rows.insert(rep.rows.end(), r.rows.begin(), r.rows.end());
  return rep;
}

enum class ScalingAxis { Width, Depth, TaskDim };

struct ScalingConfig {
  RunConfig base;
  ScalingAxis axis = ScalingAxis::Width;
  std::vector<long> values;
  long small_size = 0;
  long large_size = 0;
  std::vector<double> lrs;
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct ScalingRow {
  long value = 0;
  double small_median = kInf, large_median = kInf;
  double gap = std::numeric_limits<double>::quiet_NaN();  // large/small
  bool inconclusive = false;
};

struct ScalingReport {
  std::vector<ScalingRow> rows_out;
  std::vector<MetricsRow> rows;
  Table summary;
};

// Gap ratio (large-arm median steps / small-arm median steps) along one
// architecture or task axis.
inline ScalingReport scaling_ablation(const ScalingConfig& sc) {
  if (sc.values.empty()) throw ConfigError("scaling ablation needs axis values");
  ScalingReport rep;
  rep.summary.cols = {"axis_value", "small_median", "large_median", "gap", "inconclusive"};
  for (long v : sc.values) {
    RunConfig base = sc.base;
    switch (sc.axis) {
      case ScalingAxis::Width: {
        base.widths.assign(base.widths.size(), static_cast<int>(v));
        base.widths.back() = 1;
        break;
      }
      case ScalingAxis::Depth: {
        const int w = base.widths.front();
        base.widths.assign(static_cast<size_t>(v) + 1, w);
        base.widths.back() = 1;
        break;
      }
      case ScalingAxis::TaskDim: {
        base.task = TaskSpec::parity(static_cast<int>(v), base.task.k);
        break;
      }
    }
    ArmResult small = detail::sweep_arm("v" + std::to_string(v) + "-small", base, sc.small_size,
                                        sc.lrs, sc.seeds, sc.workers);
    ArmResult large = detail::sweep_arm("v" + std::to_string(v) + "-large", base, sc.large_size,
                                        sc.lrs, sc.seeds, sc.workers);
    ScalingRow row;
    row.value = v;
    row.small_median = small.best().selection_metric;
    row.large_median = large.best().selection_metric;
    row.gap = row.large_median / row.small_median;
    row.inconclusive = small.inconclusive || large.inconclusive;
    rep.summary.add_row({std::to_string(v), format_g17(row.small_median),
                         format_g17(row.large_median), format_g17(row.gap),
                         row.inconclusive ? "1" : "0"});
    rep.rows_out.push_back(row);
    detail::collect_rows(small, rep.rows);
    detail::collect_rows(large, rep.rows);
  }
  return rep;
}

struct AdamClosureConfig {
  RunConfig base;  // optim.kind forced to AdamW inside
  long small_size = 0;
  long large_size = 0;  // kOnline allowed
  std::vector<double> beta2s = {0.8, 0.9, 0.95, 0.999};
  std::vector<double> lrs;
  std::vector<uint64_t> seeds;
  int workers = 1;
};

struct AdamArmBest {
  double lr = 0.0, beta2 = 0.0;
  double median_steps = kInf;
  double iqr = std::numeric_limits<double>::quiet_NaN();
  bool iqr_defined = false;
  double diverged_frac = 0.0;
};

struct AdamReport {
  AdamArmBest small, large;
  double gap = std::numeric_limits<double>::quiet_NaN();
  bool inconclusive = false;
  std::vector<MetricsRow> rows;
  Table summary;
};

// Gap sweep under AdamW with the beta2 set from the tuning protocol.
inline AdamReport adam_closure(const AdamClosureConfig& ac) {
  if (ac.lrs.empty() || ac.beta2s.empty()) throw ConfigError("adam sweep needs lrs and beta2s");
  AdamReport rep;
  rep.summary.cols = {"arm", "beta2", "lr", "median_steps", "diverged_frac", "best"};
  auto sweep = [&](long size, const std::string& name, AdamArmBest& best) {
    double best_metric = kInf;
    std::vector<MetricsRow> kept;
    for (size_t bi = 0; bi < ac.beta2s.size(); ++bi) {
      RunConfig base = ac.base;
      base.optim.kind = OptKind::AdamW;
      base.optim.beta2 = ac.beta2s[bi];
      ArmResult arm = detail::sweep_arm(name + "-b" + std::to_string(bi), base, size, ac.lrs,
                                        ac.seeds, ac.workers);
      detail::collect_rows(arm, rep.rows);
      for (const LrCell& c : arm.cells) {
        const bool is_best_cell = c.lr_index == arm.best().lr_index;
        rep.summary.add_row({name, format_g17(ac.beta2s[bi]), format_g17(c.lr),
                             format_g17(c.selection_metric), format_g17(c.diverged_frac),
                             is_best_cell ? "1" : "0"});
      }
      const LrCell& cb = arm.best();
      if (cb.selection_metric < best_metric) {
        best_metric = cb.selection_metric;
        best.lr = cb.lr;
        best.beta2 = ac.beta2s[bi];
        best.median_steps = cb.selection_metric;
        best.diverged_frac = cb.diverged_frac;
        std::vector<double> ok;
        for (const RunResult& r : cb.runs)
          if (r.crossed()) ok.push_back(r.steps_to_threshold);
        best.iqr_defined = ok.size() >= 2;
        if (best.iqr_defined) best.iqr = interquartile_range(ok);
      }
    }
  };
  sweep(ac.small_size, "small", rep.small);
  sweep(ac.large_size, "large", rep.large);
  rep.gap = rep.large.median_steps / rep.small.median_steps;
  rep.inconclusive = rep.small.diverged_frac >= 0.25 || rep.large.diverged_frac >= 0.25;
  return rep;
}

}  // namespace repeatlab
