#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "repeatlab/common.hpp"
#include "repeatlab/config.hpp"
#include "repeatlab/experiments.hpp"
#include "repeatlab/metrics.hpp"
#include "repeatlab/parallel.hpp"
#include "repeatlab/theory.hpp"

namespace repeatlab {

struct CliInvocation {
  std::string subcommand;  // run | sweep | theory | verify | report
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  int workers = 0;  // 0: REPEATLAB_WORKERS or 1
  std::optional<uint64_t> seed;
};

namespace clidetail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

inline void write_meta(const ResolvedConfig& rc, const std::string& out_dir) {
  json meta;
  meta["tool_version"] = kVersion;
  meta["config"] = rc.echo;
  write_json(meta, out_dir + "/meta.json");
}

inline std::string arm_of(const std::string& run_id) {
  const size_t p = run_id.find(':');
  return p == std::string::npos ? run_id : run_id.substr(0, p);
}

// Median-over-seeds series per run_id arm, skipping empty buckets.
inline std::vector<Series> median_series(const std::vector<MetricsRow>& rows, MetricField field,
                                         const std::function<std::string(const MetricsRow&)>& key) {
  AggregateOptions opt;
  opt.field = field;
  std::map<std::string, Series> by_group;
  for (const AggregateRow& a : aggregate(rows, key, opt)) {
    if (!std::isfinite(a.median_v)) continue;
    Series& s = by_group[a.group];
    s.label = a.group;
    s.x.push_back(a.bucket);
    s.y.push_back(a.median_v);
  }
  std::vector<Series> out;
  for (auto& [k, s] : by_group)
    if (!s.x.empty()) out.push_back(std::move(s));
  return out;
}

inline void plot_if_nonempty(std::vector<Series> series, const AxesSpec& axes,
                             const std::string& path) {
  series.erase(std::remove_if(series.begin(), series.end(),
                              [](const Series& s) { return s.x.empty(); }),
               series.end());
  if (series.empty()) return;
  plot_series(series, axes, path);
}

inline MetricField default_field(const std::vector<MetricsRow>& rows) {
  for (const MetricsRow& r : rows)
    if (r.test_acc) return MetricField::TestAcc;
  return MetricField::TestLoss;
}

inline int finish_sweep(const ResolvedConfig& rc, const std::string& out_dir,
                        const std::vector<MetricsRow>& rows, const Table& summary,
                        bool inconclusive) {
  write_csv(rows, out_dir + "/runs.csv");
  summary.write(out_dir + "/summary.csv");
  const MetricField field = rows.empty() ? MetricField::TestLoss : default_field(rows);
  AxesSpec ax;
  ax.title = rc.name;
  ax.xlabel = "step";
  ax.ylabel = field == MetricField::TestAcc ? "median test accuracy" : "median test loss";
  plot_if_nonempty(
      median_series(rows, field, [](const MetricsRow& r) { return arm_of(r.run_id); }), ax,
      out_dir + "/plots/" + experiment_type_name(rc.type) + std::string(".svg"));
  if (inconclusive) {
    std::cerr << "INCONCLUSIVE: a selected cell diverged on >= 25% of seeds\n";
    return kExitAssertion;
  }
  return kExitOk;
}

// ---- subcommand bodies -----------------------------------------------------

inline int dispatch_run(const ResolvedConfig& rc, const std::string& out_dir, int workers) {
  const size_t ns = rc.seeds.size();
  std::vector<RunResult> results(ns);
  parallel_for(static_cast<long>(ns), workers, [&](long i) {
    RunConfig cfg = rc.base;
    cfg.run_id = rc.name + ":s" + std::to_string(i);
    results[static_cast<size_t>(i)] = run_training(cfg, rc.seeds[static_cast<size_t>(i)]);
  });

  std::vector<MetricsRow> rows;
  for (const RunResult& r : results) rows.insert(rows.end(), r.rows.begin(), r.rows.end());
  write_csv(rows, out_dir + "/runs.csv");

  Table t;
  t.cols = {"run_id",  "seed",          "status",          "steps",
            "compute", "steps_to_0.99", "compute_to_0.99", "final_train_loss",
            "final_test_loss", "final_test_acc", "final_norm_ratio"};
  for (const RunResult& r : results)
    t.add_row({r.run_id, std::to_string(r.seed),
               r.status == RunStatus::Ok ? "ok" : "diverged", std::to_string(r.ledger.steps),
               std::to_string(r.ledger.compute),
               r.crossed() ? format_g17(r.steps_to_threshold) : "",
               r.crossed() ? format_g17(r.compute_to_threshold) : "",
               format_g17(r.final_train_loss), format_g17(r.final_test_loss),
               format_g17(r.final_test_acc), format_g17(r.final_norm_ratio)});
  t.write(out_dir + "/summary.csv");

  const MetricField field = rows.empty() ? MetricField::TestLoss : default_field(rows);
  AxesSpec ax;
  ax.title = rc.name;
  ax.xlabel = "step";
  ax.ylabel = field == MetricField::TestAcc ? "median test accuracy" : "median test loss";
  plot_if_nonempty(median_series(rows, field,
                                 [](const MetricsRow& r) { return arm_of(r.run_id); }),
                   ax, out_dir + "/plots/run.svg");
  return kExitOk;
}

inline int dispatch_sweep(const ResolvedConfig& rc, const std::string& out_dir, int workers) {
  switch (rc.type) {
    case ExperimentType::GapSweep: {
      GapSweepConfig gc;
      gc.base = rc.base;
      gc.sizes = rc.sweep.sizes;
      gc.lrs = rc.sweep.lrs;
      gc.seeds = rc.seeds;
      gc.workers = workers;
      GapReport rep = gap_sweep(gc);
      return finish_sweep(rc, out_dir, rep.rows, rep.summary, rep.inconclusive);
    }
    case ExperimentType::InitHeatmap: {
      HeatmapConfig hc;
      hc.base = rc.base;
      hc.sizes = rc.sweep.sizes;
      hc.first_scales = rc.sweep.first_scales;
      hc.rest_scales = rc.sweep.rest_scales;
      hc.lrs = rc.sweep.lrs;
      hc.seeds = rc.seeds;
      hc.budget_steps = rc.sweep.budget_steps;
      hc.workers = workers;
      HeatmapReport rep = init_heatmap(hc);
      write_csv(rep.rows, out_dir + "/runs.csv");
      rep.summary.write(out_dir + "/summary.csv");
      // best-over-rest accuracy as a function of the first-layer scale
      std::vector<Series> series;
      for (size_t zi = 0; zi < rep.sizes.size(); ++zi) {
        Series s;
        s.label = "n" + std::to_string(rep.sizes[zi]);
        for (size_t fi = 0; fi < hc.first_scales.size(); ++fi) {
          double best = 0.0;
          for (size_t ri = 0; ri < hc.rest_scales.size(); ++ri)
            best = std::max(best, rep.grid[zi][fi][ri].mean_acc);
          s.x.push_back(hc.first_scales[fi]);
          s.y.push_back(best);
        }
        series.push_back(std::move(s));
      }
      AxesSpec ax;
      ax.title = rc.name;
      ax.xlabel = "first-layer scale";
      ax.ylabel = "best mean accuracy";
      ax.logx = true;
      plot_if_nonempty(std::move(series), ax, out_dir + "/plots/init_heatmap.svg");
      return kExitOk;
    }
    case ExperimentType::LayerwiseLr: {
      LayerwiseConfig lc;
      lc.base = rc.base;
      lc.small_size = rc.sweep.small_size;
      lc.large_size = rc.sweep.large_size;
      lc.lr1 = rc.sweep.lr1;
      lc.lr2 = rc.sweep.lr2;
      lc.seeds = rc.seeds;
      lc.workers = workers;
      LayerwiseReport rep = layerwise_lr_sweep(lc);
      return finish_sweep(rc, out_dir, rep.rows, rep.summary, rep.inconclusive);
    }
    case ExperimentType::RandomLabelProbe: {
      ProbeConfig pc;
      pc.base = rc.base;
      pc.prephase = rc.sweep.prephase;
      pc.seeds = rc.seeds;
      pc.workers = workers;
      ProbeReport rep = random_label_probe(pc);
      const int code = finish_sweep(rc, out_dir, rep.rows, rep.summary, false);
      AxesSpec ax;
      ax.title = rc.name + " norm ratio";
      ax.xlabel = "step";
      ax.ylabel = "median norm ratio";
      plot_if_nonempty(
          median_series(rep.rows, MetricField::NormRatio,
                        [](const MetricsRow& r) { return arm_of(r.run_id); }),
          ax, out_dir + "/plots/norm_ratio.svg");
      return code;
    }
    case ExperimentType::BiasRefutation: {
      BiasRefutationConfig bc;
      bc.base = rc.base;
      bc.small_size = rc.sweep.small_size;
      bc.mode = rc.sweep.bias_mode;
      bc.biased_sources = rc.sweep.biased_sources;
      bc.seeds = rc.seeds;
      bc.workers = workers;
      BiasReport rep = bias_refutation(bc);
      return finish_sweep(rc, out_dir, rep.rows, rep.summary, false);
    }
    case ExperimentType::ScalingAblation: {
      ScalingConfig sc;
      sc.base = rc.base;
      sc.axis = rc.sweep.axis;
      sc.values = rc.sweep.values;
      sc.small_size = rc.sweep.small_size;
      sc.large_size = rc.sweep.large_size;
      sc.lrs = rc.sweep.lrs;
      sc.seeds = rc.seeds;
      sc.workers = workers;
      ScalingReport rep = scaling_ablation(sc);
      write_csv(rep.rows, out_dir + "/runs.csv");
      rep.summary.write(out_dir + "/summary.csv");
      Series s;
      s.label = "gap ratio";
      bool inconclusive = false;
      for (const ScalingRow& r : rep.rows_out) {
        inconclusive = inconclusive || r.inconclusive;
        if (std::isfinite(r.gap)) {
          s.x.push_back(static_cast<double>(r.value));
          s.y.push_back(r.gap);
        }
      }
      AxesSpec ax;
      ax.title = rc.name;
      ax.xlabel = "axis value";
      ax.ylabel = "large/small median-steps ratio";
      ax.logx = true;
      plot_if_nonempty({s}, ax, out_dir + "/plots/scaling.svg");
      if (inconclusive) {
        std::cerr << "INCONCLUSIVE: a selected cell diverged on >= 25% of seeds\n";
        return kExitAssertion;
      }
      return kExitOk;
    }
    case ExperimentType::AdamClosure: {
      AdamClosureConfig ac;
      ac.base = rc.base;
      ac.small_size = rc.sweep.small_size;
      ac.large_size = rc.sweep.large_size;
      ac.beta2s = rc.sweep.beta2s;
      ac.lrs = rc.sweep.lrs;
      ac.seeds = rc.seeds;
      ac.workers = workers;
      AdamReport rep = adam_closure(ac);
      return finish_sweep(rc, out_dir, rep.rows, rep.summary, rep.inconclusive);
    }
    default:
      throw ConfigError("experiment.type '" + std::string(experiment_type_name(rc.type)) +
                        "' is not a sweep; use the matching subcommand");
  }
}

inline int dispatch_theory(const ResolvedConfig& rc, const std::string& out_dir, int workers) {
  const TheorySection& ts = rc.theory;
  if (ts.Ns.empty()) throw ConfigError("theory.Ns must be non-empty");

  Table runs;
  runs.cols = {"attempt", "N",  "seed",  "failed", "fail_reason",   "T1",
               "T2",      "total", "a_star", "a0",     "q0",            "qpop0",
               "mhat_opnorm", "final_dist", "drift", "align_at_switch", "used"};
  Table summary;
  summary.cols = {"N",       "a_star",   "attempts",  "successes", "failures",
                  "used",    "median_T1", "median_T2", "median_total"};

  std::vector<double> med_T1, med_total, xs;
  bool all_complete = true;

  for (size_t zi = 0; zi < ts.Ns.size(); ++zi) {
    const long N = ts.Ns[zi];
    TwoPhaseConfig tc;
    tc.d = ts.d;
    tc.N = N;
    tc.lr = ts.lr;
    tc.eps = ts.eps;
    tc.random_labels = ts.random_labels;
    tc.width_m = ts.width_m;
    tc.cap_multiplier = static_cast<int>(ts.cap_multiplier);
    tc.skip_phase1 = ts.skip_phase1;
    tc.consts = ts.consts;
    tc.consts.random_labels = ts.random_labels;
    tc.a_star = ts.use_schedule
                    ? a_star_schedule(N, ts.d, ts.lr, ts.consts.delta, ts.consts)
                    : ts.a_star;

    const long target = ts.trials;
    const long attempt_cap = 100 * target;
    std::vector<TwoPhaseResult> attempts;
    long successes = 0;
    while (successes < target && static_cast<long>(attempts.size()) < attempt_cap) {
      const long base = static_cast<long>(attempts.size());
      const long wave = std::min<long>(std::max<long>(64, target), attempt_cap - base);
      std::vector<TwoPhaseResult> res =
          parallel_map<TwoPhaseResult>(wave, workers, [&](long i) {
            return run_two_phase(
                tc, derive_seed(rc.base_seed, "theory", static_cast<uint64_t>(zi),
                                static_cast<uint64_t>(base + i)));
          });
      for (auto& r : res) {
        if (!r.failed) ++successes;
        attempts.push_back(std::move(r));
      }
    }

    std::vector<double> t1s, totals, t2s;
    long used = 0;
    for (size_t i = 0; i < attempts.size(); ++i) {
      const TwoPhaseResult& r = attempts[i];
      const bool use = !r.failed && used < target;
      if (use) {
        t1s.push_back(static_cast<double>(r.T1));
        t2s.push_back(static_cast<double>(r.T2));
        totals.push_back(static_cast<double>(r.total_steps()));
        ++used;
      }
      runs.add_row({std::to_string(i), std::to_string(N),
                    std::to_string(derive_seed(rc.base_seed, "theory", static_cast<uint64_t>(zi),
                                               static_cast<uint64_t>(i))),
                    r.failed ? "1" : "0", r.fail_reason, std::to_string(r.T1),
                    std::to_string(r.T2), std::to_string(r.total_steps()), format_g17(tc.a_star),
                    format_g17(r.a0), format_g17(r.q0), format_g17(r.qpop0),
                    format_g17(r.mhat_opnorm), format_g17(r.final_dist), format_g17(r.drift),
                    format_g17(r.align_at_switch), use ? "1" : "0"});
    }
    const long fails = static_cast<long>(attempts.size()) - successes;
    summary.add_row({std::to_string(N), format_g17(tc.a_star),
                     std::to_string(static_cast<long>(attempts.size())),
                     std::to_string(successes), std::to_string(fails), std::to_string(used),
                     t1s.empty() ? "" : format_g17(median(t1s)),
                     t2s.empty() ? "" : format_g17(median(t2s)),
                     totals.empty() ? "" : format_g17(median(totals))});
    if (used < target) all_complete = false;
    if (!t1s.empty()) {
      xs.push_back(static_cast<double>(N));
      med_T1.push_back(median(t1s));
      med_total.push_back(median(totals));
    }
  }

  runs.write(out_dir + "/runs.csv");
  summary.write(out_dir + "/summary.csv");

  json checks = json::array();
  bool pass = all_complete;
  if (!ts.use_schedule && xs.size() >= 2) {
    const double slope = fit_loglog_slope(xs, med_T1);
    const bool in_band = slope >= 0.35 && slope <= 0.65;
    pass = pass && in_band;
    checks.push_back(verifier_record(
        "t1-sqrtN-scaling", json{{"d", ts.d}, {"Ns", ts.Ns}, {"lr", ts.lr}, {"a_star", ts.a_star}},
        ts.trials, slope, 0.35, 0.65, in_band ? 0 : 1, in_band));
  }
  if (ts.use_schedule && xs.size() >= 2) {
    const bool mono = med_total.front() <= med_total.back();
    pass = pass && mono;
    checks.push_back(verifier_record(
        "scheduled-total-steps-monotone",
        json{{"d", ts.d}, {"Ns", ts.Ns}, {"lr", ts.lr}}, ts.trials,
        med_total.back() - med_total.front(), 0.0,
        std::numeric_limits<double>::infinity(), mono ? 0 : 1, mono));
  }
  json vj;
  vj["checks"] = checks;
  vj["all_complete"] = all_complete;
  vj["pass"] = pass;
  write_json(vj, out_dir + "/verify.json");

  if (xs.size() >= 2) {
    Series t1s_series;
    t1s_series.label = "median T1";
    t1s_series.x = xs;
    t1s_series.y = med_T1;
    Series ref;
    ref.label = "slope 1/2 reference";
    for (size_t i = 0; i < xs.size(); ++i) {
      ref.x.push_back(xs[i]);
      ref.y.push_back(med_T1.front() * std::sqrt(xs[i] / xs.front()));
    }
    AxesSpec ax;
    ax.title = "phase-1 steps vs sample size";
    ax.xlabel = "N";
    ax.ylabel = "median T1";
    ax.logx = true;
    ax.logy = true;
    bool positive = true;
    for (double v : med_T1) positive = positive && v > 0.0;
    if (positive) plot_if_nonempty({t1s_series, ref}, ax, out_dir + "/plots/t1_scaling.svg");
    Series tot;
    tot.label = "median T1+T2";
    tot.x = xs;
    tot.y = med_total;
    AxesSpec ax2;
    ax2.title = "total steps vs sample size";
    ax2.xlabel = "N";
    ax2.ylabel = "median T1+T2";
    ax2.logx = true;
    plot_if_nonempty({tot}, ax2, out_dir + "/plots/total_steps.svg");
  }
  return pass ? kExitOk : kExitAssertion;
}

inline int dispatch_verify(const ResolvedConfig& rc, const std::string& out_dir, int workers) {
  const VerifySection& vs = rc.verify;
  json checks = json::array();
  Table summary;
  summary.cols = {"check", "trials", "estimate", "violations", "pass"};
  bool all_pass = true;
  auto add = [&](const json& rec) {
    checks.push_back(rec);
    summary.add_row({rec.at("lemma").get<std::string>(),
                     std::to_string(rec.at("trials").get<long>()),
                     format_g17(rec.at("estimate").get<double>()),
                     std::to_string(rec.at("violations").get<long>()),
                     rec.at("pass").get<bool>() ? "1" : "0"});
    all_pass = all_pass && rec.at("pass").get<bool>();
  };

  {
    QMonotoneReport r =
        verify_q_monotone(vs.trials_qmono, vs.d, vs.N, vs.lr, rc.base_seed, workers);
    add(verifier_record("q-monotonicity",
                        json{{"d", vs.d}, {"N", vs.N}, {"lr", vs.lr}}, r.trials,
                        r.max_closed_form_gap, 0.0, 0.0, r.violations, r.violations == 0));
  }
  {
    ContractionReport r =
        verify_phase2_contraction(vs.trials_contraction, vs.d, vs.lr, rc.base_seed, 60, workers);
    const bool ok = r.max_excess <= 1e-12;
    add(verifier_record("phase2-contraction", json{{"d", vs.d}, {"lr", vs.lr}}, r.trials,
                        r.max_excess, 0.0, 1e-12, ok ? 0 : 1, ok));
  }
  {
    DriftReport r = verify_w_drift(vs.trials_drift, vs.d, vs.N, vs.lr, vs.a_star, rc.base_seed,
                                   vs.scheduled, 1L << 20, TheoryConstants{}, workers);
    const long viol = r.tstar_violations + r.sign_flips + r.q_lb_violations +
                      r.drift_violations + r.quarter_violations + r.transfer_violations;
    const bool ok = viol == 0 && r.kept > 0;
    add(verifier_record(
        "phase1-stability-and-drift",
        json{{"d", vs.d}, {"N", vs.N}, {"lr", vs.lr}, {"a_star", vs.a_star},
             {"scheduled", vs.scheduled}, {"kept", r.kept}, {"filtered", r.filtered}},
        r.trials, r.max_bound_ratio, 0.0, 1.0, viol, ok));
  }
  {
    MirrorReport r =
        verify_mirror_symmetry(vs.trials_mirror, vs.d, vs.N, vs.lr, vs.a_star, rc.base_seed,
                               workers);
    add(verifier_record("mirror-symmetry", json{{"d", vs.d}, {"N", vs.N}}, r.trials,
                        static_cast<double>(r.mismatches), 0.0, 0.0, r.mismatches,
                        r.mismatches == 0));
  }
  for (const auto& [cd, cn] : vs.anticoncentration_cells) {
    Q0Report r = mc_q0_anticoncentration(cd, cn, vs.trials_mc, TheoryConstants{}.c0,
                                         rc.base_seed, false, workers);
    const bool ok = r.prob >= r.pz_bound && r.prob >= 0.1;
    add(verifier_record("q0-anticoncentration", json{{"d", cd}, {"N", cn}}, r.trials, r.prob,
                        r.ci.lo, r.ci.hi, ok ? 0 : 1, ok));
  }
  {
    AlignmentReport r = mc_alignment_event(vs.d, vs.trials_mc, rc.base_seed, vs.N,
                                           TheoryConstants{}, workers);
    const bool sign_ok = std::abs(r.sign_match_prob - 0.5) <= 0.02;
    add(verifier_record("sign-match-half", json{{"d", vs.d}, {"N", vs.N}}, r.trials,
                        r.sign_match_prob, r.sign_ci.lo, r.sign_ci.hi, sign_ok ? 0 : 1, sign_ok));
    const bool beta_ok = std::abs(r.beta_half_hat - r.beta_half_exact) <= 0.02;
    add(verifier_record("beta-projection-cdf", json{{"d", vs.d}}, r.trials, r.beta_half_hat,
                        r.beta_half_exact - 0.02, r.beta_half_exact + 0.02, beta_ok ? 0 : 1,
                        beta_ok));
    const bool align_ok = r.align_prob >= 0.2;
    add(verifier_record("alignment-floor", json{{"d", vs.d}}, r.trials, r.align_prob,
                        r.align_ci.lo, r.align_ci.hi, align_ok ? 0 : 1, align_ok));
  }
  {
    std::vector<double> quantiles;
    json ns = json::array();
    long viol = 0;
    for (long mult : {1L, 4L, 16L, 64L}) {
      const long N = mult * vs.d;
      OpnormReport r = mc_mhat_opnorm(vs.d, N, vs.trials_mc, TheoryConstants{}.delta,
                                      rc.base_seed, TheoryConstants{}, workers);
      if (!quantiles.empty() && !(r.quantile_val < quantiles.back())) ++viol;
      quantiles.push_back(r.quantile_val);
      ns.push_back(N);
    }
    add(verifier_record("opnorm-quantile-decreasing", json{{"d", vs.d}, {"Ns", ns}},
                        vs.trials_mc, quantiles.back(), 0.0, quantiles.front(), viol,
                        viol == 0));
  }

  json vj;
  vj["checks"] = checks;
  vj["pass"] = all_pass;
  write_json(vj, out_dir + "/verify.json");
  summary.write(out_dir + "/summary.csv");
  return all_pass ? kExitOk : kExitAssertion;
}

inline int dispatch_report(const std::string& out_dir) {
  const std::string runs_path = out_dir + "/runs.csv";
  if (!std::filesystem::exists(runs_path))
    throw ConfigError("report: no runs.csv in '" + out_dir + "'");
  std::vector<MetricsRow> rows = read_metrics_csv(runs_path);
  if (rows.empty()) throw ConfigError("report: '" + runs_path + "' holds no rows");

  const MetricField field = default_field(rows);
  AggregateOptions opt;
  opt.field = field;
  auto key = [](const MetricsRow& r) { return arm_of(r.run_id); };
  Table t;
  t.cols = {"group", "step", "mean", "median", "iqr", "success_prob", "n_seeds", "n_failed"};
  for (const AggregateRow& a : aggregate(rows, key, opt))
    t.add_row({a.group, format_g17(a.bucket), format_g17(a.mean), format_g17(a.median_v),
               format_g17(a.iqr), format_g17(a.success_prob), std::to_string(a.n_seeds),
               std::to_string(a.n_failed)});
  t.write(out_dir + "/summary.csv");

  ensure_dir(out_dir + "/plots");
  AxesSpec ax;
  ax.title = "report";
  ax.xlabel = "step";
  ax.ylabel = field == MetricField::TestAcc ? "median test accuracy" : "median test loss";
  plot_if_nonempty(median_series(rows, field, key), ax, out_dir + "/plots/report.svg");
  return kExitOk;
}

}  // namespace clidetail

// Full dispatcher; maps exceptions onto the documented exit codes.
inline int dispatch(const CliInvocation& inv) {
  try {
    const int workers = resolve_workers(inv.workers);
    if (inv.out_dir.empty()) throw ConfigError("--out is required");
    clidetail::ensure_dir(inv.out_dir);

    if (inv.subcommand == "report") return clidetail::dispatch_report(inv.out_dir);

    if (inv.config_path.empty()) throw ConfigError("--config is required");
    std::vector<std::string> overrides = inv.overrides;
    if (inv.seed) overrides.push_back("seeds.base=" + std::to_string(*inv.seed));
    ResolvedConfig rc = parse_config(inv.config_path, overrides);
    clidetail::ensure_dir(inv.out_dir + "/plots");
    clidetail::write_meta(rc, inv.out_dir);

    if (inv.subcommand == "run") {
      if (rc.type != ExperimentType::Run)
        throw ConfigError("subcommand 'run' needs experiment.type 'run'");
      return clidetail::dispatch_run(rc, inv.out_dir, workers);
    }
    if (inv.subcommand == "sweep") return clidetail::dispatch_sweep(rc, inv.out_dir, workers);
    if (inv.subcommand == "theory") return clidetail::dispatch_theory(rc, inv.out_dir, workers);
    if (inv.subcommand == "verify") return clidetail::dispatch_verify(rc, inv.out_dir, workers);
    throw ConfigError("unknown subcommand '" + inv.subcommand + "'");
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InterventionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace repeatlab
