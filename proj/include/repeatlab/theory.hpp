#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "repeatlab/common.hpp"
#include "repeatlab/metrics.hpp"
#include "repeatlab/parallel.hpp"
#include "repeatlab/rng.hpp"
#include "repeatlab/tasks.hpp"

namespace repeatlab {

// Constants for the two-phase quadratic-neuron analysis. The anti-concentration
// constant c0 must stay below sqrt(3)/2 or the Paley-Zygmund factor goes
// negative. bernstein_C is the universal matrix-concentration constant, which
// is not numeric in the analysis; 1 is a practical default.
struct TheoryConstants {
  double c0 = std::sqrt(3.0 / 8.0);
  double delta = 0.05;
  double bernstein_C = 1.0;
  bool random_labels = false;

  void validate() const {
    if (!(c0 > 0.0 && c0 < std::sqrt(3.0) / 2.0))
      throw ConfigError("c0 must lie in (0, sqrt(3)/2)");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
    if (!(bernstein_C > 0.0)) throw ConfigError("bernstein_C must be positive");
  }

  double q_star(long N) const { return c0 / std::sqrt(static_cast<double>(N)); }
};

// Paley-Zygmund success probability p_PZ(c0) = (1-1/sqrt(2))(1-(4/3)c0^2)^2/3^8.
inline double p_pz(double c0) {
  double t = 1.0 - (4.0 / 3.0) * c0 * c0;
  return (1.0 - 1.0 / std::sqrt(2.0)) * t * t / 6561.0;
}

// Population moment matrix E[y x x^T] = e1 e2^T + e2 e1^T for 2-sparse parity
// on the first two coordinates.
inline Eigen::MatrixXd population_M(int d) {
  if (d < 2) throw ConfigError("population moment matrix needs d >= 2");
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
  M(0, 1) = 1.0;
  M(1, 0) = 1.0;
  return M;
}

// Empirical moment matrix (1/N) sum_s y_s x_s x_s^T.
inline Eigen::MatrixXd empirical_M(const LabeledDataset& ds) {
  if (ds.task.kind != TaskKind::Parity || ds.task.k != 2)
    throw ConfigError("empirical moment matrix is defined for 2-sparse parity data");
  const double n = static_cast<double>(ds.n());
  Eigen::MatrixXd M = ds.X.transpose() * ds.y.asDiagonal() * ds.X / n;
  return (M + M.transpose()) / 2.0;  // kill rounding asymmetry
}

inline double q_form(const Eigen::VectorXd& w, const Eigen::MatrixXd& M) {
  return w.dot(M * w);
}

// Spectral norm of a symmetric matrix: power iteration on M^2 so paired +-
// eigenvalues cannot stall it; exact eigensolve fallback for small d.
inline double opnorm_sym(const Eigen::MatrixXd& M, int max_iter = 200, double tol = 1e-10,
                         bool* converged = nullptr) {
  const Eigen::Index d = M.rows();
  if (M.cols() != d) throw ConfigError("opnorm needs a square matrix");
  Eigen::VectorXd v(d);
  Rng start(0x0bfuLL);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = start.normal();
  v /= v.norm();
  double rho = 0.0, prev = -1.0;
  bool ok = false;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd u = M * (M * v);
    double un = u.norm();
    if (un < 1e-300) {
      if (converged) *converged = true;
      return 0.0;
    }
    v = u / un;
    rho = v.dot(M * (M * v));
    if (it > 0 && std::abs(rho - prev) <= tol * std::max(1.0, std::abs(rho))) {
      ok = true;
      break;
    }
    prev = rho;
  }
  if (!ok && d <= 64) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() == Eigen::Success) {
      if (converged) *converged = true;
      return es.eigenvalues().cwiseAbs().maxCoeff();
    }
  }
  if (converged) *converged = ok;
  return std::sqrt(std::max(0.0, rho));
}

// High-probability bound on ||Mhat||_2: 1 + C(sqrt(dL/N) + dL/N), L = log(2d/delta).
// With uniformly random labels the population term drops and only the
// concentration part remains.
inline double bernstein_bound(long N, int d, double delta, double C = 1.0,
                              bool random_labels = false) {
  if (N < 1 || d < 1) throw ConfigError("bernstein bound needs N >= 1, d >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0,1)");
  if (!(C > 0.0)) throw ConfigError("bernstein C must be positive");
  const double L = std::log(2.0 * static_cast<double>(d) / delta);
  const double t = static_cast<double>(d) * L / static_cast<double>(N);
  return (random_labels ? 0.0 : 1.0) + C * (std::sqrt(t) + t);
}

// Largest stable switch threshold:
// a* = min{1, 1/(2aB), 1/(32aB sqrt(d)), sqrt(c0/(64 B sqrt(N) sqrt(d)))}.
inline double a_star_schedule(long N, int d, double lr, double delta,
                              const TheoryConstants& consts = {}) {
  consts.validate();
  if (!(lr > 0.0)) throw ConfigError("a_star schedule needs lr > 0");
  if (N < d || N > static_cast<long>(d) * d)
    std::cerr << "[repeatlab] warning: a_star_schedule called with N=" << N
              << " outside [d, d^2] for d=" << d << "\n";
  const double B = bernstein_bound(N, d, delta, consts.bernstein_C, consts.random_labels);
  const double rd = std::sqrt(static_cast<double>(d));
  const double t4 =
      std::sqrt(consts.c0 / (64.0 * B * std::sqrt(static_cast<double>(N)) * rd));
  return std::min({1.0, 1.0 / (2.0 * lr * B), 1.0 / (32.0 * lr * B * rd), t4});
}

// ---- exact two-phase dynamics ----------------------------------------------

struct QuadTheoryState {
  double a = 0.0;
  Eigen::VectorXd w;
  long t = 0;
  int phase = 1;
  long T1 = 0;
  long T2 = 0;
  double lr = 0.1;
  double a_star = 0.1;
  int d = 0;
  long N = 0;
};

// One projected GD step on the correlation loss of f(x) = (a/2)(w^T x)^2:
// both right-hand sides use time-t quantities (simultaneous update), then a is
// clipped to [-1,1] and w renormalized to the sphere.
inline void quad_step(QuadTheoryState& st, const Eigen::MatrixXd& M) {
  const Eigen::VectorXd Mw = M * st.w;
  const double q = st.w.dot(Mw);
  const double a_old = st.a;
  st.a = std::clamp(st.a + 0.5 * st.lr * q, -1.0, 1.0);
  Eigen::VectorXd wt = st.w + st.lr * a_old * Mw;
  const double n = wt.norm();
  if (n < 1e-300) throw NumericError("quad_step: w update annihilated the iterate");
  st.w = wt / n;
  st.t += 1;
}

// The four sign-symmetric optima +-(e1+-e2)/sqrt(2).
inline std::vector<Eigen::VectorXd> sign_symmetric_optima(int d) {
  if (d < 2) throw ConfigError("optima need d >= 2");
  const double s = 1.0 / std::sqrt(2.0);
  std::vector<Eigen::VectorXd> out;
  for (double s2 : {1.0, -1.0})
    for (double flip : {1.0, -1.0}) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
      u(0) = flip * s;
      u(1) = flip * s2 * s;
      out.push_back(u);
    }
  return out;
}

inline double dist_to_optimum(const Eigen::VectorXd& w,
                              const std::vector<Eigen::VectorXd>& optima) {
  double best = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& u : optima) best = std::min(best, (w - u).norm());
  return best;
}

struct TwoPhaseConfig {
  int d = 16;
  long N = 16;
  double lr = 0.1;
  double a_star = 0.1;
  double eps = 0.01;
  bool random_labels = false;
  long width_m = 1L << 20;  // a0 ~ N(0, 1/width_m)
  int cap_multiplier = 100;
  bool skip_phase1 = false;
  bool record_trajectory = false;
  TheoryConstants consts;

  void validate() const {
    consts.validate();
    if (d < 2) throw ConfigError("two-phase simulator needs d >= 2");
    if (N < 1) throw ConfigError("two-phase simulator needs N >= 1");
    if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("eps must lie in (0, 1/2)");
    if (!(lr > 0.0 && lr <= 0.5))
      throw ConfigError("two-phase lr must lie in (0, 1/2] for the contraction guarantee");
    if (!(a_star > 0.0 && a_star <= 1.0)) throw ConfigError("a_star must lie in (0,1]");
    if (width_m <= d) throw ConfigError("width must exceed d");
    if (cap_multiplier < 1) throw ConfigError("cap multiplier must be >= 1");
  }
};

inline long phase1_step_cap(const TwoPhaseConfig& c) {
  double base = 2.0 * c.a_star * std::sqrt(static_cast<double>(c.N)) / (c.lr * c.consts.c0);
  return c.cap_multiplier * static_cast<long>(std::ceil(base));
}

inline long phase2_step_cap(const TwoPhaseConfig& c) {
  double base = (2.0 / (c.lr * c.a_star)) * std::log(16.0 * c.d / c.eps);
  return c.cap_multiplier * static_cast<long>(std::ceil(base));
}

struct TrajPoint {
  long t = 0;
  int phase = 1;
  double a = 0.0;
  double q = 0.0;
  double align = 0.0;
  double r = 0.0;
};

struct TwoPhaseResult {
  long T1 = 0;
  long T2 = 0;
  bool failed = false;
  std::string fail_reason;
  double a0 = 0.0;
  double q0 = 0.0;     // empirical quadratic form at init (0 when phase 1 skipped)
  double qpop0 = 0.0;  // population quadratic form at init
  double mhat_opnorm = 0.0;
  double final_dist = std::numeric_limits<double>::quiet_NaN();
  double drift = 0.0;  // ||w_{T1} - w_0||
  double align_at_switch = 0.0;
  bool sign_flip_phase1 = false;
  double min_q_ratio = std::numeric_limits<double>::infinity();
  std::vector<TrajPoint> traj;

  long total_steps() const { return T1 + T2; }
};

// Full two-phase run: phase 1 on a fresh size-N fixed batch (true or random
// labels) until |a| >= a_star, then population dynamics until w is within
// sqrt(eps) of one of the four optima. Step-cap breaches mark the run FAILED;
// the guarantee itself only holds with constant probability, so failures are
// data, not errors.
inline TwoPhaseResult run_two_phase(const TwoPhaseConfig& cfg, uint64_t seed) {
  cfg.validate();
  TwoPhaseResult out;

  Rng rw(derive_seed(seed, "w0"));
  Eigen::VectorXd w(cfg.d);
  for (int i = 0; i < cfg.d; ++i) w(i) = rw.normal();
  w /= w.norm();
  Rng ra(derive_seed(seed, "a0"));
  const double a0 = ra.normal() / std::sqrt(static_cast<double>(cfg.width_m));
  out.a0 = a0;

  QuadTheoryState st;
  st.w = w;
  st.a = a0;
  st.lr = cfg.lr;
  st.a_star = cfg.a_star;
  st.d = cfg.d;
  st.N = cfg.N;

  const Eigen::MatrixXd Mpop = population_M(cfg.d);
  out.qpop0 = q_form(w, Mpop);

  auto log_point = [&](const Eigen::MatrixXd& M) {
    if (!cfg.record_trajectory) return;
    TrajPoint p;
    p.t = st.t;
    p.phase = st.phase;
    p.a = st.a;
    p.q = q_form(st.w, M);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(cfg.d);
    u(0) = 1.0 / std::sqrt(2.0);
    u(1) = (st.a >= 0.0 ? 1.0 : -1.0) / std::sqrt(2.0);
    p.align = std::abs(st.w.dot(u));
    p.r = p.align > 0.0 ? std::sqrt(std::max(0.0, 1.0 - p.align * p.align)) / p.align
                        : std::numeric_limits<double>::infinity();
    out.traj.push_back(p);
  };

  if (!cfg.skip_phase1) {
    TaskSpec task = TaskSpec::parity(cfg.d, 2);
    LabeledDataset ds = make_dataset(task, cfg.N, derive_seed(seed, "data"));
    if (cfg.random_labels) ds = randomize_labels(ds, derive_seed(seed, "labels"));
    const Eigen::MatrixXd Mhat = empirical_M(ds);
    out.mhat_opnorm = opnorm_sym(Mhat);
    out.q0 = q_form(w, Mhat);
    const double abs_q0 = std::abs(out.q0);
    const long cap1 = phase1_step_cap(cfg);
    const bool a0_pos = a0 >= 0.0;
    while (true) {
      if (st.a != 0.0 && (st.a >= 0.0) != a0_pos) out.sign_flip_phase1 = true;
      if (abs_q0 > 0.0) {
        double qt = q_form(st.w, Mhat);
        out.min_q_ratio = std::min(out.min_q_ratio, std::abs(qt) / abs_q0);
      }
      log_point(Mhat);
      if (std::abs(st.a) >= cfg.a_star) break;
      if (st.T1 >= cap1) {
        out.failed = true;
        out.fail_reason = "phase-1 step cap reached";
        break;
      }
      quad_step(st, Mhat);
      st.T1 += 1;
    }
    out.drift = (st.w - w).norm();
  }
  out.T1 = st.T1;

  st.phase = 2;
  {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(cfg.d);
    u(0) = 1.0 / std::sqrt(2.0);
    u(1) = (st.a >= 0.0 ? 1.0 : -1.0) / std::sqrt(2.0);
    out.align_at_switch = std::abs(st.w.dot(u));
  }
  if (!out.failed) {
    const std::vector<Eigen::VectorXd> optima = sign_symmetric_optima(cfg.d);
    const double target = std::sqrt(cfg.eps);
    const long cap2 = phase2_step_cap(cfg);
    double dist = dist_to_optimum(st.w, optima);
    while (dist > target) {
      if (st.T2 >= cap2) {
        out.failed = true;
        out.fail_reason = "phase-2 step cap reached";
        break;
      }
      quad_step(st, Mpop);
      st.T2 += 1;
      dist = dist_to_optimum(st.w, optima);
      log_point(Mpop);
    }
    out.final_dist = dist;
  }
  out.T2 = st.T2;
  return out;
}

// ---- lemma verifiers -------------------------------------------------------

namespace detail {

inline void require_lemma_dim(int d) {
  if (d < 3) throw ConfigError("lemma checks are unsupported for d < 3");
}

inline Eigen::VectorXd unit_sphere(int d, Rng& rng) {
  Eigen::VectorXd w(d);
  for (int i = 0; i < d; ++i) w(i) = rng.normal();
  return w / w.norm();
}

inline int sgn(double x) { return x > 0.0 ? 1 : (x < 0.0 ? -1 : 0); }

}  // namespace detail

// Sign tolerance for exact-in-reals assertions checked in floating point.
inline constexpr double kSignTol = 1e-12;

struct QMonotoneReport {
  long trials = 0;
  long violations = 0;
  double max_closed_form_gap = 0.0;
};

// For random (w, a, Mhat) with alpha|a|||Mhat|| <= 1/2, one w-update must move
// q in the direction of sign(a). Each trial also cross-checks the direct
// update against the closed form
// dq = (2aa(s-q^2) + a^2a^2(r-qs)) / (1 + 2aaq + a^2a^2 s).
inline QMonotoneReport verify_q_monotone(long trials, int d, long N, double lr, uint64_t seed,
                                         int workers = 1) {
  detail::require_lemma_dim(d);
  if (N < 1 || trials < 1 || !(lr > 0.0)) throw ConfigError("bad q-monotone parameters");
  std::vector<char> viol(static_cast<size_t>(trials), 0);
  std::vector<double> gap(static_cast<size_t>(trials), 0.0);
  const TaskSpec task = TaskSpec::parity(d, 2);
  parallel_for(trials, workers, [&](long i) {
    Rng rng(derive_seed(seed, "qmono", static_cast<uint64_t>(i)));
    LabeledDataset ds =
        make_dataset(task, N, derive_seed(seed, "qmono-data", static_cast<uint64_t>(i)));
    const Eigen::MatrixXd Mh = empirical_M(ds);
    const double B = opnorm_sym(Mh);
    Eigen::VectorXd w = detail::unit_sphere(d, rng);
    const double amax = B > 0.0 ? std::min(1.0, 0.5 / (lr * B)) : 1.0;
    const double a = rng.uniform(-amax, amax);

    const Eigen::VectorXd Mw = Mh * w;
    const double q = w.dot(Mw);
    const double s = Mw.squaredNorm();
    const double r3 = Mw.dot(Mh * Mw);
    Eigen::VectorXd wt = w + lr * a * Mw;
    wt /= wt.norm();
    const double qp = wt.dot(Mh * wt);
    const double dq = qp - q;
    const double closed = (2.0 * lr * a * (s - q * q) + lr * lr * a * a * (r3 - q * s)) /
                          (1.0 + 2.0 * lr * a * q + lr * lr * a * a * s);
    gap[static_cast<size_t>(i)] = std::abs(dq - closed);
    bool bad;
    if (a > 0.0)
      bad = dq < -kSignTol;
    else if (a < 0.0)
      bad = dq > kSignTol;
    else
      bad = std::abs(dq) > kSignTol;
    viol[static_cast<size_t>(i)] = bad ? 1 : 0;
  });
  QMonotoneReport rep;
  rep.trials = trials;
  for (long i = 0; i < trials; ++i) {
    rep.violations += viol[static_cast<size_t>(i)];
    rep.max_closed_form_gap = std::max(rep.max_closed_form_gap, gap[static_cast<size_t>(i)]);
  }
  return rep;
}

struct ContractionReport {
  long trials = 0;
  long steps_checked = 0;
  double max_excess = -std::numeric_limits<double>::infinity();
};

// Phase-2 misalignment ratio r_t = sqrt(1-align^2)/align must contract by at
// least 1/(1+alpha|a_t|) every step when sign(a0)=sign(qpop0) and alpha <= 1/2.
inline ContractionReport verify_phase2_contraction(long trials, int d, double lr, uint64_t seed,
                                                   long steps_per_trial = 60, int workers = 1) {
  detail::require_lemma_dim(d);
  if (!(lr > 0.0 && lr <= 0.5))
    throw ConfigError("contraction check requires 0 < lr <= 1/2");
  const Eigen::MatrixXd M = population_M(d);
  std::vector<double> excess(static_cast<size_t>(trials),
                             -std::numeric_limits<double>::infinity());
  std::vector<long> steps(static_cast<size_t>(trials), 0);
  parallel_for(trials, workers, [&](long i) {
    Rng rng(derive_seed(seed, "contract", static_cast<uint64_t>(i)));
    QuadTheoryState st;
    st.d = d;
    st.lr = lr;
    st.w = detail::unit_sphere(d, rng);
    const double qpop = q_form(st.w, M);
    const double mag = rng.uniform(0.05, 1.0);
    st.a = qpop >= 0.0 ? mag : -mag;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    u(0) = 1.0 / std::sqrt(2.0);
    u(1) = (st.a >= 0.0 ? 1.0 : -1.0) / std::sqrt(2.0);
    auto r_of = [&](const Eigen::VectorXd& w) {
      double al = std::abs(w.dot(u));
      return al > 0.0 ? std::sqrt(std::max(0.0, 1.0 - al * al)) / al
                      : std::numeric_limits<double>::infinity();
    };
    double r_prev = r_of(st.w);
    if (!std::isfinite(r_prev)) return;  // measure-zero start, nothing to check
    double worst = -std::numeric_limits<double>::infinity();
    long checked = 0;
    for (long t = 0; t < steps_per_trial; ++t) {
      const double a_t = std::abs(st.a);
      quad_step(st, M);
      const double r_new = r_of(st.w);
      worst = std::max(worst, r_new - r_prev / (1.0 + lr * a_t));
      ++checked;
      r_prev = r_new;
      if (r_prev < 1e-14) break;
    }
    excess[static_cast<size_t>(i)] = worst;
    steps[static_cast<size_t>(i)] = checked;
  });
  ContractionReport rep;
  rep.trials = trials;
  for (long i = 0; i < trials; ++i) {
    rep.max_excess = std::max(rep.max_excess, excess[static_cast<size_t>(i)]);
    rep.steps_checked += steps[static_cast<size_t>(i)];
  }
  return rep;
}

struct DriftReport {
  long trials = 0;
  long kept = 0;
  long filtered = 0;
  double filter_rate = 0.0;
  long tstar_violations = 0;
  long sign_flips = 0;
  long q_lb_violations = 0;
  long drift_violations = 0;
  long quarter_checked = 0;
  long quarter_violations = 0;
  long transfer_checked = 0;
  long transfer_violations = 0;
  double max_drift = 0.0;
  double max_bound_ratio = 0.0;
};

// Phase-1 structural lemmas on kept trials (initialization and stability
// events hold): sign stability of a_t, |q_t| >= |q_0|, the T* bound, the
// explicit drift bound, optionally drift <= 1/(4 sqrt(d)) under the scheduled
// a*, and population sign transfer when its margin preconditions hold.
inline DriftReport verify_w_drift(long trials, int d, long N, double lr, double a_star,
                                  uint64_t seed, bool scheduled = false, long width_m = 1L << 20,
                                  const TheoryConstants& consts = {}, int workers = 1) {
  detail::require_lemma_dim(d);
  consts.validate();
  if (!(a_star > 0.0 && a_star <= 1.0)) throw ConfigError("a_star must lie in (0,1]");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  struct TrialOut {
    bool kept = false;
    bool tstar_bad = false, sign_bad = false, qlb_bad = false, drift_bad = false;
    bool quarter_seen = false, quarter_bad = false;
    bool transfer_seen = false, transfer_bad = false;
    double drift = 0.0, ratio = 0.0;
  };
  std::vector<TrialOut> outs(static_cast<size_t>(trials));
  const TaskSpec task = TaskSpec::parity(d, 2);
  const Eigen::MatrixXd Mpop = population_M(d);
  const double q_star = consts.q_star(N);
  parallel_for(trials, workers, [&](long i) {
    TrialOut& o = outs[static_cast<size_t>(i)];
    Rng rng(derive_seed(seed, "drift", static_cast<uint64_t>(i)));
    LabeledDataset ds =
        make_dataset(task, N, derive_seed(seed, "drift-data", static_cast<uint64_t>(i)));
    if (consts.random_labels)
      ds = randomize_labels(ds, derive_seed(seed, "drift-labels", static_cast<uint64_t>(i)));
    const Eigen::MatrixXd Mh = empirical_M(ds);
    const double B = opnorm_sym(Mh);
    if (lr * a_star * B > 0.5) return;  // stability event failed
    Eigen::VectorXd w0 = detail::unit_sphere(d, rng);
    const double a0 = rng.normal() / std::sqrt(static_cast<double>(width_m));
    const double q0 = q_form(w0, Mh);
    if (detail::sgn(a0) != detail::sgn(q0) || std::abs(q0) < q_star) return;
    o.kept = true;

    QuadTheoryState st;
    st.d = d;
    st.N = N;
    st.lr = lr;
    st.a_star = a_star;
    st.w = w0;
    st.a = a0;
    const long tstar_bound = static_cast<long>(
        std::ceil(2.0 * std::max(0.0, a_star - std::abs(a0)) / (lr * q_star)));
    const int s0 = detail::sgn(a0);
    while (std::abs(st.a) < a_star) {
      if (st.T1 > tstar_bound) {
        o.tstar_bad = true;
        break;
      }
      const double qt = q_form(st.w, Mh);
      if (std::abs(qt) < std::abs(q0) - kSignTol) o.qlb_bad = true;
      quad_step(st, Mh);
      st.T1 += 1;
      if (st.a != 0.0 && detail::sgn(st.a) != s0) o.sign_bad = true;
    }
    if (o.tstar_bad) return;

    o.drift = (st.w - w0).norm();
    const double bound = (8.0 * B / q_star) * a_star * std::max(0.0, a_star - std::abs(a0)) +
                         4.0 * lr * B * a_star;
    o.ratio = bound > 0.0 ? o.drift / bound : 0.0;
    if (o.drift > bound * (1.0 + kSignTol)) o.drift_bad = true;
    const double quarter = 1.0 / (4.0 * std::sqrt(static_cast<double>(d)));
    if (scheduled) {
      o.quarter_seen = true;
      if (o.drift > quarter + kSignTol) o.quarter_bad = true;
    }
    const double qpop0 = q_form(w0, Mpop);
    const double p12 = std::sqrt(w0(0) * w0(0) + w0(1) * w0(1));
    if (std::abs(qpop0) >= 3.0 / (4.0 * d) && p12 <= 1.0 / std::sqrt(static_cast<double>(d)) &&
        o.drift <= quarter) {
      o.transfer_seen = true;
      if (detail::sgn(q_form(st.w, Mpop)) != detail::sgn(qpop0)) o.transfer_bad = true;
    }
  });
  DriftReport rep;
  rep.trials = trials;
  for (const TrialOut& o : outs) {
    if (!o.kept) {
      rep.filtered += 1;
      continue;
    }
    rep.kept += 1;
    rep.tstar_violations += o.tstar_bad;
    rep.sign_flips += o.sign_bad;
    rep.q_lb_violations += o.qlb_bad;
    rep.drift_violations += o.drift_bad;
    rep.quarter_checked += o.quarter_seen;
    rep.quarter_violations += o.quarter_bad;
    rep.transfer_checked += o.transfer_seen;
    rep.transfer_violations += o.transfer_bad;
    rep.max_drift = std::max(rep.max_drift, o.drift);
    rep.max_bound_ratio = std::max(rep.max_bound_ratio, o.ratio);
  }
  rep.filter_rate = trials > 0 ? static_cast<double>(rep.filtered) / trials : 0.0;
  return rep;
}

struct MirrorReport {
  long trials = 0;
  long mismatches = 0;
};

// Negating a0 and the labels must give a bitwise-mirrored trajectory:
// a_t -> -a_t, identical w_t, identical T1.
inline MirrorReport verify_mirror_symmetry(long trials, int d, long N, double lr, double a_star,
                                           uint64_t seed, int workers = 1) {
  detail::require_lemma_dim(d);
  std::vector<char> bad(static_cast<size_t>(trials), 0);
  const TaskSpec task = TaskSpec::parity(d, 2);
  parallel_for(trials, workers, [&](long i) {
    Rng rng(derive_seed(seed, "mirror", static_cast<uint64_t>(i)));
    LabeledDataset ds =
        make_dataset(task, N, derive_seed(seed, "mirror-data", static_cast<uint64_t>(i)));
    const Eigen::MatrixXd Mh = empirical_M(ds);
    LabeledDataset neg = ds;
    neg.y = -ds.y;
    const Eigen::MatrixXd Mh2 = empirical_M(neg);
    Eigen::VectorXd w0 = detail::unit_sphere(d, rng);
    const double a0 = rng.uniform(-a_star, a_star);
    QuadTheoryState sa, sb;
    sa.w = w0;
    sa.a = a0;
    sa.lr = lr;
    sb.w = w0;
    sb.a = -a0;
    sb.lr = lr;
    const long cap = 1000;
    long ta = 0, tb = 0;
    while (std::abs(sa.a) < a_star && ta < cap) {
      quad_step(sa, Mh);
      ++ta;
    }
    while (std::abs(sb.a) < a_star && tb < cap) {
      quad_step(sb, Mh2);
      ++tb;
    }
    bool mismatch = (ta != tb) || (sa.a != -sb.a) || (sa.w != sb.w);
    bad[static_cast<size_t>(i)] = mismatch ? 1 : 0;
  });
  MirrorReport rep;
  rep.trials = trials;
  for (char b : bad) rep.mismatches += b;
  return rep;
}

struct Q0Report {
  int d = 0;
  long N = 0;
  long trials = 0;
  double threshold = 0.0;  // c0/sqrt(N)
  double prob = 0.0;
  Interval ci;
  double pz_bound = 0.0;
  double median_scaled = 0.0;  // median of |q0| sqrt(N)
};

// Anti-concentration of the initial empirical quadratic form:
// Pr[|q0| >= c0/sqrt(N)] against the Paley-Zygmund floor p_PZ(c0).
inline Q0Report mc_q0_anticoncentration(int d, long N, long trials, double c0, uint64_t seed,
                                        bool random_labels = false, int workers = 1) {
  detail::require_lemma_dim(d);
  if (!(c0 > 0.0 && c0 < std::sqrt(3.0) / 2.0))
    throw ConfigError("c0 must lie in (0, sqrt(3)/2)");
  std::vector<double> scaled(static_cast<size_t>(trials));
  const TaskSpec task = TaskSpec::parity(d, 2);
  const double rn = std::sqrt(static_cast<double>(N));
  parallel_for(trials, workers, [&](long i) {
    Rng rng(derive_seed(seed, "q0", static_cast<uint64_t>(i)));
    Eigen::VectorXd w = detail::unit_sphere(d, rng);
    Eigen::RowVectorXd row(d);
    double q = 0.0;
    for (long s = 0; s < N; ++s) {
      double y = detail::sample_row(task, rng, row);
      if (random_labels) y = rng.rademacher();
      const double t = row * w;
      q += y * t * t;
    }
    q /= static_cast<double>(N);
    scaled[static_cast<size_t>(i)] = std::abs(q) * rn;
  });
  Q0Report rep;
  rep.d = d;
  rep.N = N;
  rep.trials = trials;
  rep.threshold = c0 / rn;
  long hits = 0;
  for (double v : scaled)
    if (v >= c0) ++hits;
  rep.prob = static_cast<double>(hits) / static_cast<double>(trials);
  rep.ci = wilson_interval(hits, trials);
  rep.pz_bound = p_pz(c0);
  rep.median_scaled = median(scaled);
  return rep;
}

struct OpnormReport {
  int d = 0;
  long N = 0;
  long trials = 0;
  double delta = 0.0;
  double quantile_val = 0.0;  // empirical (1-delta) quantile of ||Mhat||_2
  double mean = 0.0;
  double bound = 0.0;  // Bernstein bound with the configured C
  bool within = false;
  long nonconverged = 0;
};

// Distribution of ||Mhat||_2 against the Bernstein-style bound. The universal
// constant is unknown, so the comparison is reported, not hard-asserted.
inline OpnormReport mc_mhat_opnorm(int d, long N, long trials, double delta, uint64_t seed,
                                   const TheoryConstants& consts = {}, int workers = 1) {
  detail::require_lemma_dim(d);
  consts.validate();
  std::vector<double> vals(static_cast<size_t>(trials));
  std::vector<char> conv(static_cast<size_t>(trials), 1);
  const TaskSpec task = TaskSpec::parity(d, 2);
  parallel_for(trials, workers, [&](long i) {
    LabeledDataset ds =
        make_dataset(task, N, derive_seed(seed, "opnorm", static_cast<uint64_t>(i)));
    if (consts.random_labels)
      ds = randomize_labels(ds, derive_seed(seed, "opnorm-labels", static_cast<uint64_t>(i)));
    bool ok = true;
    vals[static_cast<size_t>(i)] = opnorm_sym(empirical_M(ds), 200, 1e-10, &ok);
    conv[static_cast<size_t>(i)] = ok ? 1 : 0;
  });
  OpnormReport rep;
  rep.d = d;
  rep.N = N;
  rep.trials = trials;
  rep.delta = delta;
  rep.quantile_val = quantile(vals, 1.0 - delta);
  double sum = 0.0;
  for (double v : vals) sum += v;
  rep.mean = sum / static_cast<double>(trials);
  rep.bound = bernstein_bound(N, d, delta, consts.bernstein_C, consts.random_labels);
  rep.within = rep.quantile_val <= rep.bound;
  for (char c : conv) rep.nonconverged += c ? 0 : 1;
  return rep;
}

struct AlignmentReport {
  int d = 0;
  long N = 0;
  long trials = 0;
  double align_prob = 0.0;  // Pr[|<w0,u>| >= 1/(2 sqrt(d))]
  Interval align_ci;
  double pop_event_prob = 0.0;  // Pr[|qpop| >= 3/(4d) and ||P12 w0|| <= 1/sqrt(d)]
  Interval pop_ci;
  double joint_prob = 0.0;  // population event and empirical sign-match event
  Interval joint_ci;
  double sign_match_prob = 0.0;  // Pr[sign(a0)=sign(q0) | q0 != 0]
  Interval sign_ci;
  double beta_half_hat = 0.0;    // Pr[||P12 w0||^2 <= 1/2]
  double beta_half_exact = 0.0;  // 1 - 2^{-(d-2)/2}
};

// Initialization-geometry events behind the constant-probability lemmas.
inline AlignmentReport mc_alignment_event(int d, long trials, uint64_t seed, long N = 0,
                                          const TheoryConstants& consts = {}, int workers = 1) {
  detail::require_lemma_dim(d);
  consts.validate();
  if (N <= 0) N = 4L * d;
  struct TrialOut {
    bool align = false, pop = false, joint = false, beta = false;
    bool sign_defined = false, sign_match = false;
  };
  std::vector<TrialOut> outs(static_cast<size_t>(trials));
  const TaskSpec task = TaskSpec::parity(d, 2);
  const double q_star = consts.q_star(N);
  parallel_for(trials, workers, [&](long i) {
    TrialOut& o = outs[static_cast<size_t>(i)];
    Rng rng(derive_seed(seed, "alignment", static_cast<uint64_t>(i)));
    Eigen::VectorXd w0 = detail::unit_sphere(d, rng);
    const double a0 = rng.normal();
    const double z = (w0(0) + w0(1)) / std::sqrt(2.0);
    o.align = std::abs(z) >= 1.0 / (2.0 * std::sqrt(static_cast<double>(d)));
    const double r2 = w0(0) * w0(0) + w0(1) * w0(1);
    o.beta = r2 <= 0.5;
    const double qpop = 2.0 * w0(0) * w0(1);
    o.pop = std::abs(qpop) >= 3.0 / (4.0 * d) && std::sqrt(r2) <= 1.0 / std::sqrt(static_cast<double>(d));
    Eigen::RowVectorXd row(d);
    double q0 = 0.0;
    for (long s = 0; s < N; ++s) {
      const double y = detail::sample_row(task, rng, row);
      const double t = row * w0;
      q0 += y * t * t;
    }
    q0 /= static_cast<double>(N);
    if (q0 != 0.0) {
      o.sign_defined = true;
      o.sign_match = detail::sgn(a0) == detail::sgn(q0);
    }
    const bool gsign = detail::sgn(a0) == detail::sgn(q0) &&
                       detail::sgn(q0) == detail::sgn(qpop) && std::abs(q0) >= q_star;
    o.joint = o.pop && gsign;
  });
  AlignmentReport rep;
  rep.d = d;
  rep.N = N;
  rep.trials = trials;
  long n_align = 0, n_pop = 0, n_joint = 0, n_beta = 0, n_sign = 0, n_sign_def = 0;
  for (const TrialOut& o : outs) {
    n_align += o.align;
    n_pop += o.pop;
    n_joint += o.joint;
    n_beta += o.beta;
    n_sign_def += o.sign_defined;
    n_sign += o.sign_match;
  }
  rep.align_prob = static_cast<double>(n_align) / trials;
  rep.align_ci = wilson_interval(n_align, trials);
  rep.pop_event_prob = static_cast<double>(n_pop) / trials;
  rep.pop_ci = wilson_interval(n_pop, trials);
  rep.joint_prob = static_cast<double>(n_joint) / trials;
  rep.joint_ci = wilson_interval(n_joint, trials);
  rep.sign_match_prob =
      n_sign_def > 0 ? static_cast<double>(n_sign) / n_sign_def : 0.0;
  rep.sign_ci = n_sign_def > 0 ? wilson_interval(n_sign, n_sign_def) : Interval{0.0, 1.0};
  rep.beta_half_hat = static_cast<double>(n_beta) / trials;
  rep.beta_half_exact = 1.0 - std::pow(2.0, -(d - 2) / 2.0);
  return rep;
}

// Least squares slope of log(y) against log(x).
inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2)
    throw ConfigError("slope fit needs >= 2 matched points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw ConfigError("slope fit needs positive data");
    const double lx = std::log(xs[i]);
    const double ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) throw ConfigError("slope fit is degenerate");
  return (n * sxy - sx * sy) / denom;
}

// Standard JSON record shape for all verifier outputs.
inline nlohmann::json verifier_record(const std::string& lemma, nlohmann::json params,
                                      long trials, double estimate, double ci_low,
                                      double ci_high, long violations, bool pass) {
  return nlohmann::json{{"lemma", lemma},       {"params", std::move(params)},
                        {"trials", trials},     {"estimate", estimate},
                        {"ci_low", ci_low},     {"ci_high", ci_high},
                        {"violations", violations}, {"pass", pass}};
}

}  // namespace repeatlab
