#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "repeatlab/common.hpp"
#include "repeatlab/hermite.hpp"
#include "repeatlab/rng.hpp"

namespace repeatlab {

enum class TaskKind { Parity, Sim };

// A synthetic task: (d,k)-sparse parity over the hypercube, or a single-index
// model y = He_k(<teacher, x>) over Gaussian inputs. Support indices are
// 0-based. The Sim teacher is stored exactly as drawn (standard normal).
struct TaskSpec {
  TaskKind kind = TaskKind::Parity;
  int d = 0;
  int k = 0;
  std::vector<int> support;   // Parity only, size k
  Eigen::VectorXd teacher;    // Sim only, length d

  static TaskSpec parity(int d, int k) {
    TaskSpec t;
    t.kind = TaskKind::Parity;
    t.d = d;
    t.k = k;
    t.support.resize(static_cast<size_t>(std::max(k, 0)));
    for (int i = 0; i < k; ++i) t.support[static_cast<size_t>(i)] = i;
    t.validate();
    return t;
  }

  static TaskSpec parity_with_support(int d, std::vector<int> support) {
    TaskSpec t;
    t.kind = TaskKind::Parity;
    t.d = d;
    t.k = static_cast<int>(support.size());
    t.support = std::move(support);
    t.validate();
    return t;
  }

  static TaskSpec sim(int d, int k, uint64_t teacher_seed) {
    TaskSpec t;
    t.kind = TaskKind::Sim;
    t.d = d;
    t.k = k;
    t.teacher.resize(d);
    Rng rng(teacher_seed);
    for (int i = 0; i < d; ++i) t.teacher(i) = rng.normal();
    t.validate();
    return t;
  }

  static TaskSpec sim_with_teacher(int d, int k, Eigen::VectorXd teacher) {
    TaskSpec t;
    t.kind = TaskKind::Sim;
    t.d = d;
    t.k = k;
    t.teacher = std::move(teacher);
    t.validate();
    return t;
  }

  void validate() const {
    if (d < 1) throw ConfigError("task dimension d must be >= 1");
    if (k < 1 || k > d) throw ConfigError("task order k must satisfy 1 <= k <= d");
    if (kind == TaskKind::Parity) {
      if (static_cast<int>(support.size()) != k)
        throw ConfigError("parity support size must equal k");
      std::set<int> seen;
      for (int i : support) {
        if (i < 0 || i >= d)
          throw ConfigError("parity support index " + std::to_string(i) +
                            " out of range [0, " + std::to_string(d) + ")");
        if (!seen.insert(i).second)
          throw ConfigError("parity support indices must be distinct");
      }
    } else {
      if (teacher.size() != d) throw ConfigError("sim teacher must have length d");
      if (!teacher.allFinite()) throw ConfigError("sim teacher entries must be finite");
    }
  }
};

template <typename Derived>
double parity_label(const Eigen::MatrixBase<Derived>& x, const std::vector<int>& support) {
  double prod = 1.0;
  for (int i : support) {
    if (i < 0 || i >= static_cast<int>(x.size()))
      throw ConfigError("parity support index out of range");
    prod *= x(i);
  }
  return prod;
}

// A fixed design matrix with labels. `transform` records which interventions
// were applied; datasets are immutable after construction.
struct LabeledDataset {
  TaskSpec task;
  Eigen::MatrixXd X;  // one row per sample
  Eigen::VectorXd y;
  uint64_t seed = 0;
  std::string transform = "none";
  Eigen::VectorXd random_direction;  // Sim label randomization: the drawn vector

  Eigen::Index n() const { return X.rows(); }
};

namespace detail {

// One sample row, advancing the stream by a fixed draw count (d words for
// parity, 2d for Sim): the first N' rows of a size-N dataset are exactly the
// size-N' dataset for the same seed.
template <typename RowT>
double sample_row(const TaskSpec& task, Rng& rng, RowT&& row) {
  if (task.kind == TaskKind::Parity) {
    for (int j = 0; j < task.d; ++j) row(j) = rng.rademacher();
    return parity_label(row, task.support);
  }
  for (int j = 0; j < task.d; ++j) row(j) = rng.normal();
  double z = 0.0;
  for (int j = 0; j < task.d; ++j) z += task.teacher(j) * row(j);
  return hermite_he(task.k, z);
}

}  // namespace detail

inline LabeledDataset make_dataset(const TaskSpec& task, Eigen::Index n, uint64_t seed) {
  task.validate();
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  LabeledDataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.X.resize(n, task.d);
  ds.y.resize(n);
  Rng rng(seed);
  Eigen::RowVectorXd row(task.d);
  for (Eigen::Index i = 0; i < n; ++i) {
    ds.y(i) = detail::sample_row(task, rng, row);
    ds.X.row(i) = row;
  }
  return ds;
}

inline LabeledDataset prefix_view(const LabeledDataset& ds, Eigen::Index n) {
  if (n < 1 || n > ds.n()) throw ConfigError("prefix size out of range");
  LabeledDataset out;
  out.task = ds.task;
  out.seed = ds.seed;
  out.transform = ds.transform;
  out.random_direction = ds.random_direction;
  out.X = ds.X.topRows(n);
  out.y = ds.y.head(n);
  return out;
}

enum class BiasMode { MeanZero, LabelBalance, ClassConditional, Antipodal };

inline const char* bias_mode_name(BiasMode m) {
  switch (m) {
    case BiasMode::MeanZero: return "mean-zero";
    case BiasMode::LabelBalance: return "label-balance";
    case BiasMode::ClassConditional: return "class-conditional";
    case BiasMode::Antipodal: return "antipodal";
  }
  return "?";
}

namespace detail {

inline std::string add_transform(const std::string& cur, const std::string& tag) {
  return cur == "none" ? tag : cur + "+" + tag;
}

// Drop the minimal number of rows so that labels sum to zero, removing the
// last-drawn rows of the majority class (deterministic tie-breaking by index).
inline LabeledDataset balance_labels(const LabeledDataset& ds) {
  Eigen::Index pos = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) pos += ds.y(i) > 0 ? 1 : 0;
  Eigen::Index neg = ds.n() - pos;
  if (pos == 0 || neg == 0)
    throw InterventionError("label balance impossible: all labels equal");
  double majority = pos > neg ? 1.0 : -1.0;
  Eigen::Index excess = std::abs(pos - neg);
  std::vector<char> drop(static_cast<size_t>(ds.n()), 0);
  for (Eigen::Index i = ds.n() - 1; i >= 0 && excess > 0; --i) {
    if (ds.y(i) == majority) {
      drop[static_cast<size_t>(i)] = 1;
      --excess;
    }
  }
  LabeledDataset out;
  out.task = ds.task;
  out.seed = ds.seed;
  out.transform = ds.transform;
  out.random_direction = ds.random_direction;
  Eigen::Index kept = ds.n() - std::abs(pos - neg);
  out.X.resize(kept, ds.X.cols());
  out.y.resize(kept);
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    if (!drop[static_cast<size_t>(i)]) {
      out.X.row(j) = ds.X.row(i);
      out.y(j) = ds.y(i);
      ++j;
    }
  }
  return out;
}

}  // namespace detail

inline LabeledDataset remove_input_bias(const LabeledDataset& ds, BiasMode mode) {
  if (ds.task.kind != TaskKind::Parity)
    throw InterventionError("input-bias removal is defined for parity datasets");
  switch (mode) {
    case BiasMode::MeanZero: {
      LabeledDataset out = ds;
      out.X.rowwise() -= ds.X.colwise().mean();
      out.transform = detail::add_transform(ds.transform, "centered");
      return out;
    }
    case BiasMode::LabelBalance: {
      LabeledDataset out = detail::balance_labels(ds);
      out.X.rowwise() -= out.X.colwise().mean().eval();
      out.transform = detail::add_transform(ds.transform, "centered+label-balanced");
      return out;
    }
    case BiasMode::ClassConditional: {
      LabeledDataset out = detail::balance_labels(ds);
      Eigen::RowVectorXd mean_pos = Eigen::RowVectorXd::Zero(out.X.cols());
      Eigen::RowVectorXd mean_neg = Eigen::RowVectorXd::Zero(out.X.cols());
      Eigen::Index npos = 0, nneg = 0;
      for (Eigen::Index i = 0; i < out.n(); ++i) {
        if (out.y(i) > 0) {
          mean_pos += out.X.row(i);
          ++npos;
        } else {
          mean_neg += out.X.row(i);
          ++nneg;
        }
      }
      mean_pos /= static_cast<double>(npos);
      mean_neg /= static_cast<double>(nneg);
      for (Eigen::Index i = 0; i < out.n(); ++i)
        out.X.row(i) -= out.y(i) > 0 ? mean_pos : mean_neg;
      out.transform = detail::add_transform(ds.transform, "centered+class-conditional");
      return out;
    }
    case BiasMode::Antipodal: {
      // Appending -x keeps parity labels only for even k; exact boolean-
      // preserving centering.
      if (ds.task.k % 2 != 0)
        throw InterventionError("antipodal augmentation requires even parity order k");
      LabeledDataset out;
      out.task = ds.task;
      out.seed = ds.seed;
      out.random_direction = ds.random_direction;
      out.X.resize(2 * ds.n(), ds.X.cols());
      out.y.resize(2 * ds.n());
      out.X.topRows(ds.n()) = ds.X;
      out.X.bottomRows(ds.n()) = -ds.X;
      out.y.head(ds.n()) = ds.y;
      out.y.tail(ds.n()) = ds.y;
      out.transform = detail::add_transform(ds.transform, "antipodal");
      return out;
    }
  }
  throw ConfigError("unknown bias-removal mode");
}

// Whitening for Gaussian-input datasets: x~ = C^{-1/2} (x - mu) with the
// empirical mean/covariance (1/N convention), via symmetric eigendecomposition.
inline LabeledDataset whiten(const LabeledDataset& ds) {
  if (ds.task.kind != TaskKind::Sim)
    throw InterventionError("whitening is defined for Gaussian-input (sim) datasets");
  const Eigen::Index n = ds.n(), d = ds.X.cols();
  if (n <= d)
    throw InterventionError("whitening needs N > d; covariance is singular at N=" +
                            std::to_string(n) + ", d=" + std::to_string(d));
  Eigen::RowVectorXd mu = ds.X.colwise().mean();
  Eigen::MatrixXd centered = ds.X.rowwise() - mu;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw NumericError("covariance eigensolve failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  double floor = 1e-12 * std::max(ev(d - 1), 1.0);
  if (ev(0) <= floor)
    throw InterventionError("covariance is numerically singular: smallest eigenvalue " +
                            std::to_string(ev(0)));
  Eigen::MatrixXd inv_sqrt =
      es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
      es.eigenvectors().transpose();
  LabeledDataset out = ds;
  out.X = centered * inv_sqrt;
  out.transform = detail::add_transform(ds.transform, "whitened");
  return out;
}

// Parity: labels resampled uniform +-1. Sim: a fresh standard-normal vector
// labels the same inputs through the true link (the vector is kept so the
// labels stay re-derivable).
inline LabeledDataset randomize_labels(const LabeledDataset& ds, uint64_t seed) {
  LabeledDataset out = ds;
  Rng rng(seed);
  if (ds.task.kind == TaskKind::Parity) {
    for (Eigen::Index i = 0; i < out.n(); ++i) out.y(i) = rng.rademacher();
  } else {
    Eigen::VectorXd w(ds.task.d);
    for (int j = 0; j < ds.task.d; ++j) w(j) = rng.normal();
    for (Eigen::Index i = 0; i < out.n(); ++i)
      out.y(i) = hermite_he(ds.task.k, ds.X.row(i).dot(w));
    out.random_direction = w;
  }
  out.transform = detail::add_transform(ds.transform, "labels-randomized");
  return out;
}

// Online sampler whose per-coordinate Bernoulli parameters reproduce the
// empirical biases of a finite source set: p_i = (1 + mean_i) / 2.
struct BiasedSampler {
  Eigen::VectorXd p;
  Eigen::Index source_m = 0;

  static BiasedSampler from_dataset(const LabeledDataset& src) {
    if (src.task.kind != TaskKind::Parity)
      throw InterventionError("biased online sampling is defined for parity tasks");
    BiasedSampler s;
    s.p = ((src.X.colwise().mean().array() + 1.0) / 2.0).matrix().transpose();
    s.source_m = src.n();
    return s;
  }
};

inline std::pair<Eigen::VectorXd, double> biased_online_sample(const BiasedSampler& sampler,
                                                               const TaskSpec& task,
                                                               Rng& rng) {
  if (task.kind != TaskKind::Parity)
    throw InterventionError("biased online sampling is defined for parity tasks");
  if (sampler.p.size() != task.d)
    throw ConfigError("sampler dimension does not match task dimension");
  Eigen::VectorXd x(task.d);
  for (int j = 0; j < task.d; ++j) x(j) = rng.pm_bernoulli(sampler.p(j));
  return {x, parity_label(x, task.support)};
}

// Debug export: header x_1,...,x_d,y, 17 significant digits.
inline void write_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open " + path + " for writing");
  for (int j = 0; j < ds.X.cols(); ++j) std::fprintf(f, "x_%d,", j + 1);
  std::fprintf(f, "y\n");
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
      std::fprintf(f, "%.17g,", ds.X(i, j));
    std::fprintf(f, "%.17g\n", ds.y(i));
  }
  std::fclose(f);
}

}  // namespace repeatlab
