#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "repeatlab/common.hpp"
#include "repeatlab/rng.hpp"
#include "repeatlab/tasks.hpp"

namespace repeatlab {

enum class InitKind { DefaultUniform, Gaussian, AlphaScaled, MuP, PerLayerConstants };

inline const char* init_kind_name(InitKind k) {
  switch (k) {
    case InitKind::DefaultUniform: return "default-uniform";
    case InitKind::Gaussian: return "gaussian";
    case InitKind::AlphaScaled: return "alpha-scaled";
    case InitKind::MuP: return "mup";
    case InitKind::PerLayerConstants: return "per-layer-constants";
  }
  return "?";
}

struct InitScheme {
  InitKind kind = InitKind::DefaultUniform;
  double alpha = 1.0;                // alpha-scaled: first layer / alpha, last * alpha
  std::vector<double> layer_scales;  // per-layer-constants multipliers
  uint64_t seed = 0;
};

// Bias-free dense ReLU MLP. W[l] has shape (m_{l+1} x m_l); the last layer is
// a linear read-out row.
struct MlpParams {
  std::vector<Eigen::MatrixXd> W;

  int depth() const { return static_cast<int>(W.size()); }
  int in_dim() const { return W.empty() ? 0 : static_cast<int>(W.front().cols()); }
};

inline MlpParams init_mlp(int d, const std::vector<int>& widths, const InitScheme& scheme) {
  if (widths.empty()) throw ConfigError("widths must be non-empty");
  if (widths.back() != 1) throw ConfigError("last width must be 1 (scalar output)");
  for (int w : widths)
    if (w < 1) throw ConfigError("widths must be positive");
  if (scheme.alpha <= 0.0) throw ConfigError("init alpha must be positive");
  const int L = static_cast<int>(widths.size());
  if (scheme.kind == InitKind::PerLayerConstants &&
      static_cast<int>(scheme.layer_scales.size()) != L)
    throw ConfigError("per-layer-constants needs one multiplier per layer");
  for (double c : scheme.layer_scales)
    if (c <= 0.0) throw ConfigError("layer multipliers must be positive");

  MlpParams p;
  p.W.reserve(static_cast<size_t>(L));
  Rng rng(scheme.seed);
  int fan_in = d;
  for (int l = 0; l < L; ++l) {
    const int rows = widths[static_cast<size_t>(l)];
    Eigen::MatrixXd W(rows, fan_in);
    const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const bool gaussian =
        scheme.kind == InitKind::Gaussian ||
        (scheme.kind == InitKind::MuP);
    // muP: hidden layers keep std 1/sqrt(fan_in); the output layer std is
    // 1/fan_in (init-only reading of the parameterization).
    const double std_dev = (scheme.kind == InitKind::MuP && l == L - 1)
                               ? 1.0 / static_cast<double>(fan_in)
                               : b;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < fan_in; ++c)
        W(r, c) = gaussian ? std_dev * rng.normal() : rng.uniform(-b, b);
    p.W.push_back(std::move(W));
    fan_in = rows;
  }
  if (scheme.kind == InitKind::AlphaScaled) {
    p.W.front() /= scheme.alpha;
    p.W.back() *= scheme.alpha;
  } else if (scheme.kind == InitKind::PerLayerConstants) {
    for (int l = 0; l < L; ++l) p.W[static_cast<size_t>(l)] *= scheme.layer_scales[static_cast<size_t>(l)];
  }
  return p;
}

// acts[0] is the input batch; acts[l] for l >= 1 is the post-ReLU output of
// layer l. The ReLU mask is recoverable as acts[l] > 0, so pre-activations
// need not be kept.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

inline Eigen::VectorXd forward(const MlpParams& p, const Eigen::MatrixXd& X,
                               ForwardCache* cache = nullptr) {
  if (X.cols() != p.in_dim()) throw ConfigError("input width does not match first layer");
  const int L = p.depth();
  if (cache) {
    cache->acts.clear();
    cache->acts.reserve(static_cast<size_t>(L));
    cache->acts.push_back(X);
  }
  Eigen::MatrixXd h = X;
  for (int l = 0; l < L - 1; ++l) {
    h = (h * p.W[static_cast<size_t>(l)].transpose()).cwiseMax(0.0);
    if (cache) cache->acts.push_back(h);
  }
  return h * p.W.back().transpose().col(0);
}

enum class LossKind { Mse, Correlation };

inline const char* loss_kind_name(LossKind k) {
  return k == LossKind::Mse ? "mse" : "correlation";
}

struct LossGrad {
  double loss = 0.0;
  std::vector<Eigen::MatrixXd> grads;
};

// Batch-mean loss and its exact gradients:
//   mse:          (1/B) sum (f(x) - y)^2
//   correlation:  (1/B) sum -y f(x)
inline LossGrad loss_and_grad(const MlpParams& p, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y, LossKind kind) {
  if (X.rows() != y.size()) throw ConfigError("batch size mismatch between X and y");
  const int L = p.depth();
  const double B = static_cast<double>(X.rows());
  ForwardCache cache;
  Eigen::VectorXd preds = forward(p, X, &cache);

  LossGrad out;
  Eigen::VectorXd dpred;
  if (kind == LossKind::Mse) {
    Eigen::VectorXd e = preds - y;
    out.loss = e.squaredNorm() / B;
    dpred = (2.0 / B) * e;
  } else if (kind == LossKind::Correlation) {
    out.loss = -y.dot(preds) / B;
    dpred = -y / B;
  } else {
    throw ConfigError("unknown loss kind");
  }

  out.grads.resize(static_cast<size_t>(L));
  Eigen::MatrixXd delta = dpred;  // B x m_L
  for (int l = L - 1; l >= 0; --l) {
    out.grads[static_cast<size_t>(l)].noalias() =
        delta.transpose() * cache.acts[static_cast<size_t>(l)];
    if (l > 0) {
      Eigen::MatrixXd back = delta * p.W[static_cast<size_t>(l)];
      const Eigen::MatrixXd& act = cache.acts[static_cast<size_t>(l)];
      delta = (act.array() > 0.0).select(back, 0.0);
    }
  }
  return out;
}

struct LayerNorms {
  std::vector<double> norms;
  double ratio = 0.0;  // last / first Frobenius
};

inline LayerNorms layer_norms(const MlpParams& p) {
  LayerNorms ln;
  ln.norms.reserve(p.W.size());
  for (const auto& W : p.W) ln.norms.push_back(W.norm());
  ln.ratio = p.W.empty() ? 0.0 : ln.norms.back() / ln.norms.front();
  return ln;
}

// sign(0) counts as +1, a fixed tie-break.
inline double accuracy(const MlpParams& p, const LabeledDataset& ds) {
  if (ds.task.kind == TaskKind::Sim)
    throw ConfigError("accuracy is defined for classification (+-1 label) tasks");
  Eigen::VectorXd preds = forward(p, ds.X);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    double s = preds(i) >= 0.0 ? 1.0 : -1.0;
    hits += s == ds.y(i) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace repeatlab
