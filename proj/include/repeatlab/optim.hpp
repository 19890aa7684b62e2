#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "repeatlab/common.hpp"
#include "repeatlab/model.hpp"

namespace repeatlab {

enum class OptKind { Sgd, AdamW };

struct OptimConfig {
  OptKind kind = OptKind::Sgd;
  double lr = 0.1;
  std::vector<double> layer_lrs;  // empty = global lr for every layer
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate(int depth) const {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (!layer_lrs.empty()) {
      if (static_cast<int>(layer_lrs.size()) != depth)
        throw ConfigError("layer_lrs needs one rate per layer");
      for (double v : layer_lrs)
        if (v < 0.0) throw ConfigError("layer learning rates must be >= 0");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("beta1/beta2 must lie in [0, 1)");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  }

  double rate_for_layer(int l) const {
    return layer_lrs.empty() ? lr : layer_lrs[static_cast<size_t>(l)];
  }
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long t = 0;

  static AdamState init(const MlpParams& p) {
    AdamState s;
    s.m.reserve(p.W.size());
    s.v.reserve(p.W.size());
    for (const auto& W : p.W) {
      s.m.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
      s.v.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
    }
    return s;
  }
};

namespace detail {

inline void check_grad_shapes(const MlpParams& p, const std::vector<Eigen::MatrixXd>& g) {
  if (g.size() != p.W.size()) throw ConfigError("gradient layer count mismatch");
  for (size_t l = 0; l < g.size(); ++l)
    if (g[l].rows() != p.W[l].rows() || g[l].cols() != p.W[l].cols())
      throw ConfigError("gradient shape mismatch at layer " + std::to_string(l));
}

inline void check_finite_after_step(const MlpParams& p) {
  for (const auto& W : p.W)
    if (!W.allFinite()) throw NumericError("optimizer step produced non-finite weights");
}

}  // namespace detail

inline void sgd_step(MlpParams& p, const std::vector<Eigen::MatrixXd>& grads,
                     const OptimConfig& cfg) {
  cfg.validate(p.depth());
  detail::check_grad_shapes(p, grads);
  for (int l = 0; l < p.depth(); ++l)
    p.W[static_cast<size_t>(l)] -= cfg.rate_for_layer(l) * grads[static_cast<size_t>(l)];
  detail::check_finite_after_step(p);
}

// Decoupled weight decay: W <- W - lr (mhat / (sqrt(vhat) + eps) + wd W).
inline void adamw_step(MlpParams& p, AdamState& s, const std::vector<Eigen::MatrixXd>& grads,
                       const OptimConfig& cfg) {
  cfg.validate(p.depth());
  detail::check_grad_shapes(p, grads);
  if (s.m.size() != p.W.size()) throw ConfigError("Adam state does not match params");
  s.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (int li = 0; li < p.depth(); ++li) {
    const size_t l = static_cast<size_t>(li);
    s.m[l] = cfg.beta1 * s.m[l] + (1.0 - cfg.beta1) * grads[l];
    s.v[l] = cfg.beta2 * s.v[l] + (1.0 - cfg.beta2) * grads[l].cwiseProduct(grads[l]);
    Eigen::ArrayXXd mhat = s.m[l].array() / bc1;
    Eigen::ArrayXXd vhat = s.v[l].array() / bc2;
    p.W[l] -= cfg.rate_for_layer(li) *
              (mhat / (vhat.sqrt() + cfg.eps) + cfg.weight_decay * p.W[l].array()).matrix();
  }
  detail::check_finite_after_step(p);
}

}  // namespace repeatlab
