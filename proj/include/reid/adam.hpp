#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "reid/matrix.hpp"
#include "reid/network.hpp"

namespace reid {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-3;
};

// First/second-moment accumulators, one per parameter block.
struct AdamState {
  AdamConfig config;
  std::vector<Matrix> m_weights, v_weights;
  std::vector<std::vector<double>> m_biases, v_biases;
  std::uint64_t step = 0;

  static AdamState init(const ModelParams& params, const AdamConfig& config) {
    AdamState s;
    s.config = config;
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      s.m_weights.emplace_back(params.weights[l].rows(), params.weights[l].cols());
      s.v_weights.emplace_back(params.weights[l].rows(), params.weights[l].cols());
      s.m_biases.emplace_back(params.biases[l].size(), 0.0);
      s.v_biases.emplace_back(params.biases[l].size(), 0.0);
    }
    return s;
  }
};

namespace detail {

inline void adam_update(double g, double& m, double& v, double& theta, const AdamConfig& c,
                        double bias1, double bias2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  theta -= c.lr * (m / bias1) / (std::sqrt(v / bias2) + c.epsilon);
}

}  // namespace detail

// One bias-corrected Adam step. Non-finite gradients are rejected before any
// mutation, leaving state and params untouched.
inline void adam_step(AdamState& state, ModelParams& params, const Gradients& grads) {
  if (grads.weights.size() != params.layer_count() ||
      grads.biases.size() != params.layer_count()) {
    throw std::invalid_argument("adam_step: gradient layer count mismatch");
  }
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() ||
        grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch");
    }
    if (!all_finite(grads.weights[l]) || !all_finite(grads.biases[l])) {
      throw std::invalid_argument("adam_step: non-finite gradient");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(state.config.beta1, t);
  const double bias2 = 1.0 - std::pow(state.config.beta2, t);

  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    auto& w = params.weights[l].flat();
    const auto& gw = grads.weights[l].flat();
    auto& mw = state.m_weights[l].flat();
    auto& vw = state.v_weights[l].flat();
    for (std::size_t i = 0; i < w.size(); ++i) {
      detail::adam_update(gw[i], mw[i], vw[i], w[i], state.config, bias1, bias2);
    }
    auto& b = params.biases[l];
    const auto& gb = grads.biases[l];
    auto& mb = state.m_biases[l];
    auto& vb = state.v_biases[l];
    for (std::size_t i = 0; i < b.size(); ++i) {
      detail::adam_update(gb[i], mb[i], vb[i], b[i], state.config, bias1, bias2);
    }
  }
}

}  // namespace reid
