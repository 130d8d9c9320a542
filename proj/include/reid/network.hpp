#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/geometry.hpp"
#include "reid/matrix.hpp"
#include "reid/rng.hpp"

namespace reid {

// Fully-connected embedding network: rectifier between layers, linear output,
// optional terminal L2 normalization per row.
struct ModelParams {
  std::vector<std::size_t> sizes;               // [D, hidden..., F]
  std::vector<Matrix> weights;                  // layer l: sizes[l+1] x sizes[l]
  std::vector<std::vector<double>> biases;      // layer l: sizes[l+1]
  bool normalize_output = false;

  std::size_t layer_count() const { return weights.size(); }
  std::size_t input_dim() const { return sizes.front(); }
  std::size_t output_dim() const { return sizes.back(); }

  bool operator==(const ModelParams&) const = default;
};

// Symmetric uniform fan-in initialization: W ~ U(-1/sqrt(in), 1/sqrt(in)),
// biases zero. Weight entries are drawn row-major, layer by layer.
inline ModelParams init_params(const std::vector<std::size_t>& sizes, bool normalize_output,
                               Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("init_params: need at least [D, F]");
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("init_params: zero layer size");
  }
  ModelParams p;
  p.sizes = sizes;
  p.normalize_output = normalize_output;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[l]));
    Matrix w(sizes[l + 1], sizes[l]);
    for (double& x : w.flat()) x = (2.0 * rng.uniform01() - 1.0) * bound;
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(sizes[l + 1], 0.0);
  }
  return p;
}

inline void check_shapes(const ModelParams& p) {
  if (p.weights.size() + 1 != p.sizes.size() || p.biases.size() != p.weights.size()) {
    throw std::invalid_argument("ModelParams: layer count mismatch");
  }
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (p.weights[l].rows() != p.sizes[l + 1] || p.weights[l].cols() != p.sizes[l] ||
        p.biases[l].size() != p.sizes[l + 1]) {
      throw std::invalid_argument("ModelParams: bad shape at layer " + std::to_string(l));
    }
  }
}

struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;   // z_l, before the nonlinearity
  std::vector<Matrix> post;  // a_l; last entry is the network output
};

// Batch forward pass (rows are samples). Deterministic; terminal
// normalization applied iff the flag is set, with degenerate rows mapped to
// zero.
inline Matrix forward(const ModelParams& p, const Matrix& inputs, ForwardCache* cache = nullptr) {
  check_shapes(p);
  if (inputs.cols() != p.input_dim()) {
    throw std::invalid_argument("forward: input dimension " + std::to_string(inputs.cols()) +
                                ", model expects " + std::to_string(p.input_dim()));
  }
  if (!all_finite(inputs)) throw std::invalid_argument("forward: non-finite input");

  if (cache != nullptr) {
    cache->input = inputs;
    cache->pre.clear();
    cache->post.clear();
  }

  Matrix a = inputs;
  const std::size_t layers = p.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    const Matrix& w = p.weights[l];
    Matrix z(a.rows(), w.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      for (std::size_t o = 0; o < w.rows(); ++o) {
        double acc = p.biases[l][o];
        const double* wrow = w.row(o);
        const double* arow = a.row(r);
        for (std::size_t i = 0; i < w.cols(); ++i) acc += wrow[i] * arow[i];
        z(r, o) = acc;
      }
    }
    if (cache != nullptr) cache->pre.push_back(z);

    const bool last = l + 1 == layers;
    Matrix out = z;
    if (!last) {
      for (double& x : out.flat()) x = x > 0.0 ? x : 0.0;
    } else if (p.normalize_output) {
      for (std::size_t r = 0; r < out.rows(); ++r) out.set_row(r, l2_normalize(out.row_copy(r)));
    }
    if (cache != nullptr) cache->post.push_back(out);
    a = std::move(out);
  }
  return a;
}

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
};

inline Gradients zero_gradients(const ModelParams& p) {
  Gradients g;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    g.weights.emplace_back(p.weights[l].rows(), p.weights[l].cols());
    g.biases.emplace_back(p.biases[l].size(), 0.0);
  }
  return g;
}

// Backpropagate d(loss)/d(output) to every parameter. Rectifier subgradient
// at zero is taken as zero; degenerate normalized rows propagate zero.
inline Gradients backward(const ModelParams& p, const ForwardCache& cache,
                          const Matrix& grad_output) {
  check_shapes(p);
  const std::size_t layers = p.layer_count();
  if (cache.pre.size() != layers || cache.post.size() != layers) {
    throw std::invalid_argument("backward: cache does not match model");
  }
  const Matrix& output = cache.post.back();
  if (grad_output.rows() != output.rows() || grad_output.cols() != output.cols()) {
    throw std::invalid_argument("backward: gradient shape mismatch");
  }

  Gradients grads = zero_gradients(p);

  // d(loss)/d(z) for the last layer.
  Matrix gz = grad_output;
  if (p.normalize_output) {
    const Matrix& z = cache.pre.back();
    for (std::size_t r = 0; r < z.rows(); ++r) {
      double sq = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) sq += z(r, c) * z(r, c);
      const double norm = std::sqrt(sq);
      if (norm < kNormEpsilon) {
        for (std::size_t c = 0; c < z.cols(); ++c) gz(r, c) = 0.0;
        continue;
      }
      double dot = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c) dot += grad_output(r, c) * z(r, c) / norm;
      for (std::size_t c = 0; c < z.cols(); ++c) {
        gz(r, c) = (grad_output(r, c) - dot * z(r, c) / norm) / norm;
      }
    }
  }

  for (std::size_t l = layers; l-- > 0;) {
    const Matrix& a_prev = l == 0 ? cache.input : cache.post[l - 1];
    Matrix& gw = grads.weights[l];
    std::vector<double>& gb = grads.biases[l];
    for (std::size_t r = 0; r < gz.rows(); ++r) {
      for (std::size_t o = 0; o < gw.rows(); ++o) {
        const double g = gz(r, o);
        if (g == 0.0) continue;
        gb[o] += g;
        double* gwrow = gw.row(o);
        const double* arow = a_prev.row(r);
        for (std::size_t i = 0; i < gw.cols(); ++i) gwrow[i] += g * arow[i];
      }
    }
    if (l == 0) break;
    const Matrix& w = p.weights[l];
    const Matrix& z_prev = cache.pre[l - 1];
    Matrix gz_prev(gz.rows(), w.cols());
    for (std::size_t r = 0; r < gz.rows(); ++r) {
      for (std::size_t i = 0; i < w.cols(); ++i) {
        if (z_prev(r, i) <= 0.0) continue;  // rectifier gate
        double acc = 0.0;
        for (std::size_t o = 0; o < w.rows(); ++o) acc += gz(r, o) * w(o, i);
        gz_prev(r, i) = acc;
      }
    }
    gz = std::move(gz_prev);
  }
  return grads;
}

// Flat parameter views, in layer order with weights row-major before biases.
inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    out.insert(out.end(), p.weights[l].flat().begin(), p.weights[l].flat().end());
    out.insert(out.end(), p.biases[l].begin(), p.biases[l].end());
  }
  return out;
}

inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.insert(out.end(), g.weights[l].flat().begin(), g.weights[l].flat().end());
    out.insert(out.end(), g.biases[l].begin(), g.biases[l].end());
  }
  return out;
}

inline void unflatten(ModelParams& p, const std::vector<double>& values) {
  std::size_t pos = 0;
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    for (double& x : p.weights[l].flat()) x = values[pos++];
    for (double& x : p.biases[l]) x = values[pos++];
  }
  if (pos != values.size()) throw std::invalid_argument("unflatten: size mismatch");
}

}  // namespace reid
