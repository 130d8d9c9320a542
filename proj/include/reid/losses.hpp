#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/geometry.hpp"
#include "reid/matrix.hpp"
#include "reid/rng.hpp"

namespace reid {

enum class LossKind { triplet, contrastive };

enum class SamplingVariant { batch_all, batch_hard, batch_sample, batch_weighted };

// batch_all only: per_triplet averages the plain triplet hinge over every
// valid (anchor, positive, negative); unified_literal plugs unit weights into
// the per-anchor weighted-sum loss, which scales with the negative count.
enum class BatchAllMode { per_triplet, unified_literal };

struct SamplingScheme {
  SamplingVariant variant = SamplingVariant::batch_sample;
  BatchAllMode ba_mode = BatchAllMode::per_triplet;
};

inline const char* sampling_name(SamplingVariant v) {
  switch (v) {
    case SamplingVariant::batch_all: return "ba";
    case SamplingVariant::batch_hard: return "bh";
    case SamplingVariant::batch_sample: return "bs";
    default: return "bw";
  }
}

struct MarginSpec {
  enum class Kind { hard, softplus };
  Kind kind = Kind::softplus;
  double alpha = 0.0;  // hard mode only

  static MarginSpec hard(double alpha) {
    if (!(std::isfinite(alpha) && alpha >= 0.0)) {
      throw std::invalid_argument("MarginSpec: hard margin must be finite and >= 0");
    }
    return MarginSpec{Kind::hard, alpha};
  }
  static MarginSpec softplus() { return MarginSpec{Kind::softplus, 0.0}; }
};

// ln(1 + e^x) without overflow.
inline double softplus_fn(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Numerically stable softmax; sums run in index order so results are
// reproducible.
inline std::vector<double> softmax(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  for (double& w : out) w /= total;
  return out;
}

struct PairLoss {
  double value = 0.0;
  double d_dist = 0.0;  // derivative with respect to the distance argument
};

// Pair loss y*D^2 + (1-y)*[alpha - D^2]_+ on one (distance, same-identity)
// pair. Hard margin only; the softplus variant underperforms for this loss
// and is not offered.
inline PairLoss contrastive_loss(double dist, bool same_identity, double alpha) {
  if (!(std::isfinite(dist) && dist >= 0.0)) {
    throw std::invalid_argument("contrastive_loss: distance must be finite and >= 0");
  }
  if (!(std::isfinite(alpha) && alpha >= 0.0)) {
    throw std::invalid_argument("contrastive_loss: margin must be finite and >= 0");
  }
  PairLoss out;
  const double sq = dist * dist;
  if (same_identity) {
    out.value = sq;
    out.d_dist = 2.0 * dist;
  } else if (alpha - sq > 0.0) {
    out.value = alpha - sq;
    out.d_dist = -2.0 * dist;
  }
  return out;
}

// Plain triplet loss on one (anchor,positive,negative) distance pair:
// hard margin [d_ap - d_an + alpha]_+ or softplus(d_ap - d_an).
inline double triplet_loss_raw(double d_ap, double d_an, const MarginSpec& margin) {
  if (!std::isfinite(d_ap) || !std::isfinite(d_an)) {
    throw std::invalid_argument("triplet_loss_raw: non-finite distance");
  }
  const double diff = d_ap - d_an;
  if (margin.kind == MarginSpec::Kind::softplus) return softplus_fn(diff);
  return std::max(0.0, diff + margin.alpha);
}

// Per-anchor positive/negative weights realizing one sampling variant.
// `positives`/`negatives` list batch indices; the weight vectors align with
// them.
struct WeightAssignment {
  std::size_t anchor = 0;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  std::vector<double> w_pos;
  std::vector<double> w_neg;
};

namespace detail {

inline std::size_t argmax_strict(const std::vector<double>& row,
                                 const std::vector<std::size_t>& candidates) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (row[candidates[i]] > row[candidates[best]]) best = i;  // ties keep lowest index
  }
  return best;
}

inline std::size_t argmin_strict(const std::vector<double>& row,
                                 const std::vector<std::size_t>& candidates) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    if (row[candidates[i]] < row[candidates[best]]) best = i;
  }
  return best;
}

}  // namespace detail

// Weights for one anchor given its distance row over the batch. Positives are
// same-identity entries other than the anchor slot, negatives all entries of a
// different identity; both must be non-empty. batch_sample consumes the rng
// (positive draw first, then negative).
inline WeightAssignment compute_weights(const SamplingScheme& scheme,
                                        const std::vector<double>& anchor_row,
                                        const std::vector<int>& labels,
                                        std::size_t anchor, Rng* rng = nullptr) {
  if (anchor_row.size() != labels.size()) {
    throw std::invalid_argument("compute_weights: row/label size mismatch");
  }
  if (anchor >= labels.size()) throw std::invalid_argument("compute_weights: bad anchor index");

  WeightAssignment w;
  w.anchor = anchor;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i == anchor) continue;
    if (labels[i] == labels[anchor]) {
      w.positives.push_back(i);
    } else {
      w.negatives.push_back(i);
    }
  }
  if (w.positives.empty() || w.negatives.empty()) {
    throw std::invalid_argument("compute_weights: anchor needs >=1 positive and >=1 negative");
  }

  const std::size_t np = w.positives.size();
  const std::size_t nn = w.negatives.size();
  w.w_pos.assign(np, 0.0);
  w.w_neg.assign(nn, 0.0);

  auto side_logits = [&](const std::vector<std::size_t>& idx, double sign) {
    std::vector<double> logits(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) logits[i] = sign * anchor_row[idx[i]];
    return logits;
  };

  switch (scheme.variant) {
    case SamplingVariant::batch_all:
      w.w_pos.assign(np, 1.0);
      w.w_neg.assign(nn, 1.0);
      break;
    case SamplingVariant::batch_hard:
      w.w_pos[detail::argmax_strict(anchor_row, w.positives)] = 1.0;   // farthest positive
      w.w_neg[detail::argmin_strict(anchor_row, w.negatives)] = 1.0;   // nearest negative
      break;
    case SamplingVariant::batch_sample: {
      if (rng == nullptr) {
        throw std::invalid_argument("compute_weights: batch_sample requires an rng");
      }
      w.w_pos[rng->categorical(softmax(side_logits(w.positives, +1.0)))] = 1.0;
      w.w_neg[rng->categorical(softmax(side_logits(w.negatives, -1.0)))] = 1.0;
      break;
    }
    case SamplingVariant::batch_weighted:
      w.w_pos = softmax(side_logits(w.positives, +1.0));
      w.w_neg = softmax(side_logits(w.negatives, -1.0));
      break;
  }
  return w;
}

// Weighted per-anchor loss [alpha + sum w_p d_ap - sum w_n d_an]_+ (hard) or
// softplus of the weighted sums.
inline double anchor_loss(const WeightAssignment& w, const std::vector<double>& anchor_row,
                          const MarginSpec& margin) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.positives.size(); ++i) s += w.w_pos[i] * anchor_row[w.positives[i]];
  for (std::size_t i = 0; i < w.negatives.size(); ++i) s -= w.w_neg[i] * anchor_row[w.negatives[i]];
  if (margin.kind == MarginSpec::Kind::softplus) return softplus_fn(s);
  return std::max(0.0, s + margin.alpha);
}

// Weights for every valid anchor of a batch, in ascending anchor order.
// Anchors lacking a positive (other than themselves) or a negative are
// skipped.
inline std::vector<WeightAssignment> batch_weights(const DistanceMatrix& dist,
                                                   const std::vector<int>& labels,
                                                   const SamplingScheme& scheme,
                                                   Rng* rng = nullptr) {
  const std::size_t n = labels.size();
  if (dist.entries.rows() != n || dist.entries.cols() != n) {
    throw std::invalid_argument("batch_weights: distance matrix must be n x n");
  }
  if (scheme.variant == SamplingVariant::batch_sample && rng == nullptr) {
    throw std::invalid_argument("batch_weights: batch_sample requires an rng");
  }
  std::vector<WeightAssignment> out;
  for (std::size_t a = 0; a < n; ++a) {
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == a) continue;
      (labels[i] == labels[a] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    out.push_back(compute_weights(scheme, dist.entries.row_copy(a), labels, a, rng));
  }
  return out;
}

struct LossResult {
  double loss = 0.0;
  Matrix grad_embeddings;  // PK x F
  std::size_t anchors_used = 0;
  std::size_t anchors_skipped = 0;
};

namespace detail {

// Chain d(loss)/d(D_ij) coefficients through the distance metric to the
// embeddings. coeff is directed: entry (i,j) belongs to the distance from
// anchor i to sample j.
inline void distances_backward(const Matrix& emb, const DistanceMatrix& dist,
                               const Matrix& coeff, Matrix& grad) {
  const std::size_t n = emb.rows();
  const std::size_t f = emb.cols();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = coeff(i, j);
      if (c == 0.0 || i == j) continue;
      const double scale = dist.metric == MetricKind::euclidean
                               ? c / dist.entries(i, j)
                               : 2.0 * c;
      for (std::size_t k = 0; k < f; ++k) {
        const double diff = scale * (emb(i, k) - emb(j, k));
        grad(i, k) += diff;
        grad(j, k) -= diff;
      }
    }
  }
}

}  // namespace detail

// Batch loss with the sampling weights already fixed. Weights are treated as
// constants in the backward pass: gradients flow only through the distance
// terms, not through the softmax weight values or the sampled selections.
inline LossResult batch_loss_with_weights(const Matrix& embeddings,
                                          const std::vector<int>& labels,
                                          const SamplingScheme& scheme,
                                          const std::vector<WeightAssignment>& weights,
                                          const MarginSpec& margin, MetricKind metric,
                                          LossKind kind) {
  const std::size_t n = embeddings.rows();
  if (n != labels.size()) throw std::invalid_argument("batch_loss: embedding/label count mismatch");
  if (n < 4) throw std::invalid_argument("batch_loss: batch must hold at least 4 samples");
  if (kind == LossKind::contrastive && margin.kind != MarginSpec::Kind::hard) {
    throw std::invalid_argument("batch_loss: contrastive loss requires a hard margin");
  }
  if (weights.empty()) throw std::runtime_error("batch_loss: degenerate batch (no valid anchor)");

  const DistanceMatrix dist = pairwise_distances(embeddings, embeddings, metric);
  const double n_anchors = static_cast<double>(weights.size());

  Matrix coeff(n, n);
  double total = 0.0;

  if (kind == LossKind::triplet && scheme.variant == SamplingVariant::batch_all &&
      scheme.ba_mode == BatchAllMode::per_triplet) {
    // Mean plain triplet loss over every valid (a,p,n).
    std::size_t n_triplets = 0;
    for (const WeightAssignment& w : weights) n_triplets += w.positives.size() * w.negatives.size();
    const double inv = 1.0 / static_cast<double>(n_triplets);
    for (const WeightAssignment& w : weights) {
      for (std::size_t p : w.positives) {
        for (std::size_t q : w.negatives) {
          const double diff = dist.entries(w.anchor, p) - dist.entries(w.anchor, q);
          double g;
          if (margin.kind == MarginSpec::Kind::softplus) {
            total += softplus_fn(diff);
            g = sigmoid(diff);
          } else {
            const double l = diff + margin.alpha;
            total += std::max(0.0, l);
            g = l > 0.0 ? 1.0 : 0.0;
          }
          coeff(w.anchor, p) += g * inv;
          coeff(w.anchor, q) -= g * inv;
        }
      }
    }
    total *= inv;
  } else if (kind == LossKind::triplet) {
    const double inv = 1.0 / n_anchors;
    for (const WeightAssignment& w : weights) {
      double s = 0.0;
      for (std::size_t i = 0; i < w.positives.size(); ++i) {
        s += w.w_pos[i] * dist.entries(w.anchor, w.positives[i]);
      }
      for (std::size_t i = 0; i < w.negatives.size(); ++i) {
        s -= w.w_neg[i] * dist.entries(w.anchor, w.negatives[i]);
      }
      double g;
      if (margin.kind == MarginSpec::Kind::softplus) {
        total += softplus_fn(s);
        g = sigmoid(s);
      } else {
        const double l = s + margin.alpha;
        total += std::max(0.0, l);
        g = l > 0.0 ? 1.0 : 0.0;
      }
      for (std::size_t i = 0; i < w.positives.size(); ++i) {
        coeff(w.anchor, w.positives[i]) += g * w.w_pos[i] * inv;
      }
      for (std::size_t i = 0; i < w.negatives.size(); ++i) {
        coeff(w.anchor, w.negatives[i]) -= g * w.w_neg[i] * inv;
      }
    }
    total /= n_anchors;
  } else {
    // Contrastive: per anchor, a weight-normalized mix of pair losses on each
    // side (a hard selection for the one-hot variants), the two sides
    // averaged.
    const double inv = 1.0 / n_anchors;
    for (const WeightAssignment& w : weights) {
      double pos_sum = 0.0, neg_sum = 0.0;
      for (double x : w.w_pos) pos_sum += x;
      for (double x : w.w_neg) neg_sum += x;
      double l_anchor = 0.0;
      for (std::size_t i = 0; i < w.positives.size(); ++i) {
        const double wn = w.w_pos[i] / pos_sum;
        if (wn == 0.0) continue;
        const PairLoss pl = contrastive_loss(dist.entries(w.anchor, w.positives[i]), true,
                                             margin.alpha);
        l_anchor += 0.5 * wn * pl.value;
        coeff(w.anchor, w.positives[i]) += 0.5 * wn * pl.d_dist * inv;
      }
      for (std::size_t i = 0; i < w.negatives.size(); ++i) {
        const double wn = w.w_neg[i] / neg_sum;
        if (wn == 0.0) continue;
        const PairLoss pl = contrastive_loss(dist.entries(w.anchor, w.negatives[i]), false,
                                             margin.alpha);
        l_anchor += 0.5 * wn * pl.value;
        coeff(w.anchor, w.negatives[i]) += 0.5 * wn * pl.d_dist * inv;
      }
      total += l_anchor;
    }
    total /= n_anchors;
  }

  LossResult out;
  out.loss = total;
  out.grad_embeddings = Matrix(n, embeddings.cols());
  detail::distances_backward(embeddings, dist, coeff, out.grad_embeddings);
  out.anchors_used = weights.size();
  out.anchors_skipped = n - weights.size();
  return out;
}

// Full batch loss: distances, sampling weights, weighted loss, and the
// gradient with respect to every embedding in the batch.
inline LossResult batch_loss(const Matrix& embeddings, const std::vector<int>& labels,
                             const SamplingScheme& scheme, const MarginSpec& margin,
                             MetricKind metric, LossKind kind, Rng* rng = nullptr) {
  const DistanceMatrix dist = pairwise_distances(embeddings, embeddings, metric);
  const std::vector<WeightAssignment> weights = batch_weights(dist, labels, scheme, rng);
  return batch_loss_with_weights(embeddings, labels, scheme, weights, margin, metric, kind);
}

}  // namespace reid
