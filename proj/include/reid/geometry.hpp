#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/matrix.hpp"

namespace reid {

enum class MetricKind { euclidean, squared_euclidean };

inline const char* metric_name(MetricKind m) {
  return m == MetricKind::euclidean ? "euclidean" : "squared_euclidean";
}

// Stabilizer added under the square root so the derivative of the euclidean
// distance stays finite at zero separation. Euclidean entries consequently
// carry a floor of sqrt(kSqrtEpsilon) = 1e-6; squared distances are exact.
inline constexpr double kSqrtEpsilon = 1e-12;

// Norms below this are treated as degenerate by l2_normalize.
inline constexpr double kNormEpsilon = 1e-12;

struct DistanceMatrix {
  Matrix entries;
  MetricKind metric = MetricKind::euclidean;
};

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    sq += d * d;
  }
  return sq;
}

inline double distance_from_squared(double sq, MetricKind metric) {
  sq = sq < 0.0 ? 0.0 : sq;
  return metric == MetricKind::euclidean ? std::sqrt(sq + kSqrtEpsilon) : sq;
}

// Pairwise distances between two sets of vectors (entry (i,j) = metric between
// rows[i] and cols[j]). Both sets must be non-empty, finite, and share one
// dimension.
inline DistanceMatrix pairwise_distances(const Matrix& rows, const Matrix& cols,
                                         MetricKind metric) {
  if (rows.rows() == 0 || cols.rows() == 0) {
    throw std::invalid_argument("pairwise_distances: empty input set");
  }
  if (rows.cols() != cols.cols()) {
    throw std::invalid_argument(
        "pairwise_distances: dimension mismatch (" + std::to_string(rows.cols()) +
        " vs " + std::to_string(cols.cols()) + ")");
  }
  if (!all_finite(rows) || !all_finite(cols)) {
    throw std::invalid_argument("pairwise_distances: non-finite input");
  }
  DistanceMatrix out;
  out.metric = metric;
  out.entries = Matrix(rows.rows(), cols.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    for (std::size_t j = 0; j < cols.rows(); ++j) {
      out.entries(i, j) =
          distance_from_squared(squared_distance(rows.row(i), cols.row(j), rows.cols()), metric);
    }
  }
  return out;
}

// Unit-normalize. Inputs with norm below kNormEpsilon map to the zero vector;
// the condition is reported through `degenerate` when provided.
inline std::vector<double> l2_normalize(const std::vector<double>& v,
                                        bool* degenerate = nullptr) {
  if (!all_finite(v)) throw std::invalid_argument("l2_normalize: non-finite input");
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  if (degenerate != nullptr) *degenerate = norm < kNormEpsilon;
  std::vector<double> out(v.size(), 0.0);
  if (norm < kNormEpsilon) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

}  // namespace reid
