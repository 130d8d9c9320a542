#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/data.hpp"
#include "reid/rng.hpp"

namespace reid {

// P identities x K instances, grouped by identity in blocks of K.
struct Batch {
  std::vector<std::size_t> sample_indices;  // dataset row indices, PK entries
  std::vector<int> labels;                  // identity per entry
  std::size_t p = 0;
  std::size_t k = 0;
  bool padded = false;  // identities were re-drawn to fill the final group

  bool operator==(const Batch&) const = default;
};

struct EpochPlan {
  std::uint64_t seed = 0;
  std::vector<Batch> batches;

  bool operator==(const EpochPlan&) const = default;
};

// One epoch of PK batches over the train split. Identities are shuffled by
// the seed and consumed without replacement across consecutive batches; the
// final short group is padded by re-drawing identities already used this
// epoch. Within an identity, samples are shuffled and taken without
// replacement; identities with fewer than K samples are topped up by uniform
// re-draws with replacement.
inline EpochPlan build_epoch(const Dataset& dataset, std::size_t p, std::size_t k,
                             std::uint64_t seed) {
  if (p < 2 || k < 2) throw std::invalid_argument("build_epoch: require P >= 2 and K >= 2");
  if (dataset.samples.empty()) throw std::invalid_argument("build_epoch: empty dataset");

  const std::map<int, std::vector<std::size_t>> by_identity =
      indices_by_identity(dataset, Split::train);
  if (by_identity.size() < p) {
    throw std::invalid_argument("build_epoch: train split has " +
                                std::to_string(by_identity.size()) +
                                " identities, need at least " + std::to_string(p));
  }

  std::vector<int> identities;
  identities.reserve(by_identity.size());
  for (const auto& [id, rows] : by_identity) identities.push_back(id);

  Rng rng(seed);
  rng.shuffle(identities);

  EpochPlan plan;
  plan.seed = seed;

  auto fill_identity = [&](Batch& batch, int id) {
    std::vector<std::size_t> pool = by_identity.at(id);
    rng.shuffle(pool);
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t row =
          i < pool.size() ? pool[i] : pool[static_cast<std::size_t>(rng.below(pool.size()))];
      batch.sample_indices.push_back(row);
      batch.labels.push_back(id);
    }
  };

  for (std::size_t start = 0; start < identities.size(); start += p) {
    Batch batch;
    batch.p = p;
    batch.k = k;
    std::vector<int> group(identities.begin() + static_cast<std::ptrdiff_t>(start),
                           identities.begin() +
                               static_cast<std::ptrdiff_t>(std::min(start + p, identities.size())));
    if (group.size() < p) {
      // Pad from identities already consumed this epoch, without repeats.
      std::vector<int> used(identities.begin(),
                            identities.begin() + static_cast<std::ptrdiff_t>(start));
      rng.shuffle(used);
      used.resize(p - group.size());
      group.insert(group.end(), used.begin(), used.end());
      batch.padded = true;
    }
    for (int id : group) fill_identity(batch, id);
    plan.batches.push_back(std::move(batch));
  }
  return plan;
}

}  // namespace reid
