#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/adam.hpp"
#include "reid/data.hpp"
#include "reid/losses.hpp"
#include "reid/network.hpp"
#include "reid/rng.hpp"
#include "reid/sampler.hpp"

namespace reid {

struct TrainConfig {
  LossKind loss = LossKind::triplet;
  SamplingScheme scheme{SamplingVariant::batch_sample, BatchAllMode::per_triplet};
  MarginSpec margin = MarginSpec::softplus();
  MetricKind metric = MetricKind::euclidean;
  bool normalize_embeddings = false;
  std::size_t p = 18;
  std::size_t k = 4;
  std::size_t epochs = 0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embedding_dim = 128;
  AdamConfig adam;
  double feature_noise = 0.0;  // optional per-feature gaussian augmentation
  std::uint64_t seed = 0;
};

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t batches = 0;
  std::size_t skipped = 0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> trace;
};

// Substream ids hung off the config seed; every random draw in a run derives
// from these, so (config, seed) pins the whole trajectory.
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kSampleStream = 1;   // batch_sample draws
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kEpochStream = 3;    // per-epoch plan seeds

// Epoch loop: build_epoch -> forward -> batch_loss -> backward -> adam_step.
// Degenerate batches are skipped and counted; an epoch with every batch
// skipped aborts the run.
inline TrainResult train(const Dataset& dataset, const TrainConfig& config) {
  Rng master(config.seed);
  Rng init_rng = master.split(kInitStream);
  Rng sample_rng = master.split(kSampleStream);
  Rng noise_rng = master.split(kNoiseStream);
  const std::uint64_t epoch_base = Rng::derive_seed(config.seed, kEpochStream);

  std::vector<std::size_t> sizes;
  sizes.push_back(dataset.dim);
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(config.embedding_dim);

  TrainResult result;
  result.params = init_params(sizes, config.normalize_embeddings, init_rng);
  AdamState adam = AdamState::init(result.params, config.adam);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const EpochPlan plan = build_epoch(dataset, config.p, config.k,
                                       Rng::derive_seed(epoch_base, epoch));
    EpochStats stats;
    double loss_sum = 0.0;
    for (const Batch& batch : plan.batches) {
      Matrix inputs(batch.sample_indices.size(), dataset.dim);
      for (std::size_t r = 0; r < batch.sample_indices.size(); ++r) {
        inputs.set_row(r, dataset.samples[batch.sample_indices[r]].feature);
      }
      if (config.feature_noise > 0.0) {
        for (double& x : inputs.flat()) x += noise_rng.normal(0.0, config.feature_noise);
      }

      ForwardCache cache;
      const Matrix embeddings = forward(result.params, inputs, &cache);
      LossResult loss;
      try {
        loss = batch_loss(embeddings, batch.labels, config.scheme, config.margin, config.metric,
                          config.loss, &sample_rng);
      } catch (const std::runtime_error&) {
        ++stats.skipped;  // degenerate batch, surfaced via the epoch trace
        continue;
      }
      const Gradients grads = backward(result.params, cache, loss.grad_embeddings);
      adam_step(adam, result.params, grads);
      loss_sum += loss.loss;
      ++stats.batches;
    }
    if (stats.batches == 0) {
      throw std::runtime_error("train: every batch in epoch " + std::to_string(epoch) +
                               " was degenerate");
    }
    stats.mean_loss = loss_sum / static_cast<double>(stats.batches);
    result.trace.push_back(stats);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint file: text header, then per layer the weight matrix (row-major)
// followed by the bias vector, as little-endian 64-bit floats. Round-trips
// byte-exactly.

inline constexpr const char* kCheckpointMagic = "reid_checkpoint_v1";

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  std::string config_echo;  // single line, stored verbatim

  bool operator==(const Checkpoint&) const = default;
};

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  check_shapes(ck.params);
  std::string out;
  out += kCheckpointMagic;
  out += "\nlayers:";
  for (std::size_t s : ck.params.sizes) out += " " + std::to_string(s);
  out += "\nnormalize: ";
  out += ck.params.normalize_output ? "1" : "0";
  out += "\nseed: " + std::to_string(ck.seed);
  out += "\nconfig: " + ck.config_echo;
  out += "\nend_header\n";
  for (std::size_t l = 0; l < ck.params.layer_count(); ++l) {
    for (double x : ck.params.weights[l].flat()) detail::append_double_le(out, x);
    for (double x : ck.params.biases[l]) detail::append_double_le(out, x);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::stringstream buffer;
  buffer << f.rdbuf();
  const std::string content = buffer.str();

  std::size_t pos = 0;
  auto next_line = [&]() {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      throw std::runtime_error("truncated checkpoint header at byte offset " +
                               std::to_string(pos));
    }
    std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto expect_prefix = [](const std::string& line, const std::string& prefix) {
    if (line.rfind(prefix, 0) != 0) {
      throw std::runtime_error("checkpoint: expected '" + prefix + "', got '" + line + "'");
    }
    return line.substr(prefix.size());
  };

  if (next_line() != kCheckpointMagic) {
    throw std::runtime_error("not a " + std::string(kCheckpointMagic) + " file: '" + path + "'");
  }
  Checkpoint ck;
  {
    std::istringstream ss(expect_prefix(next_line(), "layers:"));
    std::size_t s;
    while (ss >> s) ck.params.sizes.push_back(s);
    if (ck.params.sizes.size() < 2) throw std::runtime_error("checkpoint: bad layer list");
  }
  ck.params.normalize_output = expect_prefix(next_line(), "normalize: ") == "1";
  ck.seed = std::stoull(expect_prefix(next_line(), "seed: "));
  ck.config_echo = expect_prefix(next_line(), "config: ");
  if (next_line() != "end_header") throw std::runtime_error("checkpoint: missing end_header");

  std::size_t payload = 0;
  for (std::size_t l = 0; l + 1 < ck.params.sizes.size(); ++l) {
    payload += (ck.params.sizes[l] + 1) * ck.params.sizes[l + 1] * 8;
  }
  if (content.size() - pos < payload) {
    throw std::runtime_error("truncated checkpoint payload at byte offset " +
                             std::to_string(content.size()) + " (need " +
                             std::to_string(pos + payload) + " bytes)");
  }
  if (content.size() - pos > payload) {
    throw std::runtime_error("trailing data at byte offset " + std::to_string(pos + payload));
  }

  const unsigned char* p = reinterpret_cast<const unsigned char*>(content.data()) + pos;
  for (std::size_t l = 0; l + 1 < ck.params.sizes.size(); ++l) {
    Matrix w(ck.params.sizes[l + 1], ck.params.sizes[l]);
    for (double& x : w.flat()) {
      x = detail::read_double_le(p);
      p += 8;
    }
    std::vector<double> b(ck.params.sizes[l + 1]);
    for (double& x : b) {
      x = detail::read_double_le(p);
      p += 8;
    }
    ck.params.weights.push_back(std::move(w));
    ck.params.biases.push_back(std::move(b));
  }
  check_shapes(ck.params);
  return ck;
}

// ---------------------------------------------------------------------------
// Loss trace: structured text, one line per epoch.

inline constexpr const char* kTraceMagic = "reid_loss_trace_v1";

inline void write_loss_trace(const std::vector<EpochStats>& trace, const std::string& config_echo,
                             const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << kTraceMagic << "\n";
  f << "config: " << config_echo << "\n";
  f << "columns: epoch mean_loss batches skipped\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    f << e << ' ' << format_double(trace[e].mean_loss) << ' ' << trace[e].batches << ' '
      << trace[e].skipped << "\n";
  }
  f << "end_trace\n";
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace reid
