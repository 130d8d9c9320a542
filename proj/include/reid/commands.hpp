#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/data.hpp"
#include "reid/eval.hpp"
#include "reid/trainer.hpp"

namespace reid {

// Fully resolved invocation of one CLI command. Field precedence (flags over
// config file over defaults) is handled by the flag parser; by the time a
// RunConfig reaches a run_* function it is final.
struct RunConfig {
  std::string command;  // train | eval | retrieve | synth
  std::string data_path;
  std::string checkpoint_path;
  std::string embeddings_path;
  std::string out_path;
  std::string trace_path;
  TrainConfig train;
  ProtocolSpec protocol;
  SynthSpec synth;
  std::size_t retrieve_k = 10;
  MetricKind metric = MetricKind::euclidean;
  std::uint64_t seed = 0;
};

inline const char* margin_name(const MarginSpec& m) {
  return m.kind == MarginSpec::Kind::softplus ? "softplus" : "hard";
}

inline const char* loss_name(LossKind k) {
  return k == LossKind::triplet ? "triplet" : "contrastive";
}

// Canonical one-line echo of the resolved configuration, stamped into every
// output artifact.
inline std::string config_echo(const RunConfig& c) {
  std::string s = "command=" + c.command;
  auto add = [&](const std::string& key, const std::string& value) {
    s += " " + key + "=" + value;
  };
  if (c.command == "synth") {
    add("identities", std::to_string(c.synth.identities));
    add("per_identity", std::to_string(c.synth.per_identity));
    add("dim", std::to_string(c.synth.dim));
    add("viewpoints", std::to_string(c.synth.viewpoints));
    add("cameras", std::to_string(c.synth.cameras));
    add("sigma_identity", format_double(c.synth.sigma_identity));
    add("sigma_view", format_double(c.synth.sigma_view));
    add("sigma_noise", format_double(c.synth.sigma_noise));
    add("seed", std::to_string(c.synth.seed));
    return s;
  }
  if (c.command == "train") {
    add("loss", loss_name(c.train.loss));
    add("sampling", sampling_name(c.train.scheme.variant));
    if (c.train.scheme.variant == SamplingVariant::batch_all) {
      add("ba_mode", c.train.scheme.ba_mode == BatchAllMode::per_triplet ? "per_triplet"
                                                                         : "unified_literal");
    }
    add("margin", margin_name(c.train.margin));
    add("alpha", format_double(c.train.margin.alpha));
    add("metric", metric_name(c.train.metric));
    add("normalize", c.train.normalize_embeddings ? "1" : "0");
    add("p", std::to_string(c.train.p));
    add("k", std::to_string(c.train.k));
    add("epochs", std::to_string(c.train.epochs));
    std::string hidden;
    for (std::size_t h : c.train.hidden) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
    add("hidden", hidden);
    add("embedding_dim", std::to_string(c.train.embedding_dim));
    add("lr", format_double(c.train.adam.lr));
    add("beta1", format_double(c.train.adam.beta1));
    add("beta2", format_double(c.train.adam.beta2));
    add("adam_eps", format_double(c.train.adam.epsilon));
    add("feature_noise", format_double(c.train.feature_noise));
    add("seed", std::to_string(c.train.seed));
    return s;
  }
  if (c.command == "eval") {
    add("protocol", protocol_name(c.protocol.kind));
    add("trials", std::to_string(c.protocol.trials));
    std::string cutoffs;
    for (std::size_t k : c.protocol.cutoffs) {
      cutoffs += (cutoffs.empty() ? "" : ",") + std::to_string(k);
    }
    add("cutoffs", cutoffs);
  }
  if (c.command == "retrieve") add("k", std::to_string(c.retrieve_k));
  add("metric", metric_name(c.metric));
  add("seed", std::to_string(c.seed));
  return s;
}

// Push every dataset row through the model.
inline EmbeddedSet embed_dataset(const ModelParams& params, const Dataset& dataset) {
  if (dataset.dim != params.input_dim()) {
    throw std::runtime_error("dataset dimension " + std::to_string(dataset.dim) +
                             " does not match checkpoint input dimension " +
                             std::to_string(params.input_dim()));
  }
  Matrix inputs(dataset.size(), dataset.dim);
  for (std::size_t r = 0; r < dataset.size(); ++r) inputs.set_row(r, dataset.samples[r].feature);
  EmbeddedSet set;
  set.vectors = forward(params, inputs);
  set.meta.reserve(dataset.size());
  for (const Sample& s : dataset.samples) set.meta.push_back({s.identity, s.camera, s.split});
  return set;
}

// Embeddings for eval/retrieve come either from a stored embeddings file or
// from a checkpoint applied to a dataset.
inline EmbeddedSet resolve_embeddings(const RunConfig& c) {
  if (!c.embeddings_path.empty()) return read_embeddings(c.embeddings_path);
  if (c.checkpoint_path.empty() || c.data_path.empty()) {
    throw std::runtime_error("need either --embeddings or both --checkpoint and --data");
  }
  const Checkpoint ck = read_checkpoint(c.checkpoint_path);
  return embed_dataset(ck.params, load_dataset(c.data_path));
}

inline void run_train(const RunConfig& c) {
  const Dataset dataset = load_dataset(c.data_path);
  const TrainResult result = train(dataset, c.train);
  const std::string echo = config_echo(c);

  write_checkpoint({result.params, c.train.seed, echo}, c.out_path);
  write_loss_trace(result.trace, echo, c.trace_path);

  std::size_t skipped = 0;
  for (const EpochStats& e : result.trace) skipped += e.skipped;
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped << " degenerate batch(es)\n";
  }
  if (!result.trace.empty()) {
    std::printf("trained %zu epochs, final mean loss %.6f\n", result.trace.size(),
                result.trace.back().mean_loss);
  } else {
    std::printf("trained 0 epochs, checkpoint holds the initial parameters\n");
  }
  std::printf("checkpoint: %s\n", c.out_path.c_str());
  std::printf("trace: %s\n", c.trace_path.c_str());
}

inline void run_eval(const RunConfig& c) {
  const EmbeddedSet set = resolve_embeddings(c);
  EvalReport report = evaluate(set, c.protocol, c.seed, c.metric);
  report.config_echo = config_echo(c);
  write_report(report, c.out_path);

  std::printf("mAP %.4f\n", report.map);
  for (std::size_t i = 0; i < report.cutoffs.size(); ++i) {
    std::printf("top-%zu %.4f\n", report.cutoffs[i], report.cmc[i]);
  }
  if (report.excluded_queries > 0) {
    std::printf("excluded queries: %zu\n", report.excluded_queries);
  }
  std::printf("report: %s\n", c.out_path.c_str());
}

inline constexpr const char* kRetrievalMagic = "reid_retrieval_v1";

inline void run_retrieve(const RunConfig& c) {
  const EmbeddedSet set = resolve_embeddings(c);

  std::vector<std::size_t> query_rows, gallery_rows;
  for (std::size_t i = 0; i < set.meta.size(); ++i) {
    if (set.meta[i].split == Split::query) query_rows.push_back(i);
    if (set.meta[i].split == Split::gallery) gallery_rows.push_back(i);
  }
  if (query_rows.empty()) throw std::runtime_error("retrieve: no query-split rows");
  if (gallery_rows.empty()) throw std::runtime_error("retrieve: no gallery-split rows");

  std::size_t k = c.retrieve_k;
  if (k > gallery_rows.size()) {
    std::cerr << "warning: k=" << k << " clipped to gallery size " << gallery_rows.size() << "\n";
    k = gallery_rows.size();
  }

  Matrix gallery(gallery_rows.size(), set.vectors.cols());
  for (std::size_t r = 0; r < gallery_rows.size(); ++r) {
    gallery.set_row(r, set.vectors.row_copy(gallery_rows[r]));
  }

  std::ofstream f(c.out_path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + c.out_path + "' for writing");
  f << kRetrievalMagic << "\n";
  f << "config: " << config_echo(c) << "\n";
  f << "k: " << k << "\n";
  f << "queries: " << query_rows.size() << "\n";
  for (std::size_t q : query_rows) {
    f << "query " << q << " identity=" << set.meta[q].identity
      << " camera=" << set.meta[q].camera << "\n";
    const auto ranked = rank_gallery_with_distances(set.vectors.row_copy(q), gallery, c.metric);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t row = gallery_rows[ranked[r].first];
      f << row << ' ' << set.meta[row].identity << ' ' << set.meta[row].camera << ' '
        << format_double(ranked[r].second) << "\n";
    }
  }
  f << "end_retrieval\n";
  if (!f) throw std::runtime_error("write failed for '" + c.out_path + "'");
  std::printf("ranked %zu queries (top-%zu): %s\n", query_rows.size(), k, c.out_path.c_str());
}

inline void run_synth(const RunConfig& c) {
  const Dataset d = generate_synthetic(c.synth);
  write_dataset(d, c.out_path);
  std::printf("wrote %zu samples, %zu identities, dim %zu: %s\n", d.size(), d.identity_count(),
              d.dim, c.out_path.c_str());
}

}  // namespace reid
