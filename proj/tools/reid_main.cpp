// Command-line front end: train / eval / retrieve / synth.
//
// Flag values override config-file entries, which override the built-in
// defaults. Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reid/commands.hpp"

namespace {

struct CliOptions {
  reid::RunConfig config;
  std::string loss = "triplet";
  std::string sampling = "bs";
  std::string ba_mode = "per_triplet";
  std::string margin;  // resolved per loss when left empty
  double alpha = -1.0;  // resolved per loss when left negative
  std::string metric = "euclidean";
  std::string lr_schedule = "scratch";
  double lr = -1.0;  // resolved from the schedule when left negative
  std::vector<std::size_t> hidden = {64, 64};
  std::vector<std::size_t> cutoffs = {1, 2, 5};
  std::string protocol = "cross_camera";
  bool normalize = false;
};

reid::MetricKind parse_metric(const std::string& s) {
  if (s == "euclidean") return reid::MetricKind::euclidean;
  if (s == "squared_euclidean") return reid::MetricKind::squared_euclidean;
  throw CLI::ValidationError("--metric", "expected euclidean or squared_euclidean");
}

reid::SamplingScheme parse_sampling(const std::string& variant, const std::string& mode) {
  reid::SamplingScheme s;
  if (variant == "ba") {
    s.variant = reid::SamplingVariant::batch_all;
  } else if (variant == "bh") {
    s.variant = reid::SamplingVariant::batch_hard;
  } else if (variant == "bs") {
    s.variant = reid::SamplingVariant::batch_sample;
  } else if (variant == "bw") {
    s.variant = reid::SamplingVariant::batch_weighted;
  } else {
    throw CLI::ValidationError("--sampling", "expected ba, bh, bs or bw");
  }
  if (mode == "per_triplet") {
    s.ba_mode = reid::BatchAllMode::per_triplet;
  } else if (mode == "unified_literal") {
    s.ba_mode = reid::BatchAllMode::unified_literal;
  } else {
    throw CLI::ValidationError("--ba-mode", "expected per_triplet or unified_literal");
  }
  return s;
}

// Margin and learning-rate defaults depend on other flags, so they resolve
// after parsing: triplet pairs with softplus, contrastive with hard 1.0
// (softplus is not offered for it), hard triplet falls back to alpha 0.2,
// and the schedule picks lr 0.001 (scratch) or 0.0003 (pretrained).
void resolve(CliOptions& opt) {
  reid::RunConfig& c = opt.config;

  c.train.loss = opt.loss == "contrastive" ? reid::LossKind::contrastive : reid::LossKind::triplet;
  if (opt.loss != "triplet" && opt.loss != "contrastive") {
    throw CLI::ValidationError("--loss", "expected triplet or contrastive");
  }
  c.train.scheme = parse_sampling(opt.sampling, opt.ba_mode);

  std::string margin = opt.margin;
  if (margin.empty()) {
    margin = c.train.loss == reid::LossKind::contrastive ? "hard" : "softplus";
  }
  if (margin == "softplus") {
    if (c.train.loss == reid::LossKind::contrastive) {
      throw CLI::ValidationError("--margin", "contrastive loss supports only the hard margin");
    }
    c.train.margin = reid::MarginSpec::softplus();
  } else if (margin == "hard") {
    double alpha = opt.alpha;
    if (alpha < 0.0) alpha = c.train.loss == reid::LossKind::contrastive ? 1.0 : 0.2;
    c.train.margin = reid::MarginSpec::hard(alpha);
  } else {
    throw CLI::ValidationError("--margin", "expected hard or softplus");
  }

  c.train.metric = parse_metric(opt.metric);
  c.metric = c.train.metric;
  c.train.normalize_embeddings = opt.normalize;
  c.train.hidden = opt.hidden;

  if (opt.lr_schedule == "scratch") {
    c.train.adam.lr = 0.001;
  } else if (opt.lr_schedule == "pretrained") {
    c.train.adam.lr = 0.0003;
  } else {
    throw CLI::ValidationError("--lr-schedule", "expected scratch or pretrained");
  }
  if (opt.lr >= 0.0) c.train.adam.lr = opt.lr;

  if (opt.protocol == "cross_camera") {
    c.protocol.kind = reid::ProtocolKind::cross_camera;
  } else if (opt.protocol == "repeated_gallery") {
    c.protocol.kind = reid::ProtocolKind::repeated_gallery;
  } else {
    throw CLI::ValidationError("--protocol", "expected cross_camera or repeated_gallery");
  }
  c.protocol.cutoffs = opt.cutoffs;

  c.train.seed = c.seed;
  c.synth.seed = c.seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-learning embedding toolkit: PK-batch triplet/contrastive training "
               "and re-identification retrieval evaluation"};
  app.require_subcommand(1);

  CliOptions opt;
  reid::RunConfig& c = opt.config;

  app.set_config("--config", "",
                 "Config file with key=value lines under a [subcommand] section; flags take "
                 "precedence");

  auto add_seed = [&](CLI::App* sub) {
    sub->fallthrough();  // lets --config appear after the subcommand too
    sub->add_option("--seed", c.seed, "RNG seed (required for reproducibility)")->required();
  };

  CLI::App* train = app.add_subcommand("train", "Train an embedding network");
  train->add_option("--data", c.data_path, "Dataset file (reid_dataset_v1)")->required();
  train->add_option("--out", c.out_path, "Output checkpoint path")->required();
  train->add_option("--trace", c.trace_path, "Output loss-trace path")->required();
  train->add_option("--loss", opt.loss, "Loss: triplet or contrastive")->capture_default_str();
  train->add_option("--sampling", opt.sampling, "Sampling variant: ba, bh, bs or bw")
      ->capture_default_str();
  train->add_option("--ba-mode", opt.ba_mode,
                    "batch-all form: per_triplet or unified_literal")
      ->capture_default_str();
  train->add_option("--margin", opt.margin,
                    "Margin: hard or softplus (default: softplus for triplet, hard for "
                    "contrastive)");
  train->add_option("--alpha", opt.alpha,
                    "Hard-margin value (default: 1.0 contrastive, 0.2 triplet)");
  train->add_option("--metric", opt.metric, "Distance: euclidean or squared_euclidean")
      ->capture_default_str();
  train->add_flag("--normalize", opt.normalize, "L2-normalize the embedding output");
  train->add_option("--p", c.train.p, "Identities per batch")->capture_default_str();
  train->add_option("--k", c.train.k, "Samples per identity per batch")->capture_default_str();
  train->add_option("--epochs", c.train.epochs, "Training epochs")->required();
  train->add_option("--hidden", opt.hidden, "Hidden layer sizes")->capture_default_str();
  train->add_option("--embedding-dim", c.train.embedding_dim, "Embedding dimension F")
      ->capture_default_str();
  train->add_option("--lr-schedule", opt.lr_schedule,
                    "scratch (lr 0.001) or pretrained (lr 0.0003)")
      ->capture_default_str();
  train->add_option("--lr", opt.lr, "Learning rate (overrides --lr-schedule)");
  train->add_option("--beta1", c.train.adam.beta1, "Adam beta1")->capture_default_str();
  train->add_option("--beta2", c.train.adam.beta2, "Adam beta2")->capture_default_str();
  train->add_option("--adam-eps", c.train.adam.epsilon, "Adam epsilon")->capture_default_str();
  train->add_option("--feature-noise", c.train.feature_noise,
                    "Gaussian feature augmentation sigma (0 disables)")
      ->capture_default_str();
  add_seed(train);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate retrieval quality");
  eval->add_option("--data", c.data_path, "Dataset file (with --checkpoint)");
  eval->add_option("--checkpoint", c.checkpoint_path, "Checkpoint to embed --data with");
  eval->add_option("--embeddings", c.embeddings_path,
                   "Precomputed embeddings file (alternative to --checkpoint/--data)");
  eval->add_option("--out", c.out_path, "Output report path")->required();
  eval->add_option("--protocol", opt.protocol, "cross_camera or repeated_gallery")
      ->capture_default_str();
  eval->add_option("--trials", c.protocol.trials, "Gallery redraws for repeated_gallery")
      ->capture_default_str();
  eval->add_option("--cutoffs", opt.cutoffs, "CMC rank cutoffs")->capture_default_str();
  eval->add_option("--metric", opt.metric, "Distance: euclidean or squared_euclidean")
      ->capture_default_str();
  add_seed(eval);

  CLI::App* retrieve = app.add_subcommand("retrieve", "Rank gallery entries per query");
  retrieve->add_option("--data", c.data_path, "Dataset file (with --checkpoint)");
  retrieve->add_option("--checkpoint", c.checkpoint_path, "Checkpoint to embed --data with");
  retrieve->add_option("--embeddings", c.embeddings_path,
                       "Precomputed embeddings file (alternative to --checkpoint/--data)");
  retrieve->add_option("--out", c.out_path, "Output ranking path")->required();
  retrieve->add_option("--k", c.retrieve_k, "Retrievals per query")->capture_default_str();
  retrieve->add_option("--metric", opt.metric, "Distance: euclidean or squared_euclidean")
      ->capture_default_str();
  add_seed(retrieve);

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic identity-cluster dataset");
  synth->add_option("--out", c.out_path, "Output dataset path")->required();
  synth->add_option("--identities", c.synth.identities, "Identity count")->capture_default_str();
  synth->add_option("--per-identity", c.synth.per_identity, "Samples per identity")
      ->capture_default_str();
  synth->add_option("--dim", c.synth.dim, "Feature dimension")->capture_default_str();
  synth->add_option("--viewpoints", c.synth.viewpoints, "Viewpoints per identity")
      ->capture_default_str();
  synth->add_option("--cameras", c.synth.cameras, "Cameras per identity")->capture_default_str();
  synth->add_option("--sigma-id", c.synth.sigma_identity, "Centroid spread")
      ->capture_default_str();
  synth->add_option("--sigma-view", c.synth.sigma_view, "Viewpoint offset scale")
      ->capture_default_str();
  synth->add_option("--sigma-noise", c.synth.sigma_noise, "Per-sample noise")
      ->capture_default_str();
  add_seed(synth);

  try {
    app.parse(argc, argv);
    resolve(opt);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  c.command = app.get_subcommands().front()->get_name();
  try {
    if (c.command == "train") {
      reid::run_train(c);
    } else if (c.command == "eval") {
      reid::run_eval(c);
    } else if (c.command == "retrieve") {
      reid::run_retrieve(c);
    } else {
      reid::run_synth(c);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
