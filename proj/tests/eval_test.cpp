#include "reid/eval.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "reid/data.hpp"
#include "reid/rng.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using reid::average_precision;
using reid::cmc_topk;
using reid::cross_camera_kept;
using reid::Dataset;
using reid::EmbeddedSet;
using reid::EvalReport;
using reid::evaluate;
using reid::generate_synthetic;
using reid::Matrix;
using reid::MetricKind;
using reid::ProtocolKind;
using reid::ProtocolSpec;
using reid::rank_gallery;
using reid::read_report;
using reid::Rng;
using reid::SampleMeta;
using reid::Split;
using reid::SynthSpec;
using reid::write_report;
using testsupport::TempDir;

namespace {

EmbeddedSet raw_features(const Dataset& d) {
  EmbeddedSet set;
  set.vectors = Matrix(d.size(), d.dim);
  for (std::size_t i = 0; i < d.size(); ++i) set.vectors.set_row(i, d.samples[i].feature);
  for (const auto& s : d.samples) set.meta.push_back({s.identity, s.camera, s.split});
  return set;
}

EmbeddedSet random_embedded_set(std::size_t identities, std::size_t per_identity,
                                std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddedSet set;
  set.vectors = Matrix(identities * per_identity, dim);
  std::size_t row = 0;
  for (std::size_t id = 0; id < identities; ++id) {
    for (std::size_t j = 0; j < per_identity; ++j, ++row) {
      for (std::size_t k = 0; k < dim; ++k) set.vectors(row, k) = rng.normal();
      set.meta.push_back({static_cast<int>(id), static_cast<int>(j % 3),
                          j % 2 == 0 ? Split::query : Split::gallery});
    }
  }
  return set;
}

}  // namespace

// --- ranking ------------------------------------------------------------------

TEST(RankGallery, ExactCopyRanksFirst) {
  const Matrix gallery = Matrix::from_rows({{5, 5}, {1, 2}, {0, 0}});
  const auto ranked = rank_gallery({1, 2}, gallery, MetricKind::euclidean);
  EXPECT_EQ(ranked[0], 1u);
}

TEST(RankGallery, TiesBreakToLowerIndex) {
  const Matrix gallery = Matrix::from_rows({{0, 1}, {0, -1}, {2, 0}});
  const auto ranked = rank_gallery({0, 0}, gallery, MetricKind::euclidean);
  EXPECT_EQ(ranked, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(RankGallery, MatchesFullSortOracle) {
  Rng rng(71);
  std::vector<double> query(6);
  for (double& x : query) x = rng.normal();
  std::vector<std::vector<double>> rows(20, std::vector<double>(6));
  for (auto& r : rows) {
    for (double& x : r) x = rng.normal();
  }
  // Oracle: stable sort over brute-force squared distances (the euclidean map
  // is strictly monotone in the squared distance, ties included).
  const auto sq = testsupport::brute_force_squared_distances({query}, rows)[0];
  std::vector<std::size_t> expected(20);
  for (std::size_t i = 0; i < 20; ++i) expected[i] = i;
  std::stable_sort(expected.begin(), expected.end(),
                   [&](std::size_t a, std::size_t b) { return sq[a] < sq[b]; });
  EXPECT_EQ(rank_gallery(query, Matrix::from_rows(rows), MetricKind::euclidean), expected);
}

// --- AP / CMC -------------------------------------------------------------------

TEST(AveragePrecision, DirectFormula) {
  EXPECT_NEAR(average_precision({true, false, true}, 2), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(average_precision({true, true, false, false}, 2), 1.0);
  EXPECT_DOUBLE_EQ(average_precision({false, false}, 3), 0.0);
  EXPECT_THROW(average_precision({true}, 0), std::invalid_argument);
  EXPECT_THROW(average_precision({true, true}, 1), std::invalid_argument);
}

TEST(AveragePrecision, MatchesBruteForceOracleExhaustively) {
  // All relevance vectors of length <= 8 here; the acceptance suite extends
  // the sweep to length 12.
  for (std::size_t len = 1; len <= 8; ++len) {
    for (std::size_t bits = 0; bits < (1u << len); ++bits) {
      std::vector<bool> rel(len);
      std::size_t trues = 0;
      for (std::size_t i = 0; i < len; ++i) {
        rel[i] = (bits >> i) & 1;
        trues += rel[i];
      }
      for (std::size_t n_gt : {std::max<std::size_t>(trues, 1), trues + 2}) {
        EXPECT_EQ(average_precision(rel, n_gt),
                  testsupport::brute_force_average_precision(rel, n_gt));
      }
    }
  }
}

TEST(AveragePrecision, OneIffTopRanksHoldAllTrues) {
  for (std::size_t len = 1; len <= 8; ++len) {
    for (std::size_t bits = 1; bits < (1u << len); ++bits) {
      std::vector<bool> rel(len);
      std::size_t trues = 0;
      for (std::size_t i = 0; i < len; ++i) {
        rel[i] = (bits >> i) & 1;
        trues += rel[i];
      }
      bool prefix = true;
      for (std::size_t i = 1; i < len; ++i) prefix &= !(rel[i] && !rel[i - 1]);
      EXPECT_EQ(average_precision(rel, trues) == 1.0, prefix);
    }
  }
}

TEST(CmcTopK, PerQueryHits) {
  EXPECT_EQ(cmc_topk({true, false, false}, {1, 2, 5}), (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(cmc_topk({false, false, true, false}, {1, 2, 5}), (std::vector<int>{0, 0, 1}));
  EXPECT_EQ(cmc_topk({false, false}, {1, 2, 5}), (std::vector<int>{0, 0, 0}));
}

TEST(CmcTopK, AggregationEqualsMeanOfIndicators) {
  Rng rng(73);
  const EmbeddedSet set = random_embedded_set(6, 6, 4, 73);
  const ProtocolSpec proto{ProtocolKind::cross_camera, 1, {1, 2, 5}};
  const EvalReport report = evaluate(set, proto, 5);
  // Recount: rebuild each query's ranking and its indicator directly.
  std::vector<double> recount(proto.cutoffs.size(), 0.0);
  std::vector<std::size_t> gallery_rows;
  std::vector<SampleMeta> gallery_meta;
  for (std::size_t i = 0; i < set.meta.size(); ++i) {
    if (set.meta[i].split == Split::gallery) {
      gallery_rows.push_back(i);
      gallery_meta.push_back(set.meta[i]);
    }
  }
  for (const auto& q : report.per_query) {
    const auto kept = cross_camera_kept(set.meta[q.index], gallery_meta);
    Matrix sub(kept.size(), set.vectors.cols());
    for (std::size_t r = 0; r < kept.size(); ++r) {
      sub.set_row(r, set.vectors.row_copy(gallery_rows[kept[r]]));
    }
    const auto ranked = rank_gallery(set.vectors.row_copy(q.index), sub, MetricKind::euclidean);
    std::vector<bool> rel(ranked.size());
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      rel[r] = gallery_meta[kept[ranked[r]]].identity == set.meta[q.index].identity;
    }
    const auto hits = cmc_topk(rel, proto.cutoffs);
    for (std::size_t c = 0; c < hits.size(); ++c) recount[c] += hits[c];
  }
  for (std::size_t c = 0; c < recount.size(); ++c) {
    EXPECT_DOUBLE_EQ(report.cmc[c], recount[c] / double(report.per_query.size()));
  }
}

TEST(CmcTopK, MonotoneAcrossRandomReports) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const EmbeddedSet set = random_embedded_set(5, 4, 3, 1000 + seed);
    const EvalReport r =
        evaluate(set, {ProtocolKind::cross_camera, 1, {1, 2, 3, 5, 8}}, seed);
    for (std::size_t c = 1; c < r.cmc.size(); ++c) EXPECT_GE(r.cmc[c], r.cmc[c - 1]);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
  }
}

// --- protocols ------------------------------------------------------------------

TEST(CrossCamera, ExcludesExactlySameIdentitySameCamera) {
  const SampleMeta query{5, 1, Split::query};
  const std::vector<SampleMeta> gallery = {
      {5, 1, Split::gallery},  // same id, same camera: removed
      {5, 2, Split::gallery},  // same id, other camera: kept
      {7, 1, Split::gallery},  // other id, same camera: kept
      {5, 1, Split::gallery},  // removed
      {9, 3, Split::gallery},  // kept
  };
  EXPECT_EQ(cross_camera_kept(query, gallery), (std::vector<std::size_t>{1, 2, 4}));
}

TEST(CrossCamera, OnlyCrossCameraItemsCountAsMatches) {
  // query (id 5, cam 1); gallery holds (id 5, cam 1) and (id 5, cam 2):
  // only the cam-2 item is a candidate, so n_gt is 1.
  EmbeddedSet set;
  set.vectors = Matrix::from_rows({{0.0, 0.0}, {0.1, 0.0}, {5.0, 5.0}, {9.0, 0.0}});
  set.meta = {{5, 1, Split::query},
              {5, 1, Split::gallery},
              {5, 2, Split::gallery},
              {8, 1, Split::gallery}};
  const EvalReport r = evaluate(set, {ProtocolKind::cross_camera, 1, {1}}, 0);
  ASSERT_EQ(r.per_query.size(), 1u);
  EXPECT_EQ(r.per_query[0].n_gt, 1u);
  // The nearest kept item would have been the same-camera copy; with it
  // removed the cam-2 match ranks first.
  EXPECT_DOUBLE_EQ(r.map, 1.0);
}

TEST(CrossCamera, QueriesWithoutCrossCameraMatchAreExcludedAndCounted) {
  EmbeddedSet set;
  set.vectors = Matrix(5, 2);
  set.meta = {{1, 0, Split::query},    // no cross-camera match -> excluded
              {1, 0, Split::gallery},
              {2, 0, Split::query},
              {2, 1, Split::gallery},
              {3, 0, Split::gallery}};
  const EvalReport r = evaluate(set, {ProtocolKind::cross_camera, 1, {1}}, 0);
  EXPECT_EQ(r.excluded_queries, 1u);
  EXPECT_EQ(r.per_query.size(), 1u);

  EmbeddedSet single_camera = set;
  for (auto& m : single_camera.meta) m.camera = 0;
  EXPECT_THROW(evaluate(single_camera, {ProtocolKind::cross_camera, 1, {1}}, 0),
               std::runtime_error);
}

TEST(Protocols, CollapsedClustersGivePerfectMapUnderBoth) {
  SynthSpec spec;
  spec.identities = 6;
  spec.per_identity = 6;
  spec.dim = 5;
  spec.sigma_view = 0.0;
  spec.sigma_noise = 0.0;
  spec.seed = 13;
  const EmbeddedSet set = raw_features(generate_synthetic(spec));
  const EvalReport cross = evaluate(set, {ProtocolKind::cross_camera, 1, {1, 2, 5}}, 3);
  EXPECT_EQ(cross.map, 1.0);
  for (double c : cross.cmc) EXPECT_EQ(c, 1.0);
  const EvalReport rep = evaluate(set, {ProtocolKind::repeated_gallery, 10, {1, 2, 5}}, 3);
  EXPECT_EQ(rep.map, 1.0);
  for (double c : rep.cmc) EXPECT_EQ(c, 1.0);
}

TEST(RepeatedGallery, ReportedMapIsTheMeanOfReplayedTrials) {
  const EmbeddedSet set = random_embedded_set(7, 5, 4, 99);
  const std::uint64_t seed = 31;
  const ProtocolSpec proto{ProtocolKind::repeated_gallery, 10, {1, 2, 5}};
  const EvalReport report = evaluate(set, proto, seed);
  ASSERT_EQ(report.per_trial_map.size(), 10u);

  std::map<int, std::vector<std::size_t>> gallery_by_identity;
  std::vector<std::size_t> query_rows;
  for (std::size_t i = 0; i < set.meta.size(); ++i) {
    if (set.meta[i].split == Split::gallery) {
      gallery_by_identity[set.meta[i].identity].push_back(i);
    }
    if (set.meta[i].split == Split::query) query_rows.push_back(i);
  }

  double hand_sum = 0.0;
  for (std::size_t trial = 0; trial < 10; ++trial) {
    Rng rng(Rng::derive_seed(seed, trial));
    const auto exemplar_rows = reid::trial_gallery(gallery_by_identity, rng);
    Matrix gallery(exemplar_rows.size(), set.vectors.cols());
    for (std::size_t r = 0; r < exemplar_rows.size(); ++r) {
      gallery.set_row(r, set.vectors.row_copy(exemplar_rows[r]));
    }
    double trial_map = 0.0;
    for (std::size_t q : query_rows) {
      const auto ranked = rank_gallery(set.vectors.row_copy(q), gallery, MetricKind::euclidean);
      std::vector<bool> rel(ranked.size());
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        rel[r] = set.meta[exemplar_rows[ranked[r]]].identity == set.meta[q].identity;
      }
      trial_map += average_precision(rel, 1);
    }
    trial_map /= double(query_rows.size());
    EXPECT_NEAR(trial_map, report.per_trial_map[trial], 1e-12);
    hand_sum += trial_map;
  }
  EXPECT_NEAR(report.map, hand_sum / 10.0, 1e-12);
}

TEST(RepeatedGallery, TrialsEchoedAndDeterministic) {
  const EmbeddedSet set = random_embedded_set(5, 4, 3, 55);
  const ProtocolSpec proto{ProtocolKind::repeated_gallery, 10, {1, 2, 5}};
  const EvalReport a = evaluate(set, proto, 5);
  const EvalReport b = evaluate(set, proto, 5);
  EXPECT_EQ(a.trials, 10u);
  EXPECT_EQ(a, b);
  const EvalReport c = evaluate(set, proto, 6);
  EXPECT_NE(a.map == c.map ? a.per_trial_map : c.per_trial_map, a.per_trial_map);
}

TEST(Protocols, MapInvariantUnderRigidTransformation) {
  const EmbeddedSet set = random_embedded_set(6, 6, 5, 77);

  // Random rotation via Gram-Schmidt on a gaussian matrix, plus translation.
  Rng rng(123);
  const std::size_t dim = 5;
  std::vector<std::vector<double>> basis(dim, std::vector<double>(dim));
  for (auto& row : basis) {
    for (double& x : row) x = rng.normal();
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < dim; ++k) dot += basis[i][k] * basis[j][k];
      for (std::size_t k = 0; k < dim; ++k) basis[i][k] -= dot * basis[j][k];
    }
    double norm = 0.0;
    for (double x : basis[i]) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : basis[i]) x /= norm;
  }
  std::vector<double> shift(dim);
  for (double& x : shift) x = rng.normal(0.0, 3.0);

  EmbeddedSet moved = set;
  for (std::size_t r = 0; r < set.vectors.rows(); ++r) {
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = shift[i];
      for (std::size_t k = 0; k < dim; ++k) acc += basis[i][k] * set.vectors(r, k);
      moved.vectors(r, i) = acc;
    }
  }

  for (ProtocolKind kind : {ProtocolKind::cross_camera, ProtocolKind::repeated_gallery}) {
    const ProtocolSpec proto{kind, 5, {1, 2, 5}};
    const EvalReport a = evaluate(set, proto, 9);
    const EvalReport b = evaluate(moved, proto, 9);
    EXPECT_EQ(a.map, b.map);
    EXPECT_EQ(a.cmc, b.cmc);
    EXPECT_EQ(a.per_query, b.per_query);
  }
}

TEST(Protocols, SpecValidation) {
  const EmbeddedSet set = random_embedded_set(4, 4, 3, 11);
  EXPECT_THROW(evaluate(set, {ProtocolKind::cross_camera, 0, {1}}, 0), std::invalid_argument);
  EXPECT_THROW(evaluate(set, {ProtocolKind::cross_camera, 1, {}}, 0), std::invalid_argument);
  EXPECT_THROW(evaluate(set, {ProtocolKind::cross_camera, 1, {2, 2}}, 0), std::invalid_argument);
  EXPECT_THROW(evaluate(set, {ProtocolKind::cross_camera, 1, {0, 1}}, 0), std::invalid_argument);
}

// --- report file -----------------------------------------------------------------

TEST(ReportFile, RoundTripsExactly) {
  TempDir tmp;
  for (ProtocolKind kind : {ProtocolKind::cross_camera, ProtocolKind::repeated_gallery}) {
    const EmbeddedSet set = random_embedded_set(6, 5, 4, 42);
    EvalReport report = evaluate(set, {kind, 7, {1, 2, 5}}, 17);
    report.config_echo = "command=eval protocol=test seed=17";
    write_report(report, tmp.file("r.txt"));
    EXPECT_EQ(read_report(tmp.file("r.txt")), report);
  }
}

TEST(ReportFile, RejectsGarbage) {
  TempDir tmp;
  std::ofstream f(tmp.file("junk.txt"));
  f << "hello\n";
  f.close();
  EXPECT_THROW(read_report(tmp.file("junk.txt")), std::runtime_error);
}
