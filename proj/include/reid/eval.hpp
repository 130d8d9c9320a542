#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "reid/data.hpp"
#include "reid/geometry.hpp"
#include "reid/matrix.hpp"
#include "reid/rng.hpp"

namespace reid {

enum class ProtocolKind { cross_camera, repeated_gallery };

inline const char* protocol_name(ProtocolKind k) {
  return k == ProtocolKind::cross_camera ? "cross_camera" : "repeated_gallery";
}

struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::cross_camera;
  std::size_t trials = 10;                  // repeated_gallery only
  std::vector<std::size_t> cutoffs = {1, 2, 5};
};

inline void validate(const ProtocolSpec& p) {
  if (p.trials < 1) throw std::invalid_argument("ProtocolSpec: trials must be >= 1");
  if (p.cutoffs.empty()) throw std::invalid_argument("ProtocolSpec: need at least one cutoff");
  for (std::size_t i = 0; i + 1 < p.cutoffs.size(); ++i) {
    if (p.cutoffs[i] >= p.cutoffs[i + 1]) {
      throw std::invalid_argument("ProtocolSpec: cutoffs must be strictly increasing");
    }
  }
  if (p.cutoffs.front() == 0) throw std::invalid_argument("ProtocolSpec: cutoffs start at 1");
}

// Gallery rows ranked by ascending distance to the query; ties broken by
// ascending gallery index.
inline std::vector<std::pair<std::size_t, double>> rank_gallery_with_distances(
    const std::vector<double>& query, const Matrix& gallery, MetricKind metric) {
  const Matrix q = Matrix::from_rows({query});
  const DistanceMatrix d = pairwise_distances(q, gallery, metric);
  std::vector<std::pair<std::size_t, double>> ranked(gallery.rows());
  for (std::size_t j = 0; j < gallery.rows(); ++j) ranked[j] = {j, d.entries(0, j)};
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  return ranked;
}

inline std::vector<std::size_t> rank_gallery(const std::vector<double>& query,
                                             const Matrix& gallery, MetricKind metric) {
  std::vector<std::size_t> out;
  for (const auto& [idx, dist] : rank_gallery_with_distances(query, gallery, metric)) {
    out.push_back(idx);
  }
  return out;
}

// AP over a ranked relevance list: precision accumulated at the ranks holding
// true matches, divided by the total number of true matches n_gt (which may
// exceed the trues present in the list).
inline double average_precision(const std::vector<bool>& ranked_relevance, std::size_t n_gt) {
  if (n_gt == 0) throw std::invalid_argument("average_precision: n_gt must be >= 1");
  std::size_t hits = 0;
  double ap = 0.0;
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits > n_gt) throw std::invalid_argument("average_precision: more hits than n_gt");
  return ap / static_cast<double>(n_gt);
}

// Per-query top-k hits: 1 when some true match sits at rank <= cutoff.
inline std::vector<int> cmc_topk(const std::vector<bool>& ranked_relevance,
                                 const std::vector<std::size_t>& cutoffs) {
  std::size_t first_hit = static_cast<std::size_t>(-1);  // no hit
  for (std::size_t k = 0; k < ranked_relevance.size(); ++k) {
    if (ranked_relevance[k]) {
      first_hit = k;
      break;
    }
  }
  std::vector<int> out;
  out.reserve(cutoffs.size());
  for (std::size_t c : cutoffs) out.push_back(first_hit < c ? 1 : 0);
  return out;
}

// Cross-camera exclusion: gallery entries sharing BOTH identity and camera
// with the query are removed before ranking.
inline std::vector<std::size_t> cross_camera_kept(const SampleMeta& query,
                                                  const std::vector<SampleMeta>& gallery) {
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    if (gallery[j].identity == query.identity && gallery[j].camera == query.camera) continue;
    kept.push_back(j);
  }
  return kept;
}

// One repeated-gallery trial: per gallery identity (ascending), one exemplar
// drawn uniformly from that identity's gallery rows. Consumes one draw per
// identity, in identity order.
inline std::vector<std::size_t> trial_gallery(
    const std::map<int, std::vector<std::size_t>>& gallery_by_identity, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(gallery_by_identity.size());
  for (const auto& [id, rows] : gallery_by_identity) {
    out.push_back(rows[static_cast<std::size_t>(rng.below(rows.size()))]);
  }
  return out;
}

struct QueryScore {
  std::size_t index = 0;  // row in the evaluated set
  double ap = 0.0;
  std::size_t n_gt = 0;

  bool operator==(const QueryScore&) const = default;
};

struct EvalReport {
  ProtocolKind protocol = ProtocolKind::cross_camera;
  MetricKind metric = MetricKind::euclidean;
  std::string config_echo;
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  std::vector<std::size_t> cutoffs;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::size_t excluded_queries = 0;
  double map = 0.0;
  std::vector<double> cmc;            // aligned with cutoffs
  std::vector<double> per_trial_map;  // repeated_gallery only
  std::vector<QueryScore> per_query;  // scored queries; AP averaged over trials

  bool operator==(const EvalReport&) const = default;
};

// Retrieval evaluation of an embedded set under one protocol. Rows tagged
// query are probes, rows tagged gallery the reference pool; queries with no
// valid match are excluded and counted.
inline EvalReport evaluate(const EmbeddedSet& set, const ProtocolSpec& protocol,
                           std::uint64_t seed, MetricKind metric = MetricKind::euclidean) {
  validate(protocol);
  if (set.vectors.rows() != set.meta.size()) {
    throw std::invalid_argument("evaluate: vector/metadata count mismatch");
  }

  std::vector<std::size_t> query_rows, gallery_rows;
  for (std::size_t i = 0; i < set.meta.size(); ++i) {
    if (set.meta[i].split == Split::query) query_rows.push_back(i);
    if (set.meta[i].split == Split::gallery) gallery_rows.push_back(i);
  }
  if (query_rows.empty()) throw std::runtime_error("evaluate: no query-split rows");
  if (gallery_rows.empty()) throw std::runtime_error("evaluate: no gallery-split rows");

  EvalReport report;
  report.protocol = protocol.kind;
  report.metric = metric;
  report.seed = seed;
  report.trials = protocol.kind == ProtocolKind::cross_camera ? 1 : protocol.trials;
  report.cutoffs = protocol.cutoffs;
  report.query_count = query_rows.size();
  report.gallery_count = gallery_rows.size();

  auto gather = [&](const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), set.vectors.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) m.set_row(r, set.vectors.row_copy(rows[r]));
    return m;
  };

  if (protocol.kind == ProtocolKind::cross_camera) {
    std::vector<double> cmc_sum(protocol.cutoffs.size(), 0.0);
    std::vector<SampleMeta> gallery_meta;
    for (std::size_t g : gallery_rows) gallery_meta.push_back(set.meta[g]);

    for (std::size_t q : query_rows) {
      const std::vector<std::size_t> kept = cross_camera_kept(set.meta[q], gallery_meta);
      std::size_t n_gt = 0;
      for (std::size_t j : kept) {
        if (gallery_meta[j].identity == set.meta[q].identity) ++n_gt;
      }
      if (n_gt == 0) {
        ++report.excluded_queries;
        continue;
      }
      std::vector<std::size_t> kept_rows;
      for (std::size_t j : kept) kept_rows.push_back(gallery_rows[j]);
      const std::vector<std::size_t> ranked =
          rank_gallery(set.vectors.row_copy(q), gather(kept_rows), metric);
      std::vector<bool> relevance(ranked.size());
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        relevance[r] = gallery_meta[kept[ranked[r]]].identity == set.meta[q].identity;
      }
      const double ap = average_precision(relevance, n_gt);
      report.per_query.push_back({q, ap, n_gt});
      report.map += ap;
      const std::vector<int> hits = cmc_topk(relevance, protocol.cutoffs);
      for (std::size_t c = 0; c < hits.size(); ++c) cmc_sum[c] += hits[c];
    }
    if (report.per_query.empty()) {
      throw std::runtime_error(
          "evaluate: cross_camera protocol excluded every query (no cross-camera matches; "
          "protocol/dataset mismatch)");
    }
    const double n = static_cast<double>(report.per_query.size());
    report.map /= n;
    for (double s : cmc_sum) report.cmc.push_back(s / n);
    return report;
  }

  // repeated_gallery
  std::map<int, std::vector<std::size_t>> gallery_by_identity;
  for (std::size_t g : gallery_rows) gallery_by_identity[set.meta[g].identity].push_back(g);

  std::vector<std::size_t> included;
  for (std::size_t q : query_rows) {
    if (gallery_by_identity.count(set.meta[q].identity) != 0) {
      included.push_back(q);
    } else {
      ++report.excluded_queries;
    }
  }
  if (included.empty()) {
    throw std::runtime_error(
        "evaluate: repeated_gallery protocol excluded every query (no query identity present "
        "in the gallery split)");
  }

  std::vector<double> ap_sum(included.size(), 0.0);
  std::vector<double> cmc_sum(protocol.cutoffs.size(), 0.0);
  for (std::size_t trial = 0; trial < protocol.trials; ++trial) {
    Rng rng(Rng::derive_seed(seed, trial));
    const std::vector<std::size_t> exemplar_rows = trial_gallery(gallery_by_identity, rng);
    const Matrix exemplars = gather(exemplar_rows);

    double trial_map = 0.0;
    for (std::size_t qi = 0; qi < included.size(); ++qi) {
      const std::size_t q = included[qi];
      const std::vector<std::size_t> ranked =
          rank_gallery(set.vectors.row_copy(q), exemplars, metric);
      std::vector<bool> relevance(ranked.size());
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        relevance[r] = set.meta[exemplar_rows[ranked[r]]].identity == set.meta[q].identity;
      }
      const double ap = average_precision(relevance, 1);
      ap_sum[qi] += ap;
      trial_map += ap;
      const std::vector<int> hits = cmc_topk(relevance, protocol.cutoffs);
      for (std::size_t c = 0; c < hits.size(); ++c) cmc_sum[c] += hits[c];
    }
    report.per_trial_map.push_back(trial_map / static_cast<double>(included.size()));
  }

  const double denom = static_cast<double>(included.size() * protocol.trials);
  for (double m : report.per_trial_map) report.map += m;
  report.map /= static_cast<double>(protocol.trials);
  for (double s : cmc_sum) report.cmc.push_back(s / denom);
  for (std::size_t qi = 0; qi < included.size(); ++qi) {
    report.per_query.push_back(
        {included[qi], ap_sum[qi] / static_cast<double>(protocol.trials), 1});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report file: key/value lines plus a per-query table. Stable format,
// round-trips exactly.

inline constexpr const char* kReportMagic = "reid_eval_report_v1";

inline void write_report(const EvalReport& r, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << kReportMagic << "\n";
  f << "protocol: " << protocol_name(r.protocol) << "\n";
  f << "metric: " << metric_name(r.metric) << "\n";
  f << "config: " << r.config_echo << "\n";
  f << "seed: " << r.seed << "\n";
  f << "trials: " << r.trials << "\n";
  f << "cutoffs:";
  for (std::size_t c : r.cutoffs) f << ' ' << c;
  f << "\n";
  f << "queries: " << r.query_count << "\n";
  f << "gallery: " << r.gallery_count << "\n";
  f << "excluded_queries: " << r.excluded_queries << "\n";
  f << "map: " << format_double(r.map) << "\n";
  f << "cmc:";
  for (double c : r.cmc) f << ' ' << format_double(c);
  f << "\n";
  if (!r.per_trial_map.empty()) {
    f << "per_trial_map:";
    for (double m : r.per_trial_map) f << ' ' << format_double(m);
    f << "\n";
  }
  f << "per_query: " << r.per_query.size() << "\n";
  for (const QueryScore& q : r.per_query) {
    f << q.index << ' ' << format_double(q.ap) << ' ' << q.n_gt << "\n";
  }
  f << "end_report\n";
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline EvalReport read_report(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open report '" + path + "'");
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(f, line)) throw std::runtime_error("report: unexpected end of file");
    return line;
  };
  auto expect_prefix = [](const std::string& l, const std::string& prefix) {
    if (l.rfind(prefix, 0) != 0) {
      throw std::runtime_error("report: expected '" + prefix + "', got '" + l + "'");
    }
    return l.substr(prefix.size());
  };
  auto parse_doubles = [](const std::string& s) {
    std::istringstream ss(s);
    std::vector<double> out;
    std::string tok;
    while (ss >> tok) out.push_back(detail::parse_finite_double(tok, 0));
    return out;
  };

  if (next_line() != kReportMagic) {
    throw std::runtime_error("not a " + std::string(kReportMagic) + " file: '" + path + "'");
  }
  EvalReport r;
  {
    const std::string p = expect_prefix(next_line(), "protocol: ");
    if (p == "cross_camera") {
      r.protocol = ProtocolKind::cross_camera;
    } else if (p == "repeated_gallery") {
      r.protocol = ProtocolKind::repeated_gallery;
    } else {
      throw std::runtime_error("report: unknown protocol '" + p + "'");
    }
  }
  {
    const std::string m = expect_prefix(next_line(), "metric: ");
    if (m == "euclidean") {
      r.metric = MetricKind::euclidean;
    } else if (m == "squared_euclidean") {
      r.metric = MetricKind::squared_euclidean;
    } else {
      throw std::runtime_error("report: unknown metric '" + m + "'");
    }
  }
  r.config_echo = expect_prefix(next_line(), "config: ");
  r.seed = std::stoull(expect_prefix(next_line(), "seed: "));
  r.trials = std::stoull(expect_prefix(next_line(), "trials: "));
  {
    std::istringstream ss(expect_prefix(next_line(), "cutoffs:"));
    std::size_t c;
    while (ss >> c) r.cutoffs.push_back(c);
  }
  r.query_count = std::stoull(expect_prefix(next_line(), "queries: "));
  r.gallery_count = std::stoull(expect_prefix(next_line(), "gallery: "));
  r.excluded_queries = std::stoull(expect_prefix(next_line(), "excluded_queries: "));
  r.map = detail::parse_finite_double(expect_prefix(next_line(), "map: "), 0);
  r.cmc = parse_doubles(expect_prefix(next_line(), "cmc:"));

  std::string tail = next_line();
  if (tail.rfind("per_trial_map:", 0) == 0) {
    r.per_trial_map = parse_doubles(tail.substr(std::string("per_trial_map:").size()));
    tail = next_line();
  }
  const std::size_t n_query = std::stoull(expect_prefix(tail, "per_query: "));
  for (std::size_t i = 0; i < n_query; ++i) {
    std::istringstream ss(next_line());
    QueryScore q;
    std::string ap_tok;
    if (!(ss >> q.index >> ap_tok >> q.n_gt)) {
      throw std::runtime_error("report: bad per-query row " + std::to_string(i));
    }
    q.ap = detail::parse_finite_double(ap_tok, 0);
    r.per_query.push_back(q);
  }
  if (next_line() != "end_report") throw std::runtime_error("report: missing end_report");
  return r;
}

}  // namespace reid
