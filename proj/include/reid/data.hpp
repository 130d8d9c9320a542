#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "reid/matrix.hpp"
#include "reid/rng.hpp"

namespace reid {

enum class Split { train, query, gallery };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::query: return "query";
    default: return "gallery";
  }
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "query") return Split::query;
  if (s == "gallery") return Split::gallery;
  throw std::invalid_argument("unknown split tag '" + s + "'");
}

// One data point: feature vector, identity label, camera id, split tag.
struct Sample {
  std::vector<double> feature;
  int identity = 0;
  int camera = 0;
  Split split = Split::train;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dim = 0;

  std::size_t size() const { return samples.size(); }

  std::size_t identity_count() const {
    std::set<int> ids;
    for (const Sample& s : samples) ids.insert(s.identity);
    return ids.size();
  }

  std::vector<std::size_t> split_indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].split == split) out.push_back(i);
    }
    return out;
  }

  bool operator==(const Dataset&) const = default;
};

// Row indices of one split grouped by identity, identities ascending and
// indices in file order.
inline std::map<int, std::vector<std::size_t>> indices_by_identity(const Dataset& d,
                                                                   Split split) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    if (d.samples[i].split == split) out[d.samples[i].identity].push_back(i);
  }
  return out;
}

// Shortest text form that round-trips the double exactly.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace detail {

inline double parse_finite_double(const std::string& token, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0') {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad number '" + token + "'");
  }
  if (!std::isfinite(v)) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": non-finite value '" + token +
                             "'");
  }
  return v;
}

inline long parse_long(const std::string& token, std::size_t line_no, const char* what) {
  char* end = nullptr;
  const long v = std::strtol(token.c_str(), &end, 10);
  if (end == token.c_str() || *end != '\0') {
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + what + " '" + token +
                             "'");
  }
  return v;
}

inline std::vector<std::string> tokenize(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> tokens;
  std::string t;
  while (ss >> t) tokens.push_back(t);
  return tokens;
}

}  // namespace detail

inline constexpr const char* kDatasetMagic = "reid_dataset_v1";

// Dataset file: a header line "reid_dataset_v1 dim=<D>", then one sample per
// line as "<identity> <camera> <split> <D feature values>".
inline void write_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << kDatasetMagic << " dim=" << d.dim << "\n";
  for (const Sample& s : d.samples) {
    out << s.identity << ' ' << s.camera << ' ' << split_name(s.split);
    for (double f : s.feature) out << ' ' << format_double(f);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file '" + path + "'");

  std::vector<std::string> header = detail::tokenize(line);
  if (header.size() != 2 || header[0] != kDatasetMagic || header[1].rfind("dim=", 0) != 0) {
    throw std::runtime_error("line 1: expected '" + std::string(kDatasetMagic) + " dim=<D>'");
  }
  const long dim = detail::parse_long(header[1].substr(4), 1, "dimension");
  if (dim <= 0) throw std::runtime_error("line 1: dimension must be positive");

  Dataset d;
  d.dim = static_cast<std::size_t>(dim);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> tokens = detail::tokenize(line);
    if (tokens.empty()) continue;  // blank line
    if (tokens.size() != 3 + d.dim) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(3 + d.dim) + " fields, got " +
                               std::to_string(tokens.size()));
    }
    Sample s;
    const long identity = detail::parse_long(tokens[0], line_no, "identity");
    if (identity < 0) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": identity must be >= 0");
    }
    const long camera = detail::parse_long(tokens[1], line_no, "camera");
    if (camera < 0) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": camera must be >= 0");
    }
    s.identity = static_cast<int>(identity);
    s.camera = static_cast<int>(camera);
    try {
      s.split = parse_split(tokens[2]);
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("line " + std::to_string(line_no) + ": " + e.what());
    }
    s.feature.reserve(d.dim);
    for (std::size_t i = 0; i < d.dim; ++i) {
      s.feature.push_back(detail::parse_finite_double(tokens[3 + i], line_no));
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

// Synthetic identity clusters: per identity a centroid, V viewpoint offsets,
// and per-sample noise. Cameras attach to viewpoints. Stands in for image
// datasets at desk scale.
struct SynthSpec {
  std::size_t identities = 32;
  std::size_t per_identity = 12;
  std::size_t dim = 16;
  std::size_t viewpoints = 3;
  std::size_t cameras = 3;        // per identity; viewpoint v maps to camera v % cameras
  double sigma_identity = 6.0;    // centroid spread
  double sigma_view = 1.5;        // viewpoint offset scale
  double sigma_noise = 0.25;      // per-sample noise
  std::uint64_t seed = 1;
};

inline void validate(const SynthSpec& s) {
  if (s.identities == 0 || s.per_identity == 0 || s.dim == 0) {
    throw std::invalid_argument("SynthSpec: identities, per_identity and dim must be positive");
  }
  if (s.viewpoints == 0 || s.cameras == 0) {
    throw std::invalid_argument("SynthSpec: viewpoints and cameras must be >= 1");
  }
  if (!(s.sigma_identity > 0.0)) {
    throw std::invalid_argument("SynthSpec: sigma_identity must be > 0");
  }
  if (s.sigma_view < 0.0 || s.sigma_noise < 0.0) {
    throw std::invalid_argument("SynthSpec: sigma_view and sigma_noise must be >= 0");
  }
}

// Split policy: with s samples per identity, the last max(1, s/6) rows are
// gallery, the preceding max(1, s/6) are query, the rest train; identities
// with fewer than 3 samples go entirely to train.
inline Split synth_split(std::size_t sample_index, std::size_t per_identity) {
  if (per_identity < 3) return Split::train;
  const std::size_t portion = std::max<std::size_t>(1, per_identity / 6);
  if (sample_index >= per_identity - portion) return Split::gallery;
  if (sample_index >= per_identity - 2 * portion) return Split::query;
  return Split::train;
}

// Deterministic under the spec seed: centroids first, then per identity the
// viewpoint offsets, then per sample the noise, all from one stream.
inline Dataset generate_synthetic(const SynthSpec& spec) {
  validate(spec);
  Rng rng(spec.seed);

  std::vector<std::vector<double>> centroids(spec.identities,
                                             std::vector<double>(spec.dim));
  for (auto& c : centroids) {
    for (double& x : c) x = rng.normal(0.0, spec.sigma_identity);
  }

  Dataset d;
  d.dim = spec.dim;
  for (std::size_t id = 0; id < spec.identities; ++id) {
    std::vector<std::vector<double>> offsets(spec.viewpoints,
                                             std::vector<double>(spec.dim));
    for (auto& o : offsets) {
      for (double& x : o) x = rng.normal(0.0, spec.sigma_view);
    }
    for (std::size_t j = 0; j < spec.per_identity; ++j) {
      const std::size_t view = j % spec.viewpoints;
      Sample s;
      s.identity = static_cast<int>(id);
      s.camera = static_cast<int>(view % spec.cameras);
      s.split = synth_split(j, spec.per_identity);
      s.feature.resize(spec.dim);
      for (std::size_t k = 0; k < spec.dim; ++k) {
        s.feature[k] = centroids[id][k] + offsets[view][k] + rng.normal(0.0, spec.sigma_noise);
      }
      d.samples.push_back(std::move(s));
    }
  }
  return d;
}

// Metadata carried alongside stored embedding vectors.
struct SampleMeta {
  int identity = 0;
  int camera = 0;
  Split split = Split::train;

  bool operator==(const SampleMeta&) const = default;
};

struct EmbeddedSet {
  Matrix vectors;  // N x F
  std::vector<SampleMeta> meta;

  bool operator==(const EmbeddedSet&) const = default;
};

inline constexpr const char* kEmbeddingsMagic = "reid_embeddings_v1";

namespace detail {

inline void append_double_le(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

inline double read_double_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, sizeof(x));
  return x;
}

}  // namespace detail

// Embeddings file: text header "reid_embeddings_v1 count=<N> dim=<F>", N
// metadata lines "<identity> <camera> <split>", an "end_header" line, then
// N*F little-endian 64-bit floats.
inline void write_embeddings(const EmbeddedSet& set, const std::string& path) {
  if (set.vectors.rows() != set.meta.size()) {
    throw std::invalid_argument("write_embeddings: vector/metadata count mismatch");
  }
  std::string out;
  out += kEmbeddingsMagic;
  out += " count=" + std::to_string(set.vectors.rows());
  out += " dim=" + std::to_string(set.vectors.cols());
  out += "\n";
  for (const SampleMeta& m : set.meta) {
    out += std::to_string(m.identity) + " " + std::to_string(m.camera) + " " +
           split_name(m.split) + "\n";
  }
  out += "end_header\n";
  for (double x : set.vectors.flat()) detail::append_double_le(out, x);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline EmbeddedSet read_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open embeddings '" + path + "'");
  std::stringstream buffer;
  buffer << f.rdbuf();
  const std::string content = buffer.str();

  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) {
      throw std::runtime_error("truncated embeddings header at byte offset " +
                               std::to_string(pos));
    }
    std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return line;
  };

  std::vector<std::string> header = detail::tokenize(next_line());
  if (header.size() != 3 || header[0] != kEmbeddingsMagic ||
      header[1].rfind("count=", 0) != 0 || header[2].rfind("dim=", 0) != 0) {
    throw std::runtime_error("line 1: expected '" + std::string(kEmbeddingsMagic) +
                             " count=<N> dim=<F>'");
  }
  const long count = detail::parse_long(header[1].substr(6), 1, "count");
  const long dim = detail::parse_long(header[2].substr(4), 1, "dimension");
  if (count < 0 || dim < 0) throw std::runtime_error("line 1: negative count or dimension");

  EmbeddedSet set;
  set.meta.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    std::vector<std::string> tokens = detail::tokenize(next_line());
    if (tokens.size() != 3) {
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": expected '<identity> <camera> <split>'");
    }
    SampleMeta m;
    m.identity = static_cast<int>(detail::parse_long(tokens[0], line_no, "identity"));
    m.camera = static_cast<int>(detail::parse_long(tokens[1], line_no, "camera"));
    m.split = parse_split(tokens[2]);
    set.meta.push_back(m);
  }
  if (next_line() != "end_header") {
    throw std::runtime_error("line " + std::to_string(line_no) + ": expected 'end_header'");
  }

  const std::size_t payload = static_cast<std::size_t>(count) * static_cast<std::size_t>(dim) * 8;
  if (content.size() - pos < payload) {
    throw std::runtime_error("truncated embeddings payload at byte offset " +
                             std::to_string(content.size()) + " (need " +
                             std::to_string(pos + payload) + " bytes)");
  }
  if (content.size() - pos > payload) {
    throw std::runtime_error("trailing data at byte offset " + std::to_string(pos + payload));
  }
  set.vectors = Matrix(static_cast<std::size_t>(count), static_cast<std::size_t>(dim));
  const unsigned char* p = reinterpret_cast<const unsigned char*>(content.data()) + pos;
  for (double& x : set.vectors.flat()) {
    x = detail::read_double_le(p);
    p += 8;
  }
  return set;
}

// Convenience wrapper pairing dataset rows with computed embeddings.
inline void write_embeddings(const std::vector<Sample>& samples, const Matrix& embeddings,
                             const std::string& path) {
  if (samples.size() != embeddings.rows()) {
    throw std::invalid_argument("write_embeddings: sample/embedding count mismatch");
  }
  EmbeddedSet set;
  set.vectors = embeddings;
  set.meta.reserve(samples.size());
  for (const Sample& s : samples) set.meta.push_back({s.identity, s.camera, s.split});
  write_embeddings(set, path);
}

}  // namespace reid
