#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tent/error.hpp"
#include "tent/graph.hpp"

namespace tent {

namespace io {

inline constexpr char kFeatureMagic[6] = {'T', 'E', 'N', 'T', 'F', '1'};

// All binary containers are little-endian. The build targets little-endian
// hosts only; refuse to compile elsewhere rather than silently byte-swap.
static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian");

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("truncated file while reading " + what);
  return v;
}

// Edge list: one "u<TAB>v" pair per line; '#' starts a comment.
inline std::vector<std::pair<int, int>> read_edge_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open edge file: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    long long u, v;
    if (!(ls >> u)) continue;  // blank or comment-only line
    std::string trailing;
    if (!(ls >> v) || (ls >> trailing)) {
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected 'u<TAB>v', got '" + line + "'");
    }
    if (u < 0 || v < 0 || u > INT32_MAX || v > INT32_MAX)
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": node id out of range: '" + line + "'");
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  return edges;
}

inline void write_edge_file(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write edge file: " + path);
  out << "# u<TAB>v, undirected, each edge once\n";
  for (int u = 0; u < g.node_count(); ++u)
    for (int v : g.neighbors(u))
      if (u < v) out << u << '\t' << v << '\n';
}

// Feature matrix: "TENTF1", rows and cols as u64, then row-major f64.
inline Mat read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file: " + path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, kFeatureMagic, 6) != 0)
    throw FormatError(path + ": bad magic, expected TENTF1");
  const auto rows = read_pod<std::uint64_t>(in, "row count");
  const auto cols = read_pod<std::uint64_t>(in, "column count");
  if (rows > (1ULL << 31) || cols > (1ULL << 31) || rows * cols > (1ULL << 33))
    throw FormatError(path + ": implausible dimensions " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::vector<double> row(cols);
  for (std::uint64_t r = 0; r < rows; ++r) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(cols * sizeof(double)));
    if (!in)
      throw FormatError(path + ": truncated at row " + std::to_string(r));
    for (std::uint64_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = row[c];
  }
  return m;
}

inline void write_feature_file(const std::string& path, const Mat& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write feature file: " + path);
  out.write(kFeatureMagic, 6);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  std::vector<double> row(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row[static_cast<std::size_t>(c)] = m(r, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
}

// Labels: one integer per line, line i = label of node i, -1 = unlabeled.
inline std::vector<int> read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open label file: " + path);
  std::vector<int> labels;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long y;
    std::string trailing;
    if (!(ls >> y) || (ls >> trailing))
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": expected one integer, got '" + line + "'");
    if (y < -1 || y > INT32_MAX)
      throw FormatError(path + ":" + std::to_string(line_no) +
                        ": label out of range: " + std::to_string(y));
    labels.push_back(static_cast<int>(y));
  }
  return labels;
}

inline void write_label_file(const std::string& path,
                             const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write label file: " + path);
  for (int y : labels) out << y << '\n';
}

// Split manifest: {"base": [...], "val": [...], "novel": [...]}.
inline ClassSplit read_split_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open split manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  ClassSplit s;
  for (const auto& [key, dst] : {std::pair{"base", &s.base},
                                 std::pair{"val", &s.val},
                                 std::pair{"novel", &s.novel}}) {
    if (!j.contains(key) || !j[key].is_array())
      throw FormatError(path + ": missing class array '" + std::string(key) + "'");
    for (const auto& c : j[key]) dst->push_back(c.get<int>());
    std::sort(dst->begin(), dst->end());
  }
  return s;
}

inline void write_split_manifest(const std::string& path,
                                 const ClassSplit& s) {
  nlohmann::json j;
  j["base"] = s.base;
  j["val"] = s.val;
  j["novel"] = s.novel;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write split manifest: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace io

// Loads and validates a graph from the three declared files. Directed inputs
// are symmetrized, duplicates merged, self-loops dropped.
inline Graph load_graph(const std::string& edge_path,
                        const std::string& feature_path,
                        const std::string& label_path) {
  Mat features = io::read_feature_file(feature_path);
  std::vector<int> labels = io::read_label_file(label_path);
  auto edges = io::read_edge_file(edge_path);
  if (features.rows() == 0) throw IntegrityError("empty graph: no feature rows");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw IntegrityError("label file has " + std::to_string(labels.size()) +
                         " entries for " + std::to_string(features.rows()) +
                         " feature rows");
  return Graph(static_cast<int>(features.rows()), edges, std::move(features),
               std::move(labels));
}

// Conventional file names inside a dataset directory.
struct DatasetPaths {
  std::string edges, features, labels, split;
  explicit DatasetPaths(const std::string& dir)
      : edges(dir + "/edges.tsv"),
        features(dir + "/features.tentf"),
        labels(dir + "/labels.txt"),
        split(dir + "/split.json") {}
};

inline Graph load_dataset(const std::string& dir) {
  DatasetPaths p(dir);
  return load_graph(p.edges, p.features, p.labels);
}

inline void save_dataset(const std::string& dir, const Graph& g,
                         const ClassSplit& split) {
  std::filesystem::create_directories(dir);
  DatasetPaths p(dir);
  io::write_edge_file(p.edges, g);
  io::write_feature_file(p.features, g.features());
  io::write_label_file(p.labels, g.labels());
  io::write_split_manifest(p.split, split);
}

}  // namespace tent
