#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qlouvain/error.hpp"
#include "qlouvain/file_io.hpp"
#include "qlouvain/graph.hpp"

namespace qlouvain {

namespace detail {

/// Splits text into lines, tracking 1-based line numbers. Handles "\r\n".
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    auto end = text_.find('\n', pos_);
    if (end == std::string_view::npos) end = text_.size();
    line = text_.substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  std::size_t line_number() const noexcept { return line_no_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool blank_or_comment(std::string_view line, std::string_view markers) {
  for (char c : line) {
    if (c == ' ' || c == '\t') continue;
    return markers.find(c) != std::string_view::npos;
  }
  return true;
}

inline std::uint64_t parse_index(std::string_view tok, std::size_t line) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("expected a nonnegative integer index, got '" + std::string(tok) + "'", line);
  }
  return v;
}

inline double parse_real(std::string_view tok, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    throw ParseError("expected a numeric weight, got '" + std::string(tok) + "'", line);
  }
  return v;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Parses Matrix Market coordinate text into an undirected graph.
///
/// Symmetric files: every entry is one undirected edge. General files: the
/// entries (u,v) and (v,u) describe the same edge; when both are present the
/// edge weight is their mean, so a fully listed symmetric matrix is not
/// double counted. Repeated entries in the same direction are summed.
/// Diagonal entries become loop weights. Pattern entries have weight 1.
inline Graph parse_matrix_market(std::string_view text) {
  detail::LineReader reader(text);
  std::string_view line;
  if (!reader.next(line)) throw ParseError("empty input, expected %%MatrixMarket header", 1);
  const auto head = detail::split_ws(line);
  if (head.size() < 5 || detail::lower(head[0]) != "%%matrixmarket") {
    throw ParseError("malformed header, expected '%%MatrixMarket matrix coordinate <field> <symmetry>'",
                     reader.line_number());
  }
  if (detail::lower(head[1]) != "matrix" || detail::lower(head[2]) != "coordinate") {
    throw ParseError("only 'matrix coordinate' files are supported", reader.line_number());
  }
  const auto field = detail::lower(head[3]);
  if (field != "real" && field != "integer" && field != "pattern") {
    throw ParseError("unsupported field '" + field + "'", reader.line_number());
  }
  const auto symmetry = detail::lower(head[4]);
  if (symmetry != "symmetric" && symmetry != "general") {
    throw ParseError("unsupported symmetry '" + symmetry + "'", reader.line_number());
  }
  const bool pattern = field == "pattern";
  const bool symmetric = symmetry == "symmetric";

  std::uint64_t rows = 0, cols = 0, nnz = 0;
  bool have_size = false;
  while (reader.next(line)) {
    if (detail::blank_or_comment(line, "%")) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 3) throw ParseError("malformed size line, expected 'rows cols entries'", reader.line_number());
    rows = detail::parse_index(tok[0], reader.line_number());
    cols = detail::parse_index(tok[1], reader.line_number());
    nnz = detail::parse_index(tok[2], reader.line_number());
    have_size = true;
    break;
  }
  if (!have_size) throw ParseError("missing size line", reader.line_number() + 1);
  if (rows != cols) {
    throw StructureError("adjacency matrix must be square, got " + std::to_string(rows) + "x" +
                         std::to_string(cols));
  }
  const auto n = static_cast<std::size_t>(rows);

  // For general files each unordered pair keeps per-direction sums in first-seen order.
  struct PairSums {
    std::size_t u, v;  // first-seen orientation
    double forward = 0.0, backward = 0.0;
    bool has_forward = false, has_backward = false;
  };
  std::vector<PairSums> pairs;
  std::unordered_map<std::uint64_t, std::size_t> pair_index;
  GraphBuilder builder(n);

  std::uint64_t seen = 0;
  while (reader.next(line)) {
    if (detail::blank_or_comment(line, "%")) continue;
    const auto tok = detail::split_ws(line);
    const std::size_t need = pattern ? 2 : 3;
    if (tok.size() < need) throw ParseError("entry has too few columns", reader.line_number());
    const auto r = detail::parse_index(tok[0], reader.line_number());
    const auto c = detail::parse_index(tok[1], reader.line_number());
    if (r < 1 || r > rows || c < 1 || c > cols) {
      throw StructureError("line " + std::to_string(reader.line_number()) + ": index (" + std::to_string(r) +
                           ", " + std::to_string(c) + ") outside declared bounds " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
    const double w = pattern ? 1.0 : detail::parse_real(tok[2], reader.line_number());
    if (w < 0.0) {
      throw DomainError("line " + std::to_string(reader.line_number()) + ": negative weight " + std::string(tok[2]));
    }
    ++seen;
    const auto u = static_cast<std::size_t>(r - 1), v = static_cast<std::size_t>(c - 1);
    if (symmetric || u == v) {
      builder.add_edge(u, v, w);
      continue;
    }
    const auto key = (static_cast<std::uint64_t>(std::min(u, v)) << 32) | std::max(u, v);
    auto [it, inserted] = pair_index.try_emplace(key, pairs.size());
    if (inserted) pairs.push_back({u, v});
    auto& p = pairs[it->second];
    if (p.u == u) {
      p.forward += w;
      p.has_forward = true;
    } else {
      p.backward += w;
      p.has_backward = true;
    }
  }
  if (seen != nnz) {
    throw ParseError("declared " + std::to_string(nnz) + " entries but found " + std::to_string(seen),
                     reader.line_number());
  }
  if (!symmetric) {
    // Loops went straight into the builder; pairs follow in first-seen order.
    for (const auto& p : pairs) {
      double w = 0.0;
      if (p.has_forward && p.has_backward) {
        w = 0.5 * (p.forward + p.backward);
      } else {
        w = p.has_forward ? p.forward : p.backward;
      }
      builder.add_edge(p.u, p.v, w);
    }
  }
  return builder.build();
}

inline Graph load_matrix_market(const std::filesystem::path& path) {
  return parse_matrix_market(read_text_file(path));
}

struct EdgeListOptions {
  int index_base = 0;
  DuplicatePolicy duplicates = DuplicatePolicy::kSum;
};

/// Parses whitespace separated "u v [w]" lines. Lines starting with '#' or
/// '%' are comments. The node count is one past the largest index seen.
inline Graph parse_edge_list(std::string_view text, const EdgeListOptions& opts = {}) {
  if (opts.index_base != 0 && opts.index_base != 1) throw DomainError("index_base must be 0 or 1");
  struct Raw {
    std::size_t u, v;
    double w;
  };
  std::vector<Raw> raw;
  std::size_t n = 0;
  detail::LineReader reader(text);
  std::string_view line;
  while (reader.next(line)) {
    if (detail::blank_or_comment(line, "#%")) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() < 2 || tok.size() > 3) throw ParseError("expected 'u v [w]'", reader.line_number());
    auto u = detail::parse_index(tok[0], reader.line_number());
    auto v = detail::parse_index(tok[1], reader.line_number());
    if (opts.index_base == 1) {
      if (u == 0 || v == 0) {
        throw StructureError("line " + std::to_string(reader.line_number()) + ": index 0 in a 1-based edge list");
      }
      --u;
      --v;
    }
    const double w = tok.size() == 3 ? detail::parse_real(tok[2], reader.line_number()) : 1.0;
    if (w < 0.0) {
      throw DomainError("line " + std::to_string(reader.line_number()) + ": negative weight " + std::string(tok[2]));
    }
    raw.push_back({static_cast<std::size_t>(u), static_cast<std::size_t>(v), w});
    n = std::max<std::size_t>(n, std::max(u, v) + 1);
  }
  GraphBuilder builder(n, opts.duplicates);
  for (const auto& e : raw) builder.add_edge(e.u, e.v, e.w);
  return builder.build();
}

inline Graph load_edge_list(const std::filesystem::path& path, const EdgeListOptions& opts = {}) {
  return parse_edge_list(read_text_file(path), opts);
}

/// Writes g as a symmetric real Matrix Market file, one entry per edge in
/// first-endpoint order, loops on the diagonal.
inline std::string to_matrix_market(const Graph& g) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  std::size_t loops = 0;
  for (std::size_t u = 0; u < g.node_count(); ++u) loops += g.loop_weight(u) > 0.0 ? 1 : 0;
  out << g.node_count() << ' ' << g.node_count() << ' ' << g.edge_count() + loops << '\n';
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    if (g.loop_weight(u) > 0.0) out << u + 1 << ' ' << u + 1 << ' ' << g.loop_weight(u) << '\n';
    for (const auto& e : g.neighbors(u)) {
      if (e.to > u) out << e.to + 1 << ' ' << u + 1 << ' ' << e.weight << '\n';
    }
  }
  return out.str();
}

}  // namespace qlouvain
