#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace sae {

/// Unordered region pair, stored with first < second.
struct Edge {
  std::size_t first;
  std::size_t second;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct ComponentReport {
  std::vector<std::size_t> labels;  // component label per region, in [0, count)
  std::size_t count = 0;
  std::vector<std::size_t> sizes;   // regions per label
};

/// Connected components of an undirected loop-free edge set. Never rejects.
ComponentReport components(std::size_t n_regions, std::span<const Edge> edges);

/// Raw parse of edge-list text: ids in first-appearance order plus edges.
/// Rejects self loops, duplicate edges and weighted lines; does not check
/// degrees or connectivity.
struct EdgeList {
  std::vector<std::string> ids;
  std::vector<Edge> edges;
};
EdgeList parse_edge_list(std::string_view text);

struct LoadOptions {
  /// Keep the largest component instead of failing on a disconnected graph.
  bool allow_components = false;
};

/// Validated areal adjacency: binary, symmetric, loop-free, connected, and no
/// isolated regions. Immutable after construction.
class RegionGraph {
 public:
  /// Validates; throws Error{IsolatedRegion|Disconnected|SelfLoop|DuplicateEdge}.
  /// With allow_components the largest component is kept and the ids that
  /// were removed are reported through `dropped`.
  static RegionGraph from_edge_list(std::string_view text, const LoadOptions& options = {},
                                    std::vector<std::string>* dropped = nullptr);
  static RegionGraph from_edges(std::vector<std::string> ids, std::vector<Edge> edges,
                                const LoadOptions& options = {},
                                std::vector<std::string>* dropped = nullptr);
  /// rows x cols grid with rook contiguity; region (r, c) has index r * cols + c.
  static RegionGraph lattice(std::size_t rows, std::size_t cols);

  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& degrees() const noexcept { return degrees_; }
  std::span<const std::size_t> neighbors(std::size_t i) const noexcept {
    return {adj_.data() + adj_offsets_[i], adj_offsets_[i + 1] - adj_offsets_[i]};
  }
  /// Dense index for an id; throws Error{Parse} when unknown.
  std::size_t index_of(std::string_view id) const;
  bool contains(std::string_view id) const { return index_.count(std::string(id)) > 0; }

  /// y = W x
  void adjacency_multiply(std::span<const double> x, std::span<double> y) const;
  /// x^T W x = 2 * sum over edges of x_i x_j
  double adjacency_quadratic(std::span<const double> x) const;

  /// Canonical text: every id on its own line in index order, then one line
  /// per edge. Reloading it reproduces the graph exactly.
  std::string to_edge_list_text() const;
  /// Hex SHA-256 of the canonical text.
  const std::string& content_hash() const noexcept { return hash_; }

 private:
  RegionGraph() = default;

  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> degrees_;
  std::vector<std::size_t> adj_offsets_;
  std::vector<std::size_t> adj_;
  std::string hash_;
};

}  // namespace sae
