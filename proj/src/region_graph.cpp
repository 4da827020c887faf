#include "sae/region_graph.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "sae/error.hpp"
#include "sae/hashing.hpp"

namespace sae {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

}  // namespace

ComponentReport components(std::size_t n_regions, std::span<const Edge> edges) {
  // union-find with path halving
  std::vector<std::size_t> parent(n_regions);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const Edge& e : edges) {
    const std::size_t a = find(e.first), b = find(e.second);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  ComponentReport report;
  report.labels.assign(n_regions, 0);
  std::vector<std::size_t> label_of_root(n_regions, n_regions);
  for (std::size_t i = 0; i < n_regions; ++i) {
    const std::size_t r = find(i);
    if (label_of_root[r] == n_regions) {
      label_of_root[r] = report.count++;
      report.sizes.push_back(0);
    }
    report.labels[i] = label_of_root[r];
    ++report.sizes[report.labels[i]];
  }
  return report;
}

EdgeList parse_edge_list(std::string_view text) {
  EdgeList out;
  std::unordered_map<std::string, std::size_t> index;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  auto intern = [&](std::string_view id) {
    auto [it, inserted] = index.emplace(std::string(id), out.ids.size());
    if (inserted) out.ids.emplace_back(id);
    return it->second;
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const std::size_t hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    if (tokens.size() == 1) {
      intern(tokens[0]);  // region declaration without edges
      continue;
    }
    if (tokens.size() > 2) {
      throw Error(ErrorKind::WeightedAdjacency,
                  "line " + std::to_string(line_no) + ": expected two ids, got " +
                      std::to_string(tokens.size()) + " fields (weights are not supported)");
    }
    if (tokens[0] == tokens[1]) {
      throw Error(ErrorKind::SelfLoop,
                  "line " + std::to_string(line_no) + ": region '" + std::string(tokens[0]) +
                      "' adjacent to itself");
    }
    const std::size_t a = intern(tokens[0]);
    const std::size_t b = intern(tokens[1]);
    const auto key = std::minmax(a, b);
    if (!seen.insert({key.first, key.second}).second) {
      throw Error(ErrorKind::DuplicateEdge, "line " + std::to_string(line_no) + ": edge " +
                                                std::string(tokens[0]) + " " +
                                                std::string(tokens[1]) + " repeated");
    }
    out.edges.push_back({key.first, key.second});
  }
  return out;
}

RegionGraph RegionGraph::from_edge_list(std::string_view text, const LoadOptions& options,
                                        std::vector<std::string>* dropped) {
  EdgeList parsed = parse_edge_list(text);
  return from_edges(std::move(parsed.ids), std::move(parsed.edges), options, dropped);
}

RegionGraph RegionGraph::from_edges(std::vector<std::string> ids, std::vector<Edge> edges,
                                    const LoadOptions& options,
                                    std::vector<std::string>* dropped) {
  const std::size_t n = ids.size();
  if (n == 0) throw Error(ErrorKind::Parse, "graph has no regions");
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (Edge& e : edges) {
    if (e.first >= n || e.second >= n) throw Error(ErrorKind::Parse, "edge index out of range");
    if (e.first == e.second) {
      throw Error(ErrorKind::SelfLoop, "region '" + ids[e.first] + "' adjacent to itself");
    }
    if (e.first > e.second) std::swap(e.first, e.second);
    if (!seen.insert({e.first, e.second}).second) {
      throw Error(ErrorKind::DuplicateEdge,
                  "edge " + ids[e.first] + " " + ids[e.second] + " repeated");
    }
  }

  const ComponentReport comp = components(n, edges);
  if (comp.count > 1) {
    if (!options.allow_components) {
      std::vector<std::size_t> degree(n, 0);
      for (const Edge& e : edges) {
        ++degree[e.first];
        ++degree[e.second];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (degree[i] == 0) {
          throw Error(ErrorKind::IsolatedRegion, "region '" + ids[i] + "' has no neighbours");
        }
      }
      throw Error(ErrorKind::Disconnected,
                  "graph has " + std::to_string(comp.count) + " connected components");
    }
    const std::size_t keep = static_cast<std::size_t>(
        std::max_element(comp.sizes.begin(), comp.sizes.end()) - comp.sizes.begin());
    std::vector<std::size_t> remap(n, n);
    std::vector<std::string> kept_ids;
    for (std::size_t i = 0; i < n; ++i) {
      if (comp.labels[i] == keep) {
        remap[i] = kept_ids.size();
        kept_ids.push_back(ids[i]);
      } else if (dropped != nullptr) {
        dropped->push_back(ids[i]);
      }
    }
    std::vector<Edge> kept_edges;
    for (const Edge& e : edges) {
      if (remap[e.first] < n) kept_edges.push_back({remap[e.first], remap[e.second]});
    }
    ids = std::move(kept_ids);
    edges = std::move(kept_edges);
  }
  if (ids.size() == 1) {
    throw Error(ErrorKind::IsolatedRegion, "region '" + ids[0] + "' has no neighbours");
  }

  RegionGraph g;
  g.ids_ = std::move(ids);
  for (std::size_t i = 0; i < g.ids_.size(); ++i) g.index_.emplace(g.ids_[i], i);
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.first != b.first ? a.first < b.first : a.second < b.second;
  });
  g.edges_ = std::move(edges);
  const std::size_t m = g.ids_.size();
  g.degrees_.assign(m, 0);
  for (const Edge& e : g.edges_) {
    ++g.degrees_[e.first];
    ++g.degrees_[e.second];
  }
  g.adj_offsets_.assign(m + 1, 0);
  for (std::size_t i = 0; i < m; ++i) g.adj_offsets_[i + 1] = g.adj_offsets_[i] + g.degrees_[i];
  g.adj_.resize(g.adj_offsets_[m]);
  std::vector<std::size_t> fill(g.adj_offsets_.begin(), g.adj_offsets_.end() - 1);
  for (const Edge& e : g.edges_) {
    g.adj_[fill[e.first]++] = e.second;
    g.adj_[fill[e.second]++] = e.first;
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::sort(g.adj_.begin() + static_cast<std::ptrdiff_t>(g.adj_offsets_[i]),
              g.adj_.begin() + static_cast<std::ptrdiff_t>(g.adj_offsets_[i + 1]));
  }
  g.hash_ = sha256_hex(g.to_edge_list_text());
  return g;
}

RegionGraph RegionGraph::lattice(std::size_t rows, std::size_t cols) {
  std::vector<std::string> ids;
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      ids.push_back(std::to_string(r) + "_" + std::to_string(c));
      const std::size_t i = r * cols + c;
      if (c + 1 < cols) edges.push_back({i, i + 1});
      if (r + 1 < rows) edges.push_back({i, i + cols});
    }
  }
  return from_edges(std::move(ids), std::move(edges));
}

std::size_t RegionGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw Error(ErrorKind::Parse, "unknown region id '" + std::string(id) + "'");
  return it->second;
}

void RegionGraph::adjacency_multiply(std::span<const double> x, std::span<double> y) const {
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j : neighbors(i)) s += x[j];
    y[i] = s;
  }
}

double RegionGraph::adjacency_quadratic(std::span<const double> x) const {
  double s = 0.0;
  for (const Edge& e : edges_) s += x[e.first] * x[e.second];
  return 2.0 * s;
}

std::string RegionGraph::to_edge_list_text() const {
  std::ostringstream out;
  for (const std::string& id : ids_) out << id << '\n';
  for (const Edge& e : edges_) out << ids_[e.first] << ' ' << ids_[e.second] << '\n';
  return out.str();
}

}  // namespace sae
