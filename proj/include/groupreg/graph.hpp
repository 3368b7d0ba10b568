#pragma once

// Weighted undirected relation graph and the greedy path search used both
// for initialization of the sequential optimizer and for choosing guided
// matching paths to the reference.

#include "groupreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace groupreg {

class DisconnectedGraphError : public Error {
 public:
  DisconnectedGraphError(const std::string& what, std::vector<int> unreachable)
      : Error(what), unreachable_(std::move(unreachable)) {}
  const std::vector<int>& unreachable() const { return unreachable_; }

 private:
  std::vector<int> unreachable_;
};

struct Edge {
  int a = 0;
  int b = 0;
  double weight = 0.0;
};

class RelationGraph {
 public:
  RelationGraph() = default;
  explicit RelationGraph(std::vector<int> nodes) {
    for (int n : nodes) add_node(n);
  }

  void add_node(int n) { nodes_.insert(n); }

  /// Inserts or replaces the edge between a and b.
  void add_edge(int a, int b, double weight) {
    if (a == b) throw Error("self edges are not allowed");
    if (!std::isfinite(weight) || !(weight > 0.0)) throw Error("edge weights must be finite and positive");
    add_node(a);
    add_node(b);
    edges_[{std::min(a, b), std::max(a, b)}] = weight;
  }

  const std::set<int>& nodes() const { return nodes_; }

  /// Edges sorted by (weight, smaller id, larger id).
  std::vector<Edge> sorted_edges() const {
    std::vector<Edge> out;
    for (const auto& [key, w] : edges_) out.push_back({key.first, key.second, w});
    std::sort(out.begin(), out.end(), [](const Edge& x, const Edge& y) {
      return std::tie(x.weight, x.a, x.b) < std::tie(y.weight, y.a, y.b);
    });
    return out;
  }

  std::size_t edge_count() const { return edges_.size(); }

 private:
  std::set<int> nodes_;
  std::map<std::pair<int, int>, double> edges_;
};

struct GraphPath {
  std::vector<int> nodes;  ///< from the image to the root, inclusive
  std::vector<double> weights;
  double confidence = 0.0;  ///< inverse of the mean edge weight
};

namespace detail {

/// Dijkstra towards `root`; equal distances settle in ascending node order.
inline std::map<int, std::pair<double, int>> shortest_to_root(const std::vector<Edge>& edges, int root) {
  std::map<int, std::vector<std::pair<int, double>>> adj;
  for (const Edge& e : edges) {
    adj[e.a].push_back({e.b, e.weight});
    adj[e.b].push_back({e.a, e.weight});
  }
  std::map<int, std::pair<double, int>> dist;  // node -> (distance, next hop towards root)
  using Item = std::tuple<double, int, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  pq.push({0.0, root, root});
  while (!pq.empty()) {
    const auto [d, n, via] = pq.top();
    pq.pop();
    if (dist.count(n)) continue;
    dist[n] = {d, via};
    for (const auto& [m, w] : adj[n]) {
      if (!dist.count(m)) pq.push({d + w, m, n});
    }
  }
  return dist;
}

}  // namespace detail

/// Greedy path search: edges are inserted in ascending weight order and,
/// after each insertion, every node that has just become connected to
/// `root` is finalized with its shortest path in the partial graph.
inline std::map<int, GraphPath> greedy_paths(const RelationGraph& graph, int root) {
  if (!graph.nodes().count(root)) throw Error("root node is not part of the graph");
  std::map<int, GraphPath> out;
  std::vector<Edge> inserted;
  for (const Edge& e : graph.sorted_edges()) {
    inserted.push_back(e);
    const auto dist = detail::shortest_to_root(inserted, root);
    for (const auto& [node, info] : dist) {
      if (node == root || out.count(node)) continue;
      GraphPath p;
      int cur = node;
      p.nodes.push_back(cur);
      while (cur != root) {
        const int next = dist.at(cur).second;
        double w = std::numeric_limits<double>::infinity();
        for (const Edge& x : inserted) {
          if ((x.a == cur && x.b == next) || (x.b == cur && x.a == next)) w = x.weight;
        }
        p.weights.push_back(w);
        p.nodes.push_back(next);
        cur = next;
      }
      double sum = 0.0;
      for (double w : p.weights) sum += w;
      p.confidence = static_cast<double>(p.weights.size()) / sum;
      out[node] = std::move(p);
    }
    if (out.size() + 1 == graph.nodes().size()) break;
  }
  std::vector<int> missing;
  for (int n : graph.nodes()) {
    if (n != root && !out.count(n)) missing.push_back(n);
  }
  if (!missing.empty()) {
    std::string msg = "relation graph is disconnected; unreachable:";
    for (int n : missing) msg += " " + std::to_string(n);
    throw DisconnectedGraphError(msg, missing);
  }
  return out;
}

}  // namespace groupreg
