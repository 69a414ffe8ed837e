#include "core/graph.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dman {

bool MultimodalGraph::has_edge(uint32_t a, uint32_t b) const {
  const auto& adj = adjacency[a];
  return std::binary_search(adj.begin(), adj.end(), b);
}

MultimodalGraph build_graph(const std::vector<MultimodalNode>& nodes, uint32_t max_links, uint64_t seed,
                            const std::vector<uint32_t>& include) {
  if (nodes.empty()) throw InputError("build_graph: empty node list");
  if (nodes.size() < 2) throw InputError("build_graph: at least two nodes required");
  if (max_links < 1) throw ConfigError("build_graph: max_links must be >= 1");

  const size_t n = nodes.size();
  for (size_t i = 0; i < n; ++i) {
    if (nodes[i].id != i) throw InputError("build_graph: node ids must be dense and ascending");
  }
  std::vector<char> included(n, include.empty() ? 1 : 0);
  for (uint32_t id : include) {
    if (id >= n) throw InputError("build_graph: include id out of range");
    included[id] = 1;
  }
  std::vector<std::set<uint32_t>> precap(n);

  // Shared-label rule via an inverted label index.
  std::map<uint32_t, std::vector<uint32_t>> by_label;
  for (const auto& node : nodes) {
    if (!included[node.id]) continue;
    for (uint32_t label : node.labels) by_label[label].push_back(node.id);
  }
  for (const auto& [label, members] : by_label) {
    for (size_t i = 0; i < members.size(); ++i)
      for (size_t j = i + 1; j < members.size(); ++j) {
        precap[members[i]].insert(members[j]);
        precap[members[j]].insert(members[i]);
      }
  }

  MultimodalGraph g;
  g.node_count = n;
  g.max_links = max_links;
  for (const auto& adj : precap) g.precap_edges += adj.size();
  g.precap_edges /= 2;

  // Per-node down-sampling to max_links, then union of directed picks.
  Rng rng(seed);
  std::vector<std::vector<uint32_t>> retained(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<uint32_t> candidates(precap[i].begin(), precap[i].end());
    if (candidates.size() <= max_links) {
      retained[i] = std::move(candidates);
      continue;
    }
    ++g.capped_nodes;
    for (size_t pick : rng.sample_indices(candidates.size(), max_links)) {
      retained[i].push_back(candidates[pick]);
    }
    std::sort(retained[i].begin(), retained[i].end());
  }

  // Re-symmetrize: an edge survives if either endpoint retained it.
  g.adjacency.assign(n, {});
  for (size_t i = 0; i < n; ++i)
    for (uint32_t j : retained[i]) {
      g.adjacency[i].push_back(j);
      g.adjacency[j].push_back(static_cast<uint32_t>(i));
    }
  for (auto& adj : g.adjacency) {
    std::sort(adj.begin(), adj.end());
    adj.erase(std::unique(adj.begin(), adj.end()), adj.end());
    g.final_edges += adj.size();
  }
  g.final_edges /= 2;
  return g;
}

TripletBatch sample_triplets(const MultimodalGraph& graph, const std::vector<uint32_t>& batch, int k, Rng& rng) {
  if (k < 1) throw ConfigError("sample_triplets: k must be >= 1");
  for (uint32_t id : batch)
    if (id >= graph.node_count) throw InputError("sample_triplets: batch id out of range");

  TripletBatch result;
  std::vector<uint32_t> eligible;
  for (uint32_t anchor : batch) {
    const auto& neighbors = graph.adjacency[anchor];
    if (neighbors.empty()) {
      ++result.skipped_anchors;
      continue;
    }
    eligible.clear();
    for (uint32_t candidate : batch) {
      if (candidate == anchor) continue;
      if (std::binary_search(neighbors.begin(), neighbors.end(), candidate)) continue;
      eligible.push_back(candidate);
    }
    if (eligible.empty()) {
      ++result.skipped_anchors;
      continue;
    }
    const uint32_t positive = neighbors[rng.index(neighbors.size())];
    const size_t draws = std::min<size_t>(static_cast<size_t>(k), eligible.size());
    for (size_t pick : rng.sample_indices(eligible.size(), draws)) {
      result.triplets.push_back({anchor, positive, eligible[pick]});
    }
  }
  return result;
}

std::vector<uint32_t> epoch_shuffle(std::vector<uint32_t> order, Rng& rng) {
  rng.shuffle(order);
  return order;
}

}  // namespace dman
