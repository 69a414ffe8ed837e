#pragma once

#include <cstdint>
#include <vector>

#include "core/common.hpp"

namespace dman {

// One image-text pair. Text is the sparse form of a 0/1 vocabulary vector
// (sorted indices of the words present; never empty). Labels exist for edge
// construction and evaluation only; the model never reads them. Region
// features live in the dataset bundle, keyed by id.
struct MultimodalNode {
  uint32_t id = 0;
  std::vector<uint32_t> words;
  std::vector<uint32_t> labels;
};

// Undirected link graph over nodes. Adjacency lists are sorted and free of
// self-loops and duplicates; symmetry holds after construction.
struct MultimodalGraph {
  size_t node_count = 0;
  uint32_t max_links = 0;
  std::vector<std::vector<uint32_t>> adjacency;

  // Construction statistics.
  size_t precap_edges = 0;    // shared-label edges before down-sampling
  size_t final_edges = 0;     // edges after capping and re-symmetrization
  size_t capped_nodes = 0;    // nodes whose neighbor list was down-sampled

  size_t degree(uint32_t node) const { return adjacency[node].size(); }
  bool has_edge(uint32_t a, uint32_t b) const;
  bool has_any_edge() const { return final_edges > 0; }
};

struct Triplet {
  uint32_t anchor = 0;
  uint32_t positive = 0;  // always a neighbor of anchor
  uint32_t negative = 0;  // in-batch, never a neighbor of anchor, never anchor
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  size_t skipped_anchors = 0;  // anchors with no usable positive or negative
};

// Builds the shared-label graph and applies the per-node link cap.
//
// Pre-cap rule: an edge (i, j) exists iff the two nodes share at least one
// label. Capping: nodes are visited in ascending id order; a node with more
// than max_links neighbors keeps a uniform sample of max_links of them
// (candidates in ascending order, partial Fisher-Yates on the shared seeded
// generator). The union of retained directed picks is then re-symmetrized,
// so a node's final degree can exceed max_links when many peers retained it.
//
// A non-empty include list restricts edges to pairs inside it; excluded
// nodes stay addressable but isolated (the out-of-sample training graph).
MultimodalGraph build_graph(const std::vector<MultimodalNode>& nodes, uint32_t max_links, uint64_t seed,
                            const std::vector<uint32_t>& include = {});

// Draws up to k triplets per anchor in the batch: one uniform positive from
// the anchor's full neighbor list, then k distinct uniform negatives from
// batch members that are neither neighbors nor the anchor itself. Anchors
// with no neighbors or no eligible in-batch negative contribute nothing and
// bump skipped_anchors.
TripletBatch sample_triplets(const MultimodalGraph& graph, const std::vector<uint32_t>& batch, int k, Rng& rng);

// Uniform permutation of the node order (Fisher-Yates).
std::vector<uint32_t> epoch_shuffle(std::vector<uint32_t> order, Rng& rng);

}  // namespace dman
