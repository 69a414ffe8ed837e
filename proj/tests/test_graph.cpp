#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "core/graph.hpp"
#include "doctest.h"

using namespace dman;

namespace {

std::vector<MultimodalNode> make_nodes(const std::vector<std::vector<uint32_t>>& labels) {
  std::vector<MultimodalNode> nodes(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    nodes[i].id = static_cast<uint32_t>(i);
    nodes[i].labels = labels[i];
    nodes[i].words = {0};
  }
  return nodes;
}

}  // namespace

TEST_CASE("edges exist exactly when labels intersect") {
  auto nodes = make_nodes({{1}, {1}, {2}});
  MultimodalGraph g = build_graph(nodes, 50, 0);
  CHECK(g.final_edges == 1);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 0));
  CHECK_FALSE(g.has_edge(0, 2));
  CHECK_FALSE(g.has_edge(1, 2));
}

TEST_CASE("a non-binding cap leaves the complete graph intact") {
  auto nodes = make_nodes({{7}, {7}, {7}, {7}, {7}});
  MultimodalGraph g = build_graph(nodes, 50, 3);
  CHECK(g.final_edges == 10);  // K5
  for (uint32_t i = 0; i < 5; ++i) CHECK(g.degree(i) == 4);
  CHECK(g.capped_nodes == 0);
}

TEST_CASE("empty and undersized node lists are input errors") {
  CHECK_THROWS_AS(build_graph({}, 50, 0), InputError);
  CHECK_THROWS_AS(build_graph(make_nodes({{1}}), 50, 0), InputError);
  CHECK_THROWS_AS(build_graph(make_nodes({{1}, {1}}), 0, 0), ConfigError);
}

TEST_CASE("capping matches a seeded re-simulation and respects the per-node cap") {
  const size_t n = 200;
  const uint32_t cap = 50;
  const uint64_t seed = 2024;
  std::vector<std::vector<uint32_t>> labels(n, std::vector<uint32_t>{0});
  auto nodes = make_nodes(labels);
  MultimodalGraph g = build_graph(nodes, cap, seed);

  // Independent re-simulation: brute-force pre-cap edges, then the same
  // documented down-sampling procedure on a fresh generator.
  std::vector<std::vector<uint32_t>> precap(n);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      bool shared = false;
      for (uint32_t a : nodes[i].labels)
        for (uint32_t b : nodes[j].labels) shared = shared || a == b;
      if (shared) precap[i].push_back(static_cast<uint32_t>(j));
    }
  Rng rng(seed);
  std::vector<std::set<uint32_t>> retained(n);
  for (size_t i = 0; i < n; ++i) {
    if (precap[i].size() <= cap) {
      retained[i].insert(precap[i].begin(), precap[i].end());
      continue;
    }
    for (size_t pick : rng.sample_indices(precap[i].size(), cap)) retained[i].insert(precap[i][pick]);
  }
  for (size_t i = 0; i < n; ++i) CHECK(retained[i].size() <= cap);  // cap before re-symmetrization

  std::vector<std::set<uint32_t>> expect(n);
  for (size_t i = 0; i < n; ++i)
    for (uint32_t j : retained[i]) {
      expect[i].insert(j);
      expect[j].insert(static_cast<uint32_t>(i));
    }
  for (size_t i = 0; i < n; ++i) {
    std::vector<uint32_t> want(expect[i].begin(), expect[i].end());
    CHECK(g.adjacency[i] == want);
  }
  CHECK(g.capped_nodes == n);
}

TEST_CASE("graph stays symmetric and self-loop free after capping") {
  Rng label_rng(5);
  std::vector<std::vector<uint32_t>> labels;
  for (size_t i = 0; i < 120; ++i) {
    std::vector<uint32_t> l = {static_cast<uint32_t>(label_rng.index(3))};
    if (label_rng.uniform() < 0.3) l.push_back(static_cast<uint32_t>(label_rng.index(3)));
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
    labels.push_back(l);
  }
  MultimodalGraph g = build_graph(make_nodes(labels), 10, 77);
  for (uint32_t i = 0; i < 120; ++i) {
    for (uint32_t j : g.adjacency[i]) {
      CHECK(j != i);
      CHECK(g.has_edge(j, i));
    }
    CHECK(std::adjacent_find(g.adjacency[i].begin(), g.adjacency[i].end()) == g.adjacency[i].end());
  }
}

TEST_CASE("restricting the graph to an include list isolates the rest") {
  auto nodes = make_nodes({{1}, {1}, {1}, {1}});
  MultimodalGraph g = build_graph(nodes, 50, 0, {0, 1, 2});
  CHECK(g.degree(3) == 0);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(1, 2));
  CHECK_FALSE(g.has_edge(0, 3));
}

TEST_CASE("forced triplet when exactly one choice exists") {
  auto nodes = make_nodes({{1}, {1}, {2}});
  MultimodalGraph g = build_graph(nodes, 50, 0);
  Rng rng(1);
  TripletBatch batch = sample_triplets(g, {0, 1, 2}, 1, rng);
  REQUIRE(!batch.triplets.empty());
  bool found = false;
  for (const auto& t : batch.triplets) {
    if (t.anchor == 0) {
      CHECK(t.positive == 1);
      CHECK(t.negative == 2);
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("isolated anchors are skipped and counted") {
  auto nodes = make_nodes({{1}, {1}, {2}});
  MultimodalGraph g = build_graph(nodes, 50, 0);
  Rng rng(1);
  TripletBatch batch = sample_triplets(g, {2}, 3, rng);
  CHECK(batch.triplets.empty());
  CHECK(batch.skipped_anchors == 1);
}

TEST_CASE("anchors with no in-batch negative are skipped") {
  auto nodes = make_nodes({{1}, {1}, {1}});
  MultimodalGraph g = build_graph(nodes, 50, 0);  // complete graph, no negatives anywhere
  Rng rng(1);
  TripletBatch batch = sample_triplets(g, {0, 1, 2}, 2, rng);
  CHECK(batch.triplets.empty());
  CHECK(batch.skipped_anchors == 3);
}

TEST_CASE("k must be positive") {
  auto nodes = make_nodes({{1}, {1}});
  MultimodalGraph g = build_graph(nodes, 50, 0);
  Rng rng(1);
  CHECK_THROWS_AS(sample_triplets(g, {0, 1}, 0, rng), ConfigError);
}

TEST_CASE("every emitted triplet satisfies its invariants") {
  Rng label_rng(9);
  std::vector<std::vector<uint32_t>> labels;
  for (size_t i = 0; i < 80; ++i) labels.push_back({static_cast<uint32_t>(label_rng.index(4))});
  MultimodalGraph g = build_graph(make_nodes(labels), 8, 13);
  Rng rng(17);
  std::vector<uint32_t> batch;
  for (uint32_t i = 0; i < 80; i += 2) batch.push_back(i);
  for (int trial = 0; trial < 50; ++trial) {
    TripletBatch tb = sample_triplets(g, batch, 3, rng);
    for (const auto& t : tb.triplets) {
      CHECK(g.has_edge(t.anchor, t.positive));
      CHECK_FALSE(g.has_edge(t.anchor, t.negative));
      CHECK(t.negative != t.anchor);
      CHECK(std::find(batch.begin(), batch.end(), t.negative) != batch.end());
    }
  }
}

TEST_CASE("negative selection is uniform over the eligible set") {
  // Anchor 0 linked to 1; batch negatives are the eight nodes 2..9.
  std::vector<std::vector<uint32_t>> labels = {{1}, {1}};
  for (int i = 0; i < 8; ++i) labels.push_back({2});
  // Keep nodes 2..9 mutually unlinked to anchor 0 but in the batch.
  auto nodes = make_nodes(labels);
  MultimodalGraph g = build_graph(nodes, 50, 3);
  std::vector<uint32_t> batch = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};

  const int draws = 100000;
  Rng rng(31);
  std::map<uint32_t, int> count_k1;
  for (int d = 0; d < draws; ++d) {
    TripletBatch tb = sample_triplets(g, {0, 2, 3, 4, 5, 6, 7, 8, 9}, 1, rng);
    for (const auto& t : tb.triplets)
      if (t.anchor == 0) ++count_k1[t.negative];
  }
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (uint32_t neg = 2; neg <= 9; ++neg) {
    CHECK(std::fabs(count_k1[neg] - draws * p) <= 3 * sigma);
  }

  // k=3 without replacement: marginal inclusion probability 3/8 each.
  Rng rng3(37);
  std::map<uint32_t, int> count_k3;
  for (int d = 0; d < draws; ++d) {
    TripletBatch tb = sample_triplets(g, {0, 2, 3, 4, 5, 6, 7, 8, 9}, 3, rng3);
    std::set<uint32_t> negs;
    for (const auto& t : tb.triplets)
      if (t.anchor == 0) negs.insert(t.negative);
    CHECK(negs.size() == 3);  // distinct negatives
    for (uint32_t n : negs) ++count_k3[n];
  }
  const double p3 = 3.0 / 8.0;
  const double sigma3 = std::sqrt(draws * p3 * (1 - p3));
  for (uint32_t neg = 2; neg <= 9; ++neg) {
    CHECK(std::fabs(count_k3[neg] - draws * p3) <= 3 * sigma3);
  }
}

TEST_CASE("epoch_shuffle keeps singletons and is seed-reproducible") {
  Rng a(5);
  CHECK(epoch_shuffle({42}, a) == std::vector<uint32_t>{42});
  Rng r1(123), r2(123);
  std::vector<uint32_t> order = {0, 1, 2, 3, 4, 5, 6, 7};
  CHECK(epoch_shuffle(order, r1) == epoch_shuffle(order, r2));
}

TEST_CASE("epoch_shuffle visits all six permutations of three items uniformly") {
  const int draws = 100000;
  Rng rng(71);
  std::map<std::vector<uint32_t>, int> counts;
  for (int d = 0; d < draws; ++d) counts[epoch_shuffle({0, 1, 2}, rng)]++;
  CHECK(counts.size() == 6);
  const double p = 1.0 / 6.0;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& [perm, count] : counts) {
    CHECK(std::fabs(count - draws * p) <= 3 * sigma);
  }
}
