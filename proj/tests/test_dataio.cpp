#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <set>

#include "core/dataio.hpp"
#include "core/runner.hpp"
#include "doctest.h"

using namespace dman;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("dman_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const { return (leaf.empty() ? path : path / leaf).string(); }
};

SyntheticSpec small_spec(uint64_t seed) {
  SyntheticSpec spec;
  spec.topics = 3;
  spec.nodes_per_topic = 10;
  spec.regions = 4;
  spec.feature_dim = 6;
  spec.vocab = 12;
  spec.words_per_topic = 3;
  spec.signature_regions = 1;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("zero noise makes topic signatures exactly orthogonal") {
  SyntheticSpec spec = small_spec(1);
  spec.topics = 2;
  spec.nodes_per_topic = 5;
  spec.noise_sigma = 0.0;
  DatasetBundle b = generate_synthetic(spec);
  // Signature region vectors of nodes from different topics have zero dot.
  const size_t stride = spec.regions * spec.feature_dim;
  auto region_vec = [&](uint32_t node, uint32_t region) {
    return std::vector<float>(b.features.begin() + node * stride + region * spec.feature_dim,
                              b.features.begin() + node * stride + (region + 1) * spec.feature_dim);
  };
  for (uint32_t a = 0; a < 5; ++a)
    for (uint32_t z = 5; z < 10; ++z) {
      const auto va = region_vec(a, b.signature_regions[a][0]);
      const auto vz = region_vec(z, b.signature_regions[z][0]);
      double dot = 0;
      for (size_t i = 0; i < va.size(); ++i) dot += double(va[i]) * double(vz[i]);
      CHECK(dot == 0.0);
    }
}

TEST_CASE("zero co-label probability yields disconnected per-topic cliques pre-cap") {
  SyntheticSpec spec = small_spec(2);
  spec.co_label_prob = 0.0;
  DatasetBundle b = generate_synthetic(spec);
  MultimodalGraph g = build_graph(b.nodes, 1000, 0);  // cap not binding
  for (uint32_t i = 0; i < b.manifest.node_count; ++i)
    for (uint32_t j : g.adjacency[i]) CHECK(i / spec.nodes_per_topic == j / spec.nodes_per_topic);
  const size_t clique_edges = spec.nodes_per_topic * (spec.nodes_per_topic - 1) / 2;
  CHECK(g.precap_edges == spec.topics * clique_edges);
}

TEST_CASE("word marginals sit within three sigma of word_prob over ten thousand nodes") {
  SyntheticSpec spec;
  spec.topics = 2;
  spec.nodes_per_topic = 5000;
  spec.regions = 2;
  spec.feature_dim = 2;
  spec.vocab = 10;
  spec.words_per_topic = 5;
  spec.signature_regions = 1;
  spec.seed = 33;
  DatasetBundle b = generate_synthetic(spec);
  // Count non-label words only (the label word is force-included when a
  // node's draw comes up empty, which biases it by ~word_prob^5).
  std::vector<size_t> count(spec.vocab, 0);
  for (const auto& node : b.nodes)
    for (uint32_t w : node.words) ++count[w];
  const double n = spec.nodes_per_topic;
  const double sigma = std::sqrt(n * 0.9 * 0.1);
  for (uint32_t topic = 0; topic < 2; ++topic)
    for (uint32_t w = topic * 5 + 1; w < (topic + 1) * 5; ++w) {
      CHECK(std::fabs(double(count[w]) - 0.9 * n) <= 3 * sigma);
    }
  for (const auto& node : b.nodes) CHECK(!node.words.empty());
}

TEST_CASE("overlapping word subsets are rejected") {
  SyntheticSpec spec = small_spec(3);
  spec.words_per_topic = 5;  // 3 topics x 5 words > 12 vocab
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  spec = small_spec(3);
  spec.signature_regions = 9;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("the split is stratified per topic at the configured ratio") {
  SyntheticSpec spec = small_spec(4);
  DatasetBundle b = generate_synthetic(spec);
  std::vector<size_t> test_per_topic(spec.topics, 0);
  for (uint32_t id : b.manifest.test_ids) ++test_per_topic[id / spec.nodes_per_topic];
  for (size_t t = 0; t < spec.topics; ++t) CHECK(test_per_topic[t] == 2);  // 0.2 * 10
  CHECK(b.manifest.train_ids.size() + b.manifest.test_ids.size() == b.manifest.node_count);
}

TEST_CASE("generation is deterministic under the seed") {
  DatasetBundle a = generate_synthetic(small_spec(9));
  DatasetBundle b = generate_synthetic(small_spec(9));
  DatasetBundle c = generate_synthetic(small_spec(10));
  CHECK(a.features == b.features);
  CHECK(a.manifest.test_ids == b.manifest.test_ids);
  CHECK(a.features != c.features);
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].words == b.nodes[i].words);
    CHECK(a.nodes[i].labels == b.nodes[i].labels);
  }
}

TEST_CASE("label words are the first word of each topic and exist in the vocabulary") {
  DatasetBundle b = generate_synthetic(small_spec(5));
  REQUIRE(b.manifest.label_names.size() == 3);
  for (uint32_t p = 0; p < 3; ++p) CHECK(b.manifest.label_names[p] == b.manifest.vocabulary[p * 3]);
  auto queries = runner::label_queries(b.manifest);
  REQUIRE(queries.size() == 3);
  for (uint32_t p = 0; p < 3; ++p) {
    CHECK(queries[p].label == p);
    CHECK(queries[p].word_index == p * 3);
  }
}

TEST_CASE("bundles round-trip through disk bit for bit") {
  TempDir dir("roundtrip");
  SyntheticSpec spec = small_spec(6);
  spec.with_images = true;
  spec.image_channels = 2;
  spec.image_height = 4;
  spec.image_width = 6;
  DatasetBundle a = generate_synthetic(spec);
  save_bundle(a, dir.str("bundle"));
  DatasetBundle b = load_bundle(dir.str("bundle"));
  CHECK(a.features == b.features);
  CHECK(a.images.data == b.images.data);
  CHECK(a.manifest.train_ids == b.manifest.train_ids);
  CHECK(a.manifest.test_ids == b.manifest.test_ids);
  CHECK(a.manifest.vocabulary == b.manifest.vocabulary);
  CHECK(a.manifest.label_names == b.manifest.label_names);
  CHECK(a.signature_regions == b.signature_regions);
  for (size_t i = 0; i < a.nodes.size(); ++i) {
    CHECK(a.nodes[i].words == b.nodes[i].words);
    CHECK(a.nodes[i].labels == b.nodes[i].labels);
  }
  CHECK(b.manifest.synthetic.present);
  CHECK(b.manifest.synthetic.seed == 6);

  // Saving the loaded bundle again produces identical files.
  save_bundle(b, dir.str("bundle2"));
  for (const char* f : {"manifest.json", "nodes.json", "features.f32", "images.f32"}) {
    std::ifstream f1(dir.str("bundle") + "/" + f, std::ios::binary);
    std::ifstream f2(dir.str("bundle2") + "/" + f, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
  }
}

TEST_CASE("feature files must have the exact declared byte length") {
  CHECK(size_t(100) * 49 * 512 * 4 == 10035200u);  // the format arithmetic

  TempDir dir("truncate");
  DatasetBundle a = generate_synthetic(small_spec(7));
  save_bundle(a, dir.str("bundle"));
  const std::string fpath = dir.str("bundle") + "/features.f32";
  const auto full = fs::file_size(fpath);
  fs::resize_file(fpath, full - 8);
  try {
    load_bundle(dir.str("bundle"));
    FAIL("expected CorruptError");
  } catch (const CorruptError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("deficit 8") != std::string::npos);
    CHECK(msg.find(std::to_string(full)) != std::string::npos);
  }
}

TEST_CASE("unsupported manifest versions are version errors") {
  TempDir dir("version");
  DatasetBundle a = generate_synthetic(small_spec(8));
  save_bundle(a, dir.str("bundle"));
  std::string manifest = read_text_file(dir.str("bundle") + "/manifest.json");
  const auto pos = manifest.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  manifest.replace(pos, 12, "\"version\": 9");
  write_text_file_atomic(dir.str("bundle") + "/manifest.json", manifest);
  CHECK_THROWS_WITH_AS(load_bundle(dir.str("bundle")), doctest::Contains("version"), CorruptError);
}

TEST_CASE("missing bundles are io errors naming the path") {
  CHECK_THROWS_WITH_AS(load_bundle("/nonexistent/bundle"), doctest::Contains("/nonexistent/bundle"), IoError);
}

TEST_CASE("config defaults carry the published hyperparameter values") {
  RunConfig cfg = default_run_config();
  CHECK(cfg.triplet.margin == 0.3);
  CHECK(cfg.triplet.similarity == SimilarityKind::sum_norm);
  CHECK(cfg.train.negatives == 3);
  CHECK(cfg.joint.lambda_pos == 10.0);
  CHECK(cfg.joint.beta == 1.0);
  CHECK(cfg.joint.clip_eps == 1e-7);
  CHECK(cfg.train.lr == 0.01);
  CHECK(cfg.train.momentum == 0.9);
  CHECK(cfg.train.nesterov);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.graph_max_links == 50);
  CHECK(cfg.lfc_hidden1 == 128);
  CHECK(cfg.lfc_hidden2 == 32);
  CHECK(cfg.dropout == 0.5);
  CHECK(cfg.classifier.hidden1 == 256);
  CHECK(cfg.classifier.hidden2 == 64);
  CHECK(cfg.classifier.threshold == 0.5);
  CHECK(cfg.classifier.lr == 0.01);
  CHECK(cfg.classifier.momentum == 0.9);
  CHECK(cfg.classifier.nesterov);
}

TEST_CASE("config documents round-trip and reject unknown keys") {
  RunConfig cfg = default_run_config();
  cfg.seed = 99;
  cfg.triplet.similarity = SimilarityKind::cosine;
  cfg.joint.beta = 0.25;
  cfg.train.epochs = 17;
  cfg.embed_logits = true;
  RunConfig back = parse_run_config(run_config_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.triplet.similarity == SimilarityKind::cosine);
  CHECK(back.joint.beta == 0.25);
  CHECK(back.train.epochs == 17);
  CHECK(back.embed_logits);

  CHECK_THROWS_WITH_AS(parse_run_config("{\"trian\": {}}"), doctest::Contains("trian"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config("{\"train\": {\"lr\": 0.01, \"warmup\": 5}}"), doctest::Contains("warmup"),
                       ConfigError);
  CHECK_THROWS_AS(parse_run_config("{\"loss\": {\"margin\": 0}}"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("not json"), ConfigError);
}

TEST_CASE("checkpoints round-trip parameters, velocity, epoch and rng state") {
  TempDir dir("ckpt");
  ModelConfig mc;
  mc.vocab = 4;
  mc.regions = 2;
  mc.feature_dim = 3;
  mc.lfc_hidden1 = 2;
  mc.lfc_hidden2 = 2;
  mc.init_seed = 5;
  DmanModel model(mc);
  SgdOptimizer opt(&model.parameters(), 0.01, 0.9, true);
  opt.velocity()[0][0] = 0.125;
  Rng rng(88);
  rng.next_u64();
  save_checkpoint(dir.str("model.ckpt"), model, opt, 42, rng.state_string());

  Checkpoint ckpt = load_checkpoint(dir.str("model.ckpt"));
  CHECK(ckpt.epoch == 42);
  CHECK(ckpt.model.vocab == 4);
  CHECK(ckpt.velocity[0][0] == 0.125);
  Rng restored(0);
  restored.set_state(ckpt.rng_state);
  CHECK(restored.next_u64() == rng.next_u64());

  DmanModel loaded = model_from_checkpoint(ckpt);
  CHECK(loaded.parameter_checksum() == model.parameter_checksum());
}

TEST_CASE("corrupted checkpoints fail the checksum") {
  TempDir dir("ckpt_bad");
  ModelConfig mc;
  mc.vocab = 3;
  mc.regions = 2;
  mc.feature_dim = 2;
  mc.lfc_hidden1 = 2;
  mc.lfc_hidden2 = 2;
  DmanModel model(mc);
  SgdOptimizer opt(&model.parameters(), 0.01, 0.9, true);
  save_checkpoint(dir.str("model.ckpt"), model, opt, 1, Rng(1).state_string());

  std::fstream f(dir.str("model.ckpt"), std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-24, std::ios::end);  // inside the payload
  const char garbage = 0x5a;
  f.write(&garbage, 1);
  f.close();
  CHECK_THROWS_AS(load_checkpoint(dir.str("model.ckpt")), CorruptError);
  CHECK_THROWS_AS(load_checkpoint(dir.str("missing.ckpt")), IoError);
}

TEST_CASE("embedding files round-trip and validate against the bundle") {
  TempDir dir("emb");
  DatasetBundle b = generate_synthetic(small_spec(11));
  EmbeddingSet set;
  set.dim = 3;
  set.ids = {2, 5, 7};
  set.data = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  for (uint32_t id : set.ids) set.labels.push_back(b.nodes[id].labels);
  save_embeddings(dir.str("e.bin"), set);
  EmbeddingSet back = load_embeddings(dir.str("e.bin"), b);
  CHECK(back.dim == 3);
  CHECK(back.ids == set.ids);
  CHECK(back.data == set.data);
  CHECK(back.labels == set.labels);
}

TEST_CASE("attention exports round-trip") {
  TempDir dir("att");
  AttentionExport exp;
  exp.vocab = 6;
  exp.regions = 3;
  exp.node_id = 4;
  exp.words = {1, 5};
  exp.rows = {0.2, 0.3, 0.5, 0.1, 0.8, 0.1};
  save_attention(dir.str("a.bin"), exp);
  AttentionExport back = load_attention(dir.str("a.bin"));
  CHECK(back.vocab == 6);
  CHECK(back.regions == 3);
  CHECK(back.node_id == 4);
  CHECK(back.words == exp.words);
  CHECK(back.rows == exp.rows);
}

TEST_CASE("graph files round-trip the adjacency and stats") {
  TempDir dir("graph");
  DatasetBundle b = generate_synthetic(small_spec(12));
  MultimodalGraph g = build_graph(b.nodes, 5, 77);
  save_graph(dir.str("g.txt"), g, 77);
  MultimodalGraph back = load_graph(dir.str("g.txt"), b.manifest.node_count);
  CHECK(back.adjacency == g.adjacency);
  CHECK(back.final_edges == g.final_edges);
  CHECK(back.precap_edges == g.precap_edges);
  CHECK(back.capped_nodes == g.capped_nodes);
  CHECK(back.max_links == g.max_links);
  CHECK_THROWS_AS(load_graph(dir.str("g.txt"), 999), CorruptError);
}

TEST_CASE("kv files are sorted and tables are tab-delimited") {
  TempDir dir("kv");
  write_kv(dir.str("m.kv"), {{"zeta", "1"}, {"alpha", "2"}});
  CHECK(read_text_file(dir.str("m.kv")) == "alpha=2\nzeta=1\n");
  write_table(dir.str("t.txt"), {"a", "b"}, {{"1", "2"}, {"3", "4"}});
  CHECK(read_text_file(dir.str("t.txt")) == "a\tb\n1\t2\n3\t4\n");
}

TEST_CASE("derived component seeds differ per role") {
  RunConfig cfg = default_run_config();
  cfg.seed = 7;
  std::set<uint64_t> seeds = {graph_seed(cfg), model_seed(cfg), train_seed(cfg), classifier_seed(cfg)};
  CHECK(seeds.size() == 4);
  RunConfig other = cfg;
  other.seed = 8;
  CHECK(graph_seed(cfg) != graph_seed(other));
}
