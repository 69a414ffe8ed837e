#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/eval.hpp"
#include "core/graph.hpp"
#include "core/model.hpp"
#include "core/trainer.hpp"

namespace dman {

// Echo of the spec a synthetic bundle was generated from; absent for
// user-supplied datasets.
struct SyntheticInfo {
  bool present = false;
  uint32_t topics = 0;
  uint32_t nodes_per_topic = 0;
  uint32_t words_per_topic = 0;
  uint32_t signature_regions = 0;
  double signature_scale = 0.0;
  double noise_sigma = 0.0;
  double word_prob = 0.0;
  double co_label_prob = 0.0;
  uint64_t seed = 0;
};

struct BundleManifest {
  uint32_t version = 1;
  uint32_t node_count = 0;
  uint32_t vocab = 0;        // L
  uint32_t regions = 0;      // D
  uint32_t feature_dim = 0;  // M_feat
  uint32_t classes = 0;      // C
  std::vector<std::string> vocabulary;   // size vocab
  std::vector<std::string> label_names;  // size classes; each present in vocabulary for synthetic data
  std::vector<uint32_t> train_ids;       // sorted; disjoint from test_ids; union covers all ids
  std::vector<uint32_t> test_ids;
  bool has_images = false;
  uint32_t image_channels = 0;
  uint32_t image_height = 0;
  uint32_t image_width = 0;
  SyntheticInfo synthetic;
};

// On disk a bundle is a directory:
//   manifest.json   counts, vocabulary, label names, split
//   nodes.json      per node: id, label indices, word indices
//   features.f32    little-endian float32, row-major (node, region, feature);
//                   byte length is exactly node_count*regions*feature_dim*4
//   images.f32      optional raw planar images for the patch-projection path
struct DatasetBundle {
  BundleManifest manifest;
  std::vector<MultimodalNode> nodes;
  std::vector<float> features;
  std::vector<std::vector<uint32_t>> signature_regions;  // generator metadata; may be empty
  RawImageStore images;

  std::shared_ptr<RegionProvider> make_provider() const;
  std::shared_ptr<RegionProvider> make_patch_provider(uint64_t seed) const;
};

struct SyntheticSpec {
  uint32_t topics = 4;
  uint32_t nodes_per_topic = 50;
  uint32_t regions = 8;       // D
  uint32_t feature_dim = 16;  // M_feat
  uint32_t vocab = 40;        // L
  uint32_t words_per_topic = 10;
  uint32_t signature_regions = 1;  // planted regions per node
  double signature_scale = 2.0;   // magnitude of signature coordinates
  double noise_sigma = 0.3;
  double word_prob = 0.9;
  double co_label_prob = 0.05;
  double test_fraction = 0.2;  // 4:1 train:test split
  uint64_t seed = 0;
  bool with_images = false;
  uint32_t image_channels = 3;
  uint32_t image_height = 16;
  uint32_t image_width = 16;
};

void validate(const SyntheticSpec& spec);

// Planted-structure generator. Topic p owns the disjoint word block
// [p*words_per_topic, (p+1)*words_per_topic) and a disjoint coordinate block
// of the feature space as its region signature; with zero noise, signatures
// of different topics are exactly orthogonal. Per node: its topic's words
// appear independently with word_prob (the label word is forced if the draw
// comes up empty), signature_regions uniformly chosen regions carry the
// topic signature plus Gaussian noise, the rest are pure noise, and a second
// label from another topic is attached with co_label_prob.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

void save_bundle(const DatasetBundle& bundle, const std::string& dir);
DatasetBundle load_bundle(const std::string& dir);

// Whole-run configuration, one declarative JSON document. Every default is
// the library default; unknown keys are rejected.
struct RunConfig {
  uint64_t seed = 0;
  uint32_t graph_max_links = 50;
  size_t lfc_hidden1 = 128;
  size_t lfc_hidden2 = 32;
  double dropout = 0.5;
  bool embed_logits = false;
  bool uniform_attention = false;
  TripletLossConfig triplet;
  JointLossConfig joint;
  TrainConfig train;
  ClassifierConfig classifier;
};

RunConfig default_run_config();
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_json(const RunConfig& cfg);

// Derived per-component seeds, all fanned out from RunConfig::seed.
uint64_t graph_seed(const RunConfig& cfg);
uint64_t model_seed(const RunConfig& cfg);
uint64_t train_seed(const RunConfig& cfg);
uint64_t classifier_seed(const RunConfig& cfg);

ModelConfig make_model_config(const RunConfig& cfg, const BundleManifest& manifest);

struct Checkpoint {
  ModelConfig model;
  int epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, Tensor>> params;
  std::vector<std::vector<double>> velocity;
};

void save_checkpoint(const std::string& path, const DmanModel& model, const SgdOptimizer& opt, int epoch,
                     const std::string& rng_state);
Checkpoint load_checkpoint(const std::string& path);
DmanModel model_from_checkpoint(const Checkpoint& ckpt);

void save_embeddings(const std::string& path, const EmbeddingSet& embeddings);
EmbeddingSet load_embeddings(const std::string& path, const DatasetBundle& bundle);

struct AttentionExport {
  uint32_t vocab = 0;
  uint32_t regions = 0;
  uint32_t node_id = 0;
  std::vector<uint32_t> words;
  std::vector<double> rows;  // words.size() x regions
};

void save_attention(const std::string& path, const AttentionExport& exp);
AttentionExport load_attention(const std::string& path);

void save_graph(const std::string& path, const MultimodalGraph& graph, uint64_t seed);
MultimodalGraph load_graph(const std::string& path, size_t expected_nodes);

// Deterministic text outputs: a tab-delimited table and a sorted key=value
// file. Both end with a newline and never embed timestamps.
void write_table(const std::string& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
void write_kv(const std::string& path, std::vector<std::pair<std::string, std::string>> pairs);
void write_train_report(const std::string& path, const TrainReport& report);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace dman
