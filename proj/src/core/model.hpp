#pragma once

#include <memory>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace dman {

// Source of per-image region features: a (regions, feature_dim) matrix per
// node. Implementations must be pure readers; providers are shared across
// evaluation threads.
class RegionProvider {
 public:
  virtual ~RegionProvider() = default;
  virtual size_t node_count() const = 0;
  virtual size_t region_count() const = 0;
  virtual size_t feature_dim() const = 0;
  virtual Tensor regions_for(uint32_t node_id) const = 0;
};

// Serves feature matrices stored ahead of time (float32 at rest, float64 in
// tensors; the widening conversion is exact).
class PrecomputedRegions : public RegionProvider {
 public:
  PrecomputedRegions(size_t node_count, size_t regions, size_t feature_dim, std::vector<float> features);

  size_t node_count() const override { return count_; }
  size_t region_count() const override { return regions_; }
  size_t feature_dim() const override { return dim_; }
  Tensor regions_for(uint32_t node_id) const override;

 private:
  size_t count_, regions_, dim_;
  std::vector<float> features_;
};

// Raw images in planar (channels, height, width) float layout, node-major.
struct RawImageStore {
  size_t channels = 0;
  size_t height = 0;
  size_t width = 0;
  std::vector<float> data;

  size_t pixels_per_image() const { return channels * height * width; }
  size_t count() const { return pixels_per_image() ? data.size() / pixels_per_image() : 0; }
};

// Deterministic featurizer standing in for a convolutional feature stack:
// tiles each image into a fixed grid of `regions` patches, summarizes every
// patch (per-channel mean and spread plus the patch centroid) and applies a
// seeded random linear map to feature_dim. Pure function of (image, seed).
class PatchProjector : public RegionProvider {
 public:
  PatchProjector(std::shared_ptr<const RawImageStore> images, size_t regions, size_t feature_dim, uint64_t seed);

  size_t node_count() const override { return images_->count(); }
  size_t region_count() const override { return regions_; }
  size_t feature_dim() const override { return dim_; }
  Tensor regions_for(uint32_t node_id) const override;

 private:
  std::shared_ptr<const RawImageStore> images_;
  size_t regions_, dim_;
  size_t grid_rows_, grid_cols_;
  size_t summary_dim_;
  std::vector<double> projection_;  // (dim_, summary_dim_)
};

struct ModelConfig {
  size_t vocab = 0;        // L
  size_t regions = 0;      // D
  size_t feature_dim = 0;  // M_feat
  size_t lfc_hidden1 = 128;
  size_t lfc_hidden2 = 32;
  double dropout = 0.5;
  bool embed_logits = false;       // use pre-sigmoid outputs as the embedding
  bool uniform_attention = false;  // ablation: fixed 1/regions weights
  uint64_t init_seed = 0;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// The forward pipeline from region features to per-word confidences:
// attention scores -> row-softmax weights -> attended features -> per-word
// LFC stack -> sigmoid confidences. Word k's LFC parameters are disjoint
// from every other word's.
class DmanModel {
 public:
  explicit DmanModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Stable registration order; checkpoints and the optimizer rely on it.
  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  size_t parameter_count() const;
  uint64_t parameter_checksum() const;

  // tanh(w regions^T + b), shape (vocab, regions); entries in (-1, 1).
  Tensor attention_scores(Tape& tape, const Tensor& regions) const;

  // Row-softmax of the scores; every word row sums to 1.
  static Tensor attention_weights(Tape& tape, const Tensor& scores);

  // Attention-weighted sum of region vectors per word, shape (vocab, feature_dim).
  static Tensor attend(Tape& tape, const Tensor& weights, const Tensor& regions);

  // Per-word stack: tanh -> dropout -> tanh -> dropout -> sigmoid, all with
  // word-local parameters. Inverted dropout: evaluation mode is the identity.
  Tensor lfc_forward(Tape& tape, const Tensor& attended, bool training, Rng* rng) const;

  struct Forward {
    Tensor confidences;  // (vocab,) in (0, 1)
    Tensor attention;    // (vocab, regions) row-stochastic
    Tensor embedding;    // confidences, or logits when embed_logits is set
  };
  Forward forward(Tape& tape, const Tensor& regions, bool training, Rng* rng = nullptr) const;

 private:
  struct LfcOut {
    Tensor probs;
    Tensor logits;
  };
  LfcOut lfc_pipeline(Tape& tape, const Tensor& attended, bool training, Rng* rng) const;
  Tensor dropout(Tape& tape, const Tensor& x, Rng* rng) const;

  ModelConfig cfg_;
  std::vector<NamedParam> params_;
};

// Dense 0/1 text vector from sorted word indices.
Tensor one_hot_text(const std::vector<uint32_t>& words, size_t vocab);

}  // namespace dman
