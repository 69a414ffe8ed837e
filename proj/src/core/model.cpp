#include "core/model.hpp"

#include <algorithm>
#include <cmath>

namespace dman {

PrecomputedRegions::PrecomputedRegions(size_t node_count, size_t regions, size_t feature_dim,
                                       std::vector<float> features)
    : count_(node_count), regions_(regions), dim_(feature_dim), features_(std::move(features)) {
  if (features_.size() != count_ * regions_ * dim_) {
    throw DimensionError("PrecomputedRegions: feature array has " + std::to_string(features_.size()) +
                         " values, expected " + std::to_string(count_ * regions_ * dim_));
  }
}

Tensor PrecomputedRegions::regions_for(uint32_t node_id) const {
  if (node_id >= count_) throw InputError("PrecomputedRegions: node id out of range");
  const size_t stride = regions_ * dim_;
  std::vector<double> values(stride);
  const float* base = features_.data() + static_cast<size_t>(node_id) * stride;
  for (size_t i = 0; i < stride; ++i) values[i] = static_cast<double>(base[i]);
  return Tensor::from({regions_, dim_}, std::move(values));
}

namespace {

// Largest divisor of n not exceeding sqrt(n); the tiling grid is rows x cols
// with rows * cols == n.
size_t grid_rows_for(size_t n) {
  size_t best = 1;
  for (size_t r = 1; r * r <= n; ++r)
    if (n % r == 0) best = r;
  return best;
}

}  // namespace

PatchProjector::PatchProjector(std::shared_ptr<const RawImageStore> images, size_t regions, size_t feature_dim,
                               uint64_t seed)
    : images_(std::move(images)), regions_(regions), dim_(feature_dim) {
  if (!images_ || images_->count() == 0) throw InputError("PatchProjector: empty image store");
  if (regions_ < 1 || dim_ < 1) throw ConfigError("PatchProjector: regions and feature_dim must be >= 1");
  grid_rows_ = grid_rows_for(regions_);
  grid_cols_ = regions_ / grid_rows_;
  if (images_->height < grid_rows_ || images_->width < grid_cols_) {
    throw ConfigError("PatchProjector: image " + std::to_string(images_->height) + "x" +
                      std::to_string(images_->width) + " too small for a " + std::to_string(grid_rows_) + "x" +
                      std::to_string(grid_cols_) + " patch grid");
  }
  summary_dim_ = 2 * images_->channels + 2;
  projection_.resize(dim_ * summary_dim_);
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(summary_dim_));
  for (double& v : projection_) v = rng.normal() * scale;
}

Tensor PatchProjector::regions_for(uint32_t node_id) const {
  if (node_id >= images_->count()) throw InputError("PatchProjector: node id out of range");
  const size_t c = images_->channels, h = images_->height, w = images_->width;
  const float* img = images_->data.data() + static_cast<size_t>(node_id) * images_->pixels_per_image();
  std::vector<double> out(regions_ * dim_);
  std::vector<double> summary(summary_dim_);
  for (size_t patch = 0; patch < regions_; ++patch) {
    const size_t pr = patch / grid_cols_, pc = patch % grid_cols_;
    const size_t r0 = pr * h / grid_rows_, r1 = (pr + 1) * h / grid_rows_;
    const size_t c0 = pc * w / grid_cols_, c1 = (pc + 1) * w / grid_cols_;
    const double count = static_cast<double>((r1 - r0) * (c1 - c0));
    for (size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0, sq = 0.0;
      for (size_t r = r0; r < r1; ++r)
        for (size_t col = c0; col < c1; ++col) {
          const double v = img[ch * h * w + r * w + col];
          sum += v;
          sq += v * v;
        }
      const double mean = sum / count;
      summary[ch] = mean;
      summary[c + ch] = std::sqrt(std::max(0.0, sq / count - mean * mean));
    }
    summary[2 * c] = (static_cast<double>(r0 + r1) / 2.0) / static_cast<double>(h);
    summary[2 * c + 1] = (static_cast<double>(c0 + c1) / 2.0) / static_cast<double>(w);
    for (size_t f = 0; f < dim_; ++f) {
      double acc = 0.0;
      for (size_t s = 0; s < summary_dim_; ++s) acc += projection_[f * summary_dim_ + s] * summary[s];
      out[patch * dim_ + f] = acc;
    }
  }
  return Tensor::from({regions_, dim_}, std::move(out));
}

namespace {

Tensor glorot(Shape shape, size_t fan_in, size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  const size_t n = shape_size(shape);
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), /*requires_grad=*/true);
}

}  // namespace

DmanModel::DmanModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg_.vocab < 1 || cfg_.regions < 1 || cfg_.feature_dim < 1) {
    throw ConfigError("DmanModel: vocab, regions and feature_dim must be >= 1");
  }
  if (cfg_.lfc_hidden1 < 1 || cfg_.lfc_hidden2 < 1) throw ConfigError("DmanModel: LFC widths must be >= 1");
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ConfigError("DmanModel: dropout must be in [0, 1)");

  const size_t L = cfg_.vocab, M = cfg_.feature_dim, d1 = cfg_.lfc_hidden1, d2 = cfg_.lfc_hidden2;
  Rng rng(cfg_.init_seed);
  params_.push_back({"attention.w", glorot({L, M}, M, L, rng)});
  params_.push_back({"attention.b", Tensor::zeros({L}, true)});
  params_.push_back({"lfc.w1", glorot({L, d1, M}, M, d1, rng)});
  params_.push_back({"lfc.b1", Tensor::zeros({L, d1}, true)});
  params_.push_back({"lfc.w2", glorot({L, d2, d1}, d1, d2, rng)});
  params_.push_back({"lfc.b2", Tensor::zeros({L, d2}, true)});
  params_.push_back({"lfc.w3", glorot({L, 1, d2}, d2, 1, rng)});
  params_.push_back({"lfc.b3", Tensor::zeros({L, 1}, true)});
}

Tensor& DmanModel::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.tensor;
  throw InputError("DmanModel: no parameter named " + name);
}

const Tensor& DmanModel::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw InputError("DmanModel: no parameter named " + name);
}

size_t DmanModel::parameter_count() const {
  size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

uint64_t DmanModel::parameter_checksum() const {
  Fnv1a hash;
  for (const auto& p : params_)
    for (double v : p.tensor.values()) hash.update_f64(v);
  return hash.digest();
}

Tensor DmanModel::attention_scores(Tape& tape, const Tensor& regions) const {
  if (regions.rank() != 2 || regions.extent(0) != cfg_.regions || regions.extent(1) != cfg_.feature_dim) {
    throw DimensionError("attention_scores: regions shape " + shape_str(regions.shape()) + ", expected (" +
                         std::to_string(cfg_.regions) + "," + std::to_string(cfg_.feature_dim) + ")");
  }
  const Tensor& w = param("attention.w");
  const Tensor& b = param("attention.b");
  Tensor scores = tape.matmul(w, tape.transpose(regions));
  Tensor bias_col = tape.reshape(b, {cfg_.vocab, 1});
  return tape.tanh(tape.add(scores, bias_col));
}

Tensor DmanModel::attention_weights(Tape& tape, const Tensor& scores) { return tape.softmax(scores, 1); }

Tensor DmanModel::attend(Tape& tape, const Tensor& weights, const Tensor& regions) {
  if (weights.rank() != 2 || regions.rank() != 2 || weights.extent(1) != regions.extent(0)) {
    throw DimensionError("attend: incompatible shapes " + shape_str(weights.shape()) + " and " +
                         shape_str(regions.shape()));
  }
  return tape.matmul(weights, regions);
}

Tensor DmanModel::dropout(Tape& tape, const Tensor& x, Rng* rng) const {
  const double p = cfg_.dropout;
  if (p == 0.0) return x;
  if (!rng) throw InputError("dropout: training mode requires a random source");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (double& v : mask) v = rng->uniform() < p ? 0.0 : keep_scale;
  return tape.mul(x, Tensor::from(x.shape(), std::move(mask)));
}

DmanModel::LfcOut DmanModel::lfc_pipeline(Tape& tape, const Tensor& attended, bool training, Rng* rng) const {
  if (attended.rank() != 2 || attended.extent(0) != cfg_.vocab || attended.extent(1) != cfg_.feature_dim) {
    throw DimensionError("lfc_forward: input shape " + shape_str(attended.shape()));
  }
  Tensor h1 = tape.tanh(tape.lfc_linear(param("lfc.w1"), param("lfc.b1"), attended));
  if (training) h1 = dropout(tape, h1, rng);
  Tensor h2 = tape.tanh(tape.lfc_linear(param("lfc.w2"), param("lfc.b2"), h1));
  if (training) h2 = dropout(tape, h2, rng);
  LfcOut out;
  out.logits = tape.reshape(tape.lfc_linear(param("lfc.w3"), param("lfc.b3"), h2), {cfg_.vocab});
  out.probs = tape.sigmoid(out.logits);
  return out;
}

Tensor DmanModel::lfc_forward(Tape& tape, const Tensor& attended, bool training, Rng* rng) const {
  return lfc_pipeline(tape, attended, training, rng).probs;
}

DmanModel::Forward DmanModel::forward(Tape& tape, const Tensor& regions, bool training, Rng* rng) const {
  Forward f;
  if (cfg_.uniform_attention) {
    f.attention = Tensor::full({cfg_.vocab, cfg_.regions}, 1.0 / static_cast<double>(cfg_.regions));
  } else {
    f.attention = attention_weights(tape, attention_scores(tape, regions));
  }
  Tensor attended = attend(tape, f.attention, regions);
  LfcOut lfc = lfc_pipeline(tape, attended, training, rng);
  f.confidences = lfc.probs;
  f.embedding = cfg_.embed_logits ? lfc.logits : lfc.probs;
  return f;
}

Tensor one_hot_text(const std::vector<uint32_t>& words, size_t vocab) {
  std::vector<double> values(vocab, 0.0);
  for (uint32_t w : words) {
    if (w >= vocab) throw InputError("one_hot_text: word index out of range");
    values[w] = 1.0;
  }
  return Tensor::from({vocab}, std::move(values));
}

}  // namespace dman
