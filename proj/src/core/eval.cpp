#include "core/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dman {

void validate(const ClassifierConfig& cfg) {
  if (cfg.hidden1 < 1 || cfg.hidden2 < 1) throw ConfigError("ClassifierConfig: hidden widths must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("ClassifierConfig: epochs must be >= 0");
  if (cfg.batch_size < 1) throw ConfigError("ClassifierConfig: batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("ClassifierConfig: lr must be > 0");
  if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) throw ConfigError("ClassifierConfig: threshold must be in (0,1)");
}

Matrix truth_matrix(const std::vector<std::vector<uint32_t>>& labels, size_t classes) {
  Matrix m;
  m.rows = labels.size();
  m.cols = classes;
  m.values.assign(m.rows * m.cols, 0.0);
  for (size_t i = 0; i < labels.size(); ++i)
    for (uint32_t c : labels[i]) {
      if (c >= classes) throw InputError("truth_matrix: label index out of range");
      m.at(i, c) = 1.0;
    }
  return m;
}

ClassifyMetrics classify_metrics(const Matrix& probabilities, const Matrix& truth, double threshold) {
  if (probabilities.rows != truth.rows || probabilities.cols != truth.cols) {
    throw InputError("classify_metrics: prediction and truth shapes differ");
  }
  if (!(threshold > 0.0 && threshold < 1.0)) throw InputError("classify_metrics: threshold must be in (0,1)");

  const size_t n = probabilities.rows, c = probabilities.cols;
  ClassifyMetrics m;
  size_t tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_p_sum = 0, macro_r_sum = 0, macro_f1_sum = 0;
  for (size_t cls = 0; cls < c; ++cls) {
    size_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      const bool pred = probabilities.at(i, cls) > threshold;
      const bool pos = truth.at(i, cls) != 0.0;
      if (pred && pos) ++tp;
      else if (pred) ++fp;
      else if (pos) ++fn;
    }
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    if (tp + fp == 0) ++m.zero_precision_classes;
    if (tp + fn == 0) ++m.zero_recall_classes;
    macro_p_sum += p;
    macro_r_sum += r;
    macro_f1_sum += (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  m.micro_p = (tp_all + fp_all) ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fp_all) : 0.0;
  m.micro_r = (tp_all + fn_all) ? static_cast<double>(tp_all) / static_cast<double>(tp_all + fn_all) : 0.0;
  m.micro_f1 = (m.micro_p + m.micro_r) > 0.0 ? 2.0 * m.micro_p * m.micro_r / (m.micro_p + m.micro_r) : 0.0;
  m.macro_p = c ? macro_p_sum / static_cast<double>(c) : 0.0;
  m.macro_r = c ? macro_r_sum / static_cast<double>(c) : 0.0;
  m.macro_f1 = c ? macro_f1_sum / static_cast<double>(c) : 0.0;
  return m;
}

double mean_average_precision(const Matrix& scores, const Matrix& truth, size_t* excluded_out) {
  if (scores.rows != truth.rows || scores.cols != truth.cols) {
    throw InputError("mean_average_precision: score and truth shapes differ");
  }
  const size_t n = scores.rows, c = scores.cols;
  double ap_sum = 0.0;
  size_t included = 0, excluded = 0;
  std::vector<size_t> order(n);
  for (size_t cls = 0; cls < c; ++cls) {
    size_t positives = 0;
    for (size_t i = 0; i < n; ++i)
      if (truth.at(i, cls) != 0.0) ++positives;
    if (positives == 0) {
      ++excluded;
      continue;
    }
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return scores.at(a, cls) > scores.at(b, cls); });
    size_t hits = 0;
    double ap = 0.0;
    for (size_t rank = 0; rank < n; ++rank) {
      if (truth.at(order[rank], cls) != 0.0) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
      }
    }
    ap_sum += ap / static_cast<double>(positives);
    ++included;
  }
  if (excluded_out) *excluded_out = excluded;
  if (included == 0) throw InputError("mean_average_precision: no class has a positive item");
  return ap_sum / static_cast<double>(included);
}

SearchResult cross_modal_search(const std::vector<SearchQuery>& queries, const EmbeddingSet& embeddings,
                                const std::vector<size_t>& ks) {
  if (embeddings.count() == 0) throw InputError("cross_modal_search: empty embedding set");
  if (queries.empty()) throw InputError("cross_modal_search: no queries");
  if (ks.empty()) throw InputError("cross_modal_search: no k values");
  for (size_t k : ks) {
    if (k < 1 || k > embeddings.count()) {
      throw InputError("cross_modal_search: k=" + std::to_string(k) + " outside [1, " +
                       std::to_string(embeddings.count()) + "]");
    }
  }

  const size_t n = embeddings.count(), dim = embeddings.dim;
  SearchResult result;
  result.ks = ks;
  result.p_at_k.assign(ks.size(), 0.0);
  result.query_count = queries.size();

  std::vector<size_t> order(n);
  std::vector<double> dist(n);
  for (const auto& q : queries) {
    if (q.word_index >= dim) throw InputError("cross_modal_search: query word index out of range");
    size_t relevant_total = 0;
    for (size_t i = 0; i < n; ++i) {
      // Squared Euclidean distance to the one-hot query; the ordering is the
      // same as for the true distance.
      double d = 0.0;
      const double* row = embeddings.row(i);
      for (size_t j = 0; j < dim; ++j) {
        const double delta = row[j] - (j == q.word_index ? 1.0 : 0.0);
        d += delta * delta;
      }
      dist[i] = d;
      const auto& lab = embeddings.labels[i];
      if (std::binary_search(lab.begin(), lab.end(), q.label)) ++relevant_total;
    }
    if (relevant_total == 0) {
      throw InputError("cross_modal_search: query label " + std::to_string(q.label) + " has no relevant item");
    }
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return dist[a] < dist[b]; });
    for (size_t ki = 0; ki < ks.size(); ++ki) {
      size_t hits = 0;
      for (size_t rank = 0; rank < ks[ki]; ++rank) {
        const auto& lab = embeddings.labels[order[rank]];
        if (std::binary_search(lab.begin(), lab.end(), q.label)) ++hits;
      }
      result.p_at_k[ki] += static_cast<double>(hits) / static_cast<double>(ks[ki]);
    }
  }
  for (double& v : result.p_at_k) v /= static_cast<double>(queries.size());
  return result;
}

namespace {

Tensor glorot_matrix(size_t rows, size_t cols, size_t fan_in, size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from({rows, cols}, std::move(values), true);
}

}  // namespace

DownstreamClassifier::DownstreamClassifier(size_t input_dim, size_t classes, const ClassifierConfig& cfg)
    : input_dim_(input_dim), classes_(classes), cfg_(cfg) {
  validate(cfg_);
  if (input_dim_ < 1 || classes_ < 1) throw ConfigError("DownstreamClassifier: dims must be >= 1");
  Rng rng(cfg_.seed);
  params_.push_back({"fc1.w", glorot_matrix(input_dim_, cfg_.hidden1, input_dim_, cfg_.hidden1, rng)});
  params_.push_back({"fc1.b", Tensor::zeros({cfg_.hidden1}, true)});
  params_.push_back({"fc2.w", glorot_matrix(cfg_.hidden1, cfg_.hidden2, cfg_.hidden1, cfg_.hidden2, rng)});
  params_.push_back({"fc2.b", Tensor::zeros({cfg_.hidden2}, true)});
  params_.push_back({"fc3.w", Tensor::zeros({cfg_.hidden2, classes_}, true)});
  params_.push_back({"fc3.b", Tensor::zeros({classes_}, true)});
}

Tensor DownstreamClassifier::forward(Tape& tape, const Tensor& inputs) const {
  Tensor h1 = tape.tanh(tape.add_rowvec(tape.matmul(inputs, params_[0].tensor), params_[1].tensor));
  Tensor h2 = tape.tanh(tape.add_rowvec(tape.matmul(h1, params_[2].tensor), params_[3].tensor));
  return tape.sigmoid(tape.add_rowvec(tape.matmul(h2, params_[4].tensor), params_[5].tensor));
}

double DownstreamClassifier::fit(const EmbeddingSet& train) {
  if (train.count() == 0) throw InputError("DownstreamClassifier::fit: empty training set");
  if (train.dim != input_dim_) throw DimensionError("DownstreamClassifier::fit: embedding dim mismatch");

  std::vector<size_t> per_class(classes_, 0);
  for (const auto& lab : train.labels)
    for (uint32_t c : lab) {
      if (c >= classes_) throw InputError("DownstreamClassifier::fit: label out of range");
      ++per_class[c];
    }
  absent_classes_.clear();
  for (size_t c = 0; c < classes_; ++c)
    if (per_class[c] == 0) absent_classes_.push_back(static_cast<uint32_t>(c));

  const Matrix truth = truth_matrix(train.labels, classes_);
  Rng rng(derive_seed(cfg_.seed, "classifier-train"));
  SgdOptimizer opt(&params_, cfg_.lr, cfg_.momentum, cfg_.nesterov);

  std::vector<uint32_t> order(train.count());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<uint32_t>(i);

  const double clip_eps = 1e-7;
  auto batch_tensors = [&](const std::vector<uint32_t>& idx) {
    std::vector<double> x(idx.size() * input_dim_), t(idx.size() * classes_);
    for (size_t i = 0; i < idx.size(); ++i) {
      const double* row = train.row(idx[i]);
      std::copy(row, row + input_dim_, x.begin() + static_cast<ptrdiff_t>(i * input_dim_));
      for (size_t c = 0; c < classes_; ++c) t[i * classes_ + c] = truth.at(idx[i], c);
    }
    return std::pair<Tensor, Tensor>{Tensor::from({idx.size(), input_dim_}, std::move(x)),
                                     Tensor::from({idx.size(), classes_}, std::move(t))};
  };

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    rng.shuffle(order);
    const size_t bs = static_cast<size_t>(cfg_.batch_size);
    for (size_t begin = 0; begin < order.size(); begin += bs) {
      const size_t end = std::min(begin + bs, order.size());
      std::vector<uint32_t> idx(order.begin() + static_cast<ptrdiff_t>(begin),
                                order.begin() + static_cast<ptrdiff_t>(end));
      Tape tape;
      auto [x, t] = batch_tensors(idx);
      Tensor probs = forward(tape, x);
      Tensor y = tape.clip(probs, clip_eps, 1.0 - clip_eps);
      Tensor pos = tape.mul(t, tape.log(y));
      Tensor neg = tape.mul(tape.affine(t, -1.0, 1.0), tape.log(tape.affine(y, -1.0, 1.0)));
      Tensor loss = tape.affine(tape.mean(tape.add(pos, neg)), -1.0, 0.0);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
  }

  // Mean per-element BCE over the whole training set with the final weights.
  std::vector<uint32_t> all(order.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<uint32_t>(i);
  Tape tape(false);
  auto [x, t] = batch_tensors(all);
  Tensor y = tape.clip(forward(tape, x), clip_eps, 1.0 - clip_eps);
  Tensor pos = tape.mul(t, tape.log(y));
  Tensor neg = tape.mul(tape.affine(t, -1.0, 1.0), tape.log(tape.affine(y, -1.0, 1.0)));
  return -tape.mean(tape.add(pos, neg)).value();
}

Matrix DownstreamClassifier::predict(const EmbeddingSet& embeddings) const {
  if (embeddings.dim != input_dim_) throw DimensionError("DownstreamClassifier::predict: embedding dim mismatch");
  Tape tape(false);
  std::vector<double> x(embeddings.data);
  Tensor inputs = Tensor::from({embeddings.count(), input_dim_}, std::move(x));
  Tensor probs = forward(tape, inputs);
  Matrix out;
  out.rows = embeddings.count();
  out.cols = classes_;
  out.values.assign(probs.values().begin(), probs.values().end());
  return out;
}

}  // namespace dman
