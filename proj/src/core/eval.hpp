#pragma once

#include <cstdint>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"
#include "core/trainer.hpp"

namespace dman {

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> values;

  double at(size_t r, size_t c) const { return values[r * cols + c]; }
  double& at(size_t r, size_t c) { return values[r * cols + c]; }
};

// Evaluation-mode embeddings for a node subset, aligned with ground truth.
struct EmbeddingSet {
  size_t dim = 0;
  std::vector<uint32_t> ids;
  std::vector<double> data;  // count() x dim, row-major
  std::vector<std::vector<uint32_t>> labels;

  size_t count() const { return ids.size(); }
  const double* row(size_t i) const { return data.data() + i * dim; }
};

struct ClassifierConfig {
  size_t hidden1 = 256;
  size_t hidden2 = 64;
  int epochs = 200;
  int batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  bool nesterov = true;
  double threshold = 0.5;
  uint64_t seed = 0;
};

void validate(const ClassifierConfig& cfg);

struct ClassifyMetrics {
  double micro_p = 0, micro_r = 0, micro_f1 = 0;
  double macro_p = 0, macro_r = 0, macro_f1 = 0;
  double map = 0;
  size_t zero_precision_classes = 0;  // classes with no predicted positives
  size_t zero_recall_classes = 0;     // classes with no true positives
  size_t map_excluded_classes = 0;    // classes without positives, dropped from mAP
};

Matrix truth_matrix(const std::vector<std::vector<uint32_t>>& labels, size_t classes);

// Thresholded multi-label precision/recall/F1. Micro metrics pool TP/FP/FN
// over every (item, class) cell; macro metrics average per-class values with
// zero-denominator classes contributing 0 (counted in the record). Does not
// fill the map field.
ClassifyMetrics classify_metrics(const Matrix& probabilities, const Matrix& truth, double threshold);

// Mean over classes of average precision. Ranking is by descending score
// with ties broken by ascending item index; classes with no positive items
// are excluded and counted via excluded_out.
double mean_average_precision(const Matrix& scores, const Matrix& truth, size_t* excluded_out = nullptr);

// A label-word query: one-hot at word_index in the vocabulary space.
struct SearchQuery {
  uint32_t label = 0;
  uint32_t word_index = 0;
};

struct SearchResult {
  std::vector<size_t> ks;
  std::vector<double> p_at_k;  // aligned with ks, averaged over queries
  size_t query_count = 0;
};

// Ranks test embeddings by ascending Euclidean distance to each one-hot
// query (ties by ascending index); an item is relevant iff its label set
// contains the query label. Every query must have at least one relevant
// item and every k must be within the embedding count.
SearchResult cross_modal_search(const std::vector<SearchQuery>& queries, const EmbeddingSet& embeddings,
                                const std::vector<size_t>& ks);

// Three dense layers (input -> hidden1 -> hidden2 -> classes) with tanh
// hidden activations and a sigmoid head, trained with unweighted mean BCE
// under the same SGD settings as the main model. The output layer starts at
// zero, so an untrained classifier predicts exactly 0.5 everywhere.
class DownstreamClassifier {
 public:
  DownstreamClassifier(size_t input_dim, size_t classes, const ClassifierConfig& cfg);

  // Returns the mean per-element BCE over the training set after the final
  // epoch. Classes absent from the training labels are recorded and their
  // outputs train toward zero.
  double fit(const EmbeddingSet& train);

  Matrix predict(const EmbeddingSet& embeddings) const;

  size_t classes() const { return classes_; }
  const std::vector<uint32_t>& absent_classes() const { return absent_classes_; }
  const std::vector<NamedParam>& parameters() const { return params_; }

 private:
  Tensor forward(Tape& tape, const Tensor& inputs) const;

  size_t input_dim_, classes_;
  ClassifierConfig cfg_;
  std::vector<NamedParam> params_;
  std::vector<uint32_t> absent_classes_;
};

}  // namespace dman
