#pragma once

#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace dman {

enum class SimilarityKind {
  sum_norm,  // dot(a, b) / (|a| + |b|)
  cosine,    // dot(a, b) / (|a| * |b|)
};

enum class TripletReduction {
  sum,              // add every triplet term as-is
  mean_per_anchor,  // average the k terms contributed by each anchor
};

struct TripletLossConfig {
  double margin = 0.3;
  SimilarityKind similarity = SimilarityKind::sum_norm;
  TripletReduction reduction = TripletReduction::sum;
};

struct JointLossConfig {
  double lambda_pos = 10.0;  // weight on present-word terms of the BCE
  double beta = 1.0;         // weight on the content loss in the joint sum
  double clip_eps = 1e-7;    // probability clip applied before any log
};

void validate(const TripletLossConfig& cfg);
void validate(const JointLossConfig& cfg);

// Similarity of two embeddings. sum_norm is dot / (|a| + |b|), which scales
// linearly with the inputs; cosine is the scale-invariant alternative.
// Degenerate inputs (zero denominator) raise DomainError.
Tensor similarity(Tape& tape, const Tensor& a, const Tensor& b, const TripletLossConfig& cfg);

// max(0, margin - sim(anchor, pos) + sim(anchor, neg)).
Tensor hinge_triplet_loss(Tape& tape, const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                          const TripletLossConfig& cfg);

// -sum_k [ lambda * t_k * log(y_k) + (1 - t_k) * log(1 - y_k) ] with y
// clipped to [clip_eps, 1 - clip_eps]. target must be a 0/1 vector.
Tensor weighted_bce(Tape& tape, const Tensor& confidences, const Tensor& target, const JointLossConfig& cfg);

struct TripletEmbeddings {
  Tensor anchor;
  Tensor positive;
  Tensor negative;
  double weight = 1.0;  // 1/k under mean_per_anchor reduction
};

struct ContentPair {
  Tensor confidences;
  Tensor target;
};

// Hinge sum over the batch's triplets plus beta times the BCE sum over the
// batch's nodes. One scalar; one backward pass covers both terms.
Tensor joint_loss(Tape& tape, const std::vector<TripletEmbeddings>& triplets,
                  const std::vector<ContentPair>& content, const TripletLossConfig& tcfg,
                  const JointLossConfig& jcfg);

}  // namespace dman
