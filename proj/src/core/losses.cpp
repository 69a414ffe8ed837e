#include "core/losses.hpp"

namespace dman {

void validate(const TripletLossConfig& cfg) {
  if (!(cfg.margin > 0.0)) throw ConfigError("TripletLossConfig: margin must be > 0");
}

void validate(const JointLossConfig& cfg) {
  if (!(cfg.lambda_pos > 0.0)) throw ConfigError("JointLossConfig: lambda_pos must be > 0");
  if (cfg.beta < 0.0) throw ConfigError("JointLossConfig: beta must be >= 0");
  if (!(cfg.clip_eps > 0.0 && cfg.clip_eps < 0.5)) throw ConfigError("JointLossConfig: clip_eps must be in (0, 0.5)");
}

Tensor similarity(Tape& tape, const Tensor& a, const Tensor& b, const TripletLossConfig& cfg) {
  auto dn = tape.dot_and_norm(a, b);
  if (cfg.similarity == SimilarityKind::sum_norm) {
    if (dn.norm_a.value() + dn.norm_b.value() == 0.0) {
      throw DomainError("similarity: both vectors are zero (sum_norm denominator vanishes)");
    }
    return tape.div(dn.dot, tape.add(dn.norm_a, dn.norm_b));
  }
  if (dn.norm_a.value() == 0.0 || dn.norm_b.value() == 0.0) {
    throw DomainError("similarity: zero vector (cosine denominator vanishes)");
  }
  return tape.div(dn.dot, tape.mul(dn.norm_a, dn.norm_b));
}

Tensor hinge_triplet_loss(Tape& tape, const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                          const TripletLossConfig& cfg) {
  validate(cfg);
  Tensor sim_pos = similarity(tape, anchor, positive, cfg);
  Tensor sim_neg = similarity(tape, anchor, negative, cfg);
  // margin - sim_pos + sim_neg, rectified.
  return tape.max0(tape.affine(tape.sub(sim_pos, sim_neg), -1.0, cfg.margin));
}

Tensor weighted_bce(Tape& tape, const Tensor& confidences, const Tensor& target, const JointLossConfig& cfg) {
  validate(cfg);
  if (confidences.shape() != target.shape() || confidences.rank() != 1) {
    throw DimensionError("weighted_bce: confidences " + shape_str(confidences.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  for (double t : target.values())
    if (t != 0.0 && t != 1.0) throw InputError("weighted_bce: target must be a 0/1 vector");

  Tensor y = tape.clip(confidences, cfg.clip_eps, 1.0 - cfg.clip_eps);
  Tensor pos_term = tape.mul(target, tape.log(y));
  Tensor neg_mask = tape.affine(target, -1.0, 1.0);                    // 1 - t
  Tensor neg_term = tape.mul(neg_mask, tape.log(tape.affine(y, -1.0, 1.0)));  // (1-t) log(1-y)
  Tensor weighted = tape.add(tape.affine(pos_term, cfg.lambda_pos, 0.0), neg_term);
  return tape.affine(tape.sum(weighted), -1.0, 0.0);
}

Tensor joint_loss(Tape& tape, const std::vector<TripletEmbeddings>& triplets,
                  const std::vector<ContentPair>& content, const TripletLossConfig& tcfg,
                  const JointLossConfig& jcfg) {
  validate(tcfg);
  validate(jcfg);
  if (triplets.empty() && content.empty()) throw InputError("joint_loss: empty batch");

  Tensor total = Tensor::scalar(0.0);
  for (const auto& t : triplets) {
    Tensor term = hinge_triplet_loss(tape, t.anchor, t.positive, t.negative, tcfg);
    if (t.weight != 1.0) term = tape.affine(term, t.weight, 0.0);
    total = tape.add(total, term);
  }
  if (jcfg.beta != 0.0 && !content.empty()) {
    Tensor bce_sum = Tensor::scalar(0.0);
    for (const auto& pair : content) {
      bce_sum = tape.add(bce_sum, weighted_bce(tape, pair.confidences, pair.target, jcfg));
    }
    total = tape.add(total, tape.affine(bce_sum, jcfg.beta, 0.0));
  }
  return total;
}

}  // namespace dman
