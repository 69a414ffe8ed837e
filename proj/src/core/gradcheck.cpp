#include "core/gradcheck.hpp"

#include <cmath>
#include <functional>
#include <memory>

#include "core/graph.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace dman {

namespace {

struct Case {
  std::string name;
  std::vector<Tensor> leaves;
  std::function<Tensor(Tape&)> build;
};

Tensor rand_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Values bounded away from zero, for ops with a kink or a pole there.
Tensor rand_leaf_away_from_zero(Shape shape, Rng& rng, double min_abs, double max_abs) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) {
    const double mag = rng.uniform(min_abs, max_abs);
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

Tensor rand_const(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), false);
}

double rel_err(double a, double f) {
  const double scale = std::max(std::fabs(a), std::fabs(f));
  if (scale < 1e-7) return 0.0;
  return std::fabs(a - f) / scale;
}

GradCheckEntry check_case(const Case& c, double h) {
  GradCheckEntry entry;
  entry.name = c.name;

  Tape tape;
  Tensor loss = c.build(tape);
  tape.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const Tensor& leaf : c.leaves) {
    analytic.emplace_back(leaf.has_grad() ? std::vector<double>(leaf.grad().begin(), leaf.grad().end())
                                          : std::vector<double>(leaf.size(), 0.0));
  }

  auto value = [&] {
    Tape probe(false);
    return c.build(probe).value();
  };
  for (size_t li = 0; li < c.leaves.size(); ++li) {
    Tensor leaf = c.leaves[li];
    auto data = leaf.mutable_values();
    for (size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double f_plus = value();
      data[i] = orig - h;
      const double f_minus = value();
      data[i] = orig;
      const double fd = (f_plus - f_minus) / (2.0 * h);
      entry.max_rel_err = std::max(entry.max_rel_err, rel_err(analytic[li][i], fd));
      ++entry.checked;
    }
  }
  for (Tensor leaf : c.leaves) leaf.zero_grad();
  return entry;
}

Case case_matmul() {
  Rng rng(101);
  Tensor a = rand_leaf({3, 2}, rng);
  Tensor b = rand_leaf({2, 4}, rng);
  Tensor c = rand_const({3, 4}, rng);
  return {"matmul", {a, b}, [=](Tape& t) { return t.sum(t.mul(t.matmul(a, b), c)); }};
}

Case case_elementwise() {
  Rng rng(102);
  Tensor a = rand_leaf({2, 3}, rng);
  Tensor b = rand_leaf({2, 3}, rng);
  Tensor c = rand_const({2, 3}, rng);
  return {"elementwise", {a, b}, [=](Tape& t) {
            Tensor lhs = t.mul(t.tanh(a), t.sigmoid(b));
            Tensor rhs = t.div(a, t.affine(t.sigmoid(b), 1.0, 1.5));  // denominator in (1.5, 2.5)
            return t.sum(t.mul(t.add(lhs, t.sub(rhs, t.affine(a, 0.25, 0.0))), c));
          }};
}

Case case_broadcast() {
  Rng rng(103);
  Tensor m = rand_leaf({4, 3}, rng);
  Tensor col = rand_leaf({4, 1}, rng);
  Tensor c = rand_const({4, 3}, rng);
  return {"broadcast_trailing_axis", {m, col}, [=](Tape& t) {
            return t.sum(t.mul(t.add(t.mul(m, col), t.sub(m, col)), c));
          }};
}

Case case_log_clip() {
  Rng rng(104);
  Tensor a = rand_leaf({5}, rng);
  return {"log_clip", {a}, [=](Tape& t) {
            Tensor p = t.clip(t.sigmoid(a), 1e-7, 1.0 - 1e-7);
            return t.sum(t.log(p));
          }};
}

Case case_max0() {
  Rng rng(105);
  Tensor a = rand_leaf_away_from_zero({6}, rng, 0.1, 1.0);
  Tensor c = rand_const({6}, rng);
  return {"max0", {a}, [=](Tape& t) { return t.sum(t.mul(t.max0(a), c)); }};
}

Case case_softmax() {
  Rng rng(106);
  Tensor z = rand_leaf({3, 4}, rng, -2.0, 2.0);
  Tensor c = rand_const({3, 4}, rng);
  return {"softmax", {z}, [=](Tape& t) { return t.sum(t.mul(t.softmax(z, 1), c)); }};
}

Case case_reduce() {
  Rng rng(107);
  Tensor x = rand_leaf({3, 4}, rng);
  Tensor c0 = rand_const({4}, rng);
  Tensor c1 = rand_const({3}, rng);
  return {"reduce", {x}, [=](Tape& t) {
            Tensor part = t.add(t.sum(t.mul(t.mean(x, 0), c0)), t.sum(t.mul(t.sum(x, 1), c1)));
            return t.add(part, t.mean(x));
          }};
}

Case case_dot_and_norm() {
  Rng rng(108);
  Tensor a = rand_leaf({5}, rng, 0.2, 1.0);
  Tensor b = rand_leaf({5}, rng, 0.2, 1.0);
  return {"dot_and_norm", {a, b}, [=](Tape& t) {
            auto dn = t.dot_and_norm(a, b);
            return t.add(dn.dot, t.add(t.affine(dn.norm_a, 0.5, 0.0), t.affine(dn.norm_b, 2.0, 0.0)));
          }};
}

Case case_lfc_linear() {
  Rng rng(109);
  Tensor w = rand_leaf({3, 2, 4}, rng);
  Tensor b = rand_leaf({3, 2}, rng);
  Tensor x = rand_leaf({3, 4}, rng);
  Tensor c = rand_const({3, 2}, rng);
  return {"lfc_linear", {w, b, x}, [=](Tape& t) { return t.sum(t.mul(t.lfc_linear(w, b, x), c)); }};
}

Case case_structure() {
  Rng rng(110);
  Tensor m = rand_leaf({3, 4}, rng);
  Tensor v = rand_leaf({3}, rng);
  Tensor c = rand_const({4, 3}, rng);
  return {"transpose_rowvec_reshape", {m, v}, [=](Tape& t) {
            Tensor viewed = t.reshape(t.add_rowvec(t.transpose(m), v), {4, 3});
            return t.sum(t.mul(viewed, c));
          }};
}

Case case_similarity_hinge() {
  Rng rng(111);
  Tensor anchor = rand_leaf({4}, rng, 0.1, 1.0);
  Tensor pos = rand_leaf({4}, rng, 0.1, 1.0);
  Tensor neg = rand_leaf({4}, rng, -1.0, -0.1);
  TripletLossConfig sum_cfg;
  TripletLossConfig cos_cfg;
  cos_cfg.similarity = SimilarityKind::cosine;
  return {"similarity_hinge", {anchor, pos, neg}, [=](Tape& t) {
            Tensor active = hinge_triplet_loss(t, anchor, pos, neg, sum_cfg);
            Tensor cos_sim = similarity(t, anchor, pos, cos_cfg);
            return t.add(active, cos_sim);
          }};
}

Case case_weighted_bce() {
  Rng rng(112);
  Tensor a = rand_leaf({6}, rng);
  Tensor target = Tensor::from({6}, {1, 0, 0, 1, 0, 0});
  JointLossConfig jcfg;
  return {"weighted_bce", {a}, [=](Tape& t) { return weighted_bce(t, t.sigmoid(a), target, jcfg); }};
}

// Full pipeline and joint objective on a fixed 4-node toy graph: two
// two-node cliques, one sampled triplet set, evaluation-mode forwards.
Case case_joint_loss() {
  auto model_cfg = std::make_shared<ModelConfig>();
  model_cfg->vocab = 6;
  model_cfg->regions = 3;
  model_cfg->feature_dim = 4;
  model_cfg->lfc_hidden1 = 3;
  model_cfg->lfc_hidden2 = 2;
  model_cfg->dropout = 0.0;
  model_cfg->init_seed = 77;
  auto model = std::make_shared<DmanModel>(*model_cfg);

  std::vector<MultimodalNode> nodes(4);
  nodes[0] = {0, {0, 1}, {0}};
  nodes[1] = {1, {1, 2}, {0}};
  nodes[2] = {2, {3, 4}, {1}};
  nodes[3] = {3, {4, 5}, {1}};
  auto graph = std::make_shared<MultimodalGraph>(build_graph(nodes, 50, 9));

  Rng data_rng(113);
  auto regions = std::make_shared<std::vector<Tensor>>();
  for (int i = 0; i < 4; ++i) regions->push_back(rand_const({3, 4}, data_rng, -1.0, 1.0));

  Rng sample_rng(114);
  auto sampled = std::make_shared<TripletBatch>(sample_triplets(*graph, {0, 1, 2, 3}, 2, sample_rng));

  auto targets = std::make_shared<std::vector<Tensor>>();
  for (int i = 0; i < 4; ++i) targets->push_back(one_hot_text(nodes[i].words, 6));

  std::vector<Tensor> leaves;
  for (auto& p : model->parameters()) leaves.push_back(p.tensor);

  TripletLossConfig tcfg;
  JointLossConfig jcfg;
  auto build = [=](Tape& t) {
    std::vector<DmanModel::Forward> fwd;
    for (int i = 0; i < 4; ++i) fwd.push_back(model->forward(t, (*regions)[i], false));
    std::vector<TripletEmbeddings> terms;
    for (const auto& trip : sampled->triplets) {
      terms.push_back({fwd[trip.anchor].embedding, fwd[trip.positive].embedding, fwd[trip.negative].embedding, 1.0});
    }
    std::vector<ContentPair> content;
    for (int i = 0; i < 4; ++i) content.push_back({fwd[i].confidences, (*targets)[i]});
    return joint_loss(t, terms, content, tcfg, jcfg);
  };

  // The fixture must sit away from every hinge kink for finite differences
  // to be meaningful; verify once at construction.
  {
    Tape probe(false);
    std::vector<DmanModel::Forward> fwd;
    for (int i = 0; i < 4; ++i) fwd.push_back(model->forward(probe, (*regions)[i], false));
    for (const auto& trip : sampled->triplets) {
      TripletLossConfig cfg;
      Tensor sp = similarity(probe, fwd[trip.anchor].embedding, fwd[trip.positive].embedding, cfg);
      Tensor sn = similarity(probe, fwd[trip.anchor].embedding, fwd[trip.negative].embedding, cfg);
      const double pre = cfg.margin - sp.value() + sn.value();
      if (std::fabs(pre) < 1e-3) throw StateError("gradcheck: toy fixture landed on a hinge kink");
    }
  }

  return {"joint_loss_toy_graph", std::move(leaves), build};
}

}  // namespace

GradCheckReport run_gradient_checks(double step) {
  std::vector<Case> cases;
  cases.push_back(case_matmul());
  cases.push_back(case_elementwise());
  cases.push_back(case_broadcast());
  cases.push_back(case_log_clip());
  cases.push_back(case_max0());
  cases.push_back(case_softmax());
  cases.push_back(case_reduce());
  cases.push_back(case_dot_and_norm());
  cases.push_back(case_lfc_linear());
  cases.push_back(case_structure());
  cases.push_back(case_similarity_hinge());
  cases.push_back(case_weighted_bce());
  cases.push_back(case_joint_loss());

  GradCheckReport report;
  for (const Case& c : cases) {
    GradCheckEntry entry = check_case(c, step);
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace dman
