#include "core/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

namespace dman {

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw ConfigError("TrainConfig: lr must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("TrainConfig: momentum must be in [0, 1)");
  if (cfg.epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (cfg.batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
  if (cfg.negatives < 1) throw ConfigError("TrainConfig: negatives must be >= 1");
  if (cfg.grad_clip < 0.0) throw ConfigError("TrainConfig: grad_clip must be >= 0");
}

SgdOptimizer::SgdOptimizer(std::vector<NamedParam>* params, double lr, double momentum, bool nesterov,
                           double grad_clip)
    : params_(params), lr_(lr), momentum_(momentum), grad_clip_(grad_clip), nesterov_(nesterov) {
  velocity_.reserve(params_->size());
  for (const auto& p : *params_) velocity_.emplace_back(p.tensor.size(), 0.0);
}

void SgdOptimizer::step() {
  // NaN scan and optional global-norm clip happen before any update so a bad
  // step never half-applies.
  double sq_norm = 0.0;
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    const auto& p = (*params_)[pi];
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (std::isnan(g)) throw Error("sgd_step: NaN gradient in parameter block " + p.name);
      sq_norm += g * g;
    }
  }
  double scale = 1.0;
  if (grad_clip_ > 0.0) {
    const double norm = std::sqrt(sq_norm);
    if (norm > grad_clip_) scale = grad_clip_ / norm;
  }
  for (size_t pi = 0; pi < params_->size(); ++pi) {
    auto& p = (*params_)[pi];
    auto values = p.tensor.mutable_values();
    auto& vel = velocity_[pi];
    const bool has_grad = p.tensor.has_grad();
    const std::span<const double> grad = has_grad ? p.tensor.grad() : std::span<const double>{};
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? grad[i] * scale : 0.0;
      vel[i] = momentum_ * vel[i] - lr_ * g;
      values[i] += nesterov_ ? momentum_ * vel[i] - lr_ * g : vel[i];
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (auto& p : *params_) p.tensor.zero_grad();
}

namespace {

struct BatchOutcome {
  double joint = 0.0;
  double hinge = 0.0;
  double bce = 0.0;
  size_t triplets = 0;
  size_t skipped = 0;
};

BatchOutcome run_batch(const MultimodalGraph& graph, const std::vector<MultimodalNode>& nodes,
                       const RegionProvider& provider, DmanModel& model, const TripletLossConfig& tcfg,
                       const JointLossConfig& jcfg, const TrainConfig& cfg, const std::vector<uint32_t>& batch,
                       SgdOptimizer& opt, Rng& rng) {
  Tape tape;
  TripletBatch sampled = sample_triplets(graph, batch, cfg.negatives, rng);

  // One shared-parameter forward per distinct node the batch touches: every
  // batch member (content loss plus triplet roles) and any out-of-batch
  // positive.
  std::map<uint32_t, DmanModel::Forward> forwards;
  auto forward_of = [&](uint32_t id) -> DmanModel::Forward& {
    auto it = forwards.find(id);
    if (it == forwards.end()) {
      it = forwards.emplace(id, model.forward(tape, provider.regions_for(id), /*training=*/true, &rng)).first;
    }
    return it->second;
  };
  for (uint32_t id : batch) forward_of(id);
  for (const auto& t : sampled.triplets) forward_of(t.positive);

  std::vector<TripletEmbeddings> triplet_terms;
  triplet_terms.reserve(sampled.triplets.size());
  std::map<uint32_t, size_t> per_anchor;
  for (const auto& t : sampled.triplets) ++per_anchor[t.anchor];
  for (const auto& t : sampled.triplets) {
    TripletEmbeddings e;
    e.anchor = forward_of(t.anchor).embedding;
    e.positive = forward_of(t.positive).embedding;
    e.negative = forward_of(t.negative).embedding;
    if (tcfg.reduction == TripletReduction::mean_per_anchor) {
      e.weight = 1.0 / static_cast<double>(per_anchor[t.anchor]);
    }
    triplet_terms.push_back(std::move(e));
  }

  std::vector<ContentPair> content;
  content.reserve(batch.size());
  for (uint32_t id : batch) {
    content.push_back({forward_of(id).confidences, one_hot_text(nodes[id].words, model.config().vocab)});
  }

  // Component values for the report, before the joint backward.
  BatchOutcome out;
  out.triplets = sampled.triplets.size();
  out.skipped = sampled.skipped_anchors;
  for (const auto& t : triplet_terms) {
    Tape probe(false);
    out.hinge += t.weight * hinge_triplet_loss(probe, t.anchor, t.positive, t.negative, tcfg).value();
  }
  for (const auto& pair : content) {
    Tape probe(false);
    out.bce += weighted_bce(probe, pair.confidences, pair.target, jcfg).value();
  }

  Tensor loss = joint_loss(tape, triplet_terms, content, tcfg, jcfg);
  out.joint = loss.value();
  if (!std::isfinite(out.joint)) throw Error("train: non-finite joint loss");
  tape.backward(loss);
  opt.step();
  opt.zero_grad();
  return out;
}

}  // namespace

TrainReport train(const MultimodalGraph& graph, const std::vector<MultimodalNode>& nodes,
                  const RegionProvider& provider, DmanModel& model, const TripletLossConfig& tcfg,
                  const JointLossConfig& jcfg, const TrainConfig& cfg, const std::vector<uint32_t>& train_ids,
                  const std::function<void(int, const DmanModel&, const SgdOptimizer&, Rng&)>& on_checkpoint) {
  validate(cfg);
  validate(tcfg);
  validate(jcfg);
  if (!graph.has_any_edge()) throw ConfigError("train: graph has no edges, no triplets can be formed");
  if (train_ids.empty()) throw InputError("train: empty training id list");

  Rng rng(cfg.seed);
  SgdOptimizer opt(&model.parameters(), cfg.lr, cfg.momentum, cfg.nesterov, cfg.grad_clip);
  std::vector<uint32_t> order = train_ids;

  TrainReport report;
  report.epochs.reserve(static_cast<size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order = epoch_shuffle(std::move(order), rng);

    EpochStats stats;
    stats.epoch = epoch;
    const size_t bs = static_cast<size_t>(cfg.batch_size);
    for (size_t begin = 0; begin < order.size(); begin += bs) {
      const size_t end = std::min(begin + bs, order.size());
      std::vector<uint32_t> batch(order.begin() + static_cast<ptrdiff_t>(begin),
                                  order.begin() + static_cast<ptrdiff_t>(end));
      BatchOutcome out = run_batch(graph, nodes, provider, model, tcfg, jcfg, cfg, batch, opt, rng);
      stats.joint += out.joint;
      stats.hinge += out.hinge;
      stats.bce += out.bce;
      stats.triplets += out.triplets;
      stats.skipped_anchors += out.skipped;
    }
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(stats);

    const bool periodic = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
    if (on_checkpoint && (periodic || epoch == cfg.epochs)) {
      on_checkpoint(epoch, model, opt, rng);
    }
  }
  report.param_checksum = model.parameter_checksum();
  return report;
}

ProbeResult complexity_probe(const std::vector<size_t>& sizes,
                             const std::function<ProbeInstance(size_t)>& make_instance, const ModelConfig& mc,
                             const TripletLossConfig& tcfg, const JointLossConfig& jcfg, const TrainConfig& cfg,
                             int measured_epochs) {
  if (sizes.size() < 3) throw ConfigError("complexity_probe: at least three sizes required");
  const auto [lo, hi] = std::minmax_element(sizes.begin(), sizes.end());
  if (*lo == 0 || *hi < *lo * 8) throw ConfigError("complexity_probe: sizes must span at least an 8x range");
  if (measured_epochs < 1) throw ConfigError("complexity_probe: measured_epochs must be >= 1");

  ProbeResult result;
  for (size_t n : sizes) {
    ProbeInstance inst = make_instance(n);
    ModelConfig model_cfg = mc;
    DmanModel model(model_cfg);
    TrainConfig run_cfg = cfg;
    run_cfg.epochs = measured_epochs + 1;  // first epoch is warmup
    TrainReport rep = train(inst.graph, inst.nodes, *inst.provider, model, tcfg, jcfg, run_cfg, inst.train_ids);
    std::vector<double> times;
    for (size_t e = 1; e < rep.epochs.size(); ++e) times.push_back(rep.epochs[e].seconds);
    std::sort(times.begin(), times.end());
    const double median = times[times.size() / 2];
    result.points.push_back({n, median});
  }

  // Least-squares slope of log(t) on log(n).
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(result.points.size());
  for (const auto& p : result.points) {
    const double x = std::log(static_cast<double>(p.n));
    const double y = std::log(std::max(p.seconds_per_epoch, 1e-9));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  result.loglog_slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return result;
}

}  // namespace dman
