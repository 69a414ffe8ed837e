#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/graph.hpp"
#include "core/losses.hpp"
#include "core/model.hpp"

namespace dman {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  bool nesterov = true;
  int epochs = 1;
  int batch_size = 64;
  int negatives = 3;  // k negatives per anchor, drawn in-batch
  uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoint callbacks; 0 = never
  double grad_clip = 0.0;    // global-norm clip; 0 disables
};

void validate(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double joint = 0.0;
  double hinge = 0.0;
  double bce = 0.0;
  size_t triplets = 0;
  size_t skipped_anchors = 0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  uint64_t param_checksum = 0;
};

// SGD with momentum. velocity v and parameter p evolve per step as
//   v <- momentum * v - lr * g
//   p <- p + v                      (classical)
//   p <- p + momentum * v - lr * g  (nesterov)
// Velocity buffers start at zero. A parameter with no gradient recorded in
// the current step contributes g = 0. NaN gradients abort with the name of
// the offending parameter block.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<NamedParam>* params, double lr, double momentum, bool nesterov, double grad_clip = 0.0);

  void step();
  void zero_grad();

  std::vector<std::vector<double>>& velocity() { return velocity_; }
  const std::vector<std::vector<double>>& velocity() const { return velocity_; }

 private:
  std::vector<NamedParam>* params_;
  double lr_, momentum_, grad_clip_;
  bool nesterov_;
  std::vector<std::vector<double>> velocity_;
};

// One epoch: shuffle the training order, split into consecutive batches,
// sample triplets per batch, run shared-parameter forwards for every node
// the batch touches, take the joint loss, backpropagate, step.
//
// The per-epoch callback fires after the last optimizer step of epochs that
// checkpoint_every divides (1-based), and always after the final epoch.
TrainReport train(const MultimodalGraph& graph, const std::vector<MultimodalNode>& nodes,
                  const RegionProvider& provider, DmanModel& model, const TripletLossConfig& tcfg,
                  const JointLossConfig& jcfg, const TrainConfig& cfg,
                  const std::vector<uint32_t>& train_ids,
                  const std::function<void(int, const DmanModel&, const SgdOptimizer&, Rng&)>& on_checkpoint = {});

struct ProbePoint {
  size_t n = 0;
  double seconds_per_epoch = 0.0;
};

struct ProbeResult {
  std::vector<ProbePoint> points;
  double loglog_slope = 0.0;
};

struct ProbeInstance {
  MultimodalGraph graph;
  std::vector<MultimodalNode> nodes;
  std::shared_ptr<RegionProvider> provider;
  std::vector<uint32_t> train_ids;
};

// Times epochs at each problem size and fits seconds-per-epoch against size
// on a log-log scale by least squares. Needs at least three sizes spanning
// an 8x range. Instances come from the caller so dataset construction stays
// outside the timed region.
ProbeResult complexity_probe(const std::vector<size_t>& sizes,
                             const std::function<ProbeInstance(size_t)>& make_instance, const ModelConfig& mc,
                             const TripletLossConfig& tcfg, const JointLossConfig& jcfg, const TrainConfig& cfg,
                             int measured_epochs);

}  // namespace dman
