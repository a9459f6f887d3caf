#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "san/datamodel.hpp"
#include "san/loss.hpp"
#include "san/model.hpp"

namespace san {

// Momentum SGD with decoupled-from-nothing classic weight decay:
//   v <- mu * v + (grad + wd * w);  w <- w - lr * v
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<Param*>& params, double lr);

 private:
  double momentum_, weight_decay_;
  std::vector<Tensor> velocity_;
};

struct TrainOptions {
  int epochs = 30;
  int batch_size = 32;
  double lr = 3e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int lr_step = 40;       // epochs between learning-rate decays
  double lr_gamma = 0.1;  // decay factor
  bool flip_augment = true;
  LossOptions loss;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs; 0 saves only the final checkpoint
  std::string out_dir;       // when set, receives checkpoints
};

struct StepRecord {
  int step = 0;
  int epoch = 0;
  LossBreakdown loss;
};

// Caches preprocessed train images in memory; adequate at desk scale.
class ImageStore {
 public:
  ImageStore(const DatasetManifest& manifest, const PreprocessOptions& prep);
  const Tensor& get(int record_idx);

 private:
  const DatasetManifest& manifest_;
  PreprocessOptions prep_;
  std::vector<Tensor> cache_;
  std::vector<bool> loaded_;
};

using EpochCallback = std::function<void(int epoch, const LossBreakdown& mean)>;

// Trains on the manifest's train split. Writes one JSON object per step to
// loss_log when provided: {"step", "epoch", "stripe", "id", "attr", "total"}.
std::vector<StepRecord> train_model(SanModel& model,
                                    const DatasetManifest& manifest,
                                    const PreprocessOptions& prep,
                                    const TrainOptions& opts,
                                    std::ostream* loss_log = nullptr,
                                    const EpochCallback& on_epoch = nullptr);

}  // namespace san
