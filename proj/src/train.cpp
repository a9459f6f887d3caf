#include "san/train.hpp"

#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "san/checkpoint.hpp"
#include "san/rng.hpp"

using json = nlohmann::json;

namespace san {

void SgdOptimizer::step(const std::vector<Param*>& params, double lr) {
  if (velocity_.size() != params.size()) {
    velocity_.clear();
    for (Param* p : params) velocity_.emplace_back(p->value.shape());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    Tensor& v = velocity_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      v[k] = momentum_ * v[k] + p.grad[k] + weight_decay_ * p.value[k];
      p.value[k] -= lr * v[k];
    }
  }
}

ImageStore::ImageStore(const DatasetManifest& manifest,
                       const PreprocessOptions& prep)
    : manifest_(manifest), prep_(prep) {
  cache_.resize(manifest.records.size());
  loaded_.assign(manifest.records.size(), false);
}

const Tensor& ImageStore::get(int record_idx) {
  if (!loaded_[record_idx]) {
    cache_[record_idx] =
        load_and_preprocess(manifest_, manifest_.records[record_idx], prep_,
                            /*flip=*/false)
            .data;
    loaded_[record_idx] = true;
  }
  return cache_[record_idx];
}

namespace {

json breakdown_to_json(const StepRecord& rec) {
  json j;
  j["step"] = rec.step;
  j["epoch"] = rec.epoch;
  j["stripe"] = rec.loss.stripe;
  j["id"] = rec.loss.id;
  j["attr"] = rec.loss.attr;
  j["total"] = rec.loss.total;
  return j;
}

}  // namespace

std::vector<StepRecord> train_model(SanModel& model,
                                    const DatasetManifest& manifest,
                                    const PreprocessOptions& prep,
                                    const TrainOptions& opts,
                                    std::ostream* loss_log,
                                    const EpochCallback& on_epoch) {
  const std::vector<int> train_idx = manifest.split_indices(Split::kTrain);
  SAN_CHECK_DATA(!train_idx.empty(), "manifest has no train records");
  SAN_CHECK_CONFIG(opts.batch_size > 0 && opts.epochs > 0,
                   "epochs and batch size must be positive");

  ImageStore store(manifest, prep);
  SgdOptimizer sgd(opts.momentum, opts.weight_decay);
  const std::vector<Param*> params = model.params();
  const int s = model.config().input_size;

  Rng rng = Rng(opts.seed).fork(0x545241494eULL);
  std::vector<StepRecord> log;
  int step = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double lr =
        opts.lr * std::pow(opts.lr_gamma, opts.lr_step > 0 ? epoch / opts.lr_step : 0);
    std::vector<int> order = train_idx;
    rng.shuffle(order);

    LossBreakdown epoch_mean;
    int epoch_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opts.batch_size)) {
      const int bn = static_cast<int>(
          std::min<std::size_t>(opts.batch_size, order.size() - start));
      Tensor batch({bn, s, s, 3});
      std::vector<LossTarget> targets(bn);
      for (int b = 0; b < bn; ++b) {
        const int idx = order[start + b];
        const VehicleRecord& r = manifest.records[idx];
        const Tensor& img = store.get(idx);
        const bool flip = opts.flip_augment && rng.uniform() < 0.5;
        if (flip) {
          Tensor flipped = hflip(img);
          std::copy(flipped.data(), flipped.data() + flipped.size(),
                    batch.data() + static_cast<std::size_t>(b) * flipped.size());
        } else {
          std::copy(img.data(), img.data() + img.size(),
                    batch.data() + static_cast<std::size_t>(b) * img.size());
        }
        targets[b].identity = r.identity;
        targets[b].attribute = r.attribute ? *r.attribute : -1;
      }

      ForwardOutputs outputs = model.forward(batch, /*train=*/true);
      HeadGrads grads;
      LossBreakdown loss =
          total_loss_with_grads(outputs, targets, opts.loss, &grads);
      model.zero_grad();
      model.backward(grads);
      sgd.step(params, lr);

      StepRecord rec{step++, epoch, loss};
      if (loss_log) *loss_log << breakdown_to_json(rec).dump() << "\n";
      if (epoch_mean.stripe.size() != loss.stripe.size())
        epoch_mean.stripe.assign(loss.stripe.size(), 0.0);
      for (std::size_t i = 0; i < loss.stripe.size(); ++i)
        epoch_mean.stripe[i] += loss.stripe[i];
      epoch_mean.id += loss.id;
      epoch_mean.attr += loss.attr;
      epoch_mean.total += loss.total;
      ++epoch_batches;
      log.push_back(std::move(rec));
    }

    if (epoch_batches > 0) {
      for (double& v : epoch_mean.stripe) v /= epoch_batches;
      epoch_mean.id /= epoch_batches;
      epoch_mean.attr /= epoch_batches;
      epoch_mean.total /= epoch_batches;
    }
    if (on_epoch) on_epoch(epoch, epoch_mean);

    if (!opts.out_dir.empty() && opts.checkpoint_every > 0 &&
        (epoch + 1) % opts.checkpoint_every == 0 && epoch + 1 < opts.epochs) {
      save_checkpoint(model, prep,
                      (std::filesystem::path(opts.out_dir) /
                       ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ckpt"))
                          .string());
    }
  }

  if (!opts.out_dir.empty()) {
    save_checkpoint(model, prep,
                    (std::filesystem::path(opts.out_dir) / "checkpoint_final.ckpt")
                        .string());
  }
  return log;
}

}  // namespace san
