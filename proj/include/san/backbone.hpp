#pragma once

#include <memory>
#include <string>
#include <vector>

#include "san/layers.hpp"

namespace san {

// Adapter interface: any image classifier trunk producing an NHWC feature
// map can back the model. Implementations report their total spatial stride
// and output channel width so the head can be sized at build time.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual Tensor forward(const Tensor& images, bool train) = 0;
  virtual Tensor backward(const Tensor& d_feature) = 0;
  virtual int total_stride() const = 0;
  virtual int out_channels() const = 0;
  virtual void collect_params(std::vector<Param*>& out) = 0;
  virtual void init(Rng& rng) = 0;
};

// Four stride-2 conv/bn/relu stages, total stride 16. Channel widths are
// configurable; the last entry is the feature map width c.
class TinyBackbone : public Backbone {
 public:
  explicit TinyBackbone(const std::vector<int>& widths = {8, 16, 32, 64});
  Tensor forward(const Tensor& images, bool train) override;
  Tensor backward(const Tensor& d_feature) override;
  int total_stride() const override { return 16; }
  int out_channels() const override { return out_channels_; }
  void collect_params(std::vector<Param*>& out) override;
  void init(Rng& rng) override;

 private:
  Sequential stages_;
  int out_channels_;
};

// 50-layer bottleneck residual network with the last stage's spatial
// down-sampling set to 1, so the total stride is 16 and a 256x256 input
// yields a 16x16x2048 feature map.
class ResNet50Backbone : public Backbone {
 public:
  ResNet50Backbone();
  ~ResNet50Backbone() override;
  Tensor forward(const Tensor& images, bool train) override;
  Tensor backward(const Tensor& d_feature) override;
  int total_stride() const override { return 16; }
  int out_channels() const override { return 2048; }
  void collect_params(std::vector<Param*>& out) override;
  void init(Rng& rng) override;

 private:
  class Bottleneck;
  Conv2d stem_conv_;
  BatchNorm stem_bn_;
  ReLU stem_relu_;
  MaxPool2d stem_pool_;
  std::vector<std::unique_ptr<Bottleneck>> blocks_;
};

std::unique_ptr<Backbone> make_backbone(const std::string& kind,
                                        const std::vector<int>& tiny_widths);

}  // namespace san
