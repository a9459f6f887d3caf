#include "san/backbone.hpp"

#include "san/check.hpp"

namespace san {

// ---------------------------------------------------------------------------
// TinyBackbone
// ---------------------------------------------------------------------------

TinyBackbone::TinyBackbone(const std::vector<int>& widths) {
  SAN_CHECK_CONFIG(widths.size() == 4, "tiny backbone needs 4 stage widths, got ",
                   widths.size());
  int in_c = 3;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    const std::string name = "backbone.stage" + std::to_string(s);
    stages_.add(std::make_unique<Conv2d>(name + ".conv", in_c, widths[s], 3, 2,
                                         1, /*bias=*/false));
    stages_.add(std::make_unique<BatchNorm>(name + ".bn", widths[s]));
    stages_.add(std::make_unique<ReLU>());
    in_c = widths[s];
  }
  out_channels_ = widths.back();
}

Tensor TinyBackbone::forward(const Tensor& images, bool train) {
  return stages_.forward(images, train);
}

Tensor TinyBackbone::backward(const Tensor& d_feature) {
  return stages_.backward(d_feature);
}

void TinyBackbone::collect_params(std::vector<Param*>& out) {
  stages_.collect_params(out);
}

void TinyBackbone::init(Rng& rng) { stages_.init(rng); }

// ---------------------------------------------------------------------------
// ResNet50Backbone
// ---------------------------------------------------------------------------

class ResNet50Backbone::Bottleneck {
 public:
  Bottleneck(const std::string& name, int in_c, int mid_c, int out_c, int stride)
      : conv1_(name + ".conv1", in_c, mid_c, 1, 1, 0, false),
        bn1_(name + ".bn1", mid_c),
        conv2_(name + ".conv2", mid_c, mid_c, 3, stride, 1, false),
        bn2_(name + ".bn2", mid_c),
        conv3_(name + ".conv3", mid_c, out_c, 1, 1, 0, false),
        bn3_(name + ".bn3", out_c),
        has_projection_(stride != 1 || in_c != out_c) {
    if (has_projection_) {
      proj_conv_ = std::make_unique<Conv2d>(name + ".proj", in_c, out_c, 1,
                                            stride, 0, false);
      proj_bn_ = std::make_unique<BatchNorm>(name + ".proj_bn", out_c);
    }
  }

  Tensor forward(const Tensor& x, bool train) {
    Tensor out = relu1_.forward(bn1_.forward(conv1_.forward(x, train), train), train);
    out = relu2_.forward(bn2_.forward(conv2_.forward(out, train), train), train);
    out = bn3_.forward(conv3_.forward(out, train), train);
    Tensor shortcut =
        has_projection_ ? proj_bn_->forward(proj_conv_->forward(x, train), train) : x;
    SAN_CHECK(out.same_shape(shortcut), "residual shapes diverged");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += shortcut[i];
    return relu_out_.forward(out, train);
  }

  Tensor backward(const Tensor& dy) {
    Tensor d_sum = relu_out_.backward(dy);
    Tensor dx = conv1_.backward(bn1_.backward(relu1_.backward(conv2_.backward(
        bn2_.backward(relu2_.backward(conv3_.backward(bn3_.backward(d_sum))))))));
    if (has_projection_) {
      Tensor d_short = proj_conv_->backward(proj_bn_->backward(d_sum));
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d_short[i];
    } else {
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d_sum[i];
    }
    return dx;
  }

  void collect_params(std::vector<Param*>& out) {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    conv3_.collect_params(out);
    bn3_.collect_params(out);
    if (has_projection_) {
      proj_conv_->collect_params(out);
      proj_bn_->collect_params(out);
    }
  }

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv3_.init(rng);
    if (has_projection_) proj_conv_->init(rng);
  }

 private:
  Conv2d conv1_;
  BatchNorm bn1_;
  ReLU relu1_;
  Conv2d conv2_;
  BatchNorm bn2_;
  ReLU relu2_;
  Conv2d conv3_;
  BatchNorm bn3_;
  ReLU relu_out_;
  bool has_projection_;
  std::unique_ptr<Conv2d> proj_conv_;
  std::unique_ptr<BatchNorm> proj_bn_;
};

ResNet50Backbone::~ResNet50Backbone() = default;

ResNet50Backbone::ResNet50Backbone()
    : stem_conv_("backbone.stem.conv", 3, 64, 7, 2, 3, false),
      stem_bn_("backbone.stem.bn", 64),
      stem_pool_(3, 2, 1) {
  const int block_counts[4] = {3, 4, 6, 3};
  const int mid_widths[4] = {64, 128, 256, 512};
  // Stage strides 1,2,2,1: the last down-sampling is removed to keep a
  // higher-resolution final map.
  const int stage_strides[4] = {1, 2, 2, 1};
  int in_c = 64;
  for (int s = 0; s < 4; ++s) {
    const int out_c = mid_widths[s] * 4;
    for (int b = 0; b < block_counts[s]; ++b) {
      const std::string name =
          "backbone.stage" + std::to_string(s) + ".block" + std::to_string(b);
      const int stride = b == 0 ? stage_strides[s] : 1;
      blocks_.push_back(
          std::make_unique<Bottleneck>(name, in_c, mid_widths[s], out_c, stride));
      in_c = out_c;
    }
  }
}

Tensor ResNet50Backbone::forward(const Tensor& images, bool train) {
  Tensor x = stem_pool_.forward(
      stem_relu_.forward(stem_bn_.forward(stem_conv_.forward(images, train), train),
                         train),
      train);
  for (auto& block : blocks_) x = block->forward(x, train);
  return x;
}

Tensor ResNet50Backbone::backward(const Tensor& d_feature) {
  Tensor g = d_feature;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it)
    g = (*it)->backward(g);
  return stem_conv_.backward(
      stem_bn_.backward(stem_relu_.backward(stem_pool_.backward(g))));
}

void ResNet50Backbone::collect_params(std::vector<Param*>& out) {
  stem_conv_.collect_params(out);
  stem_bn_.collect_params(out);
  for (auto& block : blocks_) block->collect_params(out);
}

void ResNet50Backbone::init(Rng& rng) {
  stem_conv_.init(rng);
  for (auto& block : blocks_) block->init(rng);
}

std::unique_ptr<Backbone> make_backbone(const std::string& kind,
                                        const std::vector<int>& tiny_widths) {
  if (kind == "tiny") return std::make_unique<TinyBackbone>(tiny_widths);
  if (kind == "resnet50") return std::make_unique<ResNet50Backbone>();
  throw ConfigError("unknown backbone '" + kind + "' (expected tiny or resnet50)");
}

}  // namespace san
