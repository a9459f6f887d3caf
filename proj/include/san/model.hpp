#pragma once

#include <memory>
#include <string>
#include <vector>

#include "san/backbone.hpp"
#include "san/hap.hpp"
#include "san/layers.hpp"

namespace san {

// Which training signals and descriptor parts are active.
//   full   - stripe classifiers + ID classifier + attribute classifier
//   stripe - stripe classifiers only
//   attr   - ID + attribute classifiers on the global feature
//   id     - ID classifier only (baseline)
enum class Branch { kFull, kStripe, kAttr, kId };

Branch branch_from_string(const std::string& s);
std::string branch_to_string(Branch b);

struct ModelConfig {
  std::string backbone = "resnet50";
  std::vector<int> tiny_widths = {8, 16, 32, 64};
  int input_size = 256;
  int q = 8;
  int d = 512;
  int num_identities = 0;  // C
  int num_attributes = 0;  // M
  Branch branch = Branch::kFull;
  bool reducer_bn_relu = true;
  bool l2_normalize = false;

  bool has_stripe_branch() const {
    return branch == Branch::kFull || branch == Branch::kStripe;
  }
  bool has_id_head() const {
    return branch == Branch::kFull || branch == Branch::kAttr ||
           branch == Branch::kId;
  }
  bool has_attr_head() const {
    return branch == Branch::kFull || branch == Branch::kAttr;
  }
  // Retrieval uses the features of the trained branch: stripe-only models
  // concatenate the h_i, global-only models use g, the full model uses both.
  bool descriptor_uses_global() const { return branch != Branch::kStripe; }
};

struct ForwardOutputs {
  std::vector<Tensor> stripe_logits;  // q tensors of (n, C)
  Tensor id_logits;                   // (n, C) or empty
  Tensor attr_logits;                 // (n, M) or empty
  std::vector<Tensor> stripe_reduced; // q tensors of (n, d)
  Tensor global_feature;              // (n, c)
  Tensor descriptors;                 // (n, descriptor_dim)
};

// Gradients flowing back into the model, one per emitted logit tensor.
// Leave a tensor empty to send zero gradient down that head.
struct HeadGrads {
  std::vector<Tensor> stripe_logits;
  Tensor id_logits;
  Tensor attr_logits;
};

// Per-stripe dimension reducer: 1x1 affine (c -> d) with optional
// batchnorm + rectifier.
class StripeReducer {
 public:
  StripeReducer(const std::string& name, int in_c, int d, bool bn_relu);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy);
  void collect_params(std::vector<Param*>& out);
  void init(Rng& rng);

 private:
  Linear lin_;
  std::unique_ptr<BatchNorm> bn_;
  std::unique_ptr<ReLU> relu_;
};

class SanModel {
 public:
  explicit SanModel(const ModelConfig& config);

  // images: (n, s, s, 3) with s == config.input_size.
  ForwardOutputs forward(const Tensor& images, bool train);

  // Backpropagates head gradients from the most recent forward(train=true)
  // call and accumulates parameter gradients.
  void backward(const HeadGrads& grads);

  const ModelConfig& config() const { return config_; }
  int feature_channels() const { return backbone_->out_channels(); }
  int feature_map_size() const;
  int descriptor_dim() const;

  std::vector<Param*> params();
  void init(Rng& rng);
  void zero_grad();

  Backbone& backbone() { return *backbone_; }

 private:
  ModelConfig config_;
  std::unique_ptr<Backbone> backbone_;
  std::vector<std::unique_ptr<StripeReducer>> reducers_;
  std::vector<std::unique_ptr<Linear>> stripe_classifiers_;
  std::unique_ptr<Linear> id_classifier_;
  std::unique_ptr<Linear> attr_classifier_;

  // Shapes cached by forward(train=true) for backward.
  int cached_n_ = 0;
  int cached_m_ = 0;
};

}  // namespace san
