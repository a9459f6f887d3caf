#include "san/model.hpp"

#include <cmath>

#include "san/check.hpp"

namespace san {

Branch branch_from_string(const std::string& s) {
  if (s == "full") return Branch::kFull;
  if (s == "stripe") return Branch::kStripe;
  if (s == "attr") return Branch::kAttr;
  if (s == "id") return Branch::kId;
  throw ConfigError("unknown branch '" + s + "' (expected full|stripe|attr|id)");
}

std::string branch_to_string(Branch b) {
  switch (b) {
    case Branch::kFull: return "full";
    case Branch::kStripe: return "stripe";
    case Branch::kAttr: return "attr";
    case Branch::kId: return "id";
  }
  return "full";
}

// ---------------------------------------------------------------------------
// StripeReducer
// ---------------------------------------------------------------------------

StripeReducer::StripeReducer(const std::string& name, int in_c, int d,
                             bool bn_relu)
    : lin_(name + ".lin", in_c, d) {
  if (bn_relu) {
    bn_ = std::make_unique<BatchNorm>(name + ".bn", d);
    relu_ = std::make_unique<ReLU>();
  }
}

Tensor StripeReducer::forward(const Tensor& x, bool train) {
  Tensor y = lin_.forward(x, train);
  if (bn_) y = relu_->forward(bn_->forward(y, train), train);
  return y;
}

Tensor StripeReducer::backward(const Tensor& dy) {
  Tensor g = dy;
  if (bn_) g = bn_->backward(relu_->backward(g));
  return lin_.backward(g);
}

void StripeReducer::collect_params(std::vector<Param*>& out) {
  lin_.collect_params(out);
  if (bn_) bn_->collect_params(out);
}

void StripeReducer::init(Rng& rng) { lin_.init(rng); }

// ---------------------------------------------------------------------------
// SanModel
// ---------------------------------------------------------------------------

namespace {
constexpr double kClassifierInitStd = 0.01;
}

SanModel::SanModel(const ModelConfig& config) : config_(config) {
  SAN_CHECK_CONFIG(config_.num_identities > 0, "model needs num_identities > 0");
  backbone_ = make_backbone(config_.backbone, config_.tiny_widths);
  SAN_CHECK_CONFIG(config_.input_size % backbone_->total_stride() == 0,
                   "input size ", config_.input_size,
                   " is not divisible by the backbone stride ",
                   backbone_->total_stride());
  const int m = config_.input_size / backbone_->total_stride();
  const int c = backbone_->out_channels();

  if (config_.has_stripe_branch()) {
    SAN_CHECK_CONFIG(config_.q >= 1, "q must be positive");
    SAN_CHECK_CONFIG(m % config_.q == 0, "feature map size m=", m,
                     " is not divisible by q=", config_.q,
                     "; pick an input size and q with m % q == 0");
    for (int i = 0; i < config_.q; ++i) {
      const std::string base = "stripe" + std::to_string(i);
      reducers_.push_back(std::make_unique<StripeReducer>(
          base + ".reduce", c, config_.d, config_.reducer_bn_relu));
      stripe_classifiers_.push_back(std::make_unique<Linear>(
          base + ".cls", config_.d, config_.num_identities, kClassifierInitStd));
    }
  }
  if (config_.has_id_head()) {
    id_classifier_ = std::make_unique<Linear>("id.cls", c, config_.num_identities,
                                              kClassifierInitStd);
  }
  if (config_.has_attr_head()) {
    SAN_CHECK_CONFIG(config_.num_attributes > 0,
                     "attribute head needs num_attributes > 0");
    attr_classifier_ = std::make_unique<Linear>(
        "attr.cls", c, config_.num_attributes, kClassifierInitStd);
  }
}

int SanModel::feature_map_size() const {
  return config_.input_size / backbone_->total_stride();
}

int SanModel::descriptor_dim() const {
  int dim = 0;
  if (config_.has_stripe_branch()) dim += config_.q * config_.d;
  if (config_.descriptor_uses_global()) dim += backbone_->out_channels();
  return dim;
}

ForwardOutputs SanModel::forward(const Tensor& images, bool train) {
  SAN_CHECK(images.ndim() == 4 && images.dim(3) == 3,
            "model expects (n, s, s, 3) image batches");
  SAN_CHECK(images.dim(1) == config_.input_size &&
                images.dim(2) == config_.input_size,
            "image batch is ", images.dim(1), "x", images.dim(2),
            ", model was built for ", config_.input_size);
  const int n = images.dim(0);

  Tensor feature = backbone_->forward(images, train);
  const int m = feature.dim(1);
  const int c = feature.dim(3);

  ForwardOutputs out;
  if (config_.has_stripe_branch()) {
    Tensor pooled = hap_forward_batch(feature, config_.q);  // (n, q, c)
    for (int i = 0; i < config_.q; ++i) {
      Tensor p_i({n, c});
      for (int b = 0; b < n; ++b) {
        const double* src =
            pooled.data() + (static_cast<std::size_t>(b) * config_.q + i) * c;
        std::copy(src, src + c, p_i.data() + static_cast<std::size_t>(b) * c);
      }
      Tensor h_i = reducers_[i]->forward(p_i, train);
      out.stripe_logits.push_back(stripe_classifiers_[i]->forward(h_i, train));
      out.stripe_reduced.push_back(std::move(h_i));
    }
  }

  out.global_feature = global_avg_pool(feature);  // (n, c)
  if (id_classifier_) out.id_logits = id_classifier_->forward(out.global_feature, train);
  if (attr_classifier_)
    out.attr_logits = attr_classifier_->forward(out.global_feature, train);

  // Descriptor: [h_1, ..., h_q, g] in stripe order, global feature last.
  const int dim = descriptor_dim();
  out.descriptors = Tensor({n, dim});
  for (int b = 0; b < n; ++b) {
    double* row = out.descriptors.data() + static_cast<std::size_t>(b) * dim;
    int off = 0;
    for (const Tensor& h : out.stripe_reduced) {
      const double* src = h.data() + static_cast<std::size_t>(b) * config_.d;
      std::copy(src, src + config_.d, row + off);
      off += config_.d;
    }
    if (config_.descriptor_uses_global()) {
      const double* g =
          out.global_feature.data() + static_cast<std::size_t>(b) * c;
      std::copy(g, g + c, row + off);
    }
  }
  if (config_.l2_normalize) {
    for (int b = 0; b < n; ++b) {
      double* row = out.descriptors.data() + static_cast<std::size_t>(b) * dim;
      double norm = 0.0;
      for (int k = 0; k < dim; ++k) norm += row[k] * row[k];
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (int k = 0; k < dim; ++k) row[k] /= norm;
    }
  }

  if (train) {
    cached_n_ = n;
    cached_m_ = m;
  }
  return out;
}

void SanModel::backward(const HeadGrads& grads) {
  const int n = cached_n_;
  const int m = cached_m_;
  const int c = backbone_->out_channels();
  SAN_CHECK(n > 0, "backward without a cached training forward");

  Tensor d_feature({n, m, m, c});

  if (config_.has_stripe_branch()) {
    SAN_CHECK(grads.stripe_logits.size() ==
                  static_cast<std::size_t>(config_.q),
              "expected ", config_.q, " stripe gradients");
    Tensor d_pooled({n, config_.q, c});
    for (int i = 0; i < config_.q; ++i) {
      Tensor dh = stripe_classifiers_[i]->backward(grads.stripe_logits[i]);
      Tensor dp = reducers_[i]->backward(dh);  // (n, c)
      for (int b = 0; b < n; ++b) {
        double* dst =
            d_pooled.data() + (static_cast<std::size_t>(b) * config_.q + i) * c;
        const double* src = dp.data() + static_cast<std::size_t>(b) * c;
        std::copy(src, src + c, dst);
      }
    }
    Tensor d_f = hap_backward_batch(d_pooled, config_.q, m);
    for (std::size_t k = 0; k < d_feature.size(); ++k) d_feature[k] += d_f[k];
  }

  Tensor d_global({n, c});
  bool any_global = false;
  if (id_classifier_ && !grads.id_logits.empty()) {
    Tensor dg = id_classifier_->backward(grads.id_logits);
    for (std::size_t k = 0; k < d_global.size(); ++k) d_global[k] += dg[k];
    any_global = true;
  }
  if (attr_classifier_ && !grads.attr_logits.empty()) {
    Tensor dg = attr_classifier_->backward(grads.attr_logits);
    for (std::size_t k = 0; k < d_global.size(); ++k) d_global[k] += dg[k];
    any_global = true;
  }
  if (any_global) {
    Tensor d_f = global_avg_pool_backward(d_global, m);
    for (std::size_t k = 0; k < d_feature.size(); ++k) d_feature[k] += d_f[k];
  }

  backbone_->backward(d_feature);
}

std::vector<Param*> SanModel::params() {
  std::vector<Param*> out;
  backbone_->collect_params(out);
  for (auto& r : reducers_) r->collect_params(out);
  for (auto& cls : stripe_classifiers_) cls->collect_params(out);
  if (id_classifier_) id_classifier_->collect_params(out);
  if (attr_classifier_) attr_classifier_->collect_params(out);
  return out;
}

void SanModel::init(Rng& rng) {
  backbone_->init(rng);
  for (auto& r : reducers_) r->init(rng);
  for (auto& cls : stripe_classifiers_) cls->init(rng);
  if (id_classifier_) id_classifier_->init(rng);
  if (attr_classifier_) attr_classifier_->init(rng);
}

void SanModel::zero_grad() {
  for (Param* p : params()) p->grad.fill(0.0);
}

}  // namespace san
