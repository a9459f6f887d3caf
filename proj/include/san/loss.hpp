#pragma once

#include <array>
#include <vector>

#include "san/model.hpp"
#include "san/tensor.hpp"

namespace san {

// One training example's supervision: identity index, and attribute index or
// -1 when the record carries no model/type label. Soft-labeled attributes are
// supervised exactly like hard ones, so no flag is needed here.
struct LossTarget {
  int identity = 0;
  int attribute = -1;
};

struct LossOptions {
  // Weights for (sum of stripe terms, id term, attribute term).
  std::array<double, 3> weights = {1.0, 1.0, 1.0};
  double label_smoothing = 0.0;
};

struct LossBreakdown {
  std::vector<double> stripe;  // per-stripe batch means, length q
  double id = 0.0;
  double attr = 0.0;
  double total = 0.0;
};

// -log softmax(logits)[target], stabilized through log-sum-exp.
double cross_entropy(const double* logits, int k, int target,
                     double label_smoothing = 0.0);
double cross_entropy(const std::vector<double>& logits, int target,
                     double label_smoothing = 0.0);

// softmax(logits) - onehot(target), scaled by `scale`; written into grad.
void cross_entropy_grad(const double* logits, int k, int target, double scale,
                        double label_smoothing, double* grad);

// Batch-mean loss over all enabled heads. Records without an attribute
// contribute nothing to the attribute term and are excluded from its mean.
LossBreakdown total_loss(const ForwardOutputs& outputs,
                         const std::vector<LossTarget>& batch,
                         const LossOptions& opts = {});

// Same, additionally emitting d(total)/d(logits) for every head.
LossBreakdown total_loss_with_grads(const ForwardOutputs& outputs,
                                    const std::vector<LossTarget>& batch,
                                    const LossOptions& opts, HeadGrads* grads);

}  // namespace san
