#include "san/loss.hpp"

#include <algorithm>
#include <cmath>

#include "san/check.hpp"

namespace san {

namespace {

double log_sum_exp(const double* logits, int k) {
  double mx = logits[0];
  for (int i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += std::exp(logits[i] - mx);
  return mx + std::log(s);
}

}  // namespace

double cross_entropy(const double* logits, int k, int target,
                     double label_smoothing) {
  SAN_CHECK(k > 0, "cross_entropy on empty logit vector");
  SAN_CHECK(target >= 0 && target < k, "cross_entropy target ", target,
            " out of range [0, ", k, ")");
  const double lse = log_sum_exp(logits, k);
  if (label_smoothing == 0.0) return lse - logits[target];
  const double eps = label_smoothing;
  double mean_logit = 0.0;
  for (int i = 0; i < k; ++i) mean_logit += logits[i];
  mean_logit /= k;
  return lse - (1.0 - eps) * logits[target] - eps * mean_logit;
}

double cross_entropy(const std::vector<double>& logits, int target,
                     double label_smoothing) {
  return cross_entropy(logits.data(), static_cast<int>(logits.size()), target,
                       label_smoothing);
}

void cross_entropy_grad(const double* logits, int k, int target, double scale,
                        double label_smoothing, double* grad) {
  const double lse = log_sum_exp(logits, k);
  const double eps = label_smoothing;
  for (int i = 0; i < k; ++i) {
    const double p = std::exp(logits[i] - lse);
    double t = i == target ? 1.0 - eps : 0.0;
    t += eps / k;
    grad[i] += scale * (p - t);
  }
}

LossBreakdown total_loss(const ForwardOutputs& outputs,
                         const std::vector<LossTarget>& batch,
                         const LossOptions& opts) {
  return total_loss_with_grads(outputs, batch, opts, nullptr);
}

LossBreakdown total_loss_with_grads(const ForwardOutputs& outputs,
                                    const std::vector<LossTarget>& batch,
                                    const LossOptions& opts, HeadGrads* grads) {
  const int n = static_cast<int>(batch.size());
  SAN_CHECK(n > 0, "total_loss on an empty batch");
  LossBreakdown out;

  const double w_stripe = opts.weights[0];
  const double w_id = opts.weights[1];
  const double w_attr = opts.weights[2];
  const double inv_n = 1.0 / n;

  // Stripe terms: each stripe classifier is supervised by the identity label.
  const int q = static_cast<int>(outputs.stripe_logits.size());
  out.stripe.assign(q, 0.0);
  if (grads) grads->stripe_logits.clear();
  for (int i = 0; i < q; ++i) {
    const Tensor& logits = outputs.stripe_logits[i];
    const int k = logits.dim(1);
    Tensor g;
    if (grads) g = Tensor(logits.shape());
    for (int b = 0; b < n; ++b) {
      const double* row = logits.data() + static_cast<std::size_t>(b) * k;
      out.stripe[i] +=
          inv_n * cross_entropy(row, k, batch[b].identity, opts.label_smoothing);
      if (grads)
        cross_entropy_grad(row, k, batch[b].identity, w_stripe * inv_n,
                           opts.label_smoothing,
                           g.data() + static_cast<std::size_t>(b) * k);
    }
    if (grads) grads->stripe_logits.push_back(std::move(g));
  }

  if (!outputs.id_logits.empty()) {
    const int k = outputs.id_logits.dim(1);
    Tensor g;
    if (grads) g = Tensor(outputs.id_logits.shape());
    for (int b = 0; b < n; ++b) {
      const double* row =
          outputs.id_logits.data() + static_cast<std::size_t>(b) * k;
      out.id +=
          inv_n * cross_entropy(row, k, batch[b].identity, opts.label_smoothing);
      if (grads)
        cross_entropy_grad(row, k, batch[b].identity, w_id * inv_n,
                           opts.label_smoothing,
                           g.data() + static_cast<std::size_t>(b) * k);
    }
    if (grads) grads->id_logits = std::move(g);
  }

  if (!outputs.attr_logits.empty()) {
    const int k = outputs.attr_logits.dim(1);
    int labeled = 0;
    for (const LossTarget& t : batch)
      if (t.attribute >= 0) ++labeled;
    Tensor g;
    if (grads) g = Tensor(outputs.attr_logits.shape());
    if (labeled > 0) {
      const double inv_labeled = 1.0 / labeled;
      for (int b = 0; b < n; ++b) {
        if (batch[b].attribute < 0) continue;
        const double* row =
            outputs.attr_logits.data() + static_cast<std::size_t>(b) * k;
        out.attr += inv_labeled * cross_entropy(row, k, batch[b].attribute,
                                                opts.label_smoothing);
        if (grads)
          cross_entropy_grad(row, k, batch[b].attribute, w_attr * inv_labeled,
                             opts.label_smoothing,
                             g.data() + static_cast<std::size_t>(b) * k);
      }
    }
    if (grads) grads->attr_logits = std::move(g);
  }

  double stripe_sum = 0.0;
  for (double s : out.stripe) stripe_sum += s;
  out.total = w_stripe * stripe_sum + w_id * out.id + w_attr * out.attr;
  return out;
}

}  // namespace san
