#pragma once

#include "san/tensor.hpp"

namespace san {

// Horizontal average pooling. The input feature map is partitioned into q
// horizontal stripes of m/q rows each; every column vector inside a stripe is
// averaged into one c-dim part vector. Stripe i covers rows
// [i*m/q, (i+1)*m/q).

// (m, m, c) -> (q, c). Requires m % q == 0.
Tensor hap_forward(const Tensor& feature_map, int q);

// Batched: (n, m, m, c) -> (n, q, c).
Tensor hap_forward_batch(const Tensor& feature_maps, int q);

// Adjoint of hap_forward. Every element of stripe i receives
// q/(m*m) * d_pooled[i] per channel. (q, c) -> (m, m, c).
Tensor hap_backward(const Tensor& d_pooled, int q, int m);

// Batched: (n, q, c) -> (n, m, m, c).
Tensor hap_backward_batch(const Tensor& d_pooled, int q, int m);

// Global average pooling is the q = 1 case flattened to (n, c).
Tensor global_avg_pool(const Tensor& feature_maps);
Tensor global_avg_pool_backward(const Tensor& d_global, int m);

}  // namespace san
