#include "san/hap.hpp"

namespace san {

namespace {

void check_hap_shape(const Tensor& f, int q) {
  SAN_CHECK(f.ndim() == 4, "hap_forward expects (n, m, m, c), got ndim=", f.ndim());
  const int m = f.dim(1);
  SAN_CHECK(f.dim(2) == m, "hap_forward expects a square spatial extent, got ",
            m, "x", f.dim(2));
  SAN_CHECK(q >= 1, "stripe count must be positive, got ", q);
  SAN_CHECK(m % q == 0, "spatial size m=", m, " is not divisible by q=", q);
}

}  // namespace

Tensor hap_forward_batch(const Tensor& feature_maps, int q) {
  check_hap_shape(feature_maps, q);
  const int n = feature_maps.dim(0);
  const int m = feature_maps.dim(1);
  const int c = feature_maps.dim(3);
  const int rows_per_stripe = m / q;
  const double inv = 1.0 / (static_cast<double>(rows_per_stripe) * m);

  Tensor pooled({n, q, c});
  const double* src = feature_maps.data();
  double* dst = pooled.data();
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < q; ++i) {
      double* out = dst + (static_cast<std::size_t>(b) * q + i) * c;
      for (int r = i * rows_per_stripe; r < (i + 1) * rows_per_stripe; ++r) {
        const double* row =
            src + ((static_cast<std::size_t>(b) * m + r) * m) * c;
        for (int k = 0; k < m; ++k) {
          const double* col = row + static_cast<std::size_t>(k) * c;
          for (int ch = 0; ch < c; ++ch) out[ch] += col[ch];
        }
      }
      for (int ch = 0; ch < c; ++ch) out[ch] *= inv;
    }
  }
  return pooled;
}

Tensor hap_forward(const Tensor& feature_map, int q) {
  SAN_CHECK(feature_map.ndim() == 3, "hap_forward expects (m, m, c)");
  Tensor batched({1, feature_map.dim(0), feature_map.dim(1), feature_map.dim(2)});
  std::copy(feature_map.data(), feature_map.data() + feature_map.size(),
            batched.data());
  Tensor pooled = hap_forward_batch(batched, q);
  Tensor out({q, feature_map.dim(2)});
  std::copy(pooled.data(), pooled.data() + pooled.size(), out.data());
  return out;
}

Tensor hap_backward_batch(const Tensor& d_pooled, int q, int m) {
  SAN_CHECK(d_pooled.ndim() == 3, "hap_backward expects (n, q, c)");
  SAN_CHECK(d_pooled.dim(1) == q, "gradient has ", d_pooled.dim(1),
            " stripes, expected q=", q);
  SAN_CHECK(q >= 1 && m % q == 0, "spatial size m=", m,
            " is not divisible by q=", q);
  const int n = d_pooled.dim(0);
  const int c = d_pooled.dim(2);
  const int rows_per_stripe = m / q;
  const double coeff = static_cast<double>(q) / (static_cast<double>(m) * m);

  Tensor d_f({n, m, m, c});
  const double* src = d_pooled.data();
  double* dst = d_f.data();
  for (int b = 0; b < n; ++b) {
    for (int i = 0; i < q; ++i) {
      const double* g = src + (static_cast<std::size_t>(b) * q + i) * c;
      for (int r = i * rows_per_stripe; r < (i + 1) * rows_per_stripe; ++r) {
        double* row = dst + ((static_cast<std::size_t>(b) * m + r) * m) * c;
        for (int k = 0; k < m; ++k) {
          double* col = row + static_cast<std::size_t>(k) * c;
          for (int ch = 0; ch < c; ++ch) col[ch] = coeff * g[ch];
        }
      }
    }
  }
  return d_f;
}

Tensor hap_backward(const Tensor& d_pooled, int q, int m) {
  SAN_CHECK(d_pooled.ndim() == 2, "hap_backward expects (q, c)");
  Tensor batched({1, d_pooled.dim(0), d_pooled.dim(1)});
  std::copy(d_pooled.data(), d_pooled.data() + d_pooled.size(), batched.data());
  Tensor d_f = hap_backward_batch(batched, q, m);
  Tensor out({m, m, d_pooled.dim(1)});
  std::copy(d_f.data(), d_f.data() + d_f.size(), out.data());
  return out;
}

Tensor global_avg_pool(const Tensor& feature_maps) {
  Tensor pooled = hap_forward_batch(feature_maps, 1);
  Tensor out({pooled.dim(0), pooled.dim(2)});
  std::copy(pooled.data(), pooled.data() + pooled.size(), out.data());
  return out;
}

Tensor global_avg_pool_backward(const Tensor& d_global, int m) {
  SAN_CHECK(d_global.ndim() == 2, "global pool gradient expects (n, c)");
  Tensor as_stripes({d_global.dim(0), 1, d_global.dim(1)});
  std::copy(d_global.data(), d_global.data() + d_global.size(),
            as_stripes.data());
  return hap_backward_batch(as_stripes, 1, m);
}

}  // namespace san
