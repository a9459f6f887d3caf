#include "san/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace san {

namespace {

int conv_out_extent(int in, int ksize, int stride, int pad) {
  return (in + 2 * pad - ksize) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_c, int out_c, int ksize, int stride,
               int pad, bool bias)
    : in_c_(in_c),
      out_c_(out_c),
      ksize_(ksize),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(name + ".w"),
      bias_(name + ".b") {
  weight_.init_shape({out_c_, ksize_, ksize_, in_c_});
  if (has_bias_) bias_.init_shape({out_c_});
}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(ksize_) * ksize_ * in_c_;
  const double std = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < weight_.value.size(); ++i)
    weight_.value[i] = rng.normal(0.0, std);
  if (has_bias_) bias_.value.fill(0.0);
}

void Conv2d::im2col(const Tensor& x, int b, std::vector<double>& cols, int oh,
                    int ow) const {
  const int h = x.dim(1), w = x.dim(2);
  const int k2c = ksize_ * ksize_ * in_c_;
  std::fill(cols.begin(), cols.end(), 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      double* dst = cols.data() + (static_cast<std::size_t>(oy) * ow + ox) * k2c;
      for (int ky = 0; ky < ksize_; ++ky) {
        const int iy = oy * stride_ - pad_ + ky;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < ksize_; ++kx) {
          const int ix = ox * stride_ - pad_ + kx;
          if (ix < 0 || ix >= w) continue;
          const double* src = x.data() +
                              ((static_cast<std::size_t>(b) * h + iy) * w + ix) *
                                  in_c_;
          std::copy(src, src + in_c_,
                    dst + (static_cast<std::size_t>(ky) * ksize_ + kx) * in_c_);
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  SAN_CHECK(x.ndim() == 4 && x.dim(3) == in_c_, "conv input shape mismatch");
  const int n = x.dim(0);
  const int oh = conv_out_extent(x.dim(1), ksize_, stride_, pad_);
  const int ow = conv_out_extent(x.dim(2), ksize_, stride_, pad_);
  SAN_CHECK(oh > 0 && ow > 0, "conv output collapsed to zero extent");

  Tensor y({n, oh, ow, out_c_});
  const int k2c = ksize_ * ksize_ * in_c_;
  std::vector<double> cols(static_cast<std::size_t>(oh) * ow * k2c);
  for (int b = 0; b < n; ++b) {
    im2col(x, b, cols, oh, ow);
    double* out = y.data() + static_cast<std::size_t>(b) * oh * ow * out_c_;
    const std::size_t positions = static_cast<std::size_t>(oh) * ow;
    for (std::size_t p = 0; p < positions; ++p) {
      const double* col = cols.data() + p * k2c;
      double* yrow = out + p * out_c_;
      for (int oc = 0; oc < out_c_; ++oc) {
        const double* wrow = weight_.value.data() + static_cast<std::size_t>(oc) * k2c;
        double acc = has_bias_ ? bias_.value[oc] : 0.0;
        for (int k = 0; k < k2c; ++k) acc += col[k] * wrow[k];
        yrow[oc] = acc;
      }
    }
  }
  if (train) cached_x_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const Tensor& x = cached_x_;
  SAN_CHECK(!x.empty() || dy.dim(0) == 0, "conv backward without cached forward");
  const int n = dy.dim(0), oh = dy.dim(1), ow = dy.dim(2);
  const int h = x.ndim() == 4 ? x.dim(1) : 0;
  const int w = x.ndim() == 4 ? x.dim(2) : 0;
  const int k2c = ksize_ * ksize_ * in_c_;

  Tensor dx({n, h, w, in_c_});
  std::vector<double> cols(static_cast<std::size_t>(oh) * ow * k2c);
  std::vector<double> dcols(cols.size());
  for (int b = 0; b < n; ++b) {
    im2col(x, b, cols, oh, ow);
    std::fill(dcols.begin(), dcols.end(), 0.0);
    const double* dout = dy.data() + static_cast<std::size_t>(b) * oh * ow * out_c_;
    const std::size_t positions = static_cast<std::size_t>(oh) * ow;
    for (std::size_t p = 0; p < positions; ++p) {
      const double* col = cols.data() + p * k2c;
      double* dcol = dcols.data() + p * k2c;
      const double* g = dout + p * out_c_;
      for (int oc = 0; oc < out_c_; ++oc) {
        const double gv = g[oc];
        if (gv == 0.0) continue;
        const double* wrow = weight_.value.data() + static_cast<std::size_t>(oc) * k2c;
        double* dwrow = weight_.grad.data() + static_cast<std::size_t>(oc) * k2c;
        for (int k = 0; k < k2c; ++k) {
          dwrow[k] += gv * col[k];
          dcol[k] += gv * wrow[k];
        }
        if (has_bias_) bias_.grad[oc] += gv;
      }
    }
    // col2im scatter back into dx.
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* dcol =
            dcols.data() + (static_cast<std::size_t>(oy) * ow + ox) * k2c;
        for (int ky = 0; ky < ksize_; ++ky) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < ksize_; ++kx) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix < 0 || ix >= w) continue;
            double* dst = dx.data() +
                          ((static_cast<std::size_t>(b) * h + iy) * w + ix) * in_c_;
            const double* src =
                dcol + (static_cast<std::size_t>(ky) * ksize_ + kx) * in_c_;
            for (int ch = 0; ch < in_c_; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
  return dx;
}

void Conv2d::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels, double eps, double momentum)
    : channels_(channels),
      eps_(eps),
      momentum_(momentum),
      gamma_(name + ".gamma"),
      beta_(name + ".beta") {
  gamma_.init_shape({channels_});
  beta_.init_shape({channels_});
  gamma_.value.fill(1.0);
  running_mean_ = Tensor({channels_});
  running_var_ = Tensor({channels_});
  running_var_.fill(1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool train) {
  SAN_CHECK(x.ndim() >= 2 && x.dim(x.ndim() - 1) == channels_,
            "batchnorm channel mismatch");
  const std::size_t rows = x.size() / static_cast<std::size_t>(channels_);
  Tensor y(x.shape());

  std::vector<double> mean(channels_, 0.0), var(channels_, 0.0);
  if (train && rows > 0) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* px = x.data() + r * channels_;
      for (int c = 0; c < channels_; ++c) mean[c] += px[c];
    }
    for (int c = 0; c < channels_; ++c) mean[c] /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* px = x.data() + r * channels_;
      for (int c = 0; c < channels_; ++c) {
        const double d = px[c] - mean[c];
        var[c] += d * d;
      }
    }
    for (int c = 0; c < channels_; ++c) var[c] /= static_cast<double>(rows);
    for (int c = 0; c < channels_; ++c) {
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
    }
  } else {
    for (int c = 0; c < channels_; ++c) {
      mean[c] = running_mean_[c];
      var[c] = running_var_[c];
    }
  }

  std::vector<double> invstd(channels_);
  for (int c = 0; c < channels_; ++c) invstd[c] = 1.0 / std::sqrt(var[c] + eps_);

  Tensor xhat(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* px = x.data() + r * channels_;
    double* ph = xhat.data() + r * channels_;
    double* py = y.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      ph[c] = (px[c] - mean[c]) * invstd[c];
      py[c] = gamma_.value[c] * ph[c] + beta_.value[c];
    }
  }

  if (train) {
    cached_xhat_ = std::move(xhat);
    cached_invstd_ = std::move(invstd);
    cached_rows_ = rows;
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
  const std::size_t rows = cached_rows_;
  Tensor dx(dy.shape());
  if (rows == 0) return dx;

  std::vector<double> sum_dy(channels_, 0.0), sum_dy_xhat(channels_, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pdy = dy.data() + r * channels_;
    const double* ph = cached_xhat_.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      sum_dy[c] += pdy[c];
      sum_dy_xhat[c] += pdy[c] * ph[c];
    }
  }
  for (int c = 0; c < channels_; ++c) {
    gamma_.grad[c] += sum_dy_xhat[c];
    beta_.grad[c] += sum_dy[c];
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* pdy = dy.data() + r * channels_;
    const double* ph = cached_xhat_.data() + r * channels_;
    double* pdx = dx.data() + r * channels_;
    for (int c = 0; c < channels_; ++c) {
      pdx[c] = gamma_.value[c] * cached_invstd_[c] *
               (pdy[c] - inv_rows * sum_dy[c] - ph[c] * inv_rows * sum_dy_xhat[c]);
    }
  }
  return dx;
}

void BatchNorm::collect_params(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  if (train) {
    cached_mask_ = Tensor(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      cached_mask_[i] = x[i] > 0.0 ? 1.0 : 0.0;
  }
  return y;
}

Tensor ReLU::backward(const Tensor& dy) {
  Tensor dx(dy.shape());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * cached_mask_[i];
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool2d
// ---------------------------------------------------------------------------

MaxPool2d::MaxPool2d(int ksize, int stride, int pad)
    : ksize_(ksize), stride_(stride), pad_(pad) {}

Tensor MaxPool2d::forward(const Tensor& x, bool train) {
  SAN_CHECK(x.ndim() == 4, "maxpool expects (n, h, w, c)");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int oh = conv_out_extent(h, ksize_, stride_, pad_);
  const int ow = conv_out_extent(w, ksize_, stride_, pad_);
  Tensor y({n, oh, ow, c});
  std::vector<std::size_t> argmax(y.size());

  for (int b = 0; b < n; ++b) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (int ky = 0; ky < ksize_; ++ky) {
            const int iy = oy * stride_ - pad_ + ky;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < ksize_; ++kx) {
              const int ix = ox * stride_ - pad_ + kx;
              if (ix < 0 || ix >= w) continue;
              const std::size_t idx =
                  ((static_cast<std::size_t>(b) * h + iy) * w + ix) * c + ch;
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          }
          const std::size_t out_idx =
              ((static_cast<std::size_t>(b) * oh + oy) * ow + ox) * c + ch;
          y[out_idx] = best;
          argmax[out_idx] = best_idx;
        }
      }
    }
  }
  if (train) {
    cached_in_shape_ = x.shape();
    cached_argmax_ = std::move(argmax);
  }
  return y;
}

Tensor MaxPool2d::backward(const Tensor& dy) {
  Tensor dx(cached_in_shape_);
  for (std::size_t i = 0; i < dy.size(); ++i)
    dx[cached_argmax_[i]] += dy[i];
  return dx;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in, int out, double init_std)
    : in_(in),
      out_(out),
      init_std_(init_std),
      weight_(name + ".w"),
      bias_(name + ".b") {
  weight_.init_shape({out_, in_});
  bias_.init_shape({out_});
}

void Linear::init(Rng& rng) {
  // Negative init_std selects He initialization; classifiers pass a small
  // fixed std instead.
  const double std =
      init_std_ > 0.0 ? init_std_ : std::sqrt(2.0 / static_cast<double>(in_));
  for (std::size_t i = 0; i < weight_.value.size(); ++i)
    weight_.value[i] = rng.normal(0.0, std);
  bias_.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  SAN_CHECK(x.ndim() == 2 && x.dim(1) == in_, "linear input shape mismatch");
  const int n = x.dim(0);
  Tensor y({n, out_});
  for (int b = 0; b < n; ++b) {
    const double* px = x.data() + static_cast<std::size_t>(b) * in_;
    double* py = y.data() + static_cast<std::size_t>(b) * out_;
    for (int o = 0; o < out_; ++o) {
      const double* wrow = weight_.value.data() + static_cast<std::size_t>(o) * in_;
      double acc = bias_.value[o];
      for (int i = 0; i < in_; ++i) acc += px[i] * wrow[i];
      py[o] = acc;
    }
  }
  if (train) cached_x_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  const int n = dy.dim(0);
  Tensor dx({n, in_});
  for (int b = 0; b < n; ++b) {
    const double* pdy = dy.data() + static_cast<std::size_t>(b) * out_;
    const double* px = cached_x_.data() + static_cast<std::size_t>(b) * in_;
    double* pdx = dx.data() + static_cast<std::size_t>(b) * in_;
    for (int o = 0; o < out_; ++o) {
      const double g = pdy[o];
      if (g == 0.0) continue;
      const double* wrow = weight_.value.data() + static_cast<std::size_t>(o) * in_;
      double* dwrow = weight_.grad.data() + static_cast<std::size_t>(o) * in_;
      for (int i = 0; i < in_; ++i) {
        dwrow[i] += g * px[i];
        pdx[i] += g * wrow[i];
      }
      bias_.grad[o] += g;
    }
  }
  return dx;
}

void Linear::collect_params(std::vector<Param*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// Sequential
// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor cur = x;
  for (auto& l : layers_) cur = l->forward(cur, train);
  return cur;
}

Tensor Sequential::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    cur = (*it)->backward(cur);
  return cur;
}

void Sequential::collect_params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

void Sequential::init(Rng& rng) {
  for (auto& l : layers_) l->init(rng);
}

}  // namespace san
