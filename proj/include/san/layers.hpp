#pragma once

#include <memory>
#include <string>
#include <vector>

#include "san/rng.hpp"
#include "san/tensor.hpp"

namespace san {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  explicit Param(std::string n = "") : name(std::move(n)) {}
  void init_shape(const std::vector<int>& shape) {
    value = Tensor(shape);
    grad = Tensor(shape);
  }
};

// Layers cache activations during forward(train=true) for the subsequent
// backward call. forward(train=false) leaves no state behind, so a built
// model in eval mode can serve concurrent readers.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Param*>& out) {}
  virtual void init(Rng& rng) {}
};

// 2D convolution on NHWC tensors. Weights are (out_c, kh, kw, in_c) so each
// output channel's filter matches one im2col row.
class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_c, int out_c, int ksize, int stride, int pad,
         bool bias);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(Rng& rng) override;

  int out_channels() const { return out_c_; }
  int stride() const { return stride_; }

 private:
  void im2col(const Tensor& x, int b, std::vector<double>& cols, int oh,
              int ow) const;

  int in_c_, out_c_, ksize_, stride_, pad_;
  bool has_bias_;
  Param weight_, bias_;
  Tensor cached_x_;
};

// Batch normalization over all leading axes; the channel axis is last.
// Accepts (n, h, w, c) and (n, c) inputs.
class BatchNorm : public Layer {
 public:
  BatchNorm(std::string name, int channels, double eps = 1e-5,
            double momentum = 0.1);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;

  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  int channels_;
  double eps_, momentum_;
  Param gamma_, beta_;
  Tensor running_mean_, running_var_;
  // Caches for backward.
  Tensor cached_xhat_;
  std::vector<double> cached_invstd_;
  std::size_t cached_rows_ = 0;
};

class ReLU : public Layer {
 public:
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Tensor cached_mask_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int ksize, int stride, int pad);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;

 private:
  int ksize_, stride_, pad_;
  std::vector<int> cached_in_shape_;
  std::vector<std::size_t> cached_argmax_;
};

// Fully-connected layer on (n, in) tensors: y = x W^T + b, W is (out, in).
class Linear : public Layer {
 public:
  Linear(std::string name, int in, int out, double init_std = -1.0);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(Rng& rng) override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }

 private:
  int in_, out_;
  double init_std_;
  Param weight_, bias_;
  Tensor cached_x_;
};

// Convenience container running layers in order.
class Sequential : public Layer {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& dy) override;
  void collect_params(std::vector<Param*>& out) override;
  void init(Rng& rng) override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace san
