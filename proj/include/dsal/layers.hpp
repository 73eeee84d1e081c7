#pragma once

#include <string>
#include <vector>

#include "dsal/kernels.hpp"
#include "dsal/rng.hpp"
#include "dsal/tensor.hpp"

namespace dsal {

enum class ParamGroup { backbone, heads };

struct Param {
  std::string name;
  ParamGroup group = ParamGroup::backbone;
  Tensor value, grad, momentum;
  void init(std::vector<int64_t> shape) {
    value.reset(shape);
    grad.reset(shape);
    momentum.reset(std::move(shape));
  }
};

// Persistent non-trainable state (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  Tensor value;
};

class ParamStore {
 public:
  void add(Param* p) { params_.push_back(p); }
  void add(NamedBuffer* b) { buffers_.push_back(b); }
  const std::vector<Param*>& params() const { return params_; }
  const std::vector<NamedBuffer*>& buffers() const { return buffers_; }

 private:
  std::vector<Param*> params_;
  std::vector<NamedBuffer*> buffers_;
};

struct ForwardMode {
  bool train = false;
  bool bn_batch_stats = true;  // false freezes BN to running statistics
};

void fill_normal(Tensor& t, Rng& rng, double stddev);

// 3-d convolution over [n,c,t,h,w] tensors; no-bias form is used throughout
// the backbone where batch norm follows.
class Conv3d {
 public:
  Conv3d(ParamStore& store, std::string name, ParamGroup group, int in_ch,
         int out_ch, kernels::ConvGeom geom, bool bias, Rng& rng);
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy, bool need_input_grad = true);

 private:
  kernels::ConvGeom geom_;
  int in_ch_, out_ch_;
  bool has_bias_;
  Param weight_, bias_;
  TensorPtr x_;
};

// 2-d convolution over [n,c,h,w]; same kernels with a unit temporal axis.
class Conv2d {
 public:
  Conv2d(ParamStore& store, std::string name, ParamGroup group, int in_ch,
         int out_ch, int kernel, int pad, bool bias, Rng& rng);
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy, bool need_input_grad = true);

 private:
  kernels::ConvGeom geom_;
  int in_ch_, out_ch_;
  bool has_bias_;
  Param weight_, bias_;
  TensorPtr x_;
};

// Works for both [n,c,t,h,w] and [n,c,h,w]; statistics reduce over
// everything but the channel axis.
class BatchNorm {
 public:
  BatchNorm(ParamStore& store, std::string name, ParamGroup group,
            int channels);
  TensorPtr forward(TensorPtr x, const ForwardMode& mode);
  TensorPtr backward(const TensorPtr& gy, bool need_input_grad = true);

 private:
  int channels_;
  Param gamma_, beta_;
  NamedBuffer running_mean_, running_var_;
  Tensor save_mean_, save_invstd_;
  TensorPtr x_;
  bool used_batch_stats_ = false;
};

class Relu {
 public:
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy);

 private:
  TensorPtr y_;
};

class Sigmoid {
 public:
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy);

 private:
  TensorPtr y_;
};

class MaxPool3d {
 public:
  MaxPool3d(int kernel, int stride, int pad)
      : k_(kernel), s_(stride), p_(pad) {}
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy);

 private:
  int k_, s_, p_;
  std::vector<int32_t> argmax_;
  std::vector<int64_t> in_shape_, out_shape_;
};

class TemporalMean {
 public:
  TensorPtr forward(TensorPtr x);  // [n,c,t,h,w] -> [n,c,h,w]
  TensorPtr backward(const TensorPtr& gy);

 private:
  std::vector<int64_t> in_shape_;
};

class Bilinear2d {
 public:
  Bilinear2d(int out_h, int out_w) : oh_(out_h), ow_(out_w) {}
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy);

 private:
  int oh_, ow_;
  std::vector<int64_t> in_shape_;
};

// Transposed convolution with kernel == stride (integer upsampling), the
// DSAM supervision upsampler.
class ConvTranspose2d {
 public:
  ConvTranspose2d(ParamStore& store, std::string name, ParamGroup group,
                  int in_ch, int out_ch, int kernel_stride, Rng& rng);
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy, bool need_input_grad = true);

 private:
  int in_ch_, out_ch_, k_;
  Param weight_, bias_;
  TensorPtr x_;
};

// Spatial softmax over the h*w positions of a [n,1,h,w] map.
class SpatialSoftmax {
 public:
  TensorPtr forward(TensorPtr x);
  TensorPtr backward(const TensorPtr& gy);

 private:
  TensorPtr y_;
};

// Channel-axis concatenation helpers for skip connections and fusion.
TensorPtr concat_channels(const std::vector<TensorPtr>& parts);
std::vector<TensorPtr> split_channels(const TensorPtr& g,
                                      const std::vector<int64_t>& widths);

}  // namespace dsal
