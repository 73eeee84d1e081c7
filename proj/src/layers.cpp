#include "dsal/layers.hpp"

#include <cmath>
#include <cstring>

#include "dsal/error.hpp"

namespace dsal {

namespace {

using kernels::ConvGeom;

void check_shape(const TensorPtr& x, int ndim, const char* who) {
  if (!x || x->ndim() != ndim)
    throw Error("shape-error", std::string(who) + ": expected " +
                                   std::to_string(ndim) + "-d input" +
                                   (x ? ", got " + x->shape_str() : ""));
}

}  // namespace

void fill_normal(Tensor& t, Rng& rng, double stddev) {
  float* p = t.data();
  for (int64_t i = 0; i < t.numel(); i++)
    p[i] = static_cast<float>(rng.normal() * stddev);
}

// ---------------------------------------------------------------- Conv3d

Conv3d::Conv3d(ParamStore& store, std::string name, ParamGroup group,
               int in_ch, int out_ch, ConvGeom geom, bool bias, Rng& rng)
    : geom_(geom), in_ch_(in_ch), out_ch_(out_ch), has_bias_(bias) {
  weight_.name = name + ".weight";
  weight_.group = group;
  weight_.init({out_ch, in_ch, geom.kt, geom.kh, geom.kw});
  const double fan_in =
      static_cast<double>(in_ch) * geom.kt * geom.kh * geom.kw;
  fill_normal(weight_.value, rng, std::sqrt(2.0 / fan_in));
  store.add(&weight_);
  if (has_bias_) {
    bias_.name = name + ".bias";
    bias_.group = group;
    bias_.init({out_ch});
    store.add(&bias_);
  }
}

TensorPtr Conv3d::forward(TensorPtr x) {
  check_shape(x, 5, "conv3d");
  if (x->dim(1) != in_ch_)
    throw Error("shape-error", "conv3d " + weight_.name + ": expected " +
                                   std::to_string(in_ch_) + " channels, got " +
                                   x->shape_str());
  const int n = static_cast<int>(x->dim(0));
  const int t = static_cast<int>(x->dim(2));
  const int h = static_cast<int>(x->dim(3));
  const int w = static_cast<int>(x->dim(4));
  auto y = make_tensor_uninit({n, out_ch_, kernels::conv_out_dim(t, geom_.kt, geom_.st, geom_.pt),
                        kernels::conv_out_dim(h, geom_.kh, geom_.sh, geom_.ph),
                        kernels::conv_out_dim(w, geom_.kw, geom_.sw, geom_.pw)});
  kernels::conv3d_forward(x->data(), n, in_ch_, t, h, w,
                          weight_.value.data(), out_ch_,
                          has_bias_ ? bias_.value.data() : nullptr, geom_,
                          y->data());
  x_ = std::move(x);
  return y;
}

TensorPtr Conv3d::backward(const TensorPtr& gy, bool need_input_grad) {
  const int n = static_cast<int>(x_->dim(0));
  const int t = static_cast<int>(x_->dim(2));
  const int h = static_cast<int>(x_->dim(3));
  const int w = static_cast<int>(x_->dim(4));
  TensorPtr gx;
  if (need_input_grad) gx = make_tensor_uninit(x_->shape());
  kernels::conv3d_backward(x_->data(), weight_.value.data(), n, in_ch_, t, h,
                           w, out_ch_, geom_, gy->data(),
                           gx ? gx->data() : nullptr, weight_.grad.data(),
                           has_bias_ ? bias_.grad.data() : nullptr);
  x_.reset();
  return gx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ParamStore& store, std::string name, ParamGroup group,
               int in_ch, int out_ch, int kernel, int pad, bool bias,
               Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), has_bias_(bias) {
  geom_ = ConvGeom{1, kernel, kernel, 1, 1, 1, 0, pad, pad};
  weight_.name = name + ".weight";
  weight_.group = group;
  weight_.init({out_ch, in_ch, kernel, kernel});
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  fill_normal(weight_.value, rng, std::sqrt(2.0 / fan_in));
  store.add(&weight_);
  if (has_bias_) {
    bias_.name = name + ".bias";
    bias_.group = group;
    bias_.init({out_ch});
    store.add(&bias_);
  }
}

TensorPtr Conv2d::forward(TensorPtr x) {
  check_shape(x, 4, "conv2d");
  if (x->dim(1) != in_ch_)
    throw Error("shape-error", "conv2d " + weight_.name + ": expected " +
                                   std::to_string(in_ch_) + " channels, got " +
                                   x->shape_str());
  const int n = static_cast<int>(x->dim(0));
  const int h = static_cast<int>(x->dim(2));
  const int w = static_cast<int>(x->dim(3));
  auto y = make_tensor_uninit({n, out_ch_,
                        kernels::conv_out_dim(h, geom_.kh, geom_.sh, geom_.ph),
                        kernels::conv_out_dim(w, geom_.kw, geom_.sw, geom_.pw)});
  kernels::conv3d_forward(x->data(), n, in_ch_, 1, h, w,
                          weight_.value.data(), out_ch_,
                          has_bias_ ? bias_.value.data() : nullptr, geom_,
                          y->data());
  x_ = std::move(x);
  return y;
}

TensorPtr Conv2d::backward(const TensorPtr& gy, bool need_input_grad) {
  const int n = static_cast<int>(x_->dim(0));
  const int h = static_cast<int>(x_->dim(2));
  const int w = static_cast<int>(x_->dim(3));
  TensorPtr gx;
  if (need_input_grad) gx = make_tensor_uninit(x_->shape());
  kernels::conv3d_backward(x_->data(), weight_.value.data(), n, in_ch_, 1, h,
                           w, out_ch_, geom_, gy->data(),
                           gx ? gx->data() : nullptr, weight_.grad.data(),
                           has_bias_ ? bias_.grad.data() : nullptr);
  x_.reset();
  return gx;
}

// ------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(ParamStore& store, std::string name, ParamGroup group,
                     int channels)
    : channels_(channels) {
  gamma_.name = name + ".gamma";
  gamma_.group = group;
  gamma_.init({channels});
  gamma_.value.fill(1.0f);
  beta_.name = name + ".beta";
  beta_.group = group;
  beta_.init({channels});
  store.add(&gamma_);
  store.add(&beta_);
  running_mean_.name = name + ".running_mean";
  running_mean_.value.reset({channels});
  running_var_.name = name + ".running_var";
  running_var_.value.reset({channels});
  running_var_.value.fill(1.0f);
  store.add(&running_mean_);
  store.add(&running_var_);
  save_mean_.reset({channels});
  save_invstd_.reset({channels});
}

TensorPtr BatchNorm::forward(TensorPtr x, const ForwardMode& mode) {
  if (x->dim(1) != channels_)
    throw Error("shape-error", "batchnorm " + gamma_.name + ": channels");
  const int n = static_cast<int>(x->dim(0));
  const int64_t sp = x->numel() / (n * channels_);
  auto y = make_tensor_uninit(x->shape());
  used_batch_stats_ = mode.train && mode.bn_batch_stats;
  kernels::batchnorm_forward(x->data(), n, channels_, sp, gamma_.value.data(),
                             beta_.value.data(), used_batch_stats_, 0.1f,
                             1e-5f, running_mean_.value.data(),
                             running_var_.value.data(), y->data(),
                             save_mean_.data(), save_invstd_.data());
  x_ = std::move(x);
  return y;
}

TensorPtr BatchNorm::backward(const TensorPtr& gy, bool need_input_grad) {
  const int n = static_cast<int>(x_->dim(0));
  const int64_t sp = x_->numel() / (n * channels_);
  TensorPtr gx;
  if (need_input_grad) gx = make_tensor_uninit(x_->shape());
  kernels::batchnorm_backward(x_->data(), n, channels_, sp,
                              gamma_.value.data(), save_mean_.data(),
                              save_invstd_.data(), gy->data(),
                              !used_batch_stats_, gx ? gx->data() : nullptr,
                              gamma_.grad.data(), beta_.grad.data());
  x_.reset();
  return gx;
}

// ------------------------------------------------------------------ misc

TensorPtr Relu::forward(TensorPtr x) {
  auto y = make_tensor_uninit(x->shape());
  kernels::relu_forward(x->data(), x->numel(), y->data());
  y_ = y;
  return y;
}

TensorPtr Relu::backward(const TensorPtr& gy) {
  auto gx = make_tensor_uninit(y_->shape());
  kernels::relu_backward(y_->data(), gy->data(), y_->numel(), gx->data());
  y_.reset();
  return gx;
}

TensorPtr Sigmoid::forward(TensorPtr x) {
  auto y = make_tensor_uninit(x->shape());
  kernels::sigmoid_forward(x->data(), x->numel(), y->data());
  y_ = y;
  return y;
}

TensorPtr Sigmoid::backward(const TensorPtr& gy) {
  auto gx = make_tensor_uninit(y_->shape());
  kernels::sigmoid_backward(y_->data(), gy->data(), y_->numel(), gx->data());
  y_.reset();
  return gx;
}

TensorPtr MaxPool3d::forward(TensorPtr x) {
  check_shape(x, 5, "maxpool3d");
  const int n = static_cast<int>(x->dim(0));
  const int c = static_cast<int>(x->dim(1));
  const int t = static_cast<int>(x->dim(2));
  const int h = static_cast<int>(x->dim(3));
  const int w = static_cast<int>(x->dim(4));
  auto y = make_tensor_uninit({n, c, kernels::conv_out_dim(t, k_, s_, p_),
                        kernels::conv_out_dim(h, k_, s_, p_),
                        kernels::conv_out_dim(w, k_, s_, p_)});
  argmax_.resize(static_cast<size_t>(y->numel()));
  kernels::maxpool3d_forward(x->data(), n, c, t, h, w, k_, s_, p_, y->data(),
                             argmax_.data());
  in_shape_ = x->shape();
  out_shape_ = y->shape();
  return y;
}

TensorPtr MaxPool3d::backward(const TensorPtr& gy) {
  auto gx = make_tensor_uninit(in_shape_);
  kernels::maxpool3d_backward(
      gy->data(), static_cast<int>(out_shape_[0]),
      static_cast<int>(out_shape_[1]), static_cast<int>(out_shape_[2]),
      static_cast<int>(out_shape_[3]), static_cast<int>(out_shape_[4]),
      argmax_.data(), gx->data(), static_cast<int>(in_shape_[2]),
      static_cast<int>(in_shape_[3]), static_cast<int>(in_shape_[4]));
  return gx;
}

TensorPtr TemporalMean::forward(TensorPtr x) {
  check_shape(x, 5, "temporal_mean");
  in_shape_ = x->shape();
  auto y = make_tensor_uninit({x->dim(0), x->dim(1), x->dim(3), x->dim(4)});
  kernels::temporal_mean_forward(
      x->data(), static_cast<int>(x->dim(0)), static_cast<int>(x->dim(1)),
      static_cast<int>(x->dim(2)), static_cast<int>(x->dim(3)),
      static_cast<int>(x->dim(4)), y->data());
  return y;
}

TensorPtr TemporalMean::backward(const TensorPtr& gy) {
  auto gx = make_tensor_uninit(in_shape_);
  kernels::temporal_mean_backward(
      gy->data(), static_cast<int>(in_shape_[0]),
      static_cast<int>(in_shape_[1]), static_cast<int>(in_shape_[2]),
      static_cast<int>(in_shape_[3]), static_cast<int>(in_shape_[4]),
      gx->data());
  return gx;
}

TensorPtr Bilinear2d::forward(TensorPtr x) {
  check_shape(x, 4, "bilinear2d");
  in_shape_ = x->shape();
  auto y = make_tensor_uninit({x->dim(0), x->dim(1), oh_, ow_});
  kernels::bilinear2d_forward(x->data(), static_cast<int>(x->dim(0)),
                              static_cast<int>(x->dim(1)),
                              static_cast<int>(x->dim(2)),
                              static_cast<int>(x->dim(3)), y->data(), oh_,
                              ow_);
  return y;
}

TensorPtr Bilinear2d::backward(const TensorPtr& gy) {
  auto gx = make_tensor_uninit(in_shape_);
  kernels::bilinear2d_backward(gy->data(), static_cast<int>(in_shape_[0]),
                               static_cast<int>(in_shape_[1]), oh_, ow_,
                               gx->data(), static_cast<int>(in_shape_[2]),
                               static_cast<int>(in_shape_[3]));
  return gx;
}

ConvTranspose2d::ConvTranspose2d(ParamStore& store, std::string name,
                                 ParamGroup group, int in_ch, int out_ch,
                                 int kernel_stride, Rng& rng)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel_stride) {
  weight_.name = name + ".weight";
  weight_.group = group;
  weight_.init({in_ch, out_ch, k_, k_});
  const double fan_in = static_cast<double>(in_ch) * k_ * k_;
  fill_normal(weight_.value, rng, std::sqrt(2.0 / fan_in));
  store.add(&weight_);
  bias_.name = name + ".bias";
  bias_.group = group;
  bias_.init({out_ch});
  store.add(&bias_);
}

TensorPtr ConvTranspose2d::forward(TensorPtr x) {
  check_shape(x, 4, "convtranspose2d");
  const int n = static_cast<int>(x->dim(0));
  const int h = static_cast<int>(x->dim(2));
  const int w = static_cast<int>(x->dim(3));
  auto y = make_tensor_uninit({n, out_ch_, h * k_, w * k_});
  kernels::convtranspose2d_forward(x->data(), n, in_ch_, h, w,
                                   weight_.value.data(), out_ch_, k_,
                                   bias_.value.data(), y->data());
  x_ = std::move(x);
  return y;
}

TensorPtr ConvTranspose2d::backward(const TensorPtr& gy,
                                    bool need_input_grad) {
  const int n = static_cast<int>(x_->dim(0));
  const int h = static_cast<int>(x_->dim(2));
  const int w = static_cast<int>(x_->dim(3));
  TensorPtr gx;
  if (need_input_grad) gx = make_tensor_uninit(x_->shape());
  kernels::convtranspose2d_backward(x_->data(), n, in_ch_, h, w,
                                    weight_.value.data(), out_ch_, k_,
                                    gy->data(), gx ? gx->data() : nullptr,
                                    weight_.grad.data(), bias_.grad.data());
  x_.reset();
  return gx;
}

TensorPtr SpatialSoftmax::forward(TensorPtr x) {
  check_shape(x, 4, "spatial_softmax");
  const int n = static_cast<int>(x->dim(0) * x->dim(1));
  const int hw = static_cast<int>(x->dim(2) * x->dim(3));
  auto y = make_tensor_uninit(x->shape());
  kernels::softmax_forward(x->data(), n, hw, y->data());
  y_ = y;
  return y;
}

TensorPtr SpatialSoftmax::backward(const TensorPtr& gy) {
  const int n = static_cast<int>(y_->dim(0) * y_->dim(1));
  const int hw = static_cast<int>(y_->dim(2) * y_->dim(3));
  auto gx = make_tensor_uninit(y_->shape());
  kernels::softmax_backward(y_->data(), gy->data(), n, hw, gx->data());
  y_.reset();
  return gx;
}

TensorPtr concat_channels(const std::vector<TensorPtr>& parts) {
  const auto& first = parts.front();
  int64_t channels = 0;
  for (const auto& p : parts) {
    if (p->dim(0) != first->dim(0) || p->dim(2) != first->dim(2) ||
        p->dim(3) != first->dim(3))
      throw Error("shape-error", "concat: spatial/batch mismatch");
    channels += p->dim(1);
  }
  auto out = make_tensor_uninit({first->dim(0), channels, first->dim(2),
                          first->dim(3)});
  const int64_t hw = first->dim(2) * first->dim(3);
  for (int64_t n = 0; n < first->dim(0); n++) {
    int64_t coff = 0;
    for (const auto& p : parts) {
      std::memcpy(out->data() + (n * channels + coff) * hw,
                  p->data() + n * p->dim(1) * hw,
                  sizeof(float) * static_cast<size_t>(p->dim(1) * hw));
      coff += p->dim(1);
    }
  }
  return out;
}

std::vector<TensorPtr> split_channels(const TensorPtr& g,
                                      const std::vector<int64_t>& widths) {
  std::vector<TensorPtr> out;
  const int64_t hw = g->dim(2) * g->dim(3);
  const int64_t total = g->dim(1);
  int64_t coff = 0;
  for (int64_t wdt : widths) {
    auto part = make_tensor_uninit({g->dim(0), wdt, g->dim(2), g->dim(3)});
    for (int64_t n = 0; n < g->dim(0); n++)
      std::memcpy(part->data() + n * wdt * hw,
                  g->data() + (n * total + coff) * hw,
                  sizeof(float) * static_cast<size_t>(wdt * hw));
    coff += wdt;
    out.push_back(std::move(part));
  }
  if (coff != total) throw Error("shape-error", "split: widths mismatch");
  return out;
}

}  // namespace dsal
