#pragma once

#include <array>
#include <optional>
#include <vector>

#include "dsal/layers.hpp"

namespace dsal {

inline constexpr int kScales = 4;
// 3-d residual-50 layout: bottleneck counts and widths per layer, and the
// feature pyramid it produces for 16x112x112 input.
inline constexpr int kBlockCounts[kScales] = {3, 4, 6, 3};
inline constexpr int kPlanes[kScales] = {64, 128, 256, 512};
inline constexpr int kExpansion = 4;
inline constexpr int kScaleChannels[kScales] = {256, 512, 1024, 2048};
inline constexpr int kScaleSize[kScales] = {28, 14, 7, 4};
inline constexpr int kScaleTime[kScales] = {8, 4, 2, 1};

// y = a + b, elementwise.
TensorPtr add_tensors(const TensorPtr& a, const TensorPtr& b);

struct Bottleneck {
  Bottleneck(ParamStore& store, const std::string& name, int in_ch,
             int planes, int stride, Rng& rng);
  TensorPtr forward(TensorPtr x, const ForwardMode& mode);
  TensorPtr backward(const TensorPtr& gy);

  Conv3d conv1;
  BatchNorm bn1;
  Relu relu1;
  Conv3d conv2;
  BatchNorm bn2;
  Relu relu2;
  Conv3d conv3;
  BatchNorm bn3;
  std::optional<Conv3d> down_conv;
  std::optional<BatchNorm> down_bn;
  Relu relu_out;
};

struct Stem {
  Stem(ParamStore& store, const std::string& name, Rng& rng);
  TensorPtr forward(TensorPtr x, const ForwardMode& mode);
  void backward(const TensorPtr& gy);

  Conv3d conv1;
  BatchNorm bn1;
  Relu relu;
  MaxPool3d pool;
};

// Deeply supervised attention module. From block features X^m it derives
// the per-scale saliency features S^m, the spatial attention M^m
// (softmax-normalized), the upsampled supervision map A^m squashed to (0,1),
// and the residually modulated features (1 + M^m) * X^m for the next block.
struct Dsam {
  Dsam(ParamStore& store, const std::string& name, int in_ch, int k,
       int feat_size, int input_size, Rng& rng);

  struct Out {
    TensorPtr s;       // [n,k,hm,wm]
    TensorPtr a_prob;  // [n,1,112,112], in (0,1)
    TensorPtr m;       // [n,1,hm,wm], sums to 1 per sample
    TensorPtr xt;      // refined features, same shape as the input
  };

  Out forward(TensorPtr x, const ForwardMode& mode);
  // gxt may be null at the deepest scale where xt feeds nothing.
  TensorPtr backward(const TensorPtr& gs, const TensorPtr& ga,
                     const TensorPtr& gxt);

  TemporalMean pool;
  Conv2d s_conv;
  Conv2d a_conv1;
  Relu a_relu;
  Conv2d a_conv2;
  SpatialSoftmax softmax;
  ConvTranspose2d upsample;
  Sigmoid a_sigmoid;
  TensorPtr x_, m_;
};

struct StreamOut {
  std::array<TensorPtr, kScales> s, a, m;
  std::array<TensorPtr, kScales> x;  // block outputs X^m (diagnostics)
};

// One spatio-temporal stream: stem, four bottleneck stages, one DSAM per
// stage, each stage consuming the previous DSAM's refined features.
struct EncoderStream {
  EncoderStream(ParamStore& store, const std::string& name, int k,
                int input_size, Rng& rng);
  StreamOut forward(TensorPtr clip, const ForwardMode& mode);
  void backward(const std::array<TensorPtr, kScales>& gs,
                const std::array<TensorPtr, kScales>& ga);

  std::string prefix;
  Stem stem;
  std::vector<std::vector<Bottleneck>> layers;
  std::vector<Dsam> dsams;
};

void check_finite(const TensorPtr& t, const std::string& where);

}  // namespace dsal
