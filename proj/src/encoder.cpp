#include "dsal/encoder.hpp"

#include "dsal/error.hpp"
#include "dsal/kernels.hpp"

namespace dsal {

using kernels::ConvGeom;

void check_finite(const TensorPtr& t, const std::string& where) {
  if (kernels::has_nonfinite(t->data(), t->numel()))
    throw Error("numeric-fault", "non-finite values in " + where);
}

TensorPtr add_tensors(const TensorPtr& a, const TensorPtr& b) {
  if (!a->same_shape(*b))
    throw Error("shape-error", "add: shape mismatch " + a->shape_str() +
                                   " vs " + b->shape_str());
  auto out = make_tensor_uninit(a->shape());
  const float* pa = a->data();
  const float* pb = b->data();
  float* po = out->data();
  for (int64_t i = 0; i < a->numel(); i++) po[i] = pa[i] + pb[i];
  return out;
}

Bottleneck::Bottleneck(ParamStore& store, const std::string& name, int in_ch,
                       int planes, int stride, Rng& rng)
    : conv1(store, name + ".conv1", ParamGroup::backbone, in_ch, planes,
            ConvGeom{1, 1, 1, 1, 1, 1, 0, 0, 0}, false, rng),
      bn1(store, name + ".bn1", ParamGroup::backbone, planes),
      conv2(store, name + ".conv2", ParamGroup::backbone, planes, planes,
            ConvGeom{3, 3, 3, stride, stride, stride, 1, 1, 1}, false, rng),
      bn2(store, name + ".bn2", ParamGroup::backbone, planes),
      conv3(store, name + ".conv3", ParamGroup::backbone, planes,
            planes * kExpansion, ConvGeom{1, 1, 1, 1, 1, 1, 0, 0, 0}, false,
            rng),
      bn3(store, name + ".bn3", ParamGroup::backbone, planes * kExpansion) {
  if (stride != 1 || in_ch != planes * kExpansion) {
    down_conv.emplace(store, name + ".downsample.conv", ParamGroup::backbone,
                      in_ch, planes * kExpansion,
                      ConvGeom{1, 1, 1, stride, stride, stride, 0, 0, 0},
                      false, rng);
    down_bn.emplace(store, name + ".downsample.bn", ParamGroup::backbone,
                    planes * kExpansion);
  }
}

TensorPtr Bottleneck::forward(TensorPtr x, const ForwardMode& mode) {
  TensorPtr y = relu1.forward(bn1.forward(conv1.forward(x), mode));
  y = relu2.forward(bn2.forward(conv2.forward(std::move(y)), mode));
  y = bn3.forward(conv3.forward(std::move(y)), mode);
  TensorPtr identity = x;
  if (down_conv)
    identity = down_bn->forward(down_conv->forward(std::move(x)), mode);
  return relu_out.forward(add_tensors(y, identity));
}

TensorPtr Bottleneck::backward(const TensorPtr& gy) {
  TensorPtr gsum = relu_out.backward(gy);
  TensorPtr g = bn3.backward(gsum);
  g = conv3.backward(g);
  g = bn2.backward(relu2.backward(g));
  g = conv2.backward(g);
  g = bn1.backward(relu1.backward(g));
  TensorPtr gx = conv1.backward(g);
  if (down_conv) {
    TensorPtr gid = down_conv->backward(down_bn->backward(gsum));
    kernels::add_inplace(gx->data(), gid->data(), gx->numel());
  } else {
    kernels::add_inplace(gx->data(), gsum->data(), gx->numel());
  }
  return gx;
}

Stem::Stem(ParamStore& store, const std::string& name, Rng& rng)
    : conv1(store, name + ".conv1", ParamGroup::backbone, 3, 64,
            ConvGeom{7, 7, 7, 1, 2, 2, 3, 3, 3}, false, rng),
      bn1(store, name + ".bn1", ParamGroup::backbone, 64),
      pool(3, 2, 1) {}

TensorPtr Stem::forward(TensorPtr x, const ForwardMode& mode) {
  return pool.forward(
      relu.forward(bn1.forward(conv1.forward(std::move(x)), mode)));
}

void Stem::backward(const TensorPtr& gy) {
  TensorPtr g = bn1.backward(relu.backward(pool.backward(gy)));
  conv1.backward(g, /*need_input_grad=*/false);
}

Dsam::Dsam(ParamStore& store, const std::string& name, int in_ch, int k,
           int feat_size, int input_size, Rng& rng)
    : s_conv(store, name + ".s_conv", ParamGroup::heads, in_ch, k, 3, 1, true,
             rng),
      a_conv1(store, name + ".a_conv1", ParamGroup::heads, in_ch, k, 3, 1,
              true, rng),
      a_conv2(store, name + ".a_conv2", ParamGroup::heads, k, 1, 3, 1, true,
              rng),
      upsample(store, name + ".upsample", ParamGroup::heads, 1, 1,
               input_size / feat_size, rng) {}

Dsam::Out Dsam::forward(TensorPtr x, const ForwardMode& mode) {
  (void)mode;  // no normalization layers inside the module
  x_ = x;
  TensorPtr p = pool.forward(x);
  Out out;
  out.s = s_conv.forward(p);
  TensorPtr a = a_conv2.forward(a_relu.forward(a_conv1.forward(p)));
  out.m = softmax.forward(a);
  out.a_prob = a_sigmoid.forward(upsample.forward(a));
  m_ = out.m;
  auto xt = make_tensor_uninit(x->shape());
  kernels::modulate_forward(
      x->data(), static_cast<int>(x->dim(0)), static_cast<int>(x->dim(1)),
      static_cast<int>(x->dim(2)), static_cast<int>(x->dim(3)),
      static_cast<int>(x->dim(4)), out.m->data(), xt->data());
  out.xt = xt;
  return out;
}

TensorPtr Dsam::backward(const TensorPtr& gs, const TensorPtr& ga,
                         const TensorPtr& gxt) {
  TensorPtr ga_feat;  // gradient w.r.t. the pre-softmax activation map
  TensorPtr gx_mod;
  if (gxt) {
    gx_mod = make_tensor_uninit(x_->shape());
    auto gm = make_tensor_uninit(m_->shape());
    kernels::modulate_backward(
        x_->data(), m_->data(), gxt->data(), static_cast<int>(x_->dim(0)),
        static_cast<int>(x_->dim(1)), static_cast<int>(x_->dim(2)),
        static_cast<int>(x_->dim(3)), static_cast<int>(x_->dim(4)),
        gx_mod->data(), gm->data());
    ga_feat = softmax.backward(gm);
  }
  TensorPtr g_up = upsample.backward(a_sigmoid.backward(ga));
  if (ga_feat)
    kernels::add_inplace(ga_feat->data(), g_up->data(), ga_feat->numel());
  else
    ga_feat = g_up;
  TensorPtr gp = a_conv1.backward(a_relu.backward(a_conv2.backward(ga_feat)));
  TensorPtr gp_s = s_conv.backward(gs);
  kernels::add_inplace(gp->data(), gp_s->data(), gp->numel());
  TensorPtr gx = pool.backward(gp);
  if (gx_mod) kernels::add_inplace(gx->data(), gx_mod->data(), gx->numel());
  x_.reset();
  m_.reset();
  return gx;
}

EncoderStream::EncoderStream(ParamStore& store, const std::string& name,
                             int k, int input_size, Rng& rng)
    : prefix(name), stem(store, name + ".stem", rng) {
  // Layer objects register raw Param pointers at construction, so the
  // holding vectors must never reallocate.
  layers.reserve(kScales);
  dsams.reserve(kScales);
  int in_ch = 64;
  for (int l = 0; l < kScales; l++) {
    const int stride = l == 0 ? 1 : 2;
    std::vector<Bottleneck> blocks;
    blocks.reserve(static_cast<size_t>(kBlockCounts[l]));
    for (int b = 0; b < kBlockCounts[l]; b++) {
      blocks.emplace_back(store,
                          name + ".layer" + std::to_string(l + 1) + "." +
                              std::to_string(b),
                          b == 0 ? in_ch : kPlanes[l] * kExpansion,
                          kPlanes[l], b == 0 ? stride : 1, rng);
    }
    layers.push_back(std::move(blocks));
    in_ch = kPlanes[l] * kExpansion;
    dsams.emplace_back(store, name + ".dsam" + std::to_string(l + 1),
                       kScaleChannels[l], k, kScaleSize[l], input_size, rng);
  }
}

StreamOut EncoderStream::forward(TensorPtr clip, const ForwardMode& mode) {
  StreamOut out;
  TensorPtr x = stem.forward(std::move(clip), mode);
  for (int l = 0; l < kScales; l++) {
    for (Bottleneck& b : layers[static_cast<size_t>(l)])
      x = b.forward(std::move(x), mode);
    check_finite(x, prefix + ".block" + std::to_string(l + 1));
    out.x[static_cast<size_t>(l)] = x;
    Dsam::Out d = dsams[static_cast<size_t>(l)].forward(x, mode);
    out.s[static_cast<size_t>(l)] = d.s;
    out.a[static_cast<size_t>(l)] = d.a_prob;
    out.m[static_cast<size_t>(l)] = d.m;
    x = d.xt;
  }
  return out;
}

void EncoderStream::backward(const std::array<TensorPtr, kScales>& gs,
                             const std::array<TensorPtr, kScales>& ga) {
  TensorPtr gxt;  // gradient flowing into X~^m from block m+1
  for (int l = kScales - 1; l >= 0; l--) {
    TensorPtr gx = dsams[static_cast<size_t>(l)].backward(
        gs[static_cast<size_t>(l)], ga[static_cast<size_t>(l)], gxt);
    auto& blocks = layers[static_cast<size_t>(l)];
    for (size_t b = blocks.size(); b-- > 0;) gx = blocks[b].backward(gx);
    gxt = gx;
  }
  stem.backward(gxt);
}

}  // namespace dsal
