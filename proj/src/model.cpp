#include "dsal/model.hpp"

#include <cmath>
#include <cstring>
#include <optional>

#include "dsal/checkpoint.hpp"
#include "dsal/encoder.hpp"
#include "dsal/error.hpp"
#include "dsal/kernels.hpp"

namespace dsal {

namespace {

// U-Net style decoder block: upsample the coarser input to the skip's size,
// concatenate, convolve, batch-normalize. No activation.
struct DecoderBlock {
  DecoderBlock(ParamStore& store, const std::string& name, int skip_ch,
               int below_ch, int out_ch, int skip_size, Rng& rng)
      : up(skip_size, skip_size),
        conv(store, name + ".conv", ParamGroup::heads, skip_ch + below_ch,
             out_ch, 3, 1, false, rng),
        bn(store, name + ".bn", ParamGroup::heads, out_ch),
        skip_ch_(skip_ch),
        below_ch_(below_ch) {}

  TensorPtr forward(const TensorPtr& skip, TensorPtr below,
                    const ForwardMode& mode) {
    if (skip->dim(2) <= below->dim(2))
      throw Error("shape-error",
                  "decoder block: skip input must be the finer scale (skip " +
                      skip->shape_str() + ", below " + below->shape_str() +
                      ")");
    TensorPtr upped = up.forward(std::move(below));
    return bn.forward(conv.forward(concat_channels({skip, upped})), mode);
  }

  std::pair<TensorPtr, TensorPtr> backward(const TensorPtr& gy) {
    TensorPtr gcat = conv.backward(bn.backward(gy));
    auto parts = split_channels(gcat, {skip_ch_, below_ch_});
    return {parts[0], up.backward(parts[1])};
  }

  Bilinear2d up;
  Conv2d conv;
  BatchNorm bn;
  int64_t skip_ch_, below_ch_;
};

struct Decoder {
  Decoder(ParamStore& store, const std::string& name, int scale_ch, int k,
          Rng& rng) {
    blocks.reserve(3);
    // l=1 consumes S^3 and upsampled S^4; l=2,3 add S^2 and S^1.
    blocks.emplace_back(store, name + ".block1", scale_ch, scale_ch, k,
                        kScaleSize[2], rng);
    blocks.emplace_back(store, name + ".block2", scale_ch, k, k,
                        kScaleSize[1], rng);
    blocks.emplace_back(store, name + ".block3", scale_ch, k, k,
                        kScaleSize[0], rng);
  }

  TensorPtr forward(const std::array<TensorPtr, kScales>& s,
                    const ForwardMode& mode) {
    TensorPtr d = blocks[0].forward(s[2], s[3], mode);
    d = blocks[1].forward(s[1], std::move(d), mode);
    return blocks[2].forward(s[0], std::move(d), mode);
  }

  std::array<TensorPtr, kScales> backward(const TensorPtr& gd3) {
    std::array<TensorPtr, kScales> gs;
    auto [g1, gd2] = blocks[2].backward(gd3);
    gs[0] = g1;
    auto [g2, gd1] = blocks[1].backward(gd2);
    gs[1] = g2;
    auto [g3, g4] = blocks[0].backward(gd1);
    gs[2] = g3;
    gs[3] = g4;
    return gs;
  }

  std::vector<DecoderBlock> blocks;
};

// Output head for MF variants: bilinear upsampling to the input size, then
// two convolutions down to one channel. The two-branch form is the late
// concatenation fusion; the one-branch form serves single-stream and
// ADD/CON variants.
struct MfHead {
  MfHead(ParamStore& store, const std::string& name, int branches, int k,
         int input_size, Rng& rng)
      : up_a(input_size, input_size),
        up_b(input_size, input_size),
        conv1(store, name + ".conv1", ParamGroup::heads, branches * k, k, 3,
              1, true, rng),
        conv2(store, name + ".conv2", ParamGroup::heads, k, 1, 3, 1, true,
              rng),
        two_branch(branches == 2) {}

  TensorPtr forward(TensorPtr a, TensorPtr b, const ForwardMode& mode) {
    (void)mode;
    TensorPtr x = up_a.forward(std::move(a));
    if (two_branch) {
      branch_a_ch_ = x->dim(1);
      x = concat_channels({x, up_b.forward(std::move(b))});
    }
    return conv2.forward(relu.forward(conv1.forward(std::move(x))));
  }

  std::pair<TensorPtr, TensorPtr> backward(const TensorPtr& gy) {
    TensorPtr g = conv1.backward(relu.backward(conv2.backward(gy)));
    if (two_branch) {
      auto parts =
          split_channels(g, {branch_a_ch_, g->dim(1) - branch_a_ch_});
      return {up_a.backward(parts[0]), up_b.backward(parts[1])};
    }
    return {up_a.backward(g), nullptr};
  }

  Bilinear2d up_a, up_b;
  Conv2d conv1;
  Relu relu;
  Conv2d conv2;
  bool two_branch;
  int64_t branch_a_ch_ = 0;
};

// SC variant: every DSAM map upsampled to the input size, concatenated, and
// reduced to one channel by a single 1x1 convolution.
struct ScHead {
  ScHead(ParamStore& store, const std::string& name, int n_maps, int k,
         int input_size, Rng& rng)
      : reduce(store, name + ".reduce", ParamGroup::heads, n_maps * k, 1, 1,
               0, true, rng) {
    ups.reserve(static_cast<size_t>(n_maps));
    for (int i = 0; i < n_maps; i++)
      ups.emplace_back(input_size, input_size);
  }

  TensorPtr forward(const std::vector<TensorPtr>& maps) {
    std::vector<TensorPtr> upped;
    widths_.clear();
    for (size_t i = 0; i < maps.size(); i++) {
      upped.push_back(ups[i].forward(maps[i]));
      widths_.push_back(upped.back()->dim(1));
    }
    return reduce.forward(concat_channels(upped));
  }

  std::vector<TensorPtr> backward(const TensorPtr& gy) {
    auto parts = split_channels(reduce.backward(gy), widths_);
    std::vector<TensorPtr> out;
    for (size_t i = 0; i < parts.size(); i++)
      out.push_back(ups[i].backward(parts[i]));
    return out;
  }

  std::vector<Bilinear2d> ups;
  Conv2d reduce;
  std::vector<int64_t> widths_;
};

}  // namespace

struct SaliencyModel::Impl {
  Impl(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    const int k = cfg.channels;
    const int sz = cfg.input_size;
    if (cfg.has_rgb()) rgb.emplace(store, "rgb", k, sz, rng);
    if (cfg.has_depth()) depth.emplace(store, "depth", k, sz, rng);
    const int n_streams = cfg.two_stream() ? 2 : 1;
    if (cfg.head == HeadType::sc) {
      sc_head.emplace(store, "head", n_streams * kScales, k, sz, rng);
    } else if (cfg.fusion == FusionScheme::cll && cfg.two_stream()) {
      dec_a.emplace(store, "decoder_rgb", k, k, rng);
      dec_b.emplace(store, "decoder_depth", k, k, rng);
      head.emplace(store, "head", 2, k, sz, rng);
    } else {
      const int scale_ch =
          cfg.fusion == FusionScheme::con && cfg.two_stream() ? 2 * k : k;
      dec_a.emplace(store, "decoder", scale_ch, k, rng);
      head.emplace(store, "head", 1, k, sz, rng);
    }
  }

  ModelConfig cfg_;
  ParamStore store;
  std::optional<EncoderStream> rgb, depth;
  std::optional<Decoder> dec_a, dec_b;  // dec_a doubles as the shared/single one
  std::optional<MfHead> head;
  std::optional<ScHead> sc_head;
  Sigmoid out_sigmoid;

  StreamOut rgb_out, depth_out;
  bool forward_ready = false;
};

SaliencyModel::SaliencyModel(const ModelConfig& cfg, uint64_t init_seed)
    : cfg_(cfg) {
  cfg_.validate();
  impl_ = std::make_unique<Impl>(cfg_, init_seed);
}

SaliencyModel::~SaliencyModel() = default;

ParamStore& SaliencyModel::store() { return impl_->store; }

ModelOutputs SaliencyModel::forward(TensorPtr rgb, TensorPtr depth,
                                    const ForwardMode& mode) {
  Impl& im = *impl_;
  if (cfg_.has_rgb() && !rgb)
    throw Error("input-error",
                "config " + cfg_.variant() + " needs an rgb clip");
  if (cfg_.has_depth() && !depth)
    throw Error("input-error",
                "config " + cfg_.variant() + " needs a depth clip");

  ModelOutputs out;
  if (cfg_.has_rgb()) {
    im.rgb_out = im.rgb->forward(std::move(rgb), mode);
    out.a_rgb = im.rgb_out.a;
    out.m_rgb = im.rgb_out.m;
  }
  if (cfg_.has_depth()) {
    im.depth_out = im.depth->forward(std::move(depth), mode);
    out.a_d = im.depth_out.a;
    out.m_d = im.depth_out.m;
  }

  const StreamOut& solo = cfg_.has_rgb() ? im.rgb_out : im.depth_out;
  TensorPtr logits;
  if (cfg_.head == HeadType::sc) {
    std::vector<TensorPtr> maps;
    if (cfg_.has_rgb())
      maps.insert(maps.end(), im.rgb_out.s.begin(), im.rgb_out.s.end());
    if (cfg_.has_depth())
      maps.insert(maps.end(), im.depth_out.s.begin(), im.depth_out.s.end());
    logits = im.sc_head->forward(maps);
  } else if (cfg_.two_stream() && cfg_.fusion == FusionScheme::cll) {
    out.dec_rgb = im.dec_a->forward(im.rgb_out.s, mode);
    out.dec_d = im.dec_b->forward(im.depth_out.s, mode);
    logits = im.head->forward(out.dec_rgb, out.dec_d, mode);
  } else if (cfg_.two_stream()) {
    std::array<TensorPtr, kScales> fused;
    for (size_t i = 0; i < kScales; i++)
      fused[i] = cfg_.fusion == FusionScheme::add
                     ? add_tensors(im.rgb_out.s[i], im.depth_out.s[i])
                     : concat_channels({im.rgb_out.s[i], im.depth_out.s[i]});
    TensorPtr d3 = im.dec_a->forward(fused, mode);
    out.dec_rgb = d3;
    logits = im.head->forward(std::move(d3), nullptr, mode);
  } else {
    TensorPtr d3 = im.dec_a->forward(solo.s, mode);
    out.dec_rgb = d3;
    logits = im.head->forward(std::move(d3), nullptr, mode);
  }
  check_finite(logits, "output head");
  out.logits = logits;
  out.prob = im.out_sigmoid.forward(logits);
  im.forward_ready = true;
  return out;
}

void SaliencyModel::backward(const ModelGrads& grads) {
  Impl& im = *impl_;
  if (!im.forward_ready)
    throw Error("state-error", "backward without a preceding forward");
  im.forward_ready = false;
  TensorPtr glogits = im.out_sigmoid.backward(grads.gprob);

  std::array<TensorPtr, kScales> gs_rgb{}, gs_d{};
  if (cfg_.head == HeadType::sc) {
    std::vector<TensorPtr> gmaps = im.sc_head->backward(glogits);
    size_t idx = 0;
    if (cfg_.has_rgb())
      for (size_t i = 0; i < kScales; i++) gs_rgb[i] = gmaps[idx++];
    if (cfg_.has_depth())
      for (size_t i = 0; i < kScales; i++) gs_d[i] = gmaps[idx++];
  } else if (cfg_.two_stream() && cfg_.fusion == FusionScheme::cll) {
    auto [gdr, gdd] = im.head->backward(glogits);
    gs_rgb = im.dec_a->backward(gdr);
    gs_d = im.dec_b->backward(gdd);
  } else if (cfg_.two_stream()) {
    auto [gd3, gnull] = im.head->backward(glogits);
    (void)gnull;
    std::array<TensorPtr, kScales> gfused = im.dec_a->backward(gd3);
    for (size_t i = 0; i < kScales; i++) {
      if (cfg_.fusion == FusionScheme::add) {
        gs_rgb[i] = gfused[i];
        gs_d[i] = gfused[i];
      } else {
        auto parts =
            split_channels(gfused[i], {cfg_.channels, cfg_.channels});
        gs_rgb[i] = parts[0];
        gs_d[i] = parts[1];
      }
    }
  } else {
    auto [gd3, gnull] = im.head->backward(glogits);
    (void)gnull;
    (cfg_.has_rgb() ? gs_rgb : gs_d) = im.dec_a->backward(gd3);
  }

  if (cfg_.has_rgb()) im.rgb->backward(gs_rgb, grads.ga_rgb);
  if (cfg_.has_depth()) im.depth->backward(gs_d, grads.ga_d);
}

void SaliencyModel::zero_grad() {
  for (Param* p : impl_->store.params()) p->grad.fill(0.0f);
}

void SaliencyModel::load_pretrained_backbone(const std::string& path) {
  TensorFile tf = TensorFile::read(path);
  std::string problems;
  int applied = 0;
  for (Param* p : impl_->store.params()) {
    if (p->group != ParamGroup::backbone) continue;
    const size_t dot = p->name.find('.');
    const std::string key = p->name.substr(dot + 1);  // strip the stream prefix
    const Tensor* src = tf.find(key);
    if (!src) {
      problems += "\n  missing tensor " + key;
      continue;
    }
    if (src->shape() != p->value.shape()) {
      problems += "\n  shape mismatch for " + key + ": file " +
                  src->shape_str() + " vs model " + p->value.shape_str();
      continue;
    }
    std::memcpy(p->value.data(), src->data(),
                sizeof(float) * static_cast<size_t>(p->value.numel()));
    applied++;
  }
  for (NamedBuffer* b : impl_->store.buffers()) {
    const size_t dot = b->name.find('.');
    const std::string key = b->name.substr(dot + 1);
    const Tensor* src = tf.find(key);
    if (!src) continue;  // running statistics are optional in backbone files
    if (src->shape() != b->value.shape()) {
      problems += "\n  shape mismatch for " + key;
      continue;
    }
    std::memcpy(b->value.data(), src->data(),
                sizeof(float) * static_cast<size_t>(b->value.numel()));
  }
  if (!problems.empty())
    throw Error("checkpoint-error", "pretrained backbone " + path +
                                        " is incompatible:" + problems);
  if (applied == 0)
    throw Error("checkpoint-error",
                "pretrained backbone " + path + " matched no tensors");
}

}  // namespace dsal
