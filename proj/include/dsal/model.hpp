#pragma once

#include <array>
#include <memory>

#include "dsal/config.hpp"
#include "dsal/layers.hpp"

namespace dsal {

struct ModelOutputs {
  TensorPtr prob;    // final saliency map, [n,1,112,112] in (0,1)
  TensorPtr logits;  // pre-squash map
  // Per-scale supervision maps (after the logistic squash) and attention
  // maps; entries stay null for absent streams.
  std::array<TensorPtr, 4> a_rgb{}, a_d{};
  std::array<TensorPtr, 4> m_rgb{}, m_d{};
  // Decoder outputs before fusion, exposed for the stream-isolation checks.
  TensorPtr dec_rgb, dec_d;
};

struct ModelGrads {
  TensorPtr gprob;  // dL/d prob
  std::array<TensorPtr, 4> ga_rgb{}, ga_d{};  // dL/d supervision maps
};

// The two-stream encoder-decoder saliency network. One instance owns its
// parameters; forward caches the activations the subsequent backward needs,
// so forward/backward pairs must not interleave. Frozen inference from
// multiple threads is safe only through separate instances or eval calls
// serialized by the caller (eval-mode forward still writes caches).
class SaliencyModel {
 public:
  SaliencyModel(const ModelConfig& cfg, uint64_t init_seed);
  ~SaliencyModel();
  SaliencyModel(const SaliencyModel&) = delete;
  SaliencyModel& operator=(const SaliencyModel&) = delete;

  // depth must be present iff the config uses the depth stream.
  ModelOutputs forward(TensorPtr rgb, TensorPtr depth,
                       const ForwardMode& mode);
  void backward(const ModelGrads& grads);
  void zero_grad();

  ParamStore& store();
  const ModelConfig& config() const { return cfg_; }

  // Loads backbone tensors from a named-tensor file into every active
  // stream, verifying shapes tensor by tensor; all mismatches are reported
  // together.
  void load_pretrained_backbone(const std::string& path);

 private:
  struct Impl;
  ModelConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dsal
