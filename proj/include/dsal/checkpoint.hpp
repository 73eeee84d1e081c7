#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsal/tensor.hpp"

namespace dsal {

class SaliencyModel;

// Binary named-tensor container with a string metadata block. Used for both
// training checkpoints and ingested pretrained backbone weights. All values
// little-endian; float32 payloads are stored bit-exactly.
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
  void write(const std::string& path) const;
  static TensorFile read(const std::string& path);
};

struct CheckpointMeta {
  int epoch = -1;
  int64_t step = 0;
  double best_val_cc = 0.0;
  bool has_best_val = false;
  std::string rng_state;
  std::string config_snapshot;  // resolved run configuration text
  std::string variant;
};

// Parameters, BN running statistics and optimizer momentum, plus meta.
void save_checkpoint(const std::string& path, SaliencyModel& model,
                     const CheckpointMeta& meta);

// Restores everything into an already constructed model; incompatible or
// missing tensors are reported together in one error.
CheckpointMeta load_checkpoint(const std::string& path, SaliencyModel& model);

// Metadata only, to pick the architecture before construction.
CheckpointMeta peek_checkpoint(const std::string& path);

}  // namespace dsal
