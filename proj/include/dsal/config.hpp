#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsal/losses.hpp"

namespace dsal {

enum class StreamSet { rgb_only, depth_only, rgbd };
enum class HeadType { sc, mf };
enum class FusionScheme { none, add, con, cll };

// One ablation-table row: stream set, DSAM channel width, head type and
// (for two-stream mf heads) the fusion scheme.
struct ModelConfig {
  StreamSet streams = StreamSet::rgbd;
  int channels = 64;  // DSAM saliency feature maps per scale
  HeadType head = HeadType::mf;
  FusionScheme fusion = FusionScheme::cll;
  int input_size = 112;
  int window = 16;

  bool has_rgb() const { return streams != StreamSet::depth_only; }
  bool has_depth() const { return streams != StreamSet::rgb_only; }
  bool two_stream() const { return streams == StreamSet::rgbd; }

  // Variant strings follow the ablation naming, e.g. "RGB16SC",
  // "RGBD64MF_CLL".
  static ModelConfig from_variant(const std::string& name);
  std::string variant() const;
  void validate() const;
};

struct TrainConfig {
  int total_epochs = 60;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double lr_backbone = 1e-3;
  double lr_heads = 1e-4;
  int effective_batch = 128;
  int micro_batch = 2;
  std::vector<int> lr_milestones = {30, 50};
  double lr_gamma = 0.1;
  uint64_t seed = 1;
  double flip_p = 0.5;
  bool bn_batch_stats = true;  // false = frozen running statistics
  int train_stride = 1;        // stride over window centers
  int max_steps = 0;           // optional optimizer-step cap, 0 = none
  int ckpt_keep = 2;           // epoch checkpoints retained on disk, 0 = all
  std::string resume;          // checkpoint to continue from
  LossWeights loss_weights;
  void validate() const;
};

struct DataConfig {
  std::vector<std::string> manifests;
  double gt_sigma_frac = 0.045;  // sigma = frac * map width
  std::array<float, 3> norm_mean = {0.45f, 0.45f, 0.45f};
  std::array<float, 3> norm_std = {0.225f, 0.225f, 0.225f};
};

struct EvalConfig {
  int sauc_splits = 100;
  uint64_t sauc_seed = 9001;
  int batch = 2;  // frames evaluated per forward
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
  std::string pretrained_backbone;

  double gt_sigma() const { return data.gt_sigma_frac * model.input_size; }
};

// Flat key=value file with [section] headers; '#' starts a comment.
// Unknown keys and malformed values are rejected naming the field.
// overrides are "section.key=value" strings applied after the file.
RunConfig parse_run_config(const std::string& path,
                           const std::vector<std::string>& overrides);
RunConfig run_config_from_overrides(const std::vector<std::string>& overrides);
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace dsal
