#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dsal/config.hpp"
#include "dsal/dataset.hpp"
#include "dsal/metrics.hpp"
#include "dsal/model.hpp"

namespace dsal {

// Multi-step schedule: each group's initial rate times gamma^k with k the
// number of milestones <= epoch. Returns (backbone, heads).
std::pair<double, double> lr_at(int epoch, const TrainConfig& cfg);

// Grouped momentum SGD with coupled weight decay:
//   v <- momentum*v + g + wd*p ; p <- p - lr*v
class SgdOptimizer {
 public:
  SgdOptimizer(ParamStore& store, double momentum, double weight_decay);
  void step(double lr_backbone, double lr_heads);
  void zero_grad();
  std::pair<size_t, size_t> group_counts() const;  // (backbone, heads)

 private:
  ParamStore& store_;
  double momentum_, weight_decay_;
};

struct LoadedVideo {
  VideoRecord record;
  std::vector<FixationSet> fixations;
};

// Parses and resolves every manifest, loading fixation data per video.
std::vector<LoadedVideo> load_videos(
    const std::vector<std::string>& manifests);

struct StepLogEntry {
  int64_t step = 0;
  int epoch = 0;
  double lr_backbone = 0, lr_heads = 0;
  double loss = 0, ce = 0, cc = 0, nss = 0;
  double deep_sup_weight = 1;
};

struct TrainCallbacks {
  // Fires after each optimizer step; returning false stops the run early
  // (the current state is still checkpointed).
  std::function<bool(const StepLogEntry&)> on_step;
};

struct TrainResult {
  int64_t steps = 0;
  int epochs_run = 0;
  std::string last_checkpoint;
  std::string best_checkpoint;  // empty when no validation split exists
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::string output_dir);

  TrainResult train(const TrainCallbacks& callbacks = {});
  MetricsReport evaluate(SaliencyModel& model, Split split);

  SaliencyModel& model() { return *model_; }
  const RunConfig& config() const { return cfg_; }
  const std::vector<LoadedVideo>& videos() const { return videos_; }
  LoaderConfig loader_config() const;

 private:
  struct Window {
    int video = 0;
    int center = 0;
    int64_t id = 0;  // stable index used to derive the augmentation rng
  };
  std::vector<Window> windows_for(Split split, bool require_fixations) const;
  void run_step(const std::vector<Window>& batch, int epoch, int64_t step,
                StepLogEntry* entry);

  RunConfig cfg_;
  std::string output_dir_;
  std::vector<LoadedVideo> videos_;
  std::unique_ptr<SaliencyModel> model_;
};

struct PredictOptions {
  bool overlay = false;
  bool raw = false;
};

// Writes per-frame artifacts for one video: sal_%06d.pgm heatmaps
// (max-normalized, constant maps render mid-gray), optional raw float maps
// (sal_%06d.vdsm) and optional RGB overlays, all at network resolution.
void predict_video(SaliencyModel& model, const LoadedVideo& video,
                   const RunConfig& cfg, const std::string& out_dir,
                   const PredictOptions& opts);

}  // namespace dsal
