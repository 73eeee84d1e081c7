#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsal/ground_truth.hpp"
#include "dsal/rng.hpp"

namespace dsal {

// Per-frame saliency scores. A metric is absent when undefined for the frame
// (no fixations, constant map, empty shuffle pool, ...).
struct FrameEval {
  std::string video_id;
  int frame_index = 0;
  std::optional<double> cc, nss, auc_j, sauc, sim;
};

struct MetricMeans {
  std::optional<double> cc, nss, auc_j, sauc, sim;
};

struct MetricsReport {
  std::vector<FrameEval> frames;
  std::map<std::string, MetricMeans> per_video;
  MetricMeans overall;
  int sauc_splits = 100;
  uint64_t sauc_seed = 0;
  std::string resolution_note;  // evaluation resolution, recorded as metadata

  void finalize();  // recompute per-video and overall means
  std::string serialize() const;
};

// Pearson correlation over pixels; absent when either map is constant.
std::optional<double> cc_metric(const double* pred, const double* yc,
                                int64_t count);

// Mean z-scored prediction at fixated cells; absent when nb == 0 or the
// prediction is constant.
std::optional<double> nss_metric(const double* pred,
                                 const int32_t* fixation_cells, int nb,
                                 int64_t count);

// ROC area by threshold sweep over every distinct value of the union of the
// two sets, ties counted as >=, trapezoidal integration with the (0,0) and
// (1,1) endpoints. Equals the Mann-Whitney statistic with half credit for
// ties.
double roc_auc(std::vector<double> pos, std::vector<double> neg);

// Positives are the fixated cells, the false-positive reference is every
// pixel of the map. Absent when nb == 0.
std::optional<double> auc_judd(const double* pred,
                               const int32_t* fixation_cells, int nb,
                               int64_t count);

// Union of the fixation cells of every frame of one video except
// `exclude_frame`. frame_cells holds per-frame cell indices at prediction
// resolution.
std::vector<int32_t> build_shuffle_pool(
    const std::vector<std::vector<int32_t>>& frame_cells, int exclude_frame);

// Shuffled AUC: per split, min(nb, pool size) negatives are drawn from the
// pool without replacement; the mean split AUC is returned. Absent when the
// pool is empty or nb == 0.
std::optional<double> sauc(const double* pred, const int32_t* fixation_cells,
                           int nb, const std::vector<int32_t>& pool,
                           int n_splits, Rng& rng);

// Both maps normalized to unit sum, then the histogram intersection.
// Absent when either map has a nonpositive sum.
std::optional<double> sim_metric(const double* pred, const double* yc,
                                 int64_t count);

struct FramePrediction {
  std::string video_id;
  int frame_index = 0;
  std::vector<double> map;  // h*w, prediction resolution
};

struct FrameTarget {
  std::string video_id;
  int frame_index = 0;
  GroundTruth gt;
  std::vector<int32_t> shuffle_pool;
};

// Joins predictions and targets on (video_id, frame_index), computes all
// five metrics per frame and the aggregated means. Key mismatches raise an
// error listing the missing keys.
MetricsReport evaluate_dataset(const std::vector<FramePrediction>& preds,
                               const std::vector<FrameTarget>& targets,
                               int sauc_splits, uint64_t sauc_seed);

}  // namespace dsal
