#pragma once

#include <cstdint>
#include <vector>

#include "dsal/ground_truth.hpp"

namespace dsal {

struct LossWeights {
  double w1 = 0.1;  // cross entropy
  double w2 = 2.0;  // correlation
  double w3 = 1.0;  // scanpath
  void validate() const;  // nonnegative, at least one positive
};

// Deep-supervision schedule. epsilon ramps from 0 to 1 over the run, so the
// supervision weight (1 - epsilon) decays toward (but never reaches) zero
// with 0-based epochs.
struct EpochClock {
  int current_epoch = 0;
  int total_epochs = 1;
  double epsilon() const {
    return static_cast<double>(current_epoch) / total_epochs;
  }
  double deep_supervision_weight() const { return 1.0 - epsilon(); }
};

// All losses are computed in double over `count` pixels. When gm is given,
// scale * dL/dm is accumulated into it.

// Mean binary cross entropy; m is clamped to [1e-7, 1-1e-7] before the logs.
double ce_loss(const double* m, const double* yc, int64_t count,
               double* gm = nullptr, double scale = 1.0);

// Negative Pearson correlation. Zero variance on either side contributes 0
// with a warning.
double cc_loss(const double* m, const double* yc, int64_t count,
               double* gm = nullptr, double scale = 1.0);

// Negative mean z-scored value of m at the fixated cells. Constant m
// contributes 0 with a warning; nb must be >= 1.
double nss_loss(const double* m, const int32_t* fixation_cells, int nb,
                int64_t count, double* gm = nullptr, double scale = 1.0);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double cc = 0.0;
  double nss = 0.0;
};

// w1*ce + w2*cc + w3*nss against one ground truth frame. With nb == 0 the
// NSS term is skipped (callers exclude such samples from batches entirely).
LossBreakdown composite_loss(const double* m, const GroundTruth& gt,
                             const LossWeights& w, double* gm = nullptr,
                             double scale = 1.0);

struct TotalLossResult {
  LossBreakdown final_map;     // the S term
  double deep_sup_sum = 0.0;   // unweighted sum of the A-map composites
  double deep_sup_weight = 1;  // (1 - epsilon)
  double total = 0.0;
};

// composite(S) + (1-eps) * sum_m composite(A_rgb^m) +
//                (1-eps) * sum_m composite(A_d^m)
// Absent streams pass empty vectors. Gradient buffers mirror the inputs.
TotalLossResult total_loss(const double* pred,
                           const std::vector<const double*>& a_rgb,
                           const std::vector<const double*>& a_d,
                           int64_t count, const GroundTruth& gt,
                           const EpochClock& clock, const LossWeights& w,
                           double* gpred = nullptr,
                           const std::vector<double*>& ga_rgb = {},
                           const std::vector<double*>& ga_d = {},
                           double scale = 1.0);

}  // namespace dsal
