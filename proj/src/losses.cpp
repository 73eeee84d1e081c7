#include "dsal/losses.hpp"

#include <algorithm>
#include <cmath>

#include "dsal/error.hpp"

namespace dsal {

namespace {
constexpr double kClamp = 1e-7;
constexpr double kSigmaGuard = 1e-8;
}  // namespace

void LossWeights::validate() const {
  if (w1 < 0 || w2 < 0 || w3 < 0)
    throw Error("config-error", "loss weights must be nonnegative");
  if (w1 <= 0 && w2 <= 0 && w3 <= 0)
    throw Error("config-error", "at least one loss weight must be positive");
}

double ce_loss(const double* m, const double* yc, int64_t count, double* gm,
               double scale) {
  double acc = 0.0;
  for (int64_t i = 0; i < count; i++) {
    const double p = std::clamp(m[i], kClamp, 1.0 - kClamp);
    const double y = yc[i];
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    if (gm && m[i] > kClamp && m[i] < 1.0 - kClamp)
      gm[i] += scale * (-y / p + (1.0 - y) / (1.0 - p)) / count;
  }
  return acc / count;
}

double cc_loss(const double* m, const double* yc, int64_t count, double* gm,
               double scale) {
  double mm = 0.0, my = 0.0;
  for (int64_t i = 0; i < count; i++) {
    mm += m[i];
    my += yc[i];
  }
  mm /= count;
  my /= count;
  double cov = 0.0, vm = 0.0, vy = 0.0;
  for (int64_t i = 0; i < count; i++) {
    const double a = m[i] - mm, b = yc[i] - my;
    cov += a * b;
    vm += a * a;
    vy += b * b;
  }
  cov /= count;
  vm /= count;
  vy /= count;
  const double sm = std::sqrt(vm), sy = std::sqrt(vy);
  if (sm < kSigmaGuard || sy < kSigmaGuard) {
    log_warn("cc_loss: zero-variance map, term contributes 0");
    return 0.0;
  }
  if (gm) {
    const double k = scale / (count * sm * sy);
    const double r = cov / vm;
    for (int64_t i = 0; i < count; i++)
      gm[i] += -k * ((yc[i] - my) - r * (m[i] - mm));
  }
  return -cov / (sm * sy);
}

double nss_loss(const double* m, const int32_t* fixation_cells, int nb,
                int64_t count, double* gm, double scale) {
  double mean = 0.0;
  for (int64_t i = 0; i < count; i++) mean += m[i];
  mean /= count;
  double var = 0.0;
  for (int64_t i = 0; i < count; i++)
    var += (m[i] - mean) * (m[i] - mean);
  var /= count;
  const double sd = std::sqrt(var);
  if (sd < kSigmaGuard) {
    log_warn("nss_loss: constant map, term contributes 0");
    return 0.0;
  }
  double zsum = 0.0, fdev = 0.0;
  for (int f = 0; f < nb; f++) {
    const double d = m[fixation_cells[f]] - mean;
    zsum += d / sd;
    fdev += d;
  }
  if (gm) {
    const double k = scale / nb;
    const double base = static_cast<double>(nb) / count / sd;
    const double curv = fdev / (count * var * sd);
    for (int64_t i = 0; i < count; i++)
      gm[i] += -k * (-base - curv * (m[i] - mean));
    for (int f = 0; f < nb; f++)
      gm[fixation_cells[f]] += -k / sd;
  }
  return -zsum / nb;
}

LossBreakdown composite_loss(const double* m, const GroundTruth& gt,
                             const LossWeights& w, double* gm, double scale) {
  LossBreakdown out;
  const int64_t count = gt.numel();
  out.ce = ce_loss(m, gt.continuous.data(), count, gm, scale * w.w1);
  out.cc = cc_loss(m, gt.continuous.data(), count, gm, scale * w.w2);
  if (gt.fixation_count > 0)
    out.nss = nss_loss(m, gt.fixation_cells.data(), gt.fixation_count, count,
                       gm, scale * w.w3);
  out.total = w.w1 * out.ce + w.w2 * out.cc + w.w3 * out.nss;
  return out;
}

TotalLossResult total_loss(const double* pred,
                           const std::vector<const double*>& a_rgb,
                           const std::vector<const double*>& a_d,
                           int64_t count, const GroundTruth& gt,
                           const EpochClock& clock, const LossWeights& w,
                           double* gpred, const std::vector<double*>& ga_rgb,
                           const std::vector<double*>& ga_d, double scale) {
  if (count != gt.numel())
    throw Error("shape-error", "loss map size does not match ground truth");
  TotalLossResult r;
  r.deep_sup_weight = clock.deep_supervision_weight();
  r.final_map = composite_loss(pred, gt, w, gpred, scale);
  const double ds = r.deep_sup_weight * scale;
  for (size_t i = 0; i < a_rgb.size(); i++) {
    r.deep_sup_sum +=
        composite_loss(a_rgb[i], gt, w,
                       i < ga_rgb.size() ? ga_rgb[i] : nullptr, ds)
            .total;
  }
  for (size_t i = 0; i < a_d.size(); i++) {
    r.deep_sup_sum += composite_loss(a_d[i], gt, w,
                                     i < ga_d.size() ? ga_d[i] : nullptr, ds)
                          .total;
  }
  r.total = r.final_map.total + r.deep_sup_weight * r.deep_sup_sum;
  return r;
}

}  // namespace dsal
