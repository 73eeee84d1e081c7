#include "dsal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "dsal/error.hpp"

namespace dsal {

namespace {

constexpr double kVarGuard = 1e-16;

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(const double* x, int64_t count) {
  Moments mo;
  for (int64_t i = 0; i < count; i++) mo.mean += x[i];
  mo.mean /= count;
  for (int64_t i = 0; i < count; i++)
    mo.var += (x[i] - mo.mean) * (x[i] - mo.mean);
  mo.var /= count;
  return mo;
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "na";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", *v);
  return buf;
}

class MeanAcc {
 public:
  void add(const std::optional<double>& v) {
    if (v) {
      sum_ += *v;
      n_++;
    }
  }
  std::optional<double> mean() const {
    if (n_ == 0) return std::nullopt;
    return sum_ / n_;
  }

 private:
  double sum_ = 0.0;
  int64_t n_ = 0;
};

MetricMeans mean_of(const std::vector<const FrameEval*>& frames) {
  MeanAcc cc, nss, auc, sauc, sim;
  for (const FrameEval* f : frames) {
    cc.add(f->cc);
    nss.add(f->nss);
    auc.add(f->auc_j);
    sauc.add(f->sauc);
    sim.add(f->sim);
  }
  return {cc.mean(), nss.mean(), auc.mean(), sauc.mean(), sim.mean()};
}

}  // namespace

std::optional<double> cc_metric(const double* pred, const double* yc,
                                int64_t count) {
  const Moments mp = moments(pred, count);
  const Moments my = moments(yc, count);
  if (mp.var < kVarGuard || my.var < kVarGuard) return std::nullopt;
  double cov = 0.0;
  for (int64_t i = 0; i < count; i++)
    cov += (pred[i] - mp.mean) * (yc[i] - my.mean);
  cov /= count;
  return cov / std::sqrt(mp.var * my.var);
}

std::optional<double> nss_metric(const double* pred,
                                 const int32_t* fixation_cells, int nb,
                                 int64_t count) {
  if (nb <= 0) return std::nullopt;
  const Moments mo = moments(pred, count);
  if (mo.var < kVarGuard) return std::nullopt;
  const double sd = std::sqrt(mo.var);
  double acc = 0.0;
  for (int f = 0; f < nb; f++)
    acc += (pred[fixation_cells[f]] - mo.mean) / sd;
  return acc / nb;
}

double roc_auc(std::vector<double> pos, std::vector<double> neg) {
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end(), std::greater<>());

  double area = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  size_t ip = 0, in = 0;
  while (ip < pos.size() || in < neg.size()) {
    // Next threshold: the largest remaining value of either set.
    double thr;
    if (ip < pos.size() && in < neg.size())
      thr = std::max(pos[ip], neg[in]);
    else
      thr = ip < pos.size() ? pos[ip] : neg[in];
    while (ip < pos.size() && pos[ip] >= thr) ip++;
    while (in < neg.size() && neg[in] >= thr) in++;
    const double tpr = static_cast<double>(ip) / np;
    const double fpr = static_cast<double>(in) / nn;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) * 0.5;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1.0 - prev_fpr) * (1.0 + prev_tpr) * 0.5;
  return area;
}

std::optional<double> auc_judd(const double* pred,
                               const int32_t* fixation_cells, int nb,
                               int64_t count) {
  if (nb <= 0) return std::nullopt;
  std::vector<double> pos(static_cast<size_t>(nb));
  for (int f = 0; f < nb; f++)
    pos[static_cast<size_t>(f)] = pred[fixation_cells[f]];
  std::vector<double> neg(pred, pred + count);
  return roc_auc(std::move(pos), std::move(neg));
}

std::vector<int32_t> build_shuffle_pool(
    const std::vector<std::vector<int32_t>>& frame_cells, int exclude_frame) {
  std::set<int32_t> cells;
  for (size_t f = 0; f < frame_cells.size(); f++) {
    if (static_cast<int>(f) == exclude_frame) continue;
    cells.insert(frame_cells[f].begin(), frame_cells[f].end());
  }
  return {cells.begin(), cells.end()};
}

std::optional<double> sauc(const double* pred, const int32_t* fixation_cells,
                           int nb, const std::vector<int32_t>& pool,
                           int n_splits, Rng& rng) {
  if (nb <= 0 || pool.empty()) return std::nullopt;
  std::vector<double> pos(static_cast<size_t>(nb));
  for (int f = 0; f < nb; f++)
    pos[static_cast<size_t>(f)] = pred[fixation_cells[f]];
  const size_t draw = std::min(static_cast<size_t>(nb), pool.size());
  std::vector<int32_t> bag(pool);
  double acc = 0.0;
  for (int s = 0; s < n_splits; s++) {
    // Partial Fisher-Yates for a without-replacement sample.
    for (size_t i = 0; i < draw; i++) {
      const size_t j = i + static_cast<size_t>(rng.uniform_int(bag.size() - i));
      std::swap(bag[i], bag[j]);
    }
    std::vector<double> neg(draw);
    for (size_t i = 0; i < draw; i++) neg[i] = pred[bag[i]];
    acc += roc_auc(pos, std::move(neg));
  }
  return acc / n_splits;
}

std::optional<double> sim_metric(const double* pred, const double* yc,
                                 int64_t count) {
  double sp = 0.0, sy = 0.0;
  for (int64_t i = 0; i < count; i++) {
    sp += pred[i];
    sy += yc[i];
  }
  if (sp <= 0.0 || sy <= 0.0) return std::nullopt;
  double acc = 0.0;
  for (int64_t i = 0; i < count; i++)
    acc += std::min(pred[i] / sp, yc[i] / sy);
  return acc;
}

void MetricsReport::finalize() {
  per_video.clear();
  std::map<std::string, std::vector<const FrameEval*>> by_video;
  std::vector<const FrameEval*> all;
  for (const FrameEval& f : frames) {
    by_video[f.video_id].push_back(&f);
    all.push_back(&f);
  }
  for (const auto& [vid, list] : by_video) per_video[vid] = mean_of(list);
  overall = mean_of(all);
}

std::string MetricsReport::serialize() const {
  std::ostringstream os;
  os << "# saliency metrics report\n";
  os << "# resolution: " << resolution_note << "\n";
  os << "# sauc_splits: " << sauc_splits << "\n";
  os << "# sauc_seed: " << sauc_seed << "\n";
  os << "# columns: video_id frame_index cc nss auc_j sauc sim\n";
  for (const FrameEval& f : frames)
    os << "frame " << f.video_id << ' ' << f.frame_index << ' ' << fmt(f.cc)
       << ' ' << fmt(f.nss) << ' ' << fmt(f.auc_j) << ' ' << fmt(f.sauc)
       << ' ' << fmt(f.sim) << "\n";
  for (const auto& [vid, m] : per_video)
    os << "video " << vid << ' ' << fmt(m.cc) << ' ' << fmt(m.nss) << ' '
       << fmt(m.auc_j) << ' ' << fmt(m.sauc) << ' ' << fmt(m.sim) << "\n";
  os << "overall " << fmt(overall.cc) << ' ' << fmt(overall.nss) << ' '
     << fmt(overall.auc_j) << ' ' << fmt(overall.sauc) << ' '
     << fmt(overall.sim) << "\n";
  return os.str();
}

MetricsReport evaluate_dataset(const std::vector<FramePrediction>& preds,
                               const std::vector<FrameTarget>& targets,
                               int sauc_splits, uint64_t sauc_seed) {
  std::map<std::pair<std::string, int>, const FrameTarget*> by_key;
  for (const FrameTarget& t : targets)
    by_key[{t.video_id, t.frame_index}] = &t;

  std::string missing;
  for (const FramePrediction& p : preds)
    if (!by_key.count({p.video_id, p.frame_index}))
      missing += " " + p.video_id + ":" + std::to_string(p.frame_index);
  if (!missing.empty())
    throw Error("eval-error", "predictions without ground truth:" + missing);

  MetricsReport report;
  report.sauc_splits = sauc_splits;
  report.sauc_seed = sauc_seed;
  for (const FramePrediction& p : preds) {
    const FrameTarget& t = *by_key[{p.video_id, p.frame_index}];
    const GroundTruth& gt = t.gt;
    if (static_cast<int64_t>(p.map.size()) != gt.numel())
      throw Error("eval-error", "prediction size mismatch for " + p.video_id);
    FrameEval fe;
    fe.video_id = p.video_id;
    fe.frame_index = p.frame_index;
    const double* m = p.map.data();
    fe.cc = cc_metric(m, gt.continuous.data(), gt.numel());
    fe.nss = nss_metric(m, gt.fixation_cells.data(), gt.fixation_count,
                        gt.numel());
    fe.auc_j =
        auc_judd(m, gt.fixation_cells.data(), gt.fixation_count, gt.numel());
    // Seed per frame so the result does not depend on evaluation order.
    Rng frame_rng = Rng(sauc_seed).split(
        std::hash<std::string>{}(p.video_id) * 1000003ull +
        static_cast<uint64_t>(p.frame_index));
    fe.sauc = sauc(m, gt.fixation_cells.data(), gt.fixation_count,
                   t.shuffle_pool, sauc_splits, frame_rng);
    fe.sim = sim_metric(m, gt.continuous.data(), gt.numel());
    report.frames.push_back(std::move(fe));
  }
  report.finalize();
  return report;
}

}  // namespace dsal
