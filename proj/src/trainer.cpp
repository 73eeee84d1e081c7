#include "dsal/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dsal/checkpoint.hpp"
#include "dsal/error.hpp"
#include "dsal/image_io.hpp"
#include "dsal/losses.hpp"

namespace fs = std::filesystem;

namespace dsal {

std::pair<double, double> lr_at(int epoch, const TrainConfig& cfg) {
  int k = 0;
  for (int m : cfg.lr_milestones)
    if (m <= epoch) k++;
  const double f = std::pow(cfg.lr_gamma, k);
  return {cfg.lr_backbone * f, cfg.lr_heads * f};
}

SgdOptimizer::SgdOptimizer(ParamStore& store, double momentum,
                           double weight_decay)
    : store_(store), momentum_(momentum), weight_decay_(weight_decay) {}

void SgdOptimizer::step(double lr_backbone, double lr_heads) {
  for (Param* p : store_.params()) {
    const double lr =
        p->group == ParamGroup::backbone ? lr_backbone : lr_heads;
    float* v = p->momentum.data();
    float* g = p->grad.data();
    float* w = p->value.data();
    const int64_t n = p->value.numel();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; i++) {
      const double vel = momentum_ * v[i] + g[i] + weight_decay_ * w[i];
      v[i] = static_cast<float>(vel);
      w[i] = static_cast<float>(w[i] - lr * vel);
    }
  }
}

void SgdOptimizer::zero_grad() {
  for (Param* p : store_.params()) p->grad.fill(0.0f);
}

std::pair<size_t, size_t> SgdOptimizer::group_counts() const {
  size_t backbone = 0, heads = 0;
  for (Param* p : store_.params())
    (p->group == ParamGroup::backbone ? backbone : heads)++;
  return {backbone, heads};
}

std::vector<LoadedVideo> load_videos(
    const std::vector<std::string>& manifests) {
  std::vector<LoadedVideo> out;
  for (const std::string& m : manifests) {
    for (VideoRecord& rec : parse_manifest(m)) {
      resolve_frame_count(rec);
      LoadedVideo v;
      v.fixations = load_fixations(rec.fixations_file, rec.frame_count,
                                   rec.width, rec.height);
      v.record = std::move(rec);
      out.push_back(std::move(v));
    }
  }
  return out;
}

Trainer::Trainer(const RunConfig& cfg, std::string output_dir)
    : cfg_(cfg), output_dir_(std::move(output_dir)) {
  cfg_.model.validate();
  cfg_.train.validate();
  if (!output_dir_.empty()) fs::create_directories(output_dir_);
  videos_ = load_videos(cfg_.data.manifests);
  model_ = std::make_unique<SaliencyModel>(cfg_.model, cfg_.train.seed);
  if (!cfg_.pretrained_backbone.empty())
    model_->load_pretrained_backbone(cfg_.pretrained_backbone);
}

LoaderConfig Trainer::loader_config() const {
  LoaderConfig lc;
  lc.clip_len = cfg_.model.window;
  lc.size = cfg_.model.input_size;
  lc.norm_mean = cfg_.data.norm_mean;
  lc.norm_std = cfg_.data.norm_std;
  lc.gt_sigma = cfg_.gt_sigma();
  lc.load_depth = cfg_.model.has_depth();
  return lc;
}

std::vector<Trainer::Window> Trainer::windows_for(
    Split split, bool require_fixations) const {
  std::vector<Window> out;
  int64_t id = 0;
  for (size_t v = 0; v < videos_.size(); v++) {
    const LoadedVideo& vid = videos_[v];
    if (vid.record.split != split) continue;
    const int stride = std::max(1, cfg_.train.train_stride);
    for (int f = 0; f < vid.record.frame_count; f += stride, id++) {
      if (require_fixations &&
          vid.fixations[static_cast<size_t>(f)].points.empty())
        continue;  // zero-fixation windows carry no loss signal
      out.push_back({static_cast<int>(v), f, id});
    }
  }
  return out;
}

namespace {

void copy_sample_into(const TensorPtr& src, TensorPtr& dst, int slot) {
  std::memcpy(dst->data() + static_cast<int64_t>(slot) * src->numel(),
              src->data(), sizeof(float) * static_cast<size_t>(src->numel()));
}

// Row view of a [n,1,h,w] tensor as doubles.
std::vector<double> row_as_double(const TensorPtr& t, int row) {
  const int64_t plane = t->numel() / t->dim(0);
  std::vector<double> out(static_cast<size_t>(plane));
  const float* p = t->data() + row * plane;
  for (int64_t i = 0; i < plane; i++) out[static_cast<size_t>(i)] = p[i];
  return out;
}

void add_row_from_double(TensorPtr& t, int row, const std::vector<double>& g) {
  const int64_t plane = t->numel() / t->dim(0);
  float* p = t->data() + row * plane;
  for (int64_t i = 0; i < plane; i++)
    p[i] += static_cast<float>(g[static_cast<size_t>(i)]);
}

}  // namespace

void Trainer::run_step(const std::vector<Window>& batch, int epoch,
                       int64_t step, StepLogEntry* entry) {
  const LoaderConfig lc = loader_config();
  const ModelConfig& mc = cfg_.model;
  const int batch_count = static_cast<int>(batch.size());
  const double scale = 1.0 / batch_count;
  const EpochClock clock{epoch, cfg_.train.total_epochs};
  const ForwardMode mode{true, cfg_.train.bn_batch_stats};
  const int64_t plane =
      static_cast<int64_t>(mc.input_size) * mc.input_size;

  double loss_sum = 0, ce_sum = 0, cc_sum = 0, nss_sum = 0;

  for (int off = 0; off < batch_count; off += cfg_.train.micro_batch) {
    const int mb = std::min(cfg_.train.micro_batch, batch_count - off);
    auto rgb = make_tensor({mb, 3, mc.window, mc.input_size, mc.input_size});
    TensorPtr depth;
    if (mc.has_depth())
      depth = make_tensor({mb, 3, mc.window, mc.input_size, mc.input_size});
    std::vector<GroundTruth> gts(static_cast<size_t>(mb));

    for (int i = 0; i < mb; i++) {
      const Window& w = batch[static_cast<size_t>(off + i)];
      const LoadedVideo& vid = videos_[static_cast<size_t>(w.video)];
      ClipSample sample = load_clip(vid.record, vid.fixations, w.center, lc);
      // The flip draw depends only on (seed, epoch, window id) so batch
      // grouping never changes augmentation.
      Rng flip_rng = Rng(cfg_.train.seed)
                         .split((static_cast<uint64_t>(epoch) << 40) ^
                                static_cast<uint64_t>(w.id));
      sample = augment_flip(std::move(sample), cfg_.train.flip_p, flip_rng);
      copy_sample_into(sample.rgb, rgb, i);
      if (depth) copy_sample_into(sample.depth, depth, i);
      gts[static_cast<size_t>(i)] = std::move(sample.gt);
    }

    ModelOutputs out = model_->forward(rgb, depth, mode);

    ModelGrads grads;
    grads.gprob = make_tensor({mb, 1, mc.input_size, mc.input_size});
    for (int m = 0; m < 4; m++) {
      if (mc.has_rgb())
        grads.ga_rgb[static_cast<size_t>(m)] =
            make_tensor({mb, 1, mc.input_size, mc.input_size});
      if (mc.has_depth())
        grads.ga_d[static_cast<size_t>(m)] =
            make_tensor({mb, 1, mc.input_size, mc.input_size});
    }

    for (int i = 0; i < mb; i++) {
      std::vector<double> pred = row_as_double(out.prob, i);
      std::vector<std::vector<double>> a_rgb, a_d;
      std::vector<const double*> a_rgb_p, a_d_p;
      std::vector<std::vector<double>> ga_rgb(4), ga_d(4);
      std::vector<double*> ga_rgb_p, ga_d_p;
      for (int m = 0; m < 4; m++) {
        if (mc.has_rgb()) {
          a_rgb.push_back(row_as_double(out.a_rgb[static_cast<size_t>(m)], i));
          ga_rgb[static_cast<size_t>(m)].assign(static_cast<size_t>(plane), 0.0);
        }
        if (mc.has_depth()) {
          a_d.push_back(row_as_double(out.a_d[static_cast<size_t>(m)], i));
          ga_d[static_cast<size_t>(m)].assign(static_cast<size_t>(plane), 0.0);
        }
      }
      for (auto& v : a_rgb) a_rgb_p.push_back(v.data());
      for (auto& v : a_d) a_d_p.push_back(v.data());
      if (mc.has_rgb())
        for (auto& v : ga_rgb) ga_rgb_p.push_back(v.data());
      if (mc.has_depth())
        for (auto& v : ga_d) ga_d_p.push_back(v.data());
      std::vector<double> gpred(static_cast<size_t>(plane), 0.0);

      const GroundTruth& gt = gts[static_cast<size_t>(i)];
      TotalLossResult r =
          total_loss(pred.data(), a_rgb_p, a_d_p, plane, gt, clock,
                     cfg_.train.loss_weights, gpred.data(), ga_rgb_p, ga_d_p,
                     scale);
      if (!std::isfinite(r.total)) {
        const Window& w = batch[static_cast<size_t>(off + i)];
        throw Error("numeric-fault",
                    "non-finite loss at epoch " + std::to_string(epoch) +
                        " step " + std::to_string(step) + " video " +
                        videos_[static_cast<size_t>(w.video)].record.video_id +
                        " frame " + std::to_string(w.center) +
                        " (checkpoints from previous epochs are retained)");
      }
      loss_sum += r.total;
      ce_sum += r.final_map.ce;
      cc_sum += r.final_map.cc;
      nss_sum += r.final_map.nss;

      add_row_from_double(grads.gprob, i, gpred);
      for (int m = 0; m < 4; m++) {
        if (mc.has_rgb())
          add_row_from_double(grads.ga_rgb[static_cast<size_t>(m)], i,
                              ga_rgb[static_cast<size_t>(m)]);
        if (mc.has_depth())
          add_row_from_double(grads.ga_d[static_cast<size_t>(m)], i,
                              ga_d[static_cast<size_t>(m)]);
      }
    }
    model_->backward(grads);
  }

  entry->loss = loss_sum * scale;
  entry->ce = ce_sum * scale;
  entry->cc = cc_sum * scale;
  entry->nss = nss_sum * scale;
  entry->deep_sup_weight = clock.deep_supervision_weight();
}

TrainResult Trainer::train(const TrainCallbacks& callbacks) {
  const std::vector<Window> windows = windows_for(Split::train, true);
  if (windows.empty())
    throw Error("input-error",
                "no training windows with fixations in the manifests");
  const std::vector<Window> val_windows = windows_for(Split::val, true);

  SgdOptimizer opt(model_->store(), cfg_.train.momentum,
                   cfg_.train.weight_decay);

  int start_epoch = 0;
  int64_t step = 0;
  double best_cc = -2.0;
  bool has_best = false;
  if (!cfg_.train.resume.empty()) {
    CheckpointMeta meta = load_checkpoint(cfg_.train.resume, *model_);
    start_epoch = meta.epoch + 1;
    step = meta.step;
    if (meta.has_best_val) {
      best_cc = meta.best_val_cc;
      has_best = true;
    }
  }

  std::ofstream log(fs::path(output_dir_) / "train_log.txt", std::ios::app);
  if (!log) throw Error("io-error", "cannot open training log");

  TrainResult result;
  bool stopped = false;
  for (int epoch = start_epoch; epoch < cfg_.train.total_epochs && !stopped;
       epoch++) {
    std::vector<Window> order(windows);
    Rng shuffle_rng =
        Rng(cfg_.train.seed).split(0xD5AA77ull + static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; i--)
      std::swap(order[i - 1],
                order[static_cast<size_t>(shuffle_rng.uniform_int(i))]);

    const auto [lr_b, lr_h] = lr_at(epoch, cfg_.train);
    for (size_t pos = 0; pos < order.size() && !stopped;
         pos += static_cast<size_t>(cfg_.train.effective_batch)) {
      const size_t end = std::min(
          order.size(), pos + static_cast<size_t>(cfg_.train.effective_batch));
      std::vector<Window> batch(order.begin() + static_cast<int64_t>(pos),
                                order.begin() + static_cast<int64_t>(end));
      opt.zero_grad();
      StepLogEntry entry;
      entry.step = step;
      entry.epoch = epoch;
      entry.lr_backbone = lr_b;
      entry.lr_heads = lr_h;
      run_step(batch, epoch, step, &entry);
      opt.step(lr_b, lr_h);
      step++;
      result.steps = step;

      char line[320];
      std::snprintf(line, sizeof(line),
                    "step=%lld epoch=%d lr_backbone=%.17g lr_heads=%.17g "
                    "loss=%.17g ce=%.17g cc=%.17g nss=%.17g "
                    "deep_sup_weight=%.17g\n",
                    static_cast<long long>(entry.step), entry.epoch,
                    entry.lr_backbone, entry.lr_heads, entry.loss, entry.ce,
                    entry.cc, entry.nss, entry.deep_sup_weight);
      log << line;
      log.flush();

      if (callbacks.on_step && !callbacks.on_step(entry)) stopped = true;
      if (cfg_.train.max_steps > 0 && step >= cfg_.train.max_steps)
        stopped = true;
    }

    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.step = step;
    meta.best_val_cc = best_cc;
    meta.has_best_val = has_best;
    meta.rng_state = Rng(cfg_.train.seed).serialize();
    meta.config_snapshot = serialize_run_config(cfg_);
    meta.variant = cfg_.model.variant();
    char name[32];
    std::snprintf(name, sizeof(name), "ckpt_epoch_%03d", epoch);
    const std::string ckpt_path = (fs::path(output_dir_) / name).string();
    save_checkpoint(ckpt_path, *model_, meta);
    result.last_checkpoint = ckpt_path;
    result.epochs_run = epoch - start_epoch + 1;
    if (cfg_.train.ckpt_keep > 0) {
      char old_name[32];
      std::snprintf(old_name, sizeof(old_name), "ckpt_epoch_%03d",
                    epoch - cfg_.train.ckpt_keep);
      std::error_code ec;
      fs::remove(fs::path(output_dir_) / old_name, ec);
    }

    if (!val_windows.empty()) {
      MetricsReport rep = evaluate(*model_, Split::val);
      const double cc = rep.overall.cc.value_or(-2.0);
      if (!has_best || cc > best_cc) {
        best_cc = cc;
        has_best = true;
        meta.best_val_cc = best_cc;
        meta.has_best_val = true;
        const std::string best_path =
            (fs::path(output_dir_) / "ckpt_best").string();
        save_checkpoint(best_path, *model_, meta);
        result.best_checkpoint = best_path;
      }
    }
  }
  return result;
}

MetricsReport Trainer::evaluate(SaliencyModel& model, Split split) {
  const LoaderConfig lc = loader_config();
  const ModelConfig& mc = cfg_.model;
  const ForwardMode mode{false, false};
  const int S = mc.input_size;

  std::vector<FramePrediction> preds;
  std::vector<FrameTarget> targets;
  for (const LoadedVideo& vid : videos_) {
    if (vid.record.split != split) continue;
    // Per-frame fixation cells at prediction resolution feed the sAUC pools.
    std::vector<std::vector<int32_t>> frame_cells;
    for (int f = 0; f < vid.record.frame_count; f++) {
      GroundTruth g = build_ground_truth(
          vid.fixations[static_cast<size_t>(f)], vid.record.width,
          vid.record.height, S, S, lc.gt_sigma);
      frame_cells.push_back(g.fixation_cells);
    }

    const int eb = std::max(1, cfg_.eval.batch);
    for (int f0 = 0; f0 < vid.record.frame_count; f0 += eb) {
      const int n = std::min(eb, vid.record.frame_count - f0);
      auto rgb = make_tensor({n, 3, mc.window, S, S});
      TensorPtr depth;
      if (mc.has_depth()) depth = make_tensor({n, 3, mc.window, S, S});
      std::vector<GroundTruth> gts(static_cast<size_t>(n));
      for (int i = 0; i < n; i++) {
        ClipSample sample =
            load_clip(vid.record, vid.fixations, f0 + i, lc);
        copy_sample_into(sample.rgb, rgb, i);
        if (depth) copy_sample_into(sample.depth, depth, i);
        gts[static_cast<size_t>(i)] = std::move(sample.gt);
      }
      ModelOutputs out = model.forward(rgb, depth, mode);
      for (int i = 0; i < n; i++) {
        FramePrediction p;
        p.video_id = vid.record.video_id;
        p.frame_index = f0 + i;
        p.map = row_as_double(out.prob, i);
        preds.push_back(std::move(p));
        FrameTarget t;
        t.video_id = vid.record.video_id;
        t.frame_index = f0 + i;
        t.gt = std::move(gts[static_cast<size_t>(i)]);
        t.shuffle_pool = build_shuffle_pool(frame_cells, f0 + i);
        targets.push_back(std::move(t));
      }
    }
  }
  MetricsReport report = evaluate_dataset(preds, targets,
                                          cfg_.eval.sauc_splits,
                                          cfg_.eval.sauc_seed);
  report.resolution_note = std::to_string(S) + "x" + std::to_string(S) +
                           " (network resolution)";
  return report;
}

void predict_video(SaliencyModel& model, const LoadedVideo& video,
                   const RunConfig& cfg, const std::string& out_dir,
                   const PredictOptions& opts) {
  fs::create_directories(out_dir);
  LoaderConfig lc;
  lc.clip_len = cfg.model.window;
  lc.size = cfg.model.input_size;
  lc.norm_mean = cfg.data.norm_mean;
  lc.norm_std = cfg.data.norm_std;
  lc.gt_sigma = cfg.gt_sigma();
  lc.load_depth = cfg.model.has_depth();
  const int S = cfg.model.input_size;
  const ForwardMode mode{false, false};
  const int64_t plane = static_cast<int64_t>(S) * S;

  for (int f = 0; f < video.record.frame_count; f++) {
    ClipSample sample = load_clip(video.record, video.fixations, f, lc);
    auto rgb = make_tensor({1, 3, cfg.model.window, S, S});
    copy_sample_into(sample.rgb, rgb, 0);
    TensorPtr depth;
    if (sample.depth) {
      depth = make_tensor({1, 3, cfg.model.window, S, S});
      copy_sample_into(sample.depth, depth, 0);
    }
    ModelOutputs out = model.forward(rgb, depth, mode);
    const float* prob = out.prob->data();

    float mx = 0.0f, mn = 1.0f;
    for (int64_t i = 0; i < plane; i++) {
      mx = std::max(mx, prob[i]);
      mn = std::min(mn, prob[i]);
    }
    std::vector<uint8_t> gray(static_cast<size_t>(plane));
    if (mx <= 0.0f || mx - mn < 1e-9f) {
      // constant map: render mid-gray instead of dividing by ~zero
      std::fill(gray.begin(), gray.end(), 128);
    } else {
      for (int64_t i = 0; i < plane; i++)
        gray[static_cast<size_t>(i)] = static_cast<uint8_t>(
            std::lround(255.0 * prob[i] / mx));
    }
    char name[48];
    std::snprintf(name, sizeof(name), "sal_%06d", f);
    write_pgm8((fs::path(out_dir) / (std::string(name) + ".pgm")).string(), S,
               S, gray.data());
    if (opts.raw)
      write_raw_map(
          (fs::path(out_dir) / (std::string(name) + ".vdsm")).string(), S, S,
          prob);
    if (opts.overlay) {
      // Blend the (denormalized) center frame with a red heat channel.
      std::vector<uint8_t> rgb(static_cast<size_t>(plane) * 3);
      const int center_slot = cfg.model.window / 2;
      for (int64_t i = 0; i < plane; i++) {
        for (int c = 0; c < 3; c++) {
          const float v = sample.rgb->data()[(static_cast<int64_t>(c) *
                                                  cfg.model.window +
                                              center_slot) *
                                                 plane +
                                             i];
          float u = v * cfg.data.norm_std[static_cast<size_t>(c)] +
                    cfg.data.norm_mean[static_cast<size_t>(c)];
          u = std::clamp(u, 0.0f, 1.0f);
          float heat = gray[static_cast<size_t>(i)] / 255.0f;
          float blended = c == 0 ? 0.55f * u + 0.45f * heat : 0.55f * u;
          rgb[static_cast<size_t>(i) * 3 + static_cast<size_t>(c)] =
              static_cast<uint8_t>(std::lround(255.0f * blended));
        }
      }
      write_ppm8(
          (fs::path(out_dir) / (std::string(name) + "_overlay.ppm")).string(),
          S, S, rgb.data());
    }
  }
}

}  // namespace dsal
