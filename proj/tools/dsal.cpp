#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dsal/checkpoint.hpp"
#include "dsal/config.hpp"
#include "dsal/error.hpp"
#include "dsal/synth.hpp"
#include "dsal/trainer.hpp"

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw dsal::Error("io-error", "cannot write " + path);
  out << text;
}

void write_resolved_config(const dsal::RunConfig& cfg,
                           const std::string& dir) {
  fs::create_directories(dir);
  write_text((fs::path(dir) / "resolved.cfg").string(),
             dsal::serialize_run_config(cfg));
}

void print_overall(const dsal::MetricsReport& report) {
  auto v = [](const std::optional<double>& x) {
    if (!x) return std::string("na");
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4f", *x);
    return std::string(buf);
  };
  std::printf("CC NSS AUC-J sAUC SIM\n");
  std::printf("%s %s %s %s %s\n", v(report.overall.cc).c_str(),
              v(report.overall.nss).c_str(), v(report.overall.auc_j).c_str(),
              v(report.overall.sauc).c_str(), v(report.overall.sim).c_str());
}

constexpr const char* kUsage =
    "usage: dsal <command> [options]\n"
    "commands:\n"
    "  train     train a model        (--config --output-dir [--seed] [--set k=v])\n"
    "  evaluate  compute metrics      (+ --checkpoint --split)\n"
    "  predict   export saliency maps (+ --checkpoint --video-id [--overlay] [--raw])\n"
    "  synth     generate the synthetic depth pop-out dataset\n"
    "            (--clips --out [--seed] [--frames] [--split])\n";

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fputs(kUsage, stderr);
    return 2;
  }
  const std::string cmd = argv[1];
  if (cmd != "train" && cmd != "evaluate" && cmd != "predict" &&
      cmd != "synth" && cmd != "-h" && cmd != "--help") {
    std::fprintf(stderr, "unknown command '%s'\n%s", cmd.c_str(), kUsage);
    return 2;
  }

  CLI::App app{"depth-aware video saliency toolkit"};
  app.require_subcommand(1);

  std::string config_path, output_dir, checkpoint, split_name = "test";
  std::string video_id, synth_out;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool overlay = false, raw = false;
  int clips = 8, frames = 16;
  std::string synth_split = "train";

  auto add_common = [&](CLI::App* c, bool need_output) {
    c->add_option("--config", config_path, "run configuration file")
        ->required();
    auto* out = c->add_option("--output-dir", output_dir, "output directory");
    if (need_output) out->required();
    c->add_option("--seed", seed, "override train.seed");
    c->add_option("--set", overrides, "override key=value (repeatable)");
  };

  CLI::App* cmd_train = app.add_subcommand("train", "train a model");
  add_common(cmd_train, true);

  CLI::App* cmd_eval = app.add_subcommand("evaluate", "compute metrics");
  add_common(cmd_eval, true);
  cmd_eval->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")
      ->required();
  cmd_eval->add_option("--split", split_name, "train|val|test");

  CLI::App* cmd_pred = app.add_subcommand("predict", "export saliency maps");
  add_common(cmd_pred, true);
  cmd_pred->add_option("--checkpoint", checkpoint, "checkpoint to load")
      ->required();
  cmd_pred->add_option("--video-id", video_id, "video to process")->required();
  cmd_pred->add_flag("--overlay", overlay, "also write RGB overlays");
  cmd_pred->add_flag("--raw", raw, "also write raw float maps");

  CLI::App* cmd_synth =
      app.add_subcommand("synth", "generate synthetic depth pop-out data");
  cmd_synth->add_option("--clips", clips, "number of clips");
  cmd_synth->add_option("--out", synth_out, "output directory")->required();
  cmd_synth->add_option("--seed", seed, "generator seed");
  cmd_synth->add_option("--frames", frames, "frames per clip");
  cmd_synth->add_option("--split", synth_split, "split tag for the manifest");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const bool seed_given = app.count_all() && (cmd_train->count("--seed") ||
                                                cmd_eval->count("--seed") ||
                                                cmd_pred->count("--seed"));
    if (*cmd_train) {
      dsal::RunConfig cfg = dsal::parse_run_config(config_path, overrides);
      if (seed_given) cfg.train.seed = seed;
      write_resolved_config(cfg, output_dir);
      dsal::Trainer trainer(cfg, output_dir);
      dsal::TrainResult res = trainer.train();
      std::printf("trained %d epoch(s), %lld step(s); last checkpoint %s\n",
                  res.epochs_run, static_cast<long long>(res.steps),
                  res.last_checkpoint.c_str());
    } else if (*cmd_eval) {
      dsal::RunConfig cfg = dsal::parse_run_config(config_path, overrides);
      if (seed_given) cfg.train.seed = seed;
      write_resolved_config(cfg, output_dir);
      dsal::Trainer trainer(cfg, output_dir);
      dsal::load_checkpoint(checkpoint, trainer.model());
      const dsal::Split split = dsal::split_from_string(split_name);
      dsal::MetricsReport report = trainer.evaluate(trainer.model(), split);
      const std::string report_path =
          (fs::path(output_dir) / ("metrics_" + split_name + ".txt")).string();
      write_text(report_path, report.serialize());
      print_overall(report);
      std::printf("report written to %s\n", report_path.c_str());
    } else if (*cmd_pred) {
      dsal::RunConfig cfg = dsal::parse_run_config(config_path, overrides);
      if (seed_given) cfg.train.seed = seed;
      write_resolved_config(cfg, output_dir);
      auto videos = dsal::load_videos(cfg.data.manifests);
      const dsal::LoadedVideo* video = nullptr;
      for (const auto& v : videos)
        if (v.record.video_id == video_id) video = &v;
      if (!video)
        throw dsal::Error("input-error",
                          "video '" + video_id + "' not found in manifests");
      if (cfg.model.has_depth() && video->record.depth_dir.empty())
        throw dsal::Error("input-error",
                          "variant " + cfg.model.variant() +
                              " requires depth but video " + video_id +
                              " has no depth directory");
      dsal::SaliencyModel model(cfg.model, cfg.train.seed);
      dsal::load_checkpoint(checkpoint, model);
      dsal::predict_video(model, *video, cfg, output_dir,
                          {overlay, raw});
      std::printf("wrote %d frame artifact set(s) to %s\n",
                  video->record.frame_count, output_dir.c_str());
    } else if (*cmd_synth) {
      dsal::SynthConfig scfg;
      scfg.n_clips = clips;
      scfg.seed = cmd_synth->count("--seed") ? seed : scfg.seed;
      scfg.frames_per_clip = frames;
      scfg.split = dsal::split_from_string(synth_split);
      scfg.out_dir = synth_out;
      dsal::synth_depth_popout(scfg);
      std::ostringstream os;
      os << "[synth]\nclips = " << scfg.n_clips << "\nseed = " << scfg.seed
         << "\nframes = " << scfg.frames_per_clip
         << "\nsplit = " << synth_split << "\n";
      write_text((fs::path(synth_out) / "resolved.cfg").string(), os.str());
      std::printf("synthetic dataset written to %s (manifest.tsv)\n",
                  synth_out.c_str());
    }
  } catch (const dsal::Error& e) {
    std::fprintf(stderr, "%s: %s\n", e.klass().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal-error: %s\n", e.what());
    return 1;
  }
  return 0;
}
