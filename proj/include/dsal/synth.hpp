#pragma once

#include <string>
#include <vector>

#include "dsal/dataset.hpp"

namespace dsal {

// Depth pop-out generator. Every clip shows identically colored squares
// drifting over a flat background; all distractors sit on far depth planes
// while one target square sits strictly nearer. Synthetic fixations
// concentrate on the target, so the task is unsolvable from RGB alone and
// easy once depth is used.
struct SynthConfig {
  int n_clips = 8;
  uint64_t seed = 1;
  int frames_per_clip = 16;
  int width = 224;
  int height = 224;
  int n_distractors = 4;
  int square_size = 44;
  int viewers_per_frame = 6;
  Split split = Split::train;
  std::string out_dir;
};

// Materializes frames, depth maps, fixation CSVs, per-clip target tracks
// (target.csv: frame,x,y,size) and a manifest.tsv under out_dir.
// Deterministic in (seed, parameters).
std::vector<VideoRecord> synth_depth_popout(const SynthConfig& cfg);

}  // namespace dsal
