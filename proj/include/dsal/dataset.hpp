#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsal/ground_truth.hpp"
#include "dsal/rng.hpp"
#include "dsal/tensor.hpp"

namespace dsal {

enum class Split { train, val, test };

Split split_from_string(const std::string& s);
std::string split_to_string(Split s);

struct VideoRecord {
  std::string video_id;
  std::string frames_dir;
  std::string depth_dir;  // empty when the manifest holds "-"
  std::string fixations_file;
  int width = 0;
  int height = 0;
  int frame_count = -1;  // resolved lazily by counting frame files
  Split split = Split::train;
};

// One manifest line per video: tab-separated
// video_id frames_dir depth_dir fixations_file width height split
// Relative paths resolve against the manifest's directory.
std::vector<VideoRecord> parse_manifest(const std::string& path);

// Counts consecutive frame_%06d.(ppm|pgm) files starting at 0 and fills
// frame_count. Missing directory raises a resolution error.
void resolve_frame_count(VideoRecord& rec);

struct FixationPoint {
  double x = 0.0;
  double y = 0.0;
  int viewer_id = 0;
};

struct FixationSet {
  int frame_index = 0;
  std::vector<FixationPoint> points;
};

// CSV with header frame_index,viewer_id,x,y in original-resolution pixels.
// Returned vector has one entry per frame in [0, frame_count).
std::vector<FixationSet> load_fixations(const std::string& path,
                                        int frame_count, int width,
                                        int height);

// Maps original-resolution fixations onto an out_w x out_h grid
// (pixel-center convention, rounded and clamped), builds the binary map and
// its Gaussian-blurred, max-normalized continuous counterpart.
// sigma is in output pixels.
GroundTruth build_ground_truth(const FixationSet& fixations, int src_width,
                               int src_height, int out_width, int out_height,
                               double sigma);

struct ClipSample {
  TensorPtr rgb;    // [3, T, S, S]
  TensorPtr depth;  // same shape; nullptr when not loaded
  GroundTruth gt;
  int center_frame = 0;
  std::string video_id;
};

struct LoaderConfig {
  int clip_len = 16;
  int size = 112;
  std::array<float, 3> norm_mean = {0.45f, 0.45f, 0.45f};
  std::array<float, 3> norm_std = {0.225f, 0.225f, 0.225f};
  double gt_sigma = 0.045 * 112;  // output pixels
  bool load_depth = true;
};

// Window frames are center-8 .. center+7 with indices clamped to the valid
// range. RGB is resized to size x size and affine-normalized per channel;
// depth is per-frame min-max rescaled to [0,1], resized, replicated to three
// channels, and normalized with the same constants.
ClipSample load_clip(const VideoRecord& rec,
                     const std::vector<FixationSet>& fixations,
                     int center_frame, const LoaderConfig& cfg);

// With probability p mirrors rgb, depth and the ground-truth maps jointly
// along the width axis. Exactly one uniform draw is consumed either way.
ClipSample augment_flip(ClipSample sample, double p, Rng& rng);

// Per-frame depth min-max rescale (used inside load_clip; exposed for its
// scale-invariance contract).
void minmax_rescale(std::vector<double>& values);

}  // namespace dsal
