#include "dsal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "dsal/error.hpp"
#include "dsal/image_io.hpp"
#include "dsal/kernels.hpp"

namespace fs = std::filesystem;

namespace dsal {

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw Error("parse-error", "unknown split '" + s + "'");
}

std::string split_to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

namespace {

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string join_path(const std::string& base, const std::string& p) {
  if (p.empty() || p == "-") return "";
  fs::path fp(p);
  if (fp.is_absolute()) return p;
  return (fs::path(base) / fp).string();
}

std::string frame_path(const std::string& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "frame_%06d", index);
  for (const char* ext : {".ppm", ".pgm"}) {
    fs::path p = fs::path(dir) / (std::string(name) + ext);
    if (fs::exists(p)) return p.string();
  }
  throw Error("io-error",
              "frame file not found: " + (fs::path(dir) / name).string() +
                  ".(ppm|pgm)");
}

}  // namespace

std::vector<VideoRecord> parse_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open manifest " + path);
  const std::string base = fs::path(path).parent_path().string();
  std::vector<VideoRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    auto f = split_fields(line, '\t');
    if (f.size() != 7)
      throw Error("parse-error",
                  "manifest line " + std::to_string(lineno) +
                      ": expected 7 tab-separated fields, got " +
                      std::to_string(f.size()));
    VideoRecord r;
    r.video_id = f[0];
    r.frames_dir = join_path(base, f[1]);
    r.depth_dir = join_path(base, f[2]);
    r.fixations_file = join_path(base, f[3]);
    try {
      r.width = std::stoi(f[4]);
      r.height = std::stoi(f[5]);
    } catch (const std::exception&) {
      throw Error("parse-error", "manifest line " + std::to_string(lineno) +
                                     ": width/height not integers");
    }
    if (r.width < 1 || r.height < 1)
      throw Error("parse-error", "manifest line " + std::to_string(lineno) +
                                     ": width/height must be >= 1");
    try {
      r.split = split_from_string(f[6]);
    } catch (const Error&) {
      throw Error("parse-error", "manifest line " + std::to_string(lineno) +
                                     ": unknown split '" + f[6] + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

void resolve_frame_count(VideoRecord& rec) {
  if (!fs::is_directory(rec.frames_dir))
    throw Error("resolution-error",
                "frames directory missing for video " + rec.video_id + ": " +
                    rec.frames_dir);
  int count = 0;
  while (true) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d", count);
    const fs::path ppm = fs::path(rec.frames_dir) / (std::string(name) + ".ppm");
    const fs::path pgm = fs::path(rec.frames_dir) / (std::string(name) + ".pgm");
    if (!fs::exists(ppm) && !fs::exists(pgm)) break;
    count++;
  }
  if (count == 0)
    throw Error("resolution-error",
                "no frame files in " + rec.frames_dir + " for video " +
                    rec.video_id);
  rec.frame_count = count;
}

std::vector<FixationSet> load_fixations(const std::string& path,
                                        int frame_count, int width,
                                        int height) {
  std::ifstream in(path);
  if (!in) throw Error("io-error", "cannot open fixations file " + path);
  std::vector<FixationSet> out(static_cast<size_t>(frame_count));
  for (int i = 0; i < frame_count; i++) out[static_cast<size_t>(i)].frame_index = i;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    lineno++;
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("frame_index", 0) == 0) continue;
    auto f = split_fields(line, ',');
    if (f.size() != 4)
      throw Error("parse-error", path + " line " + std::to_string(lineno) +
                                     ": expected 4 comma-separated fields");
    int frame, viewer;
    double x, y;
    try {
      frame = std::stoi(f[0]);
      viewer = std::stoi(f[1]);
      x = std::stod(f[2]);
      y = std::stod(f[3]);
    } catch (const std::exception&) {
      throw Error("parse-error",
                  path + " line " + std::to_string(lineno) + ": bad number");
    }
    if (frame < 0 || frame >= frame_count)
      throw Error("parse-error", path + " line " + std::to_string(lineno) +
                                     ": frame index " + std::to_string(frame) +
                                     " outside [0," +
                                     std::to_string(frame_count) + ")");
    if (x < 0 || x >= width || y < 0 || y >= height)
      throw Error("parse-error", path + " line " + std::to_string(lineno) +
                                     ": fixation outside the frame");
    out[static_cast<size_t>(frame)].points.push_back({x, y, viewer});
  }
  return out;
}

GroundTruth build_ground_truth(const FixationSet& fixations, int src_width,
                               int src_height, int out_width, int out_height,
                               double sigma) {
  if (sigma <= 0) throw Error("config-error", "gaussian sigma must be > 0");
  if (out_width < 1 || out_height < 1)
    throw Error("config-error", "ground truth size must be >= 1");
  GroundTruth gt;
  gt.width = out_width;
  gt.height = out_height;
  gt.binary.assign(static_cast<size_t>(out_width) * out_height, 0);
  gt.continuous.assign(static_cast<size_t>(out_width) * out_height, 0.0);

  const double sx = static_cast<double>(out_width) / src_width;
  const double sy = static_cast<double>(out_height) / src_height;
  for (const FixationPoint& p : fixations.points) {
    // Pixel-center mapping, rounded and clamped.
    const long cx = std::clamp<long>(std::lround((p.x + 0.5) * sx - 0.5), 0,
                                     out_width - 1);
    const long cy = std::clamp<long>(std::lround((p.y + 0.5) * sy - 0.5), 0,
                                     out_height - 1);
    gt.binary[static_cast<size_t>(cy) * out_width + cx] = 1;
  }
  for (int64_t i = 0; i < gt.numel(); i++)
    if (gt.binary[static_cast<size_t>(i)]) {
      gt.fixation_cells.push_back(static_cast<int32_t>(i));
      gt.fixation_count++;
    }
  if (gt.fixation_count == 0) return gt;  // Y_c stays identically zero

  // Separable Gaussian blur of the binary map, zero padding. The radius is
  // wide enough that truncation stays below the 1e-6 contract.
  const int radius = static_cast<int>(std::ceil(6.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; i++)
    kernel[static_cast<size_t>(i + radius)] =
        std::exp(-0.5 * i * i / (sigma * sigma));

  std::vector<double> tmp(static_cast<size_t>(out_width) * out_height, 0.0);
  for (int y = 0; y < out_height; y++)
    for (int x = 0; x < out_width; x++) {
      if (!gt.binary[static_cast<size_t>(y) * out_width + x]) continue;
      // Scatter the horizontal pass from the sparse sources.
      for (int dx = -radius; dx <= radius; dx++) {
        const int xx = x + dx;
        if (xx < 0 || xx >= out_width) continue;
        tmp[static_cast<size_t>(y) * out_width + xx] +=
            kernel[static_cast<size_t>(dx + radius)];
      }
    }
  for (int x = 0; x < out_width; x++)
    for (int y = 0; y < out_height; y++) {
      const double v = tmp[static_cast<size_t>(y) * out_width + x];
      if (v == 0.0) continue;
      for (int dy = -radius; dy <= radius; dy++) {
        const int yy = y + dy;
        if (yy < 0 || yy >= out_height) continue;
        gt.continuous[static_cast<size_t>(yy) * out_width + x] +=
            v * kernel[static_cast<size_t>(dy + radius)];
      }
    }
  const double mx =
      *std::max_element(gt.continuous.begin(), gt.continuous.end());
  for (double& v : gt.continuous) v /= mx;
  return gt;
}

void minmax_rescale(std::vector<double>& values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double span = *hi - *lo;
  if (span <= 0.0) {
    std::fill(values.begin(), values.end(), 0.0);
    return;
  }
  const double base = *lo;
  for (double& v : values) v = (v - base) / span;
}

namespace {

// Planar float image resize through the shared bilinear kernel.
void resize_planar(const std::vector<float>& src, int c, int h, int w,
                   std::vector<float>& dst, int oh, int ow) {
  dst.resize(static_cast<size_t>(c) * oh * ow);
  kernels::bilinear2d_forward(src.data(), 1, c, h, w, dst.data(), oh, ow);
}

}  // namespace

ClipSample load_clip(const VideoRecord& rec,
                     const std::vector<FixationSet>& fixations,
                     int center_frame, const LoaderConfig& cfg) {
  int frame_count = rec.frame_count;
  if (frame_count < 0) {
    VideoRecord tmp = rec;
    resolve_frame_count(tmp);
    frame_count = tmp.frame_count;
  }
  if (center_frame < 0 || center_frame >= frame_count)
    throw Error("input-error",
                "center frame " + std::to_string(center_frame) +
                    " outside [0," + std::to_string(frame_count) + ") for " +
                    rec.video_id);
  if (cfg.load_depth && rec.depth_dir.empty())
    throw Error("input-error",
                "config requires depth but video " + rec.video_id +
                    " has no depth directory");

  const int T = cfg.clip_len;
  const int S = cfg.size;
  ClipSample sample;
  sample.video_id = rec.video_id;
  sample.center_frame = center_frame;
  sample.rgb = make_tensor({3, T, S, S});
  if (cfg.load_depth) sample.depth = make_tensor({3, T, S, S});

  std::map<int, std::vector<float>> rgb_cache;   // resized [3,S,S]
  std::map<int, std::vector<float>> depth_cache; // resized [1,S,S], in [0,1]

  for (int slot = 0; slot < T; slot++) {
    const int idx = std::clamp(center_frame - T / 2 + slot, 0, frame_count - 1);

    auto rit = rgb_cache.find(idx);
    if (rit == rgb_cache.end()) {
      const Image img = read_netpbm(frame_path(rec.frames_dir, idx));
      std::vector<float> planar(static_cast<size_t>(3) * img.height *
                                img.width);
      const float inv = 1.0f / static_cast<float>(img.maxval);
      const int64_t plane = static_cast<int64_t>(img.height) * img.width;
      for (int64_t p = 0; p < plane; p++)
        for (int c = 0; c < 3; c++)
          planar[static_cast<size_t>(c * plane + p)] =
              inv * img.pixels[static_cast<size_t>(
                        img.channels == 3 ? p * 3 + c : p)];
      std::vector<float> resized;
      resize_planar(planar, 3, img.height, img.width, resized, S, S);
      rit = rgb_cache.emplace(idx, std::move(resized)).first;
    }
    for (int c = 0; c < 3; c++) {
      const float* src = rit->second.data() + static_cast<int64_t>(c) * S * S;
      float* dst =
          sample.rgb->data() + (static_cast<int64_t>(c) * T + slot) * S * S;
      const float mean = cfg.norm_mean[static_cast<size_t>(c)];
      const float inv_std = 1.0f / cfg.norm_std[static_cast<size_t>(c)];
      for (int64_t p = 0; p < static_cast<int64_t>(S) * S; p++)
        dst[p] = (src[p] - mean) * inv_std;
    }

    if (!cfg.load_depth) continue;
    auto dit = depth_cache.find(idx);
    if (dit == depth_cache.end()) {
      if (rec.depth_dir.empty() || !std::filesystem::is_directory(rec.depth_dir))
        throw Error("io-error", "depth directory missing for " + rec.video_id);
      const Image img = read_netpbm(frame_path(rec.depth_dir, idx));
      std::vector<double> vals(img.pixels.size() / img.channels);
      const int stride = img.channels;
      for (size_t p = 0; p < vals.size(); p++)
        vals[p] = static_cast<double>(img.pixels[p * stride]);
      minmax_rescale(vals);
      std::vector<float> planar(vals.size());
      for (size_t p = 0; p < vals.size(); p++)
        planar[p] = static_cast<float>(vals[p]);
      std::vector<float> resized;
      resize_planar(planar, 1, img.height, img.width, resized, S, S);
      dit = depth_cache.emplace(idx, std::move(resized)).first;
    }
    for (int c = 0; c < 3; c++) {
      const float* src = dit->second.data();
      float* dst =
          sample.depth->data() + (static_cast<int64_t>(c) * T + slot) * S * S;
      const float mean = cfg.norm_mean[static_cast<size_t>(c)];
      const float inv_std = 1.0f / cfg.norm_std[static_cast<size_t>(c)];
      for (int64_t p = 0; p < static_cast<int64_t>(S) * S; p++)
        dst[p] = (src[p] - mean) * inv_std;
    }
  }

  const FixationSet empty{center_frame, {}};
  const FixationSet& fx = center_frame < static_cast<int>(fixations.size())
                              ? fixations[static_cast<size_t>(center_frame)]
                              : empty;
  sample.gt =
      build_ground_truth(fx, rec.width, rec.height, S, S, cfg.gt_sigma);
  return sample;
}

namespace {

void mirror_width(float* data, int planes, int h, int w) {
  for (int p = 0; p < planes; p++)
    for (int y = 0; y < h; y++) {
      float* row = data + (static_cast<int64_t>(p) * h + y) * w;
      std::reverse(row, row + w);
    }
}

}  // namespace

ClipSample augment_flip(ClipSample sample, double p, Rng& rng) {
  const double u = rng.uniform();
  if (u >= p) return sample;
  const int S = sample.gt.width;
  const int planes3 = static_cast<int>(sample.rgb->numel() / (S * S));
  mirror_width(sample.rgb->data(), planes3, S, S);
  if (sample.depth) mirror_width(sample.depth->data(), planes3, S, S);
  for (int y = 0; y < sample.gt.height; y++) {
    uint8_t* brow = sample.gt.binary.data() + static_cast<int64_t>(y) * S;
    double* crow = sample.gt.continuous.data() + static_cast<int64_t>(y) * S;
    std::reverse(brow, brow + S);
    std::reverse(crow, crow + S);
  }
  sample.gt.fixation_cells.clear();
  for (int64_t i = 0; i < sample.gt.numel(); i++)
    if (sample.gt.binary[static_cast<size_t>(i)])
      sample.gt.fixation_cells.push_back(static_cast<int32_t>(i));
  return sample;
}

}  // namespace dsal
