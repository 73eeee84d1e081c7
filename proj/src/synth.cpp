#include "dsal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dsal/error.hpp"
#include "dsal/image_io.hpp"

namespace fs = std::filesystem;

namespace dsal {

namespace {

struct Square {
  double x, y;    // top-left corner
  double vx, vy;  // pixels per frame
  uint8_t depth;  // larger = nearer
};

void advance(Square& s, int max_x, int max_y) {
  s.x += s.vx;
  s.y += s.vy;
  if (s.x < 0) {
    s.x = -s.x;
    s.vx = -s.vx;
  }
  if (s.y < 0) {
    s.y = -s.y;
    s.vy = -s.vy;
  }
  if (s.x > max_x) {
    s.x = 2 * max_x - s.x;
    s.vx = -s.vx;
  }
  if (s.y > max_y) {
    s.y = 2 * max_y - s.y;
    s.vy = -s.vy;
  }
}

void fill_rect(std::vector<uint8_t>& img, int w, int h, int channels, int x0,
               int y0, int size, const uint8_t* color) {
  const int x1 = std::min(w, x0 + size);
  const int y1 = std::min(h, y0 + size);
  for (int y = std::max(0, y0); y < y1; y++)
    for (int x = std::max(0, x0); x < x1; x++)
      for (int c = 0; c < channels; c++)
        img[(static_cast<size_t>(y) * w + x) * channels + c] = color[c];
}

double signed_speed(Rng& rng) {
  const double v = rng.uniform(1.5, 5.5);
  return rng.uniform() < 0.5 ? -v : v;
}

}  // namespace

std::vector<VideoRecord> synth_depth_popout(const SynthConfig& cfg) {
  if (cfg.n_clips < 1)
    throw Error("config-error", "synth: n_clips must be >= 1");
  if (cfg.square_size * 2 > std::min(cfg.width, cfg.height))
    throw Error("config-error", "synth: square too large for the frame");
  fs::create_directories(cfg.out_dir);

  const uint8_t bg_color[3] = {38, 38, 38};
  const uint8_t sq_color[3] = {128, 128, 128};
  const uint8_t bg_depth = 30;
  const uint8_t target_depth = 220;
  const int max_x = cfg.width - cfg.square_size;
  const int max_y = cfg.height - cfg.square_size;

  std::vector<VideoRecord> records;
  std::ofstream manifest(fs::path(cfg.out_dir) / "manifest.tsv");
  if (!manifest)
    throw Error("io-error", "cannot write manifest in " + cfg.out_dir);

  for (int clip = 0; clip < cfg.n_clips; clip++) {
    Rng rng = Rng(cfg.seed).split(static_cast<uint64_t>(clip) + 1);
    char clip_name[32];
    std::snprintf(clip_name, sizeof(clip_name), "clip_%03d", clip);
    const fs::path clip_dir = fs::path(cfg.out_dir) / clip_name;
    const fs::path frames_dir = clip_dir / "frames";
    const fs::path depth_dir = clip_dir / "depth";
    fs::create_directories(frames_dir);
    fs::create_directories(depth_dir);

    std::vector<Square> squares;
    for (int i = 0; i < cfg.n_distractors; i++)
      squares.push_back({rng.uniform(0, max_x), rng.uniform(0, max_y),
                         signed_speed(rng), signed_speed(rng),
                         static_cast<uint8_t>(50 + rng.uniform_int(41))});
    Square target{rng.uniform(0, max_x), rng.uniform(0, max_y),
                  signed_speed(rng), signed_speed(rng), target_depth};

    std::ofstream fix_csv(clip_dir / "fixations.csv");
    std::ofstream target_csv(clip_dir / "target.csv");
    if (!fix_csv || !target_csv)
      throw Error("io-error", "cannot write csv files in " + clip_dir.string());
    fix_csv << "frame_index,viewer_id,x,y\n";
    target_csv << "frame,x,y,size\n";

    int fixation_counter = 0;
    for (int f = 0; f < cfg.frames_per_clip; f++) {
      std::vector<uint8_t> rgb(static_cast<size_t>(cfg.width) * cfg.height * 3);
      std::vector<uint8_t> depth(static_cast<size_t>(cfg.width) * cfg.height);
      fill_rect(rgb, cfg.width, cfg.height, 3, 0, 0,
                std::max(cfg.width, cfg.height), bg_color);
      fill_rect(depth, cfg.width, cfg.height, 1, 0, 0,
                std::max(cfg.width, cfg.height), &bg_depth);

      // Far planes first so nearer squares occlude them; the target is the
      // nearest and painted last.
      std::vector<const Square*> order;
      for (const Square& s : squares) order.push_back(&s);
      std::sort(order.begin(), order.end(),
                [](const Square* a, const Square* b) {
                  return a->depth < b->depth;
                });
      order.push_back(&target);
      for (const Square* s : order) {
        const int sx = static_cast<int>(std::lround(s->x));
        const int sy = static_cast<int>(std::lround(s->y));
        fill_rect(rgb, cfg.width, cfg.height, 3, sx, sy, cfg.square_size,
                  sq_color);
        fill_rect(depth, cfg.width, cfg.height, 1, sx, sy, cfg.square_size,
                  &s->depth);
      }

      const int tx = static_cast<int>(std::lround(target.x));
      const int ty = static_cast<int>(std::lround(target.y));
      target_csv << f << ',' << tx << ',' << ty << ',' << cfg.square_size
                 << '\n';

      for (int v = 0; v < cfg.viewers_per_frame; v++, fixation_counter++) {
        double fx, fy;
        // Every 33rd fixation is an off-target glance; the rest land inside
        // the target square, which keeps the on-target fraction at ~97%
        // deterministically.
        if (fixation_counter % 33 == 32) {
          fx = rng.uniform(0, cfg.width - 1);
          fy = rng.uniform(0, cfg.height - 1);
        } else {
          fx = tx + rng.uniform() * (cfg.square_size - 1);
          fy = ty + rng.uniform() * (cfg.square_size - 1);
        }
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%d,%.2f,%.2f\n", f, v, fx, fy);
        fix_csv << buf;
      }

      char frame_name[32];
      std::snprintf(frame_name, sizeof(frame_name), "frame_%06d", f);
      write_ppm8((frames_dir / (std::string(frame_name) + ".ppm")).string(),
                 cfg.width, cfg.height, rgb.data());
      write_pgm8((depth_dir / (std::string(frame_name) + ".pgm")).string(),
                 cfg.width, cfg.height, depth.data());

      for (Square& s : squares) advance(s, max_x, max_y);
      advance(target, max_x, max_y);
    }

    VideoRecord rec;
    rec.video_id = clip_name;
    rec.frames_dir = frames_dir.string();
    rec.depth_dir = depth_dir.string();
    rec.fixations_file = (clip_dir / "fixations.csv").string();
    rec.width = cfg.width;
    rec.height = cfg.height;
    rec.frame_count = cfg.frames_per_clip;
    rec.split = cfg.split;
    records.push_back(rec);

    manifest << clip_name << '\t' << clip_name << "/frames" << '\t'
             << clip_name << "/depth" << '\t' << clip_name << "/fixations.csv"
             << '\t' << cfg.width << '\t' << cfg.height << '\t'
             << split_to_string(cfg.split) << '\n';
  }
  return records;
}

}  // namespace dsal
