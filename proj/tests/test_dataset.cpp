#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsal/dataset.hpp"
#include "dsal/error.hpp"
#include "dsal/image_io.hpp"
#include "dsal/synth.hpp"

namespace fs = std::filesystem;
using namespace dsal;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dsal_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Frames whose solid color encodes the frame index, for window arithmetic.
void write_indexed_video(const fs::path& dir, int frames, int w, int h) {
  fs::create_directories(dir);
  for (int f = 0; f < frames; f++) {
    std::vector<uint8_t> rgb(static_cast<size_t>(w) * h * 3,
                             static_cast<uint8_t>(f));
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.ppm", f);
    write_ppm8((dir / name).string(), w, h, rgb.data());
  }
}

}  // namespace

TEST_CASE("manifest parsing") {
  TempDir tmp;
  SUBCASE("well formed lines become records in order") {
    write_file(tmp.path / "m.tsv",
               "v0\tframes0\tdepth0\tfx0.csv\t320\t240\ttrain\n"
               "v1\tframes1\t-\tfx1.csv\t640\t480\tval\n"
               "v2\tframes2\tdepth2\tfx2.csv\t100\t100\ttest\n");
    auto recs = parse_manifest((tmp.path / "m.tsv").string());
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].video_id == "v0");
    CHECK(recs[0].split == Split::train);
    CHECK(recs[1].depth_dir.empty());
    CHECK(recs[1].split == Split::val);
    CHECK(recs[2].width == 100);
    // relative paths resolve against the manifest directory
    CHECK(recs[0].frames_dir == (tmp.path / "frames0").string());
  }
  SUBCASE("empty file yields an empty list") {
    write_file(tmp.path / "empty.tsv", "");
    CHECK(parse_manifest((tmp.path / "empty.tsv").string()).empty());
  }
  SUBCASE("short line reports its line number") {
    write_file(tmp.path / "bad.tsv", "v0\tframes\tdepth\tfx.csv\n");
    CHECK_THROWS_WITH_AS(parse_manifest((tmp.path / "bad.tsv").string()),
                         doctest::Contains("line 1"), Error);
  }
}

TEST_CASE("ground truth construction") {
  SUBCASE("single central fixation is symmetric with peak one") {
    FixationSet fx{0, {{31.5, 31.5, 0}}};
    GroundTruth gt = build_ground_truth(fx, 64, 64, 64, 64, 2.0);
    CHECK(gt.fixation_count == 1);
    // rounded to cell (31, 31) or (32, 32) depending on the mapping; peak 1
    double peak = 0;
    for (double v : gt.continuous) peak = std::max(peak, v);
    CHECK(peak == doctest::Approx(1.0));
    const int32_t cell = gt.fixation_cells[0];
    const int cy = static_cast<int>(cell) / 64, cx = static_cast<int>(cell) % 64;
    // symmetry about the fixated cell
    for (int d = 1; d < 5; d++) {
      CHECK(gt.continuous[static_cast<size_t>(cy) * 64 + cx + d] ==
            doctest::Approx(
                gt.continuous[static_cast<size_t>(cy) * 64 + cx - d]));
      CHECK(gt.continuous[static_cast<size_t>(cy + d) * 64 + cx] ==
            doctest::Approx(
                gt.continuous[static_cast<size_t>(cy - d) * 64 + cx]));
    }
  }

  SUBCASE("no fixations leave everything zero") {
    FixationSet fx{0, {}};
    GroundTruth gt = build_ground_truth(fx, 64, 64, 64, 64, 2.0);
    CHECK(gt.fixation_count == 0);
    for (double v : gt.continuous) CHECK(v == 0.0);
    for (uint8_t b : gt.binary) CHECK(b == 0);
  }

  SUBCASE("two fixations match the dense gaussian-sum oracle") {
    FixationSet fx{0, {{10, 10, 0}, {50, 50, 1}}};
    const double sigma = 4.0;
    GroundTruth gt = build_ground_truth(fx, 64, 64, 64, 64, sigma);
    // independent oracle: dense per-pixel sum over fixated cells, then
    // max-normalized
    std::vector<double> oracle(64 * 64, 0.0);
    for (int y = 0; y < 64; y++)
      for (int x = 0; x < 64; x++)
        for (int32_t cell : gt.fixation_cells) {
          const int cy = static_cast<int>(cell) / 64;
          const int cx = static_cast<int>(cell) % 64;
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          oracle[static_cast<size_t>(y) * 64 + x] +=
              std::exp(-d2 / (2 * sigma * sigma));
        }
    const double mx = *std::max_element(oracle.begin(), oracle.end());
    double worst = 0;
    for (size_t i = 0; i < oracle.size(); i++)
      worst = std::max(worst,
                       std::abs(oracle[i] / mx - gt.continuous[i]));
    CHECK(worst < 1e-6);
  }

  SUBCASE("flip equivariance") {
    Rng rng(12);
    for (int trial = 0; trial < 20; trial++) {
      FixationSet fx{0, {}}, mirrored{0, {}};
      const int n = 1 + static_cast<int>(rng.uniform_int(6));
      for (int i = 0; i < n; i++) {
        const double x = rng.uniform(0.0, 199.0);
        const double y = rng.uniform(0.0, 149.0);
        fx.points.push_back({x, y, i});
        mirrored.points.push_back({199.0 - x, y, i});
      }
      GroundTruth a = build_ground_truth(fx, 200, 150, 112, 112, 5.0);
      GroundTruth b = build_ground_truth(mirrored, 200, 150, 112, 112, 5.0);
      double worst = 0;
      for (int y = 0; y < 112; y++)
        for (int x = 0; x < 112; x++)
          worst = std::max(
              worst, std::abs(a.continuous[static_cast<size_t>(y) * 112 + x] -
                              b.continuous[static_cast<size_t>(y) * 112 +
                                           (111 - x)]));
      CHECK(worst < 1e-6);
    }
  }

  SUBCASE("invalid sigma is rejected") {
    FixationSet fx{0, {{1, 1, 0}}};
    CHECK_THROWS_AS(build_ground_truth(fx, 64, 64, 64, 64, 0.0), Error);
  }
}

TEST_CASE("clip loading") {
  TempDir tmp;
  const int W = 32, H = 24, F = 60;
  write_indexed_video(tmp.path / "frames", F, W, H);
  write_file(tmp.path / "fx.csv", "frame_index,viewer_id,x,y\n0,0,16.0,12.0\n");
  VideoRecord rec;
  rec.video_id = "v0";
  rec.frames_dir = (tmp.path / "frames").string();
  rec.fixations_file = (tmp.path / "fx.csv").string();
  rec.width = W;
  rec.height = H;
  resolve_frame_count(rec);
  CHECK(rec.frame_count == F);
  auto fixations = load_fixations(rec.fixations_file, F, W, H);

  LoaderConfig lc;
  lc.load_depth = false;

  SUBCASE("boundary clamping replicates the first frame") {
    ClipSample s = load_clip(rec, fixations, 0, lc);
    const int64_t plane = 112 * 112;
    // slots 0..8 all hold frame 0 (centers-8..center); slot 9 holds frame 1
    const float* base = s.rgb->data();
    for (int slot = 1; slot <= 8; slot++)
      CHECK(std::memcmp(base, base + slot * plane, sizeof(float) * plane) ==
            0);
    CHECK(std::memcmp(base, base + 9 * plane, sizeof(float) * plane) != 0);
  }

  SUBCASE("window arithmetic selects center-8..center+7") {
    ClipSample s = load_clip(rec, fixations, 50, lc);
    // channel 0 of slot t is the constant (f/255 - mean)/std with f = 42+t
    for (int slot = 0; slot < 16; slot++) {
      const float v = s.rgb->data()[slot * 112 * 112];
      const double expect = ((42.0 + slot) / 255.0 - 0.45) / 0.225;
      CHECK(v == doctest::Approx(expect).epsilon(1e-5));
    }
  }

  SUBCASE("constant gray maps to the normalized gray value") {
    ClipSample s = load_clip(rec, fixations, 30, lc);
    const double expect = (30.0 / 255.0 - 0.45) / 0.225;
    // frame 30 sits at slot 8 (the center)
    const float* p = s.rgb->data() + 8 * 112 * 112;
    for (int i = 0; i < 112 * 112; i++)
      CHECK(p[i] == doctest::Approx(expect).epsilon(1e-5));
  }

  SUBCASE("out-of-range center is rejected") {
    CHECK_THROWS_AS(load_clip(rec, fixations, F, lc), Error);
  }

  SUBCASE("depth is mandatory when requested") {
    LoaderConfig need_depth;
    need_depth.load_depth = true;
    CHECK_THROWS_AS(load_clip(rec, fixations, 5, need_depth), Error);
  }
}

TEST_CASE("depth normalization invariance") {
  SUBCASE("in-memory rescale is affine invariant") {
    Rng rng(5);
    std::vector<double> v(100), w(100);
    for (size_t i = 0; i < v.size(); i++) v[i] = rng.uniform(10.0, 90.0);
    for (size_t i = 0; i < v.size(); i++) w[i] = 1.7 * v[i] + 23.0;
    minmax_rescale(v);
    minmax_rescale(w);
    for (size_t i = 0; i < v.size(); i++)
      CHECK(std::abs(v[i] - w[i]) < 1e-7);
  }

  SUBCASE("through files with 16-bit depth") {
    TempDir tmp;
    const int W = 16, H = 16;
    for (const char* variant : {"a", "b"}) {
      fs::create_directories(tmp.path / variant / "frames");
      fs::create_directories(tmp.path / variant / "depth");
    }
    Rng rng(6);
    std::vector<uint8_t> rgb(static_cast<size_t>(W) * H * 3, 100);
    std::vector<uint16_t> depth(static_cast<size_t>(W) * H);
    for (auto& d : depth) d = static_cast<uint16_t>(rng.uniform_int(200));
    // scaled+shifted copy: d' = 3d + 50
    for (const char* variant : {"a", "b"}) {
      write_ppm8((tmp.path / variant / "frames/frame_000000.ppm").string(), W,
                 H, rgb.data());
      // 16-bit PGM, big-endian samples
      std::ofstream out(tmp.path / variant / "depth/frame_000000.pgm",
                        std::ios::binary);
      out << "P5\n" << W << " " << H << "\n65535\n";
      for (uint16_t d : depth) {
        const uint16_t v = variant[0] == 'a'
                               ? d
                               : static_cast<uint16_t>(3 * d + 50);
        out.put(static_cast<char>(v >> 8));
        out.put(static_cast<char>(v & 0xff));
      }
    }
    write_file(tmp.path / "fx.csv", "frame_index,viewer_id,x,y\n0,0,8,8\n");
    LoaderConfig lc;
    TensorPtr loaded[2];
    int idx = 0;
    for (const char* variant : {"a", "b"}) {
      VideoRecord rec;
      rec.video_id = variant;
      rec.frames_dir = (tmp.path / variant / "frames").string();
      rec.depth_dir = (tmp.path / variant / "depth").string();
      rec.fixations_file = (tmp.path / "fx.csv").string();
      rec.width = W;
      rec.height = H;
      rec.frame_count = 1;
      auto fixations = load_fixations(rec.fixations_file, 1, W, H);
      loaded[idx++] = load_clip(rec, fixations, 0, lc).depth;
    }
    double worst = 0;
    for (int64_t i = 0; i < loaded[0]->numel(); i++)
      worst = std::max(worst, std::abs(static_cast<double>((*loaded[0])[i]) -
                                       (*loaded[1])[i]));
    CHECK(worst < 1e-7);
  }
}

TEST_CASE("horizontal flip augmentation") {
  TempDir tmp;
  const int W = 112, H = 112;
  write_indexed_video(tmp.path / "frames", 3, W, H);
  // put an off-center marker so flips are visible in rgb too
  write_file(tmp.path / "fx.csv", "frame_index,viewer_id,x,y\n1,0,10,40\n");
  VideoRecord rec;
  rec.video_id = "v";
  rec.frames_dir = (tmp.path / "frames").string();
  rec.fixations_file = (tmp.path / "fx.csv").string();
  rec.width = W;
  rec.height = H;
  rec.frame_count = 3;
  auto fixations = load_fixations(rec.fixations_file, 3, W, H);
  LoaderConfig lc;
  lc.load_depth = false;
  ClipSample original = load_clip(rec, fixations, 1, lc);

  SUBCASE("p=0 is the identity") {
    Rng rng(1);
    ClipSample s = load_clip(rec, fixations, 1, lc);
    s = augment_flip(std::move(s), 0.0, rng);
    CHECK(std::memcmp(s.rgb->data(), original.rgb->data(),
                      sizeof(float) * original.rgb->numel()) == 0);
    CHECK(s.gt.fixation_cells == original.gt.fixation_cells);
  }

  SUBCASE("p=1 twice is the identity, bit-exact") {
    Rng rng(2);
    ClipSample s = load_clip(rec, fixations, 1, lc);
    s = augment_flip(std::move(s), 1.0, rng);
    s = augment_flip(std::move(s), 1.0, rng);
    CHECK(std::memcmp(s.rgb->data(), original.rgb->data(),
                      sizeof(float) * original.rgb->numel()) == 0);
    CHECK(s.gt.continuous == original.gt.continuous);
  }

  SUBCASE("fixation at column 10 lands at column 101") {
    Rng rng(3);
    ClipSample s = load_clip(rec, fixations, 1, lc);
    REQUIRE(s.gt.fixation_count == 1);
    const int col = static_cast<int>(s.gt.fixation_cells[0]) % 112;
    CHECK(col == 10);
    s = augment_flip(std::move(s), 1.0, rng);
    REQUIRE(s.gt.fixation_count == 1);
    CHECK(static_cast<int>(s.gt.fixation_cells[0]) % 112 == 101);
    // the continuous map moved with it
    const int row = static_cast<int>(s.gt.fixation_cells[0]) / 112;
    CHECK(s.gt.continuous[static_cast<size_t>(row) * 112 + 101] ==
          doctest::Approx(1.0));
  }
}

TEST_CASE("synthetic depth pop-out data") {
  TempDir tmp;
  SynthConfig cfg;
  cfg.n_clips = 2;
  cfg.seed = 7;
  cfg.frames_per_clip = 6;
  cfg.out_dir = (tmp.path / "a").string();

  auto recs = synth_depth_popout(cfg);
  REQUIRE(recs.size() == 2);

  SUBCASE("deterministic in the seed, byte for byte") {
    SynthConfig cfg2 = cfg;
    cfg2.out_dir = (tmp.path / "b").string();
    synth_depth_popout(cfg2);
    for (const char* rel :
         {"clip_000/frames/frame_000003.ppm", "clip_001/depth/frame_000005.pgm",
          "clip_000/fixations.csv", "manifest.tsv"}) {
      CHECK(slurp(tmp.path / "a" / rel) == slurp(tmp.path / "b" / rel));
    }
    SynthConfig cfg3 = cfg;
    cfg3.seed = 8;
    cfg3.out_dir = (tmp.path / "c").string();
    synth_depth_popout(cfg3);
    CHECK(slurp(tmp.path / "a" / "clip_000/frames/frame_000000.ppm") !=
          slurp(tmp.path / "c" / "clip_000/frames/frame_000000.ppm"));
  }

  SUBCASE("target is strictly nearest in every frame") {
    for (const auto& rec : recs) {
      // target.csv: frame,x,y,size
      std::ifstream tcsv(fs::path(rec.frames_dir).parent_path() /
                         "target.csv");
      std::string line;
      std::getline(tcsv, line);  // header
      while (std::getline(tcsv, line)) {
        int f, x, y, size;
        REQUIRE(std::sscanf(line.c_str(), "%d,%d,%d,%d", &f, &x, &y, &size) ==
                4);
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.pgm", f);
        Image depth = read_netpbm((fs::path(rec.depth_dir) / name).string());
        const uint16_t target_value =
            depth.pixels[static_cast<size_t>(y + size / 2) * depth.width + x +
                         size / 2];
        // every pixel outside the target square is strictly farther
        for (int yy = 0; yy < depth.height; yy += 3)
          for (int xx = 0; xx < depth.width; xx += 3) {
            if (xx >= x && xx < x + size && yy >= y && yy < y + size) continue;
            CHECK(depth.pixels[static_cast<size_t>(yy) * depth.width + xx] <
                  target_value);
          }
      }
    }
  }

  SUBCASE("at least 95 percent of fixations hit the target") {
    int inside = 0, total = 0;
    for (const auto& rec : recs) {
      const fs::path clip_dir = fs::path(rec.frames_dir).parent_path();
      std::vector<std::array<int, 3>> target(static_cast<size_t>(rec.frame_count));
      {
        std::ifstream tcsv(clip_dir / "target.csv");
        std::string line;
        std::getline(tcsv, line);
        while (std::getline(tcsv, line)) {
          int f, x, y, size;
          std::sscanf(line.c_str(), "%d,%d,%d,%d", &f, &x, &y, &size);
          target[static_cast<size_t>(f)] = {x, y, size};
        }
      }
      auto fixations =
          load_fixations(rec.fixations_file, rec.frame_count, rec.width,
                         rec.height);
      for (const FixationSet& fx : fixations)
        for (const FixationPoint& p : fx.points) {
          total++;
          const auto& [x, y, size] = target[static_cast<size_t>(fx.frame_index)];
          if (p.x >= x && p.x < x + size && p.y >= y && p.y < y + size)
            inside++;
        }
    }
    CHECK(total == 2 * 6 * 6);
    CHECK(static_cast<double>(inside) / total >= 0.95);
  }

  SUBCASE("window totality on synthesized clips") {
    auto fixations = load_fixations(recs[0].fixations_file,
                                    recs[0].frame_count, recs[0].width,
                                    recs[0].height);
    LoaderConfig lc;
    for (int f = 0; f < recs[0].frame_count; f++) {
      ClipSample s = load_clip(recs[0], fixations, f, lc);
      CHECK(s.rgb->dim(1) == 16);
      CHECK(s.depth->dim(1) == 16);
      CHECK(s.gt.fixation_count >= 1);
    }
  }
}

TEST_CASE("raw float map files round-trip bit-exactly") {
  TempDir tmp;
  Rng rng(13);
  std::vector<float> values(31 * 17);
  for (float& v : values) v = static_cast<float>(rng.normal());
  const std::string path = (tmp.path / "map.vdsm").string();
  write_raw_map(path, 17, 31, values.data());
  int h = 0, w = 0;
  auto back = read_raw_map(path, &h, &w);
  CHECK(h == 17);
  CHECK(w == 31);
  CHECK(std::memcmp(back.data(), values.data(),
                    sizeof(float) * values.size()) == 0);
}
