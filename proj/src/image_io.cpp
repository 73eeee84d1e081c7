#include "dsal/image_io.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

#include "dsal/error.hpp"

namespace dsal {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

int next_token(FILE* f, const std::string& path) {
  // Skips whitespace and '#' comments, then reads one nonnegative integer.
  int c = std::fgetc(f);
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = std::fgetc(f);
    } else if (!std::isspace(c)) {
      break;
    } else {
      c = std::fgetc(f);
    }
  }
  if (c == EOF || !std::isdigit(c))
    throw Error("io-error", "malformed netpbm header in " + path);
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = std::fgetc(f);
  }
  return v;
}

}  // namespace

Image read_netpbm(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw Error("io-error", "cannot open image " + path);
  char m0 = static_cast<char>(std::fgetc(f.get()));
  char m1 = static_cast<char>(std::fgetc(f.get()));
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw Error("io-error", "unsupported image format in " + path +
                                " (binary PGM/PPM expected)");
  Image img;
  img.channels = m1 == '6' ? 3 : 1;
  img.width = next_token(f.get(), path);
  img.height = next_token(f.get(), path);
  img.maxval = next_token(f.get(), path);
  if (img.width <= 0 || img.height <= 0 || img.maxval <= 0 ||
      img.maxval > 65535)
    throw Error("io-error", "bad netpbm dimensions in " + path);
  const size_t count =
      static_cast<size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(count);
  if (img.maxval < 256) {
    std::vector<uint8_t> raw(count);
    if (std::fread(raw.data(), 1, count, f.get()) != count)
      throw Error("io-error", "truncated image data in " + path);
    for (size_t i = 0; i < count; i++) img.pixels[i] = raw[i];
  } else {
    std::vector<uint8_t> raw(count * 2);
    if (std::fread(raw.data(), 1, count * 2, f.get()) != count * 2)
      throw Error("io-error", "truncated image data in " + path);
    for (size_t i = 0; i < count; i++)
      img.pixels[i] =
          static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  }
  return img;
}

void write_pgm8(const std::string& path, int width, int height,
                const uint8_t* gray) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("io-error", "cannot write image " + path);
  std::fprintf(f.get(), "P5\n%d %d\n255\n", width, height);
  const size_t count = static_cast<size_t>(width) * height;
  if (std::fwrite(gray, 1, count, f.get()) != count)
    throw Error("io-error", "short write to " + path);
}

void write_ppm8(const std::string& path, int width, int height,
                const uint8_t* rgb) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("io-error", "cannot write image " + path);
  std::fprintf(f.get(), "P6\n%d %d\n255\n", width, height);
  const size_t count = static_cast<size_t>(width) * height * 3;
  if (std::fwrite(rgb, 1, count, f.get()) != count)
    throw Error("io-error", "short write to " + path);
}

namespace {

void put_u32_le(FILE* f, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16),
                  static_cast<uint8_t>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

uint32_t get_u32_le(FILE* f, const std::string& path) {
  uint8_t b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw Error("io-error", "truncated raw map " + path);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_raw_map(const std::string& path, int height, int width,
                   const float* values) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw Error("io-error", "cannot write raw map " + path);
  std::fwrite("VDSM", 1, 4, f.get());
  put_u32_le(f.get(), static_cast<uint32_t>(height));
  put_u32_le(f.get(), static_cast<uint32_t>(width));
  const size_t count = static_cast<size_t>(height) * width;
  // Host is little-endian x86; floats are written as-is.
  if (std::fwrite(values, sizeof(float), count, f.get()) != count)
    throw Error("io-error", "short write to " + path);
}

std::vector<float> read_raw_map(const std::string& path, int* height,
                                int* width) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw Error("io-error", "cannot open raw map " + path);
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, "VDSM", 4) != 0)
    throw Error("io-error", "bad raw map magic in " + path);
  const uint32_t h = get_u32_le(f.get(), path);
  const uint32_t w = get_u32_le(f.get(), path);
  std::vector<float> values(static_cast<size_t>(h) * w);
  if (std::fread(values.data(), sizeof(float), values.size(), f.get()) !=
      values.size())
    throw Error("io-error", "truncated raw map " + path);
  *height = static_cast<int>(h);
  *width = static_cast<int>(w);
  return values;
}

}  // namespace dsal
