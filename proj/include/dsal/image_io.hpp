#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsal {

// Interleaved image as read from a binary netpbm file (P5 grayscale or P6
// RGB, 8- or 16-bit). Values are kept at their file scale; maxval records
// the format's range.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  int maxval = 255;
  std::vector<uint16_t> pixels;  // interleaved, size w*h*c
};

Image read_netpbm(const std::string& path);
void write_pgm8(const std::string& path, int width, int height,
                const uint8_t* gray);
void write_ppm8(const std::string& path, int width, int height,
                const uint8_t* rgb);

// Raw float map container: magic "VDSM", then height and width as 32-bit
// little-endian unsigned integers, then row-major 32-bit little-endian IEEE
// floats. Bit-exact round trip.
void write_raw_map(const std::string& path, int height, int width,
                   const float* values);
std::vector<float> read_raw_map(const std::string& path, int* height,
                                int* width);

}  // namespace dsal
