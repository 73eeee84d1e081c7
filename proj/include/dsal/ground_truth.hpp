#pragma once

#include <cstdint>
#include <vector>

namespace dsal {

// Fixation ground truth for one frame at prediction resolution.
// binary is Y_b (one per fixated cell, multiple viewers on a cell count
// once); continuous is Y_c, the Gaussian-blurred binary map max-normalized
// to [0,1]. fixation_count is N_b = sum(Y_b).
struct GroundTruth {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> binary;
  std::vector<double> continuous;
  std::vector<int32_t> fixation_cells;  // flat indices where binary == 1
  int fixation_count = 0;

  int64_t numel() const { return static_cast<int64_t>(height) * width; }
};

}  // namespace dsal
