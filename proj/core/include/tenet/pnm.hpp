#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "tenet/tensor.hpp"

namespace tenet {

/// 8-bit image, interleaved channels (1 = graymap, 3 = pixmap).
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary P5/P6 files with maxval 255.
PnmImage read_pnm(const std::filesystem::path& path);
/// Writes P5 for one channel, P6 for three.
void write_pnm(const std::filesystem::path& path, const PnmImage& image);

/// [C,H,W] floats in [0, 1].
Tensor pnm_to_tensor(const PnmImage& image);
/// Rounds clip(v, 0, 1) * 255 to the nearest byte.
PnmImage tensor_to_pnm(const Tensor& chw);

}  // namespace tenet
