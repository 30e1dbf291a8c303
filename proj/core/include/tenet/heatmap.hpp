#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tenet/convnet.hpp"
#include "tenet/grouping.hpp"
#include "tenet/tenet.hpp"

namespace tenet {

/// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
Tensor normalize_minmax(const Tensor& map);

/// Bilinear resize of a [1, h, w] map to [1, height, width] (pixel centres
/// aligned, edges clamped).
Tensor bilinear_resize(const Tensor& map, std::size_t height, std::size_t width);

struct HeatmapResult {
  /// Normalised Grad-CAM at input resolution, [1, H, W] in [0, 1].
  Tensor gradcam;
  /// Normalised group maps m_l at input resolution, [N_G, H, W].
  Tensor groups;
  FeatureGrouping grouping;
  std::vector<float> importance;
  std::vector<std::filesystem::path> files;
};

/// Writes gradcam.pgm, group_<l>.pgm for l = 1..N_G and input.ppm (or
/// input.pgm for one channel) into `out_dir`. `image` is one [C, H, W] input.
HeatmapResult export_heatmap(const ConvNet& model, const Tensor& image,
                             const std::filesystem::path& out_dir,
                             const TenetConfig& config = {}, std::uint64_t seed = 0);

}  // namespace tenet
