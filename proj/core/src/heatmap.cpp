#include "tenet/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tenet/pnm.hpp"

namespace tenet {

Tensor normalize_minmax(const Tensor& map) {
  Tensor out = map;
  if (out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  for (float& v : out.data()) {
    v = range > 0.0 ? static_cast<float>((static_cast<double>(v) - *lo) / range) : 0.0f;
  }
  return out;
}

Tensor bilinear_resize(const Tensor& map, std::size_t height, std::size_t width) {
  if (map.rank() != 3 || map.dim(0) != 1) {
    throw DimensionError("bilinear_resize: expected [1, h, w], got " + to_string(map.shape()));
  }
  const std::size_t h = map.dim(1);
  const std::size_t w = map.dim(2);
  Tensor out({1, height, width});
  const auto source = [](std::size_t i, std::size_t from, std::size_t to) {
    const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(from) / to - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(from - 1));
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double sy = source(y, h, height);
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double sx = source(x, w, width);
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = (1 - fx) * map[y0 * w + x0] + fx * map[y0 * w + x1];
      const double bottom = (1 - fx) * map[y1 * w + x0] + fx * map[y1 * w + x1];
      out[y * width + x] = static_cast<float>((1 - fy) * top + fy * bottom);
    }
  }
  return out;
}

HeatmapResult export_heatmap(const ConvNet& model, const Tensor& image,
                             const std::filesystem::path& out_dir, const TenetConfig& config,
                             std::uint64_t seed) {
  const ModelSpec& spec = model.spec();
  if (image.shape() != spec.input_shape()) {
    throw DimensionError("export_heatmap: image " + to_string(image.shape()) +
                         " does not match model input " + to_string(spec.input_shape()));
  }
  const std::size_t H = spec.height;
  const std::size_t W = spec.width;
  const Tensor batch = image.reshaped({1, spec.in_channels, H, W});
  const Tensor features = model.features(batch);
  const ProbeResult probe = gmw_weights(model, features);
  const Tensor a = features.slice(0);
  const auto w = probe.weights.row(0);

  HeatmapResult result;
  result.gradcam = bilinear_resize(instance_map(a, w), H, W);
  result.grouping = cfg_group(a, {config.groups, config.cfg_restarts, config.cfg_max_iters}, seed);
  result.importance = group_importance(w, result.grouping);
  const Tensor maps = group_maps(a, w, result.grouping);
  const std::size_t G = result.grouping.num_groups();
  result.groups = Tensor({G, H, W});
  for (std::size_t l = 0; l < G; ++l) {
    const Tensor m = maps.slice(l).reshaped({1, maps.dim(1), maps.dim(2)});
    const Tensor up = bilinear_resize(normalize_minmax(m), H, W);
    std::copy(up.data().begin(), up.data().end(), result.groups.row(l).begin());
  }

  std::filesystem::create_directories(out_dir);
  const auto save = [&](const std::string& name, const Tensor& chw) {
    const auto path = out_dir / name;
    write_pnm(path, tensor_to_pnm(chw));
    result.files.push_back(path);
  };
  save("gradcam.pgm", result.gradcam);
  for (std::size_t l = 0; l < G; ++l) {
    save("group_" + std::to_string(l + 1) + ".pgm", result.groups.slice(l).reshaped({1, H, W}));
  }
  if (spec.in_channels == 1 || spec.in_channels == 3) {
    save(spec.in_channels == 3 ? "input.ppm" : "input.pgm", image);
  }
  return result;
}

}  // namespace tenet
