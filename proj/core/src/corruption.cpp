#include "tenet/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tenet/random.hpp"

namespace tenet {
namespace detail {
extern const char* const kSeverityJson;
}

namespace {

constexpr std::array<std::pair<CorruptionKind, const char*>, 8> kNames = {{
    {CorruptionKind::GaussianNoise, "gaussian_noise"},
    {CorruptionKind::ShotNoise, "shot_noise"},
    {CorruptionKind::ImpulseNoise, "impulse_noise"},
    {CorruptionKind::GaussianBlur, "gaussian_blur"},
    {CorruptionKind::Brightness, "brightness"},
    {CorruptionKind::Contrast, "contrast"},
    {CorruptionKind::Pixelate, "pixelate"},
    {CorruptionKind::Saturate, "saturate"},
}};

constexpr int kSchemaVersion = 1;

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// All helpers work on one image [C,H,W] in place.
struct Image {
  std::span<float> data;
  std::size_t c, h, w;

  float& at(std::size_t ch, std::size_t y, std::size_t x) { return data[(ch * h + y) * w + x]; }
};

void gaussian_noise(Image img, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, sigma);
  for (float& v : img.data) v = clip01(v + noise(rng));
}

void shot_noise(Image img, double photons, std::mt19937_64& rng) {
  for (float& v : img.data) {
    const double mean = static_cast<double>(v) * photons;
    if (mean <= 0.0) {
      v = 0.0f;
      continue;
    }
    std::poisson_distribution<long> counts(mean);
    v = clip01(static_cast<double>(counts(rng)) / photons);
  }
}

void impulse_noise(Image img, double fraction, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (float& v : img.data) {
    const double r = u(rng);
    if (r < fraction / 2) {
      v = 0.0f;
    } else if (r < fraction) {
      v = 1.0f;
    }
  }
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * n - 2);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<std::ptrdiff_t>(n) ? i : period - i);
}

void gaussian_blur(Image img, double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
    const double v = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
    kernel[static_cast<std::size_t>(k + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  std::vector<double> tmp(img.h * img.w);
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    for (std::size_t y = 0; y < img.h; ++y) {
      for (std::size_t x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const std::size_t xx = reflect(static_cast<std::ptrdiff_t>(x) + k, img.w);
          acc += kernel[static_cast<std::size_t>(k + radius)] * img.at(ch, y, xx);
        }
        tmp[y * img.w + x] = acc;
      }
    }
    for (std::size_t y = 0; y < img.h; ++y) {
      for (std::size_t x = 0; x < img.w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
          const std::size_t yy = reflect(static_cast<std::ptrdiff_t>(y) + k, img.h);
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[yy * img.w + x];
        }
        img.at(ch, y, x) = clip01(acc);
      }
    }
  }
}

void brightness(Image img, double offset) {
  for (float& v : img.data) v = clip01(v + offset);
}

void contrast(Image img, double factor) {
  double mean = 0.0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  for (float& v : img.data) v = clip01((v - mean) * factor + mean);
}

// Area-average down to round(scale * extent), then bilinear back up.
void pixelate(Image img, double scale) {
  const auto small = [scale](std::size_t n) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(scale * n)), 1, n);
  };
  const std::size_t sh = small(img.h);
  const std::size_t sw = small(img.w);
  const double fy = static_cast<double>(img.h) / sh;
  const double fx = static_cast<double>(img.w) / sw;
  const auto overlap = [](double lo, double hi, std::size_t p) {
    return std::max(0.0, std::min(hi, p + 1.0) - std::max(lo, static_cast<double>(p)));
  };
  std::vector<double> coarse(img.c * sh * sw, 0.0);
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    for (std::size_t sy = 0; sy < sh; ++sy) {
      for (std::size_t sx = 0; sx < sw; ++sx) {
        const double y0 = sy * fy, y1 = (sy + 1) * fy;
        const double x0 = sx * fx, x1 = (sx + 1) * fx;
        double acc = 0.0, area = 0.0;
        for (auto y = static_cast<std::size_t>(y0); y < img.h && y < y1; ++y) {
          const double wy = overlap(y0, y1, y);
          for (auto x = static_cast<std::size_t>(x0); x < img.w && x < x1; ++x) {
            const double a = wy * overlap(x0, x1, x);
            acc += a * img.at(ch, y, x);
            area += a;
          }
        }
        coarse[(ch * sh + sy) * sw + sx] = area > 0.0 ? acc / area : 0.0;
      }
    }
  }
  // Half-pixel centres, edge-clamped.
  const auto taps = [](std::size_t out, std::size_t n, std::size_t s) {
    const double c = std::clamp((out + 0.5) * static_cast<double>(s) / n - 0.5, 0.0, static_cast<double>(s - 1));
    const auto i = static_cast<std::size_t>(c);
    return std::tuple{i, std::min(i + 1, s - 1), c - static_cast<double>(i)};
  };
  for (std::size_t ch = 0; ch < img.c; ++ch) {
    const double* plane = coarse.data() + ch * sh * sw;
    for (std::size_t y = 0; y < img.h; ++y) {
      const auto [y0i, y1i, ty] = taps(y, img.h, sh);
      for (std::size_t x = 0; x < img.w; ++x) {
        const auto [x0i, x1i, tx] = taps(x, img.w, sw);
        const double top = plane[y0i * sw + x0i] * (1.0 - tx) + plane[y0i * sw + x1i] * tx;
        const double bottom = plane[y1i * sw + x0i] * (1.0 - tx) + plane[y1i * sw + x1i] * tx;
        img.at(ch, y, x) = clip01(top * (1.0 - ty) + bottom * ty);
      }
    }
  }
}

// gray + gain * (x - gray); gray is the luma of each pixel. A single-channel
// image is its own gray level and stays unchanged.
void saturate(Image img, double gain) {
  if (img.c != 3) return;
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x) {
      const double gray = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                          0.114 * img.at(2, y, x);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        img.at(ch, y, x) = clip01(gray + gain * (img.at(ch, y, x) - gray));
      }
    }
  }
}

void apply(Image img, CorruptionKind kind, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (kind) {
    case CorruptionKind::GaussianNoise: return gaussian_noise(img, p, rng);
    case CorruptionKind::ShotNoise: return shot_noise(img, p, rng);
    case CorruptionKind::ImpulseNoise: return impulse_noise(img, p, rng);
    case CorruptionKind::GaussianBlur: return gaussian_blur(img, p);
    case CorruptionKind::Brightness: return brightness(img, p);
    case CorruptionKind::Contrast: return contrast(img, p);
    case CorruptionKind::Pixelate: return pixelate(img, p);
    case CorruptionKind::Saturate: return saturate(img, p);
  }
}

}  // namespace

std::string to_string(CorruptionKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  throw std::invalid_argument("unknown corruption kind");
}

CorruptionKind parse_corruption_kind(const std::string& text) {
  for (const auto& [k, name] : kNames) {
    if (text == name) return k;
  }
  throw std::invalid_argument("unknown corruption kind '" + text + "'");
}

const std::vector<CorruptionKind>& all_corruption_kinds() {
  static const std::vector<CorruptionKind> kinds = [] {
    std::vector<CorruptionKind> out;
    for (const auto& entry : kNames) out.push_back(entry.first);
    return out;
  }();
  return kinds;
}

double SeverityTable::parameter(const CorruptionSpec& spec) const {
  if (spec.severity < 1 || spec.severity > 5) {
    throw std::invalid_argument("corruption severity must be in 1..5, got " +
                                std::to_string(spec.severity));
  }
  const auto it = values.find(spec.kind);
  if (it == values.end()) {
    throw std::invalid_argument("severity table has no entry for " + to_string(spec.kind));
  }
  return it->second[static_cast<std::size_t>(spec.severity - 1)];
}

SeverityTable parse_severity_table(const std::string& json_text) {
  const nlohmann::json doc = nlohmann::json::parse(json_text);
  SeverityTable table;
  table.schema_version = doc.at("schema_version").get<int>();
  if (table.schema_version != kSchemaVersion) {
    throw std::runtime_error("unsupported severity table schema_version " +
                             std::to_string(table.schema_version));
  }
  for (const auto& [name, entry] : doc.at("corruptions").items()) {
    const auto values = entry.at("values").get<std::vector<double>>();
    if (values.size() != 5) {
      throw std::runtime_error("severity table entry '" + name + "' needs 5 values");
    }
    std::array<double, 5> arr{};
    std::copy(values.begin(), values.end(), arr.begin());
    table.values[parse_corruption_kind(name)] = arr;
  }
  return table;
}

SeverityTable load_severity_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open severity table " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_severity_table(text.str());
}

const SeverityTable& default_severity_table() {
  static const SeverityTable table = parse_severity_table(detail::kSeverityJson);
  return table;
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::uint64_t seed,
               const SeverityTable& table) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("corrupt: expected [C,H,W] or [N,C,H,W], got " + to_string(x.shape()));
  }
  const double p = table.parameter(spec);
  Tensor out = x;
  if (x.rank() == 3) {
    apply({out.data(), x.dim(0), x.dim(1), x.dim(2)}, spec.kind, p, mix_seed(seed, {0}));
    return out;
  }
  const std::size_t per = x.dim(1) * x.dim(2) * x.dim(3);
  for (std::size_t n = 0; n < x.dim(0); ++n) {
    apply({out.data().subspan(n * per, per), x.dim(1), x.dim(2), x.dim(3)}, spec.kind, p,
          mix_seed(seed, {n}));
  }
  return out;
}

}  // namespace tenet
