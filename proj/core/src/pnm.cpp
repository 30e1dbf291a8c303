#include "tenet/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace tenet {
namespace {

// Next header token, skipping whitespace and '#' comments.
std::size_t header_value(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (in && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (in && c != '\n') c = in.get();
    }
    c = in.get();
  }
  std::string digits;
  while (in && std::isdigit(c)) {
    digits += static_cast<char>(c);
    c = in.get();
  }
  if (digits.empty()) {
    throw std::runtime_error(path.string() + ": malformed header at offset " +
                             std::to_string(static_cast<long long>(in.tellg())));
  }
  return std::stoul(digits);
}

}  // namespace

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  PnmImage img;
  if (in && magic[0] == 'P' && magic[1] == '5') {
    img.channels = 1;
  } else if (in && magic[0] == 'P' && magic[1] == '6') {
    img.channels = 3;
  } else {
    throw std::runtime_error(path.string() + ": not a binary PGM/PPM file (offset 0)");
  }
  img.width = header_value(in, path);
  img.height = header_value(in, path);
  const std::size_t maxval = header_value(in, path);
  if (maxval != 255) {
    throw std::runtime_error(path.string() + ": only maxval 255 is supported");
  }
  const auto offset = static_cast<long long>(in.tellg());
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw std::runtime_error(path.string() + ": truncated pixel data at offset " +
                             std::to_string(offset + in.gcount()));
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("write_pnm: need 1 or 3 channels");
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw std::invalid_argument("write_pnm: pixel buffer does not match extents");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (image.channels == 1 ? "P5" : "P6") << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor pnm_to_tensor(const PnmImage& image) {
  Tensor t({image.channels, image.height, image.width});
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < image.channels; ++c) {
        t[(c * image.height + y) * image.width + x] =
            static_cast<float>(image.pixels[(y * image.width + x) * image.channels + c]) / 255.0f;
      }
    }
  }
  return t;
}

PnmImage tensor_to_pnm(const Tensor& chw) {
  if (chw.rank() != 3 || (chw.dim(0) != 1 && chw.dim(0) != 3)) {
    throw DimensionError("tensor_to_pnm: expected [1|3, H, W], got " + to_string(chw.shape()));
  }
  PnmImage img;
  img.channels = chw.dim(0);
  img.height = chw.dim(1);
  img.width = chw.dim(2);
  img.pixels.resize(chw.size());
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const float v = std::clamp(chw[(c * img.height + y) * img.width + x], 0.0f, 1.0f);
        img.pixels[(y * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return img;
}

}  // namespace tenet
