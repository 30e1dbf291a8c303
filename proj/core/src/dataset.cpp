#include "tenet/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "tenet/pnm.hpp"
#include "tenet/random.hpp"

namespace fs = std::filesystem;

namespace tenet {

Shape Dataset::image_shape() const {
  const Shape& s = images.shape();
  if (s.size() != 4) return {};
  return {s[1], s[2], s[3]};
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  const Shape img = image_shape();
  const std::size_t per = numel(img);
  Batch b{Tensor({indices.size(), img[0], img[1], img[2]}), {}};
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= size()) throw std::out_of_range("Dataset::batch: index out of range");
    std::memcpy(b.images.raw() + i * per, images.raw() + indices[i] * per, per * sizeof(float));
    b.labels.push_back(labels[indices[i]]);
  }
  return b;
}

Batch Dataset::range(std::size_t begin, std::size_t end) const {
  end = std::min(end, size());
  if (begin > end) begin = end;
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return batch(idx);
}

std::string to_string(DatasetFormat format) {
  switch (format) {
    case DatasetFormat::Cifar10Binary: return "cifar10-binary";
    case DatasetFormat::MnistIdx: return "mnist-idx";
    case DatasetFormat::ImageFolderSubset: return "image-folder-subset";
  }
  return "?";
}

DatasetFormat parse_dataset_format(const std::string& text) {
  if (text == "cifar10-binary") return DatasetFormat::Cifar10Binary;
  if (text == "mnist-idx") return DatasetFormat::MnistIdx;
  if (text == "image-folder-subset") return DatasetFormat::ImageFolderSubset;
  throw std::invalid_argument("unknown dataset format '" + text +
                              "' (expected cifar10-binary, mnist-idx or image-folder-subset)");
}

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_cifar_file(const fs::path& path, std::vector<float>& pixels, std::vector<int>& labels) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
    throw std::runtime_error(path.string() + ": size " + std::to_string(bytes.size()) +
                             " is not a multiple of the 3073-byte record; partial record at offset " +
                             std::to_string(bytes.size() - bytes.size() % kCifarRecord));
  }
  for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
    if (bytes[off] > 9) {
      throw std::runtime_error(path.string() + ": label " + std::to_string(bytes[off]) +
                               " out of range at offset " + std::to_string(off));
    }
    labels.push_back(bytes[off]);
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      pixels.push_back(static_cast<float>(bytes[off + 1 + p]) / 255.0f);
    }
  }
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const fs::path& path) {
  if (off + 4 > b.size()) {
    throw std::runtime_error(path.string() + ": truncated header at offset " + std::to_string(off));
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

Dataset finish(std::vector<float> pixels, std::vector<int> labels, Shape image, std::size_t classes) {
  Dataset d;
  const std::size_t n = labels.size();
  d.images = Tensor({n, image[0], image[1], image[2]}, std::move(pixels));
  d.labels = std::move(labels);
  d.num_classes = classes;
  return d;
}

}  // namespace

Dataset load_cifar10_binary(const fs::path& path, const std::string& split) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    if (split == "train") {
      for (const auto& entry : fs::directory_iterator(path)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("data_batch_", 0) == 0 && entry.path().extension() == ".bin") {
          files.push_back(entry.path());
        }
      }
      std::sort(files.begin(), files.end());
    } else if (split == "test") {
      files.push_back(path / "test_batch.bin");
    } else {
      throw std::invalid_argument("unknown split '" + split + "' (expected train or test)");
    }
    if (files.empty()) throw std::runtime_error("no CIFAR-10 batch files in " + path.string());
  } else {
    files.push_back(path);
  }
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& f : files) append_cifar_file(f, pixels, labels);
  return finish(std::move(pixels), std::move(labels), {3, kCifarSide, kCifarSide}, 10);
}

Dataset load_mnist_idx(const fs::path& images_path) {
  std::string name = images_path.filename().string();
  const auto pos = name.find("images-idx3");
  if (pos == std::string::npos) {
    throw std::invalid_argument(images_path.string() +
                                ": expected an images file named *images-idx3*");
  }
  name.replace(pos, 11, "labels-idx1");
  const fs::path labels_path = images_path.parent_path() / name;

  const std::vector<std::uint8_t> img = read_bytes(images_path);
  if (read_be32(img, 0, images_path) != 0x00000803) {
    throw std::runtime_error(images_path.string() + ": bad magic at offset 0 (expected 0x00000803)");
  }
  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  if (img.size() != 16 + n * rows * cols) {
    throw std::runtime_error(images_path.string() + ": expected " +
                             std::to_string(16 + n * rows * cols) + " bytes, data ends at offset " +
                             std::to_string(img.size()));
  }
  const std::vector<std::uint8_t> lab = read_bytes(labels_path);
  if (read_be32(lab, 0, labels_path) != 0x00000801) {
    throw std::runtime_error(labels_path.string() + ": bad magic at offset 0 (expected 0x00000801)");
  }
  if (read_be32(lab, 4, labels_path) != n || lab.size() != 8 + n) {
    throw std::runtime_error(labels_path.string() + ": label count does not match " +
                             std::to_string(n) + " images (offset 4)");
  }
  std::vector<float> pixels(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<float>(img[16 + i]) / 255.0f;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] > 9) {
      throw std::runtime_error(labels_path.string() + ": label " + std::to_string(lab[8 + i]) +
                               " out of range at offset " + std::to_string(8 + i));
    }
    labels[i] = lab[8 + i];
  }
  return finish(std::move(pixels), std::move(labels), {1, rows, cols}, 10);
}

Dataset load_image_folder(const fs::path& root) {
  std::vector<fs::path> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path());
  }
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) throw std::runtime_error("no class directories in " + root.string());

  std::vector<float> pixels;
  std::vector<int> labels;
  Shape image;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(classes[k])) {
      const auto ext = entry.path().extension();
      if (ext == ".pgm" || ext == ".ppm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const Tensor t = pnm_to_tensor(read_pnm(f));
      if (image.empty()) image = t.shape();
      if (t.shape() != image) {
        throw std::runtime_error(f.string() + ": image " + to_string(t.shape()) +
                                 " differs from " + to_string(image));
      }
      pixels.insert(pixels.end(), t.data().begin(), t.data().end());
      labels.push_back(static_cast<int>(k));
    }
  }
  if (labels.empty()) throw std::runtime_error("no .pgm/.ppm images under " + root.string());
  return finish(std::move(pixels), std::move(labels), image, classes.size());
}

Dataset subsample_per_class(const Dataset& data, std::size_t per_class, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    std::mt19937_64 rng(mix_seed(seed, {k}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), per_class));
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  Batch b = data.batch(keep);
  return Dataset{std::move(b.images), std::move(b.labels), data.num_classes};
}

Dataset take_first(const Dataset& data, std::size_t count) {
  Batch b = data.range(0, count);
  return Dataset{std::move(b.images), std::move(b.labels), data.num_classes};
}

Dataset load_dataset(const fs::path& path, DatasetFormat format, const DatasetOptions& options) {
  if (!fs::exists(path)) throw IoError("dataset path does not exist: " + path.string());
  Dataset d;
  switch (format) {
    case DatasetFormat::Cifar10Binary: d = load_cifar10_binary(path, options.split); break;
    case DatasetFormat::MnistIdx: d = load_mnist_idx(path); break;
    case DatasetFormat::ImageFolderSubset: d = load_image_folder(path); break;
  }
  if (options.samples_per_class) d = subsample_per_class(d, *options.samples_per_class, options.seed);
  if (options.limit) d = take_first(d, *options.limit);
  return d;
}

void write_cifar10_binary(const fs::path& path, const Dataset& data) {
  if (data.image_shape() != Shape{3, kCifarSide, kCifarSide}) {
    throw DimensionError("write_cifar10_binary: images must be 3x32x32");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(data.size() * kCifarRecord);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] < 0 || data.labels[i] > 9) {
      throw std::out_of_range("write_cifar10_binary: label out of range");
    }
    bytes.push_back(static_cast<std::uint8_t>(data.labels[i]));
    for (float v : data.images.row(i)) {
      bytes.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

// Class k draws shape k % 5 in a class hue; classes k and k + 5 share a shape
// but differ in colour and texture, so neither cue alone separates them all.
float shape_mask(std::size_t shape, double u, double v, double size) {
  const double r = std::sqrt(u * u + v * v);
  switch (shape) {
    case 0: return r < size ? 1.0f : 0.0f;                                        // disc
    case 1: return std::max(std::abs(u), std::abs(v)) < size * 0.85 ? 1.0f : 0.0f;  // square
    case 2: return std::abs(r - size * 0.8) < size * 0.25 ? 1.0f : 0.0f;           // ring
    case 3:                                                                        // cross
      return (std::abs(u) < size * 0.3 || std::abs(v) < size * 0.3) && r < size * 1.2 ? 1.0f : 0.0f;
    default:                                                                       // triangle
      return v > -size * 0.7 && v < size * 0.7 && std::abs(u) < (v + size * 0.7) * 0.6 ? 1.0f : 0.0f;
  }
}

}  // namespace

Dataset make_synthetic(std::size_t count, std::uint64_t seed, std::size_t classes) {
  if (classes == 0 || classes > 10) throw std::invalid_argument("make_synthetic: 1..10 classes");
  constexpr std::size_t S = kCifarSide;
  static constexpr std::array<std::array<double, 3>, 10> kHue = {{
      {0.9, 0.2, 0.2}, {0.2, 0.8, 0.3}, {0.2, 0.3, 0.9}, {0.9, 0.8, 0.2}, {0.8, 0.3, 0.8},
      {0.3, 0.8, 0.8}, {0.9, 0.5, 0.2}, {0.5, 0.5, 0.5}, {0.6, 0.9, 0.4}, {0.4, 0.2, 0.6},
  }};
  std::vector<float> pixels(count * 3 * S * S);
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, {i}));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.06);
    const std::size_t k = i % classes;
    labels[i] = static_cast<int>(k);
    const double cx = 16 + (u01(rng) - 0.5) * 12;
    const double cy = 16 + (u01(rng) - 0.5) * 12;
    const double size = 6 + u01(rng) * 5;
    const double stripe = k >= 5 ? 0.35 : 0.0;
    std::array<double, 3> bg{}, fg{};
    for (std::size_t c = 0; c < 3; ++c) {
      bg[c] = 0.2 + 0.5 * u01(rng);
      fg[c] = std::clamp(kHue[k][c] + (u01(rng) - 0.5) * 0.3, 0.0, 1.0);
    }
    const double grad = (u01(rng) - 0.5) * 0.02;
    float* img = pixels.data() + i * 3 * S * S;
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double u = static_cast<double>(x) - cx;
        const double v = static_cast<double>(y) - cy;
        const float m = shape_mask(k % 5, u, v, size);
        const double tex = stripe * (((x + y) / 3) % 2 == 0 ? 1.0 : -1.0);
        for (std::size_t c = 0; c < 3; ++c) {
          const double back = bg[c] + grad * (static_cast<double>(x) - 16.0);
          double val = m > 0 ? fg[c] * (1.0 + tex) : back;
          val = std::clamp(val + noise(rng), 0.0, 1.0);
          img[(c * S + y) * S + x] = static_cast<float>(std::lround(val * 255.0)) / 255.0f;
        }
      }
    }
  }
  return finish(std::move(pixels), std::move(labels), {3, S, S}, classes);
}

}  // namespace tenet
