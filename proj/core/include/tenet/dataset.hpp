#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tenet/tenet.hpp"
#include "tenet/tensor.hpp"

namespace tenet {

/// Images [N,C,H,W] in [0, 1] with integer labels in [0, num_classes).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const;
  Batch batch(std::span<const std::size_t> indices) const;
  /// Contiguous range [begin, min(end, size())).
  Batch range(std::size_t begin, std::size_t end) const;
};

enum class DatasetFormat { Cifar10Binary, MnistIdx, ImageFolderSubset };

std::string to_string(DatasetFormat format);
DatasetFormat parse_dataset_format(const std::string& text);

struct DatasetOptions {
  /// "train" or "test"; picks files when the path is a CIFAR-10 directory.
  std::string split = "train";
  /// Keep at most this many samples per class, chosen with `seed`.
  std::optional<std::size_t> samples_per_class;
  /// Keep the first `limit` samples after subsampling.
  std::optional<std::size_t> limit;
  std::uint64_t seed = 0;
};

/// Loads a dataset. Ordering is the file order (after a stable per-class
/// subsample when requested). Malformed input throws an error naming the file
/// and byte offset.
///
/// cifar10-binary: a file of 3073-byte records, or a directory holding
///   data_batch_*.bin (train) / test_batch.bin (test).
/// mnist-idx: an images file with magic 0x00000803; labels are read from the
///   sibling file with "images-idx3" replaced by "labels-idx1".
/// image-folder-subset: one sub-directory per class (sorted by name) holding
///   .pgm/.ppm files, all of one size.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const DatasetOptions& options = {});

Dataset load_cifar10_binary(const std::filesystem::path& path, const std::string& split = "train");
Dataset load_mnist_idx(const std::filesystem::path& images_path);
Dataset load_image_folder(const std::filesystem::path& root);

/// Stable per-class subsample: for every class, a seeded random choice of
/// `per_class` samples, kept in their original order.
Dataset subsample_per_class(const Dataset& data, std::size_t per_class, std::uint64_t seed);
Dataset take_first(const Dataset& data, std::size_t count);

/// Writes samples as CIFAR-10 binary records (images quantised to bytes).
void write_cifar10_binary(const std::filesystem::path& path, const Dataset& data);

/// Procedural 10-class 3x32x32 images with class-dependent shapes, colours
/// and textures plus per-sample jitter and noise. Images are quantised to
/// 1/255 steps so they survive a binary round trip unchanged.
Dataset make_synthetic(std::size_t count, std::uint64_t seed, std::size_t classes = 10);

}  // namespace tenet
