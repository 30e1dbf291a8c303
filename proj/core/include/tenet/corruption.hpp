#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tenet/tensor.hpp"

namespace tenet {

enum class CorruptionKind {
  GaussianNoise,
  ShotNoise,
  ImpulseNoise,
  GaussianBlur,
  Brightness,
  Contrast,
  Pixelate,
  Saturate,
};

std::string to_string(CorruptionKind kind);
CorruptionKind parse_corruption_kind(const std::string& text);
const std::vector<CorruptionKind>& all_corruption_kinds();

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  /// 1..5
  int severity = 1;
};

/// Per-kind parameter for severities 1..5.
struct SeverityTable {
  int schema_version = 0;
  std::map<CorruptionKind, std::array<double, 5>> values;

  double parameter(const CorruptionSpec& spec) const;
};

SeverityTable parse_severity_table(const std::string& json_text);
SeverityTable load_severity_table(const std::filesystem::path& path);
/// The table shipped with the library.
const SeverityTable& default_severity_table();

/// Corrupts an image [C,H,W] or a batch [N,C,H,W] with values in [0, 1].
/// Output is clipped to [0, 1] and depends only on (x, spec, seed, table);
/// batch element n uses its own stream derived from (seed, n).
Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, std::uint64_t seed,
               const SeverityTable& table = default_severity_table());

}  // namespace tenet
