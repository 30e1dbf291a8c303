#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tenet/tensor.hpp"

namespace tenet {

/// Mean squared elementwise difference between two feature maps of equal
/// extent: (1 / (H*W)) * sum (a - c)^2.
double cfg_distance(std::span<const float> map, std::span<const float> center);
double cfg_distance(const Tensor& map, const Tensor& center);

struct CfgOptions {
  std::size_t groups = 6;
  std::size_t restarts = 4;
  std::size_t max_iters = 20;
};

/// Channel-wise feature grouping of one sample's feature maps.
struct FeatureGrouping {
  /// Group index (0-based) of every channel.
  std::vector<std::size_t> ids;
  /// Channel index serving as each group's medoid.
  std::vector<std::size_t> medoids;
  std::vector<std::size_t> sizes;
  std::size_t iterations_used = 0;
  /// Sum over channels of the distance to the assigned medoid.
  double total_distance = 0.0;
  /// Converged objective of every restart, in the order they ran.
  std::vector<double> restart_distances;

  std::size_t num_groups() const { return medoids.size(); }
  std::size_t num_channels() const { return ids.size(); }
};

/// Groups the N_c maps of `maps` [N_c, H, W] around N_G medoids.
///
/// Each restart draws a random subset of channels as initial medoids, then
/// alternates (1) assigning every channel to its nearest medoid (ties go to
/// the lowest group index; a group left empty is reseeded with the channel
/// farthest from its current medoid) and (2) moving each group's medoid, in
/// ascending group order, to the channel nearest the group's mean map among
/// channels not already chosen in this update. Iteration stops once the
/// medoid set is unchanged or after max_iters updates. The restart with the
/// smallest total distance wins; ties keep the earliest.
///
/// Throws std::invalid_argument when N_c < N_G or N_G == 0.
FeatureGrouping cfg_group(const Tensor& maps, const CfgOptions& options,
                          std::uint64_t seed);

/// Every channel in its own group.
FeatureGrouping identity_grouping(std::size_t channels);
/// All channels in one group.
FeatureGrouping single_grouping(std::size_t channels);

}  // namespace tenet
