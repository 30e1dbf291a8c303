#include "tenet/grouping.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace tenet {

namespace {

// Sum of squared differences with eight independent partial sums, so the
// loop vectorises without reordering floating-point additions.
template <typename A, typename B>
double squared_diff(const A* a, const B* b, std::size_t n) {
  double acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) {
      const double d = static_cast<double>(a[i + k]) - static_cast<double>(b[i + k]);
      acc[k] += d * d;
    }
  }
  for (; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc[i % 8] += d * d;
  }
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

}  // namespace

double cfg_distance(std::span<const float> map, std::span<const float> center) {
  if (map.size() != center.size() || map.empty()) {
    throw DimensionError("cfg_distance: maps must be non-empty and equally sized");
  }
  return squared_diff(map.data(), center.data(), map.size()) / static_cast<double>(map.size());
}

double cfg_distance(const Tensor& map, const Tensor& center) {
  if (map.shape() != center.shape()) {
    throw DimensionError("cfg_distance: " + to_string(map.shape()) + " vs " +
                         to_string(center.shape()));
  }
  return cfg_distance(map.data(), center.data());
}

namespace {

class Grouper {
 public:
  Grouper(const Tensor& maps, std::size_t groups)
      : maps_(maps),
        channels_(maps.dim(0)),
        plane_(maps.dim(1) * maps.dim(2)),
        groups_(groups),
        pair_(channels_ * channels_, 0.0) {
    const double scale = 1.0 / static_cast<double>(plane_);
    for (std::size_t i = 0; i < channels_; ++i) {
      for (std::size_t j = i + 1; j < channels_; ++j) {
        const double d = squared_diff(row(i), row(j), plane_) * scale;
        pair_[i * channels_ + j] = d;
        pair_[j * channels_ + i] = d;
      }
    }
  }

  double dist(std::size_t a, std::size_t b) const { return pair_[a * channels_ + b]; }

  /// Nearest-medoid assignment with empty-group repair. May replace medoids.
  void assign(std::vector<std::size_t>& medoids, std::vector<std::size_t>& ids) const {
    nearest(medoids, ids);
    std::vector<std::size_t> sizes = count(ids);
    for (std::size_t l = 0; l < groups_; ++l) {
      if (sizes[l] != 0) continue;
      // Reseed with the non-medoid channel farthest from its medoid, taken
      // from a group that keeps at least one member.
      std::size_t pick = channels_;
      double far = -1.0;
      for (std::size_t j = 0; j < channels_; ++j) {
        if (sizes[ids[j]] < 2) continue;
        if (std::find(medoids.begin(), medoids.end(), j) != medoids.end()) continue;
        const double d = dist(j, medoids[ids[j]]);
        if (d > far) {
          far = d;
          pick = j;
        }
      }
      if (pick == channels_) break;
      --sizes[ids[pick]];
      ids[pick] = l;
      medoids[l] = pick;
      ++sizes[l];
    }
    // A group can only be empty when its medoid ties with a lower-indexed
    // one (duplicate maps). Every medoid sits at distance 0 from itself, so
    // keeping it in its own group leaves the assignment nearest.
    pin(medoids, ids);
  }

  /// Center update: channel nearest each group's mean map, ascending group
  /// order, never reusing a channel already chosen in this update.
  std::vector<std::size_t> update(const std::vector<std::size_t>& ids) const {
    const std::vector<std::size_t> sizes = count(ids);
    std::vector<double> means(groups_ * plane_, 0.0);
    for (std::size_t j = 0; j < channels_; ++j) {
      double* m = means.data() + ids[j] * plane_;
      const float* a = row(j);
      for (std::size_t p = 0; p < plane_; ++p) m[p] += a[p];
    }
    std::vector<std::size_t> next;
    for (std::size_t l = 0; l < groups_; ++l) {
      double* m = means.data() + l * plane_;
      for (std::size_t p = 0; p < plane_; ++p) m[p] /= static_cast<double>(sizes[l]);
      std::size_t best = channels_;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < channels_; ++j) {
        if (std::find(next.begin(), next.end(), j) != next.end()) continue;
        const double acc = squared_diff(row(j), m, plane_);
        if (acc < best_d) {
          best_d = acc;
          best = j;
        }
      }
      next.push_back(best);
    }
    return next;
  }

  double objective(const std::vector<std::size_t>& medoids,
                   const std::vector<std::size_t>& ids) const {
    double total = 0.0;
    for (std::size_t j = 0; j < channels_; ++j) total += dist(j, medoids[ids[j]]);
    return total;
  }

  std::vector<std::size_t> count(const std::vector<std::size_t>& ids) const {
    std::vector<std::size_t> sizes(groups_, 0);
    for (std::size_t id : ids) ++sizes[id];
    return sizes;
  }

 private:
  const float* row(std::size_t j) const { return maps_.raw() + j * plane_; }

  void nearest(const std::vector<std::size_t>& medoids, std::vector<std::size_t>& ids) const {
    for (std::size_t j = 0; j < channels_; ++j) {
      std::size_t best = 0;
      for (std::size_t l = 1; l < groups_; ++l) {
        if (dist(j, medoids[l]) < dist(j, medoids[best])) best = l;
      }
      ids[j] = best;
    }
  }

  void pin(const std::vector<std::size_t>& medoids, std::vector<std::size_t>& ids) const {
    for (std::size_t l = 0; l < groups_; ++l) ids[medoids[l]] = l;
  }

  const Tensor& maps_;
  std::size_t channels_;
  std::size_t plane_;
  std::size_t groups_;
  std::vector<double> pair_;
};

}  // namespace

FeatureGrouping cfg_group(const Tensor& maps, const CfgOptions& options,
                          std::uint64_t seed) {
  if (maps.rank() != 3) {
    throw DimensionError("cfg_group: expected [N_c, H, W], got " + to_string(maps.shape()));
  }
  const std::size_t channels = maps.dim(0);
  const std::size_t groups = options.groups;
  if (groups == 0) throw std::invalid_argument("cfg_group: need at least one group");
  if (channels < groups) {
    throw std::invalid_argument("cfg_group: " + std::to_string(channels) +
                                " channels cannot form " + std::to_string(groups) +
                                " groups");
  }
  if (maps.dim(1) * maps.dim(2) == 0) throw DimensionError("cfg_group: empty maps");

  const Grouper grouper(maps, groups);
  std::mt19937_64 rng(seed);
  FeatureGrouping best;
  best.total_distance = std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);

  for (std::size_t r = 0; r < restarts; ++r) {
    std::vector<std::size_t> order(channels);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> medoids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(groups));
    std::vector<std::size_t> ids(channels, 0);

    std::size_t iters = 0;
    while (true) {
      grouper.assign(medoids, ids);
      if (iters == options.max_iters) break;
      ++iters;
      std::vector<std::size_t> next = grouper.update(ids);
      if (next == medoids) break;
      medoids = std::move(next);
    }

    const double total = grouper.objective(medoids, ids);
    best.restart_distances.push_back(total);
    if (total < best.total_distance) {
      best.total_distance = total;
      best.ids = ids;
      best.medoids = medoids;
      best.iterations_used = iters;
    }
  }
  best.sizes = grouper.count(best.ids);
  return best;
}

FeatureGrouping identity_grouping(std::size_t channels) {
  FeatureGrouping g;
  g.ids.resize(channels);
  std::iota(g.ids.begin(), g.ids.end(), 0);
  g.medoids = g.ids;
  g.sizes.assign(channels, 1);
  g.restart_distances = {0.0};
  return g;
}

FeatureGrouping single_grouping(std::size_t channels) {
  FeatureGrouping g;
  g.ids.assign(channels, 0);
  g.medoids = {0};
  g.sizes = {channels};
  return g;
}

}  // namespace tenet
