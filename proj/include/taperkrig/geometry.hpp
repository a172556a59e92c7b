#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "taperkrig/sparse_pattern.hpp"

namespace taperkrig {

struct Location {
  double x = 0.0;
  double y = 0.0;
};

inline double squared_distance(const Location& a, const Location& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(const Location& a, const Location& b) {
  return std::sqrt(squared_distance(a, b));
}

// Planar sample: locations with one observed value each.
struct Dataset {
  std::vector<Location> locations;
  std::vector<double> values;
  std::string name;

  std::size_t size() const { return locations.size(); }
  double mean_value() const;
  Dataset subset(std::span<const std::int32_t> indices) const;
};

// Validates and builds a Dataset: equal nonempty lengths, finite entries,
// and no duplicate coordinates (duplicates make a zero-nugget covariance
// singular). Throws IngestError listing the offending indices.
Dataset make_dataset(std::vector<Location> locations, std::vector<double> values,
                     std::string name = {});

// Checks the Dataset invariants on an existing instance.
void validate_dataset(const Dataset& dataset);

// Half the diameter of the bounding box; the default variogram max_dist.
double half_bounding_diameter(std::span<const Location> locations);

struct Neighbor {
  std::int32_t index = 0;  // index into the original location sequence
  double distance = 0.0;
};

// Static 2-d k-d tree with median splits over a copy of the points.
// Immutable after construction; queries are safe to run concurrently.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::span<const Location> locations);

  std::int32_t size() const { return static_cast<std::int32_t>(points_.size()); }

  // Exactly the points with Euclidean distance strictly below radius
  // (boundary points would contribute structural zeros under compact
  // support), sorted by original index.
  std::vector<Neighbor> neighbors_within(const Location& center, double radius) const;

  // Same query appending into a caller-owned buffer (cleared first);
  // avoids reallocation in per-target loops.
  void neighbors_within(const Location& center, double radius, std::vector<Neighbor>& out) const;

 private:
  struct Node {
    double split = 0.0;
    std::int32_t axis = -1;  // -1 marks a leaf
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t begin = 0;
    std::int32_t end = 0;
  };

  std::int32_t build(std::int32_t begin, std::int32_t end);
  void query(std::int32_t node, const Location& center, double radius, double radius_sq,
             std::vector<Neighbor>& out) const;

  std::vector<Location> points_;       // permuted storage
  std::vector<std::int32_t> original_;  // permuted slot -> original index
  std::vector<Node> nodes_;
  std::int32_t root_ = -1;
};

// Convenience wrapper; rejects duplicate locations like make_dataset.
SpatialIndex build_index(std::span<const Location> locations);

// Lower-triangular pattern (diagonal included) with entry (i, j), i >= j,
// present iff dist(i, j) < radius or i == j.
SparsePattern pairwise_pattern(const SpatialIndex& index, std::span<const Location> locations,
                               double radius, int n_threads = 0);

// Pattern plus the distance of every stored pair (0 on the diagonal),
// aligned with row_ind. Shared by pattern construction and assembly.
struct PatternDistances {
  SparsePattern pattern;
  std::vector<double> dist;
};

PatternDistances pattern_with_distances(const SpatialIndex& index,
                                        std::span<const Location> locations, double radius,
                                        int n_threads = 0);

// Dense lower-triangular pattern with all pairwise distances; the fallback
// when the model has no compact support.
PatternDistances dense_pattern_with_distances(std::span<const Location> locations);

}  // namespace taperkrig
