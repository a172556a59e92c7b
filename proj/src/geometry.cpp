#include "taperkrig/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "taperkrig/errors.hpp"
#include "taperkrig/parallel.hpp"

namespace taperkrig {

namespace {

constexpr std::int32_t kLeafSize = 16;

void check_duplicates(std::span<const Location> locations) {
  const std::size_t n = locations.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    if (locations[a].x != locations[b].x) return locations[a].x < locations[b].x;
    return locations[a].y < locations[b].y;
  });

  std::vector<std::pair<std::int32_t, std::int32_t>> dups;
  for (std::size_t i = 1; i < n; ++i) {
    const Location& a = locations[order[i - 1]];
    const Location& b = locations[order[i]];
    if (a.x == b.x && a.y == b.y) {
      dups.emplace_back(std::min(order[i - 1], order[i]), std::max(order[i - 1], order[i]));
      if (dups.size() >= 8) break;
    }
  }
  if (!dups.empty()) {
    std::ostringstream msg;
    msg << "duplicate locations at indices";
    for (const auto& [a, b] : dups) msg << " (" << a << "," << b << ")";
    if (dups.size() >= 8) msg << " ...";
    throw IngestError(msg.str());
  }
}

}  // namespace

void SparsePattern::validate() const {
  if (n < 0 || col_ptr.size() != static_cast<std::size_t>(n) + 1 || col_ptr.front() != 0 ||
      col_ptr.back() != nnz()) {
    throw std::invalid_argument("SparsePattern: malformed column pointers");
  }
  for (std::int32_t j = 0; j < n; ++j) {
    const std::int64_t begin = col_ptr[j];
    const std::int64_t end = col_ptr[j + 1];
    if (begin >= end || row_ind[begin] != j) {
      throw std::invalid_argument("SparsePattern: every column must start with its diagonal");
    }
    for (std::int64_t p = begin + 1; p < end; ++p) {
      if (row_ind[p] <= row_ind[p - 1] || row_ind[p] >= n) {
        throw std::invalid_argument("SparsePattern: row indices must be strictly increasing");
      }
    }
  }
}

double Dataset::mean_value() const {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (const double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

Dataset Dataset::subset(std::span<const std::int32_t> indices) const {
  Dataset out;
  out.name = name;
  out.locations.reserve(indices.size());
  out.values.reserve(indices.size());
  for (const std::int32_t i : indices) {
    out.locations.push_back(locations[i]);
    out.values.push_back(values[i]);
  }
  return out;
}

void validate_dataset(const Dataset& dataset) {
  const std::size_t n = dataset.locations.size();
  if (n == 0) throw IngestError("dataset is empty");
  if (dataset.values.size() != n) {
    throw IngestError("dataset has " + std::to_string(n) + " locations but " +
                      std::to_string(dataset.values.size()) + " values");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(dataset.locations[i].x) || !std::isfinite(dataset.locations[i].y)) {
      throw IngestError("non-finite coordinates at index " + std::to_string(i));
    }
    if (!std::isfinite(dataset.values[i])) {
      throw IngestError("non-finite value at index " + std::to_string(i));
    }
  }
  check_duplicates(dataset.locations);
}

Dataset make_dataset(std::vector<Location> locations, std::vector<double> values,
                     std::string name) {
  Dataset dataset{std::move(locations), std::move(values), std::move(name)};
  validate_dataset(dataset);
  return dataset;
}

double half_bounding_diameter(std::span<const Location> locations) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Location& p : locations) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double dx = xmax - xmin;
  const double dy = ymax - ymin;
  return 0.5 * std::sqrt(dx * dx + dy * dy);
}

SpatialIndex::SpatialIndex(std::span<const Location> locations)
    : points_(locations.begin(), locations.end()), original_(locations.size()) {
  if (locations.empty()) throw IngestError("SpatialIndex: empty location set");
  for (const Location& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw IngestError("SpatialIndex: non-finite coordinates");
    }
  }
  std::iota(original_.begin(), original_.end(), 0);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  root_ = build(0, static_cast<std::int32_t>(points_.size()));
}

std::int32_t SpatialIndex::build(std::int32_t begin, std::int32_t end) {
  const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(Node{});
  Node node;
  node.begin = begin;
  node.end = end;

  if (end - begin <= kLeafSize) {
    nodes_[id] = node;
    return id;
  }

  // Split along the wider extent at the median.
  double xmin = points_[begin].x, xmax = xmin, ymin = points_[begin].y, ymax = ymin;
  for (std::int32_t i = begin + 1; i < end; ++i) {
    xmin = std::min(xmin, points_[i].x);
    xmax = std::max(xmax, points_[i].x);
    ymin = std::min(ymin, points_[i].y);
    ymax = std::max(ymax, points_[i].y);
  }
  const int axis = (xmax - xmin) >= (ymax - ymin) ? 0 : 1;
  const std::int32_t mid = begin + (end - begin) / 2;

  auto key = [&](std::int32_t slot) {
    return axis == 0 ? points_[slot].x : points_[slot].y;
  };
  std::vector<std::int32_t> slots(end - begin);
  std::iota(slots.begin(), slots.end(), begin);
  std::nth_element(slots.begin(), slots.begin() + (mid - begin), slots.end(),
                   [&](std::int32_t a, std::int32_t b) { return key(a) < key(b); });
  // Materialize the permutation on the point and index arrays.
  std::vector<Location> tmp_pts(end - begin);
  std::vector<std::int32_t> tmp_idx(end - begin);
  for (std::int32_t i = 0; i < end - begin; ++i) {
    tmp_pts[i] = points_[slots[i]];
    tmp_idx[i] = original_[slots[i]];
  }
  std::copy(tmp_pts.begin(), tmp_pts.end(), points_.begin() + begin);
  std::copy(tmp_idx.begin(), tmp_idx.end(), original_.begin() + begin);

  node.axis = axis;
  node.split = axis == 0 ? points_[mid].x : points_[mid].y;
  node.left = build(begin, mid);
  node.right = build(mid, end);
  nodes_[id] = node;
  return id;
}

void SpatialIndex::query(std::int32_t id, const Location& center, double radius,
                         double radius_sq, std::vector<Neighbor>& out) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::int32_t i = node.begin; i < node.end; ++i) {
      const double d2 = squared_distance(points_[i], center);
      if (d2 < radius_sq) out.push_back(Neighbor{original_[i], std::sqrt(d2)});
    }
    return;
  }
  const double c = node.axis == 0 ? center.x : center.y;
  if (c - radius < node.split) query(node.left, center, radius, radius_sq, out);
  if (c + radius >= node.split) query(node.right, center, radius, radius_sq, out);
}

void SpatialIndex::neighbors_within(const Location& center, double radius,
                                    std::vector<Neighbor>& out) const {
  if (!(radius > 0.0)) throw std::domain_error("neighbors_within: radius must be positive");
  out.clear();
  query(root_, center, radius, radius * radius, out);
  std::sort(out.begin(), out.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
}

std::vector<Neighbor> SpatialIndex::neighbors_within(const Location& center,
                                                     double radius) const {
  std::vector<Neighbor> out;
  neighbors_within(center, radius, out);
  return out;
}

SpatialIndex build_index(std::span<const Location> locations) {
  check_duplicates(locations);
  return SpatialIndex(locations);
}

PatternDistances pattern_with_distances(const SpatialIndex& index,
                                        std::span<const Location> locations, double radius,
                                        int n_threads) {
  if (!(radius > 0.0)) throw std::domain_error("pairwise_pattern: radius must be positive");
  const std::int32_t n = static_cast<std::int32_t>(locations.size());

  // Column j holds the diagonal plus strict-radius neighbors with index > j.
  std::vector<std::vector<Neighbor>> below(n);
  parallel_for(n, n_threads, [&](std::size_t j) {
    std::vector<Neighbor> hits;
    index.neighbors_within(locations[j], radius, hits);
    auto& col = below[j];
    for (const Neighbor& h : hits) {
      if (h.index > static_cast<std::int32_t>(j)) col.push_back(h);
    }
  });

  PatternDistances out;
  out.pattern.n = n;
  out.pattern.col_ptr.assign(n + 1, 0);
  for (std::int32_t j = 0; j < n; ++j) {
    out.pattern.col_ptr[j + 1] = out.pattern.col_ptr[j] + 1 + static_cast<std::int64_t>(below[j].size());
  }
  const std::int64_t nnz = out.pattern.col_ptr[n];
  out.pattern.row_ind.resize(nnz);
  out.dist.resize(nnz);
  parallel_for(n, n_threads, [&](std::size_t j) {
    std::int64_t p = out.pattern.col_ptr[j];
    out.pattern.row_ind[p] = static_cast<std::int32_t>(j);
    out.dist[p] = 0.0;
    ++p;
    for (const Neighbor& h : below[j]) {
      out.pattern.row_ind[p] = h.index;
      out.dist[p] = h.distance;
      ++p;
    }
  });
  return out;
}

SparsePattern pairwise_pattern(const SpatialIndex& index, std::span<const Location> locations,
                               double radius, int n_threads) {
  return pattern_with_distances(index, locations, radius, n_threads).pattern;
}

PatternDistances dense_pattern_with_distances(std::span<const Location> locations) {
  const std::int32_t n = static_cast<std::int32_t>(locations.size());
  PatternDistances out;
  out.pattern.n = n;
  out.pattern.col_ptr.resize(n + 1);
  const std::int64_t nnz = static_cast<std::int64_t>(n) * (n + 1) / 2;
  out.pattern.row_ind.resize(nnz);
  out.dist.resize(nnz);
  std::int64_t p = 0;
  for (std::int32_t j = 0; j < n; ++j) {
    out.pattern.col_ptr[j] = p;
    for (std::int32_t i = j; i < n; ++i) {
      out.pattern.row_ind[p] = i;
      out.dist[p] = i == j ? 0.0 : distance(locations[i], locations[j]);
      ++p;
    }
  }
  out.pattern.col_ptr[n] = p;
  return out;
}

}  // namespace taperkrig
