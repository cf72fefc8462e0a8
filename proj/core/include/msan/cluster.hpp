#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "msan/tensor.hpp"

namespace msan::cluster {

struct ClusterState {
  Tensor centers;                    // [K x d]
  std::vector<int> assignments;      // per target sample, in [0, K)
  std::vector<double> distances;     // Euclidean distance to the assigned center
  int iterations_run = 0;
  /// Inertia after each assignment step, final assignment last.
  std::vector<double> inertia_history;

  std::size_t num_clusters() const { return centers.rows(); }
  double inertia() const;
};

struct PseudoLabel {
  std::size_t target_index = 0;
  int label = 0;
  double distance = 0.0;
};

/// Target samples selected as subdomain anchors, grouped by cluster and
/// ordered by ascending distance within each cluster.
struct PseudoLabelSet {
  std::vector<PseudoLabel> entries;

  bool empty() const noexcept { return entries.empty(); }
  std::size_t size() const noexcept { return entries.size(); }
};

/// Row k is the mean of the source rows labelled k. Throws DataError when a
/// class has no samples.
Tensor source_centroids(const Tensor& source_feats, std::span<const int> source_labels, int num_classes);

/// Lloyd iterations from `init_centers` until the largest center movement
/// drops below `tol` or `max_iter` updates have run. Empty clusters keep
/// their center; distance ties go to the lower cluster index.
ClusterState kmeans_refine(const Tensor& init_centers, const Tensor& target_feats, int max_iter = 100,
                           double tol = 1e-6);

/// Per cluster, the ceil(q * size) members nearest the center. Distance ties
/// go to the lower target index.
PseudoLabelSet select_top_fraction(const ClusterState& state, double q = 0.10);

}  // namespace msan::cluster
