#include "msan/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msan/errors.hpp"

namespace msan::cluster {
namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

/// Nearest-center assignment; returns inertia.
double assign(const Tensor& centers, const Tensor& points, std::vector<int>& assignments,
              std::vector<double>& distances) {
  const std::size_t n = points.rows(), k = centers.rows();
  assignments.assign(n, 0);
  distances.assign(n, 0.0);
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = squared_distance(points.row(i), centers.row(0));
    int best_k = 0;
    for (std::size_t c = 1; c < k; ++c) {
      const double d = squared_distance(points.row(i), centers.row(c));
      if (d < best) {
        best = d;
        best_k = static_cast<int>(c);
      }
    }
    assignments[i] = best_k;
    distances[i] = std::sqrt(best);
    inertia += best;
  }
  return inertia;
}

}  // namespace

double ClusterState::inertia() const {
  double acc = 0.0;
  for (double d : distances) acc += d * d;
  return acc;
}

Tensor source_centroids(const Tensor& source_feats, std::span<const int> source_labels, int num_classes) {
  if (num_classes < 1) throw ArgumentError("number of classes must be positive");
  if (source_labels.size() != source_feats.rows()) {
    throw ShapeError(std::to_string(source_labels.size()) + " labels for " + std::to_string(source_feats.rows()) +
                     " source rows");
  }
  const std::size_t d = source_feats.cols();
  const auto k = static_cast<std::size_t>(num_classes);
  Tensor centers({k, d});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < source_labels.size(); ++i) {
    const int label = source_labels[i];
    if (label < 0 || label >= num_classes) throw DataError("source label " + std::to_string(label) + " out of range");
    auto dst = centers.row(static_cast<std::size_t>(label));
    auto src = source_feats.row(i);
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    ++counts[static_cast<std::size_t>(label)];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw DataError("class " + std::to_string(c) + " has no source samples");
    for (double& v : centers.row(c)) v /= static_cast<double>(counts[c]);
  }
  return centers;
}

ClusterState kmeans_refine(const Tensor& init_centers, const Tensor& target_feats, int max_iter, double tol) {
  if (init_centers.rank() != 2 || init_centers.rows() == 0) throw ShapeError("need at least one initial center");
  if (target_feats.rank() != 2 || target_feats.rows() == 0) throw ShapeError("need at least one target sample");
  if (init_centers.cols() != target_feats.cols()) {
    throw ShapeError("center dims " + shape_string(init_centers.dims()) + " do not match target dims " +
                     shape_string(target_feats.dims()));
  }
  const std::size_t k = init_centers.rows(), d = init_centers.cols(), n = target_feats.rows();
  ClusterState state;
  state.centers = init_centers;

  for (int it = 0; it < max_iter; ++it) {
    state.inertia_history.push_back(assign(state.centers, target_feats, state.assignments, state.distances));
    Tensor updated({k, d});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(state.assignments[i]);
      auto dst = updated.row(c);
      auto src = target_feats.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[c];
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      auto dst = updated.row(c);
      if (counts[c] == 0) {
        auto prev = state.centers.row(c);
        std::copy(prev.begin(), prev.end(), dst.begin());
        continue;
      }
      for (double& v : dst) v /= static_cast<double>(counts[c]);
      movement = std::max(movement, std::sqrt(squared_distance(dst, state.centers.row(c))));
    }
    state.centers = std::move(updated);
    state.iterations_run = it + 1;
    if (movement < tol) break;
  }
  state.inertia_history.push_back(assign(state.centers, target_feats, state.assignments, state.distances));
  return state;
}

PseudoLabelSet select_top_fraction(const ClusterState& state, double q) {
  if (!(q > 0.0 && q <= 1.0)) throw ArgumentError("selection fraction must lie in (0, 1], got " + std::to_string(q));
  const std::size_t k = state.num_clusters();
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < state.assignments.size(); ++i) {
    members[static_cast<std::size_t>(state.assignments[i])].push_back(i);
  }
  PseudoLabelSet out;
  for (std::size_t c = 0; c < k; ++c) {
    auto& m = members[c];
    std::stable_sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      return state.distances[a] < state.distances[b];
    });
    // 0.1 * 30 evaluates to 3.0000000000000004; the offset keeps ceil at 3.
    const auto take = static_cast<std::size_t>(std::ceil(q * static_cast<double>(m.size()) - 1e-12));
    for (std::size_t i = 0; i < std::min(take, m.size()); ++i) {
      out.entries.push_back({m[i], static_cast<int>(c), state.distances[m[i]]});
    }
  }
  return out;
}

}  // namespace msan::cluster
