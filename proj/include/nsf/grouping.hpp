#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/dataset.hpp"
#include "nsf/matrix.hpp"

namespace nsf {

// Per-class centroids. `biased` holds the plain per-class sample means;
// `invariant` holds the estimated bias-invariant means, defined only where
// valid_mask is true.
struct CentroidSet {
  Matrix biased;        // K x D
  Matrix invariant;     // K x D, rows valid only where valid_mask[k]
  std::vector<bool> valid_mask;

  bool any_valid() const {
    for (bool v : valid_mask)
      if (v) return true;
    return false;
  }

  // Alignment target for class k: the invariant estimate where available,
  // otherwise the biased centroid.
  std::span<const double> target(std::size_t k) const {
    return valid_mask[k] ? invariant.row(k) : biased.row(k);
  }
};

enum class Membership : std::uint8_t { U, V };

struct GroupAssignment {
  std::vector<double> rel_distance;     // d(x_i, rho)
  std::vector<int> soft_assign;         // q_i, nearest centroid over all classes
  std::vector<bool> sample_mask;        // o_i
  std::vector<Membership> membership;   // U iff q_i != y_i
  std::vector<std::size_t> u_counts;    // |U_k|
  std::vector<std::size_t> v_counts;    // |V_k|
};

inline CentroidSet compute_centroids(const EmbeddingDataset& ds) {
  const std::size_t k_count = static_cast<std::size_t>(ds.class_count);
  const std::size_t dim = ds.dim();
  CentroidSet cs;
  cs.biased = Matrix(k_count, dim);
  cs.invariant = Matrix(k_count, dim);
  cs.valid_mask.assign(k_count, false);
  std::vector<std::size_t> counts(k_count, 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto k = static_cast<std::size_t>(ds.labels[i]);
    counts[k]++;
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) cs.biased(k, j) += row[j];
  }
  for (std::size_t k = 0; k < k_count; ++k) {
    if (counts[k] == 0)
      throw std::invalid_argument("compute_centroids: class " + std::to_string(k) +
                                  " has zero samples");
    for (std::size_t j = 0; j < dim; ++j) cs.biased(k, j) /= static_cast<double>(counts[k]);
  }
  return cs;
}

// Squared distance to the own-class centroid minus squared distance to the
// nearest competing centroid. Positive means the sample sits closer to some
// other class.
inline double relative_distance(std::span<const double> x, int y, const Matrix& centroids) {
  if (centroids.rows() < 2)
    throw std::invalid_argument("relative_distance: need at least two classes");
  const auto own = static_cast<std::size_t>(y);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < centroids.rows(); ++u) {
    if (u == own) continue;
    best = std::min(best, squared_distance(x, centroids.row(u)));
  }
  return squared_distance(x, centroids.row(own)) - best;
}

// Nearest-centroid soft assignment and U/V split. Ties go to the sample's own
// class (membership V), so ambiguous points never inflate the minority set.
inline GroupAssignment assign_groups(const EmbeddingDataset& ds, const CentroidSet& centroids) {
  const std::size_t n = ds.size();
  const std::size_t k_count = centroids.biased.rows();
  GroupAssignment ga;
  ga.rel_distance.resize(n);
  ga.soft_assign.resize(n);
  ga.membership.resize(n);
  ga.u_counts.assign(k_count, 0);
  ga.v_counts.assign(k_count, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = ds.features.row(i);
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    const double own_dist = squared_distance(x, centroids.biased.row(y));
    double best_other = std::numeric_limits<double>::infinity();
    std::size_t best_other_class = y;
    for (std::size_t u = 0; u < k_count; ++u) {
      if (u == y) continue;
      const double d = squared_distance(x, centroids.biased.row(u));
      if (d < best_other) {
        best_other = d;
        best_other_class = u;
      }
    }
    ga.rel_distance[i] = own_dist - best_other;
    if (own_dist <= best_other) {
      ga.soft_assign[i] = static_cast<int>(y);
      ga.membership[i] = Membership::V;
      ga.v_counts[y]++;
    } else {
      ga.soft_assign[i] = static_cast<int>(best_other_class);
      ga.membership[i] = Membership::U;
      ga.u_counts[y]++;
    }
  }
  ga.sample_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    ga.sample_mask[i] = ga.u_counts[y] > 0 && ga.v_counts[y] > 0;
  }
  return ga;
}

struct ClassBiasReport {
  bool biased = false;
  std::size_t u_count = 0;
  std::size_t v_count = 0;
};

// Class k is flagged as biased when both a deviating and a conforming group
// are present.
inline std::vector<ClassBiasReport> bias_presence(const GroupAssignment& ga) {
  std::vector<ClassBiasReport> report(ga.u_counts.size());
  for (std::size_t k = 0; k < report.size(); ++k) {
    report[k].u_count = ga.u_counts[k];
    report[k].v_count = ga.v_counts[k];
    report[k].biased = ga.u_counts[k] > 0 && ga.v_counts[k] > 0;
  }
  return report;
}

}  // namespace nsf
