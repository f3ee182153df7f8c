#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/dataset.hpp"
#include "nsf/grouping.hpp"

namespace nsf {

struct NeutralizeInfo {
  // Classes whose deviating group is very small; the estimate for these is
  // high-variance and callers should surface the count.
  std::vector<std::size_t> small_u_classes;
  static constexpr std::size_t kSmallUThreshold = 5;
};

// Fill the bias-invariant part of the centroid set: for every class with both
// groups populated, the equal-weight average of the U and V group means. The
// half/half weights make the estimate independent of group sizes.
inline NeutralizeInfo estimate_invariant(const EmbeddingDataset& ds,
                                         const GroupAssignment& ga, CentroidSet& centroids) {
  const std::size_t k_count = centroids.biased.rows();
  const std::size_t dim = centroids.biased.cols();
  Matrix u_sum(k_count, dim), v_sum(k_count, dim);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    auto row = ds.features.row(i);
    Matrix& target = (ga.membership[i] == Membership::U) ? u_sum : v_sum;
    for (std::size_t j = 0; j < dim; ++j) target(y, j) += row[j];
  }
  NeutralizeInfo info;
  bool any = false;
  for (std::size_t k = 0; k < k_count; ++k) {
    if (ga.u_counts[k] > 0 && ga.v_counts[k] > 0) {
      for (std::size_t j = 0; j < dim; ++j) {
        centroids.invariant(k, j) =
            0.5 * u_sum(k, j) / static_cast<double>(ga.u_counts[k]) +
            0.5 * v_sum(k, j) / static_cast<double>(ga.v_counts[k]);
      }
      centroids.valid_mask[k] = true;
      any = true;
      if (ga.u_counts[k] < NeutralizeInfo::kSmallUThreshold)
        info.small_u_classes.push_back(k);
    } else {
      centroids.valid_mask[k] = false;
    }
  }
  if (!any)
    throw std::runtime_error(
        "no bias detected: no class has both U and V populated; the pipeline "
        "degenerates to the identity transform");
  return info;
}

}  // namespace nsf
