#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/matrix.hpp"

namespace nsf {

// In-memory embedding dataset: N feature rows of dimension D, dense class
// labels in {0..K-1}, and optional per-sample group ids used only by the
// evaluator. Immutable after construction by convention.
struct EmbeddingDataset {
  Matrix features;             // N x D
  std::vector<int> labels;     // length N, values in {0..K-1}
  std::vector<int> groups;     // empty when absent, else length N
  int class_count = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  bool has_groups() const { return !groups.empty(); }

  void validate() const {
    if (size() < 1) throw std::invalid_argument("dataset invariant violated: N >= 1");
    if (dim() < 1) throw std::invalid_argument("dataset invariant violated: D >= 1");
    if (class_count < 2) throw std::invalid_argument("dataset invariant violated: K >= 2");
    if (features.rows() != labels.size())
      throw std::invalid_argument(
          "dataset invariant violated: feature row count equals label count");
    if (!groups.empty() && groups.size() != labels.size())
      throw std::invalid_argument(
          "dataset invariant violated: group count equals label count");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= class_count)
        throw std::invalid_argument("dataset invariant violated: every label < K (row " +
                                    std::to_string(i) + ")");
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
  }
};

// Remap arbitrary integer labels to dense 0..K-1. Returns the original label
// for each dense id, sorted ascending, for storage in run metadata.
inline std::vector<int> densify_labels(std::vector<int>& labels) {
  std::map<int, int> mapping;
  for (int l : labels) mapping.emplace(l, 0);
  std::vector<int> original;
  original.reserve(mapping.size());
  int next = 0;
  for (auto& [orig, dense] : mapping) {
    dense = next++;
    original.push_back(orig);
  }
  for (int& l : labels) l = mapping.at(l);
  return original;
}

}  // namespace nsf
