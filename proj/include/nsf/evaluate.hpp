#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/classifier.hpp"
#include "nsf/dataset.hpp"
#include "nsf/transform.hpp"

namespace nsf {

struct GroupAccuracy {
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  double mean_accuracy = 0.0;
  double worst_group_accuracy = 0.0;
  std::map<int, GroupAccuracy> per_group;  // sorted by group id
  std::string config_fingerprint;
};

// Per-group accuracy and its minimum over populated groups. Requires group
// labels on the dataset.
inline EvalReport evaluate(const LinearClassifier& h, const EmbeddingDataset& ds,
                           const AffineTransform* transform = nullptr,
                           std::string fingerprint = {}) {
  if (!ds.has_groups())
    throw std::invalid_argument(
        "evaluate: dataset has no group labels; use synthetic data or supply a "
        "group-labeled evaluation set");
  const auto preds = predict(h, ds.features, transform);
  EvalReport report;
  report.config_fingerprint = std::move(fingerprint);
  std::map<int, std::pair<std::size_t, std::size_t>> tallies;  // group -> (correct, count)
  std::size_t correct_total = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& [correct, count] = tallies[ds.groups[i]];
    count++;
    if (preds[i] == ds.labels[i]) {
      correct++;
      correct_total++;
    }
  }
  report.mean_accuracy = static_cast<double>(correct_total) / static_cast<double>(ds.size());
  report.worst_group_accuracy = std::numeric_limits<double>::infinity();
  for (const auto& [gid, tally] : tallies) {
    GroupAccuracy ga;
    ga.count = tally.second;
    ga.accuracy = static_cast<double>(tally.first) / static_cast<double>(tally.second);
    report.per_group[gid] = ga;
    report.worst_group_accuracy = std::min(report.worst_group_accuracy, ga.accuracy);
  }
  return report;
}

struct AblationCell {
  std::string classifier_name;  // "erm" or "debiased"
  std::string feature_name;     // "raw" or "transformed"
  std::optional<EvalReport> report;  // absent when the component is missing
};

// The four {h, h'} x {x, t(x)} combinations. Missing bundle components leave
// explicit gaps instead of failing the whole grid.
inline std::vector<AblationCell> ablation_grid(const EmbeddingDataset& ds,
                                               const LinearClassifier* erm,
                                               const LinearClassifier* debiased,
                                               const AffineTransform* transform) {
  std::vector<AblationCell> grid;
  const std::pair<std::string, const LinearClassifier*> heads[] = {{"erm", erm},
                                                                   {"debiased", debiased}};
  const std::pair<std::string, const AffineTransform*> feats[] = {{"raw", nullptr},
                                                                  {"transformed", transform}};
  for (const auto& [hname, head] : heads) {
    for (const auto& [fname, feat] : feats) {
      AblationCell cell{hname, fname, std::nullopt};
      const bool missing = head == nullptr || (fname == "transformed" && feat == nullptr);
      if (!missing) cell.report = evaluate(*head, ds, feat, hname + "/" + fname);
      grid.push_back(std::move(cell));
    }
  }
  return grid;
}

struct DiscardSweepRow {
  double fraction = 0.0;
  DiscardStrategy strategy = DiscardStrategy::LowestScale;
  EvalReport report;
};

// Evaluate the debiased head on channel-discarded versions of the transform,
// for each fraction and both selection strategies.
inline std::vector<DiscardSweepRow> channel_discard_sweep(const EmbeddingDataset& ds,
                                                          const LinearClassifier& debiased,
                                                          const AffineTransform& transform,
                                                          const std::vector<double>& fractions,
                                                          std::uint64_t seed = 0) {
  std::vector<DiscardSweepRow> rows;
  for (double f : fractions) {
    for (DiscardStrategy strategy :
         {DiscardStrategy::LowestScale, DiscardStrategy::Random}) {
      const auto cut = discard_channels(transform, f, strategy, seed);
      DiscardSweepRow row;
      row.fraction = f;
      row.strategy = strategy;
      row.report = evaluate(debiased, ds, &cut);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace nsf
