#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "nsf/bundle.hpp"
#include "nsf/classifier.hpp"
#include "nsf/evaluate.hpp"
#include "nsf/grouping.hpp"
#include "nsf/io.hpp"
#include "nsf/neutralize.hpp"
#include "nsf/synth.hpp"
#include "nsf/transform.hpp"

namespace nsf {

struct RunConfig {
  std::optional<SyntheticConfig> synth;  // generate when set, else load data_path
  std::string data_path;
  DatasetFormat data_format = DatasetFormat::Csv;
  TransformTrainConfig transform;
  ClassifierTrainConfig classifier;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir;
  std::vector<double> discard_fractions = {0.1, 0.25, 0.5};
  bool run_ablations = true;

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("run config: seed list must be non-empty");
    if (!synth && data_path.empty())
      throw std::invalid_argument("run config: either a synthetic config or a data path");
    if (synth) synth->validate();
    transform.validate();
    classifier.validate();
  }
};

// In-memory result of one pipeline pass over one seed.
struct SeedRunResult {
  EmbeddingDataset dataset;
  CentroidSet centroids;
  GroupAssignment assignment;
  std::vector<ClassBiasReport> bias_report;
  TransformTrainResult transform;
  LinearClassifier erm_head;
  std::optional<SamplerState> sampler;
  std::optional<LinearClassifier> debiased_head;
  std::optional<EvalReport> erm_eval;       // absent when groups unavailable
  std::optional<EvalReport> debiased_eval;  // evaluated as h' on t(x)
  double erm_mean_accuracy = 0.0;
  double debiased_mean_accuracy = 0.0;
  std::vector<AblationCell> grid;
  std::vector<DiscardSweepRow> discard_sweep;
  std::map<std::string, double> stage_seconds;
};

namespace detail {

inline double mean_accuracy_only(const LinearClassifier& h, const EmbeddingDataset& ds,
                                 const AffineTransform* t) {
  const auto preds = predict(h, ds.features, t);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (preds[i] == ds.labels[i]) correct++;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto time(const std::string& name, F&& fn) -> decltype(fn()) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      sink_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    } else {
      auto result = fn();
      sink_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      return result;
    }
  }

 private:
  std::map<std::string, double>& sink_;
};

}  // namespace detail

// Replace the U/V split with a uniform-random per-sample split, keeping every
// derived field (distance sign, soft assignment, counts, mask) consistent so
// downstream stages see the random split wherever they would see U/V. Used by
// the random-group ablation.
inline GroupAssignment randomize_groups(const EmbeddingDataset& ds, const GroupAssignment& ga,
                                        std::uint64_t seed) {
  GroupAssignment out = ga;
  Rng rng(seed);
  const int k_count = static_cast<int>(ga.u_counts.size());
  std::fill(out.u_counts.begin(), out.u_counts.end(), 0);
  std::fill(out.v_counts.begin(), out.v_counts.end(), 0);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    const double magnitude = std::abs(ga.rel_distance[i]);
    if (rng.next_bool()) {
      out.membership[i] = Membership::U;
      out.rel_distance[i] = magnitude;
      out.soft_assign[i] = (ds.labels[i] + 1) % k_count;
      out.u_counts[y]++;
    } else {
      out.membership[i] = Membership::V;
      out.rel_distance[i] = -magnitude;
      out.soft_assign[i] = ds.labels[i];
      out.v_counts[y]++;
    }
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto y = static_cast<std::size_t>(ds.labels[i]);
    out.sample_mask[i] = out.u_counts[y] > 0 && out.v_counts[y] > 0;
  }
  return out;
}

// One full pass: centroids -> groups -> neutralize -> transform -> ERM head
// -> sampler -> debiased head -> evaluation. `assignment_override` lets the
// random-group ablation inject its own split.
inline SeedRunResult run_seed(EmbeddingDataset dataset, const RunConfig& config,
                              std::uint64_t seed,
                              const GroupAssignment* assignment_override = nullptr) {
  SeedRunResult r;
  r.dataset = std::move(dataset);
  r.dataset.validate();
  detail::StageTimer timer(r.stage_seconds);

  r.centroids = timer.time("centroids", [&] { return compute_centroids(r.dataset); });
  r.assignment = timer.time("groups", [&] {
    return assignment_override ? *assignment_override : assign_groups(r.dataset, r.centroids);
  });
  r.bias_report = bias_presence(r.assignment);

  bool bias_detected = false;
  for (const auto& cb : r.bias_report) bias_detected |= cb.biased;
  if (bias_detected)
    timer.time("neutralize",
               [&] { estimate_invariant(r.dataset, r.assignment, r.centroids); });

  TransformTrainConfig tcfg = config.transform;
  tcfg.seed = seed;
  r.transform = timer.time("fit_transform",
                           [&] { return train_transform(r.dataset, r.assignment, r.centroids, tcfg); });

  ClassifierTrainConfig ccfg = config.classifier;
  ccfg.seed = seed;
  r.erm_head = timer.time("fit_erm", [&] { return train_erm_head(r.dataset, ccfg); });

  if (!r.transform.skipped) {
    r.sampler = timer.time("sampler", [&] {
      return build_sampler(r.dataset, r.transform.transform, r.centroids, r.assignment);
    });
    ClassifierTrainConfig dcfg = config.classifier;
    dcfg.seed = seed + 1;  // fresh head, not warm-started from the ERM one
    r.debiased_head = timer.time("fit_debiased", [&] {
      return train_debiased_head(r.dataset, r.transform.transform, *r.sampler, dcfg);
    });
  }

  timer.time("eval", [&] {
    r.erm_mean_accuracy = detail::mean_accuracy_only(r.erm_head, r.dataset, nullptr);
    if (r.debiased_head)
      r.debiased_mean_accuracy = detail::mean_accuracy_only(
          *r.debiased_head, r.dataset, &r.transform.transform);
    if (r.dataset.has_groups()) {
      r.erm_eval = evaluate(r.erm_head, r.dataset, nullptr, "erm/raw");
      if (r.debiased_head)
        r.debiased_eval = evaluate(*r.debiased_head, r.dataset, &r.transform.transform,
                                   "debiased/transformed");
    }
  });

  if (config.run_ablations && r.dataset.has_groups() && r.debiased_head) {
    timer.time("ablations", [&] {
      r.grid = ablation_grid(r.dataset, &r.erm_head, &*r.debiased_head,
                             &r.transform.transform);
      r.discard_sweep = channel_discard_sweep(r.dataset, *r.debiased_head,
                                              r.transform.transform,
                                              config.discard_fractions, seed);
    });
  }
  return r;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= static_cast<double>(xs.size());
  for (double x : xs) ms.std += (x - ms.mean) * (x - ms.mean);
  ms.std = std::sqrt(ms.std / static_cast<double>(xs.size()));
  return ms;
}

struct PipelineResult {
  std::vector<SeedRunResult> per_seed;
  MeanStd erm_wga, debiased_wga, erm_mean, debiased_mean;
  bool groups_available = true;
};

namespace detail {

inline void write_eval_json(const EvalReport& r, const std::string& path) {
  nlohmann::json j;
  j["schema"] = "nsf-eval-1";
  j["mean_accuracy"] = r.mean_accuracy;
  j["worst_group_accuracy"] = r.worst_group_accuracy;
  j["config_fingerprint"] = r.config_fingerprint;
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [gid, ga] : r.per_group)
    groups[std::to_string(gid)] = {{"accuracy", ga.accuracy}, {"count", ga.count}};
  j["per_group"] = groups;
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << "\n";
}

inline void write_seed_artifacts(const SeedRunResult& r, const RunConfig& config,
                                 std::uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  if (config.synth) write_dataset(r.dataset, (dir / "dataset.bin").string(), DatasetFormat::Binary);

  nlohmann::json groups_report;
  groups_report["schema"] = "nsf-groups-1";
  for (std::size_t k = 0; k < r.bias_report.size(); ++k) {
    groups_report["classes"].push_back({{"class", k},
                                        {"biased", r.bias_report[k].biased},
                                        {"u_count", r.bias_report[k].u_count},
                                        {"v_count", r.bias_report[k].v_count}});
  }
  {
    std::ofstream out(dir / "groups.json", std::ios::trunc);
    out << groups_report.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "assignments.csv", std::ios::trunc);
    out << "index,label,rel_distance,soft_assign,membership,mask\n";
    for (std::size_t i = 0; i < r.dataset.size(); ++i) {
      out << i << "," << r.dataset.labels[i] << "," << r.assignment.rel_distance[i] << ","
          << r.assignment.soft_assign[i] << ","
          << (r.assignment.membership[i] == Membership::U ? "U" : "V") << ","
          << (r.assignment.sample_mask[i] ? 1 : 0) << "\n";
    }
  }
  {
    std::ofstream out(dir / "transform_loss.csv", std::ios::trunc);
    out << "step,loss\n";
    out.precision(17);
    for (std::size_t s = 0; s < r.transform.loss_trace.size(); ++s)
      out << s << "," << r.transform.loss_trace[s] << "\n";
  }

  ArtifactBundle bundle;
  bundle.transform = r.transform.transform;
  bundle.erm_classifier = r.erm_head;
  bundle.debiased_classifier = r.debiased_head;
  bundle.centroids = r.centroids;
  bundle.metadata = {{"seed", seed},
                     {"transform_skipped", r.transform.skipped},
                     {"lambda", config.transform.lambda},
                     {"learning_rate", config.transform.learning_rate},
                     {"steps", config.transform.steps},
                     {"adam_beta1", AdamOptimizer::kBeta1},
                     {"adam_beta2", AdamOptimizer::kBeta2},
                     {"threads", 1}};
  save_bundle(bundle, (dir / "bundle.json").string());

  if (r.erm_eval) write_eval_json(*r.erm_eval, (dir / "eval_erm.json").string());
  if (r.debiased_eval)
    write_eval_json(*r.debiased_eval, (dir / "eval_debiased.json").string());

  if (!r.grid.empty()) {
    std::ofstream out(dir / "ablation.csv", std::ios::trunc);
    out << "classifier,features,mean_accuracy,worst_group_accuracy\n";
    for (const auto& cell : r.grid) {
      out << cell.classifier_name << "," << cell.feature_name << ",";
      if (cell.report)
        out << cell.report->mean_accuracy << "," << cell.report->worst_group_accuracy;
      else
        out << "missing,missing";
      out << "\n";
    }
  }
  if (!r.discard_sweep.empty()) {
    std::ofstream out(dir / "discard_sweep.csv", std::ios::trunc);
    out << "fraction,strategy,mean_accuracy,worst_group_accuracy\n";
    for (const auto& row : r.discard_sweep) {
      out << row.fraction << ","
          << (row.strategy == DiscardStrategy::LowestScale ? "lowest_w" : "random") << ","
          << row.report.mean_accuracy << "," << row.report.worst_group_accuracy << "\n";
    }
  }
  {
    nlohmann::json timing(r.stage_seconds);
    std::ofstream out(dir / "timing.json", std::ios::trunc);
    out << timing.dump(2) << "\n";
  }
}

}  // namespace detail

// Full multi-seed pipeline. Writes per-seed artifacts plus a summary when
// config.out_dir is set; always returns the in-memory results.
inline PipelineResult run_pipeline(const RunConfig& config) {
  config.validate();
  PipelineResult result;
  std::vector<double> erm_wgas, db_wgas, erm_means, db_means;
  for (std::uint64_t seed : config.seeds) {
    EmbeddingDataset ds;
    if (config.synth) {
      SyntheticConfig sc = *config.synth;
      sc.seed = seed;
      ds = generate(sc);
    } else {
      ds = read_dataset(config.data_path, config.data_format);
    }
    SeedRunResult r = run_seed(std::move(ds), config, seed);
    result.groups_available = result.groups_available && r.dataset.has_groups();
    erm_means.push_back(r.erm_mean_accuracy);
    db_means.push_back(r.debiased_mean_accuracy);
    if (r.erm_eval) erm_wgas.push_back(r.erm_eval->worst_group_accuracy);
    if (r.debiased_eval) db_wgas.push_back(r.debiased_eval->worst_group_accuracy);
    if (!config.out_dir.empty())
      detail::write_seed_artifacts(r, config, seed,
                                   std::filesystem::path(config.out_dir) /
                                       ("seed_" + std::to_string(seed)));
    result.per_seed.push_back(std::move(r));
  }
  result.erm_wga = mean_std(erm_wgas);
  result.debiased_wga = mean_std(db_wgas);
  result.erm_mean = mean_std(erm_means);
  result.debiased_mean = mean_std(db_means);
  if (!config.out_dir.empty()) {
    nlohmann::json summary;
    summary["schema"] = "nsf-summary-1";
    summary["seeds"] = config.seeds;
    summary["groups_available"] = result.groups_available;
    summary["erm"] = {{"mean_accuracy", {{"mean", result.erm_mean.mean}, {"std", result.erm_mean.std}}}};
    summary["debiased"] = {{"mean_accuracy", {{"mean", result.debiased_mean.mean}, {"std", result.debiased_mean.std}}}};
    if (result.groups_available) {
      summary["erm"]["worst_group_accuracy"] = {{"mean", result.erm_wga.mean},
                                                {"std", result.erm_wga.std}};
      summary["debiased"]["worst_group_accuracy"] = {{"mean", result.debiased_wga.mean},
                                                     {"std", result.debiased_wga.std}};
    } else {
      summary["note"] = "groups unavailable; mean accuracy only";
    }
    std::filesystem::create_directories(config.out_dir);
    std::ofstream out(std::filesystem::path(config.out_dir) / "summary.json", std::ios::trunc);
    out << summary.dump(2) << "\n";
  }
  return result;
}

}  // namespace nsf
