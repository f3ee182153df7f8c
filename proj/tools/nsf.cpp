// nsf: command-line front end for the spurious-feature neutralization library.
// Every subcommand is a thin wrapper over the corresponding library call.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nsf/bundle.hpp"
#include "nsf/classifier.hpp"
#include "nsf/config.hpp"
#include "nsf/evaluate.hpp"
#include "nsf/grouping.hpp"
#include "nsf/io.hpp"
#include "nsf/neutralize.hpp"
#include "nsf/pipeline.hpp"
#include "nsf/synth.hpp"
#include "nsf/transform.hpp"

namespace {

bool verbose_logging() {
  const char* env = std::getenv("NSF_LOG");
  return env != nullptr && std::string(env) != "" && std::string(env) != "quiet";
}

void log_info(const std::string& msg) {
  if (verbose_logging()) std::cerr << "[nsf] " << msg << "\n";
}

nsf::EmbeddingDataset load_data(const std::string& path, const std::string& format) {
  const auto fmt =
      format.empty() ? nsf::format_from_path(path) : nsf::parse_dataset_format(format);
  log_info("loading " + path);
  return nsf::read_dataset(path, fmt);
}

nsf::ArtifactBundle load_or_new_bundle(const std::string& path) {
  if (std::filesystem::exists(path)) return nsf::load_bundle(path);
  return {};
}

void write_assignments_csv(const nsf::EmbeddingDataset& ds, const nsf::GroupAssignment& ga,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "index,label,rel_distance,soft_assign,membership,mask\n";
  out.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << i << "," << ds.labels[i] << "," << ga.rel_distance[i] << "," << ga.soft_assign[i]
        << "," << (ga.membership[i] == nsf::Membership::U ? "U" : "V") << ","
        << (ga.sample_mask[i] ? 1 : 0) << "\n";
  }
}

void write_eval_report(const nsf::EvalReport& report, const std::string& path) {
  nsf::detail::write_eval_json(report, path);
  std::cout << "mean_accuracy=" << report.mean_accuracy
            << " worst_group_accuracy=" << report.worst_group_accuracy << "\n";
}

std::vector<double> parse_fraction_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string token;
  while (std::getline(ss, token, ',')) out.push_back(std::stod(token));
  return out;
}

const nsf::LinearClassifier& pick_head(const nsf::ArtifactBundle& bundle,
                                       const std::string& head) {
  if (head == "erm") {
    if (!bundle.erm_classifier) throw std::runtime_error("bundle has no ERM classifier");
    return *bundle.erm_classifier;
  }
  if (!bundle.debiased_classifier)
    throw std::runtime_error("bundle has no debiased classifier");
  return *bundle.debiased_classifier;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spurious-feature neutralization pipeline"};
  app.require_subcommand(1);

  // --- synth ---
  nsf::SyntheticConfig synth_cfg;
  std::string synth_out, synth_format;
  auto* synth = app.add_subcommand("synth", "Generate a bias-sampled synthetic dataset");
  synth->add_option("--n", synth_cfg.n, "Sample count");
  synth->add_option("--dim", synth_cfg.dim, "Feature dimension (>= 3)");
  synth->add_option("--rho", synth_cfg.rho, "Sampling-bias probability in (0.5, 1)");
  synth->add_option("--bias-scale", synth_cfg.bias_scale, "Spurious channel scale B (>= 1)");
  synth->add_option("--seed", synth_cfg.seed, "Random seed");
  synth->add_option("--out", synth_out, "Output path")->required();
  synth->add_option("--format", synth_format, "csv or binary (default: from extension)");

  // --- convert / inspect ---
  std::string conv_in, conv_out, conv_in_fmt, conv_out_fmt;
  auto* convert = app.add_subcommand("convert", "Convert a dataset between csv and binary");
  convert->add_option("--in", conv_in)->required();
  convert->add_option("--out", conv_out)->required();
  convert->add_option("--in-format", conv_in_fmt);
  convert->add_option("--out-format", conv_out_fmt);

  std::string inspect_path, inspect_fmt;
  auto* inspect = app.add_subcommand("inspect", "Print dataset shape and class counts");
  inspect->add_option("--data", inspect_path)->required();
  inspect->add_option("--format", inspect_fmt);

  // --- groups ---
  std::string groups_data, groups_fmt, groups_out, groups_assign;
  auto* groups = app.add_subcommand("groups", "Compute centroids, U/V split and bias flags");
  groups->add_option("--data", groups_data)->required();
  groups->add_option("--format", groups_fmt);
  groups->add_option("--out", groups_out, "Report JSON path")->required();
  groups->add_option("--assignments", groups_assign, "Per-sample assignment CSV path");

  // --- fit-transform ---
  std::string ft_data, ft_fmt, ft_out, ft_loss_form = "squared", ft_trace;
  nsf::TransformTrainConfig ft_cfg;
  auto* fit_transform =
      app.add_subcommand("fit-transform", "Learn the channel-wise debiasing transform");
  fit_transform->add_option("--data", ft_data)->required();
  fit_transform->add_option("--format", ft_fmt);
  fit_transform->add_option("--lambda", ft_cfg.lambda, "Ridge coefficient");
  fit_transform->add_option("--lr", ft_cfg.learning_rate, "Learning rate");
  fit_transform->add_option("--steps", ft_cfg.steps, "Optimization steps");
  fit_transform->add_option("--loss-form", ft_loss_form, "squared or l2norm");
  fit_transform->add_option("--seed", ft_cfg.seed);
  fit_transform->add_option("--out", ft_out, "Bundle path")->required();
  fit_transform->add_option("--trace", ft_trace, "Loss trace CSV path");

  // --- fit-erm / fit-debiased ---
  std::string fe_data, fe_fmt, fe_out;
  nsf::ClassifierTrainConfig fe_cfg;
  auto* fit_erm = app.add_subcommand("fit-erm", "Train the ERM baseline head");
  fit_erm->add_option("--data", fe_data)->required();
  fit_erm->add_option("--format", fe_fmt);
  fit_erm->add_option("--lr", fe_cfg.learning_rate);
  fit_erm->add_option("--steps", fe_cfg.steps);
  fit_erm->add_option("--seed", fe_cfg.seed);
  fit_erm->add_option("--out", fe_out, "Bundle path")->required();

  std::string fd_data, fd_fmt, fd_out;
  nsf::ClassifierTrainConfig fd_cfg;
  auto* fit_debiased =
      app.add_subcommand("fit-debiased", "Train the minority-balanced head on t(x)");
  fit_debiased->add_option("--data", fd_data)->required();
  fit_debiased->add_option("--format", fd_fmt);
  fit_debiased->add_option("--lr", fd_cfg.learning_rate);
  fit_debiased->add_option("--steps", fd_cfg.steps);
  fit_debiased->add_option("--batch-size", fd_cfg.batch_size);
  fit_debiased->add_option("--seed", fd_cfg.seed);
  fit_debiased->add_option("--out", fd_out, "Bundle path (must contain a transform)")
      ->required();

  // --- predict / eval / ablate / discard-sweep ---
  std::string pr_bundle, pr_data, pr_fmt, pr_out, pr_head = "debiased";
  bool pr_transform = false;
  auto* predict_cmd = app.add_subcommand("predict", "Write argmax predictions as CSV");
  predict_cmd->add_option("--bundle", pr_bundle)->required();
  predict_cmd->add_option("--data", pr_data)->required();
  predict_cmd->add_option("--format", pr_fmt);
  predict_cmd->add_option("--out", pr_out)->required();
  predict_cmd->add_option("--head", pr_head, "erm or debiased");
  predict_cmd->add_flag("--use-transform", pr_transform, "Apply the bundle transform first");

  std::string ev_bundle, ev_data, ev_fmt, ev_out, ev_head = "debiased";
  bool ev_transform = true;
  auto* eval_cmd = app.add_subcommand("eval", "Per-group and worst-group accuracy");
  eval_cmd->add_option("--bundle", ev_bundle)->required();
  eval_cmd->add_option("--data", ev_data)->required();
  eval_cmd->add_option("--format", ev_fmt);
  eval_cmd->add_option("--out", ev_out)->required();
  eval_cmd->add_option("--head", ev_head, "erm or debiased");
  eval_cmd->add_flag("--use-transform,!--no-transform", ev_transform);

  std::string ab_bundle, ab_data, ab_fmt, ab_out;
  auto* ablate = app.add_subcommand("ablate", "Evaluate the {h, h'} x {x, t(x)} grid");
  ablate->add_option("--bundle", ab_bundle)->required();
  ablate->add_option("--data", ab_data)->required();
  ablate->add_option("--format", ab_fmt);
  ablate->add_option("--out", ab_out)->required();

  std::string ds_bundle, ds_data, ds_fmt, ds_out, ds_fractions = "0.1,0.25,0.5";
  std::uint64_t ds_seed = 0;
  auto* sweep = app.add_subcommand("discard-sweep",
                                   "WGA/mean accuracy under channel discarding");
  sweep->add_option("--bundle", ds_bundle)->required();
  sweep->add_option("--data", ds_data)->required();
  sweep->add_option("--format", ds_fmt);
  sweep->add_option("--fractions", ds_fractions, "Comma-separated discard fractions");
  sweep->add_option("--seed", ds_seed, "Seed for the random strategy");
  sweep->add_option("--out", ds_out)->required();

  // --- run / validate ---
  std::string run_config_path, run_out, run_data, run_fmt, run_loss_form;
  bool run_synth = false;
  nsf::SyntheticConfig run_synth_cfg;
  nsf::RunConfig run_cfg;
  std::size_t run_seed_count = 0;
  std::string run_seed_list;
  auto* run = app.add_subcommand("run", "Run the full pipeline end to end");
  run->add_option("--config", run_config_path, "Run config file");
  run->add_flag("--synth", run_synth, "Generate synthetic data");
  run->add_option("--n", run_synth_cfg.n);
  run->add_option("--dim", run_synth_cfg.dim);
  run->add_option("--rho", run_synth_cfg.rho);
  run->add_option("--bias-scale", run_synth_cfg.bias_scale);
  run->add_option("--data", run_data, "Dataset path (when not synthetic)");
  run->add_option("--format", run_fmt);
  run->add_option("--seeds", run_seed_count, "Number of seeds (0..n-1)");
  run->add_option("--seed-list", run_seed_list, "Explicit comma-separated seeds");
  run->add_option("--lambda", run_cfg.transform.lambda);
  run->add_option("--transform-steps", run_cfg.transform.steps);
  run->add_option("--loss-form", run_loss_form);
  run->add_option("--classifier-steps", run_cfg.classifier.steps);
  run->add_option("--batch-size", run_cfg.classifier.batch_size);
  run->add_option("--out", run_out, "Output directory");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a run config file");
  validate->add_option("--config", validate_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto ds = nsf::generate(synth_cfg);
      const auto fmt = synth_format.empty() ? nsf::format_from_path(synth_out)
                                            : nsf::parse_dataset_format(synth_format);
      nsf::write_dataset(ds, synth_out, fmt);
      log_info("wrote " + synth_out);
    } else if (*convert) {
      const auto ds = load_data(conv_in, conv_in_fmt);
      const auto fmt = conv_out_fmt.empty() ? nsf::format_from_path(conv_out)
                                            : nsf::parse_dataset_format(conv_out_fmt);
      nsf::write_dataset(ds, conv_out, fmt);
    } else if (*inspect) {
      const auto ds = load_data(inspect_path, inspect_fmt);
      std::cout << "samples: " << ds.size() << "\ndim: " << ds.dim()
                << "\nclasses: " << ds.class_count
                << "\ngroups: " << (ds.has_groups() ? "present" : "absent") << "\n";
      const auto counts = ds.class_counts();
      for (std::size_t k = 0; k < counts.size(); ++k)
        std::cout << "class " << k << ": " << counts[k] << " samples\n";
    } else if (*groups) {
      const auto ds = load_data(groups_data, groups_fmt);
      const auto centroids = nsf::compute_centroids(ds);
      const auto ga = nsf::assign_groups(ds, centroids);
      const auto report = nsf::bias_presence(ga);
      nlohmann::json j;
      j["schema"] = "nsf-groups-1";
      for (std::size_t k = 0; k < report.size(); ++k)
        j["classes"].push_back({{"class", k},
                                {"biased", report[k].biased},
                                {"u_count", report[k].u_count},
                                {"v_count", report[k].v_count}});
      std::ofstream out(groups_out, std::ios::trunc);
      out << j.dump(2) << "\n";
      const std::string assign_path =
          groups_assign.empty() ? groups_out + ".assignments.csv" : groups_assign;
      write_assignments_csv(ds, ga, assign_path);
      log_info("wrote " + groups_out + " and " + assign_path);
    } else if (*fit_transform) {
      ft_cfg.loss_form = nsf::parse_loss_form(ft_loss_form);
      const auto ds = load_data(ft_data, ft_fmt);
      auto centroids = nsf::compute_centroids(ds);
      const auto ga = nsf::assign_groups(ds, centroids);
      bool any_biased = false;
      for (const auto& cb : nsf::bias_presence(ga)) any_biased |= cb.biased;
      if (any_biased) nsf::estimate_invariant(ds, ga, centroids);
      const auto result = nsf::train_transform(ds, ga, centroids, ft_cfg);
      if (result.skipped)
        std::cerr << "bias not detected, transform skipped (identity written)\n";
      auto bundle = load_or_new_bundle(ft_out);
      bundle.transform = result.transform;
      bundle.centroids = centroids;
      bundle.metadata["transform_skipped"] = result.skipped;
      nsf::save_bundle(bundle, ft_out);
      if (!ft_trace.empty()) {
        std::ofstream out(ft_trace, std::ios::trunc);
        out << "step,loss\n";
        out.precision(17);
        for (std::size_t s = 0; s < result.loss_trace.size(); ++s)
          out << s << "," << result.loss_trace[s] << "\n";
      }
    } else if (*fit_erm) {
      const auto ds = load_data(fe_data, fe_fmt);
      const auto head = nsf::train_erm_head(ds, fe_cfg);
      auto bundle = load_or_new_bundle(fe_out);
      bundle.erm_classifier = head;
      nsf::save_bundle(bundle, fe_out);
    } else if (*fit_debiased) {
      const auto ds = load_data(fd_data, fd_fmt);
      auto bundle = load_or_new_bundle(fd_out);
      if (!bundle.transform || !bundle.centroids)
        throw std::runtime_error(fd_out +
                                 ": bundle needs a transform and centroids; run "
                                 "fit-transform first");
      const auto ga = nsf::assign_groups(ds, *bundle.centroids);
      const auto sampler = nsf::build_sampler(ds, *bundle.transform, *bundle.centroids, ga);
      if (sampler.m1_fallback)
        std::cerr << "warning: minority pool empty under the transform-alignment "
                     "condition, fell back to all deviating samples\n";
      bundle.debiased_classifier =
          nsf::train_debiased_head(ds, *bundle.transform, sampler, fd_cfg);
      nsf::save_bundle(bundle, fd_out);
    } else if (*predict_cmd) {
      const auto ds = load_data(pr_data, pr_fmt);
      const auto bundle = nsf::load_bundle(pr_bundle);
      const nsf::AffineTransform* t = nullptr;
      if (pr_transform) {
        if (!bundle.transform) throw std::runtime_error("bundle has no transform");
        t = &*bundle.transform;
      }
      const auto preds = nsf::predict(pick_head(bundle, pr_head), ds.features, t);
      std::ofstream out(pr_out, std::ios::trunc);
      out << "index,prediction\n";
      for (std::size_t i = 0; i < preds.size(); ++i) out << i << "," << preds[i] << "\n";
    } else if (*eval_cmd) {
      const auto ds = load_data(ev_data, ev_fmt);
      const auto bundle = nsf::load_bundle(ev_bundle);
      const nsf::AffineTransform* t = nullptr;
      if (ev_transform && bundle.transform) t = &*bundle.transform;
      write_eval_report(nsf::evaluate(pick_head(bundle, ev_head), ds, t), ev_out);
    } else if (*ablate) {
      const auto ds = load_data(ab_data, ab_fmt);
      const auto bundle = nsf::load_bundle(ab_bundle);
      const auto grid = nsf::ablation_grid(
          ds, bundle.erm_classifier ? &*bundle.erm_classifier : nullptr,
          bundle.debiased_classifier ? &*bundle.debiased_classifier : nullptr,
          bundle.transform ? &*bundle.transform : nullptr);
      std::ofstream out(ab_out, std::ios::trunc);
      out << "classifier,features,mean_accuracy,worst_group_accuracy\n";
      for (const auto& cell : grid) {
        out << cell.classifier_name << "," << cell.feature_name << ",";
        if (cell.report)
          out << cell.report->mean_accuracy << "," << cell.report->worst_group_accuracy;
        else
          out << "missing,missing";
        out << "\n";
      }
    } else if (*sweep) {
      const auto ds = load_data(ds_data, ds_fmt);
      const auto bundle = nsf::load_bundle(ds_bundle);
      if (!bundle.transform || !bundle.debiased_classifier)
        throw std::runtime_error("discard-sweep needs a transform and a debiased classifier");
      const auto rows = nsf::channel_discard_sweep(
          ds, *bundle.debiased_classifier, *bundle.transform,
          parse_fraction_list(ds_fractions), ds_seed);
      std::ofstream out(ds_out, std::ios::trunc);
      out << "fraction,strategy,mean_accuracy,worst_group_accuracy\n";
      for (const auto& row : rows) {
        out << row.fraction << ","
            << (row.strategy == nsf::DiscardStrategy::LowestScale ? "lowest_w" : "random")
            << "," << row.report.mean_accuracy << "," << row.report.worst_group_accuracy
            << "\n";
      }
    } else if (*run) {
      nsf::RunConfig config = run_cfg;
      if (!run_config_path.empty()) {
        nsf::ConfigDiagnostics diag;
        config = nsf::parse_run_config(run_config_path, diag);
        if (!diag.ok()) {
          for (const auto& e : diag.errors) std::cerr << "config error: " << e << "\n";
          return 2;
        }
      }
      if (run_synth) config.synth = run_synth_cfg;
      if (!run_data.empty()) {
        config.data_path = run_data;
        config.data_format = run_fmt.empty() ? nsf::format_from_path(run_data)
                                             : nsf::parse_dataset_format(run_fmt);
      }
      if (!run_loss_form.empty())
        config.transform.loss_form = nsf::parse_loss_form(run_loss_form);
      if (run_seed_count > 0) {
        config.seeds.clear();
        for (std::size_t s = 0; s < run_seed_count; ++s) config.seeds.push_back(s);
      }
      if (!run_seed_list.empty()) {
        config.seeds.clear();
        std::stringstream ss(run_seed_list);
        std::string token;
        while (std::getline(ss, token, ',')) config.seeds.push_back(std::stoull(token));
      }
      if (!run_out.empty()) config.out_dir = run_out;
      const auto result = nsf::run_pipeline(config);
      std::cout << "erm: mean_acc=" << result.erm_mean.mean;
      if (result.groups_available)
        std::cout << " wga=" << result.erm_wga.mean << " (std " << result.erm_wga.std << ")";
      std::cout << "\ndebiased: mean_acc=" << result.debiased_mean.mean;
      if (result.groups_available)
        std::cout << " wga=" << result.debiased_wga.mean << " (std "
                  << result.debiased_wga.std << ")";
      else
        std::cout << " (groups unavailable, mean accuracy only)";
      std::cout << "\n";
    } else if (*validate) {
      nsf::ConfigDiagnostics diag;
      nsf::parse_run_config(validate_path, diag);
      if (!diag.ok()) {
        for (const auto& e : diag.errors) std::cerr << "config error: " << e << "\n";
        return 2;
      }
      std::cout << "config ok\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
