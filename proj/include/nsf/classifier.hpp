#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/adam.hpp"
#include "nsf/dataset.hpp"
#include "nsf/grouping.hpp"
#include "nsf/rng.hpp"
#include "nsf/transform.hpp"

namespace nsf {

// Linear softmax head: logits = W x + bias.
struct LinearClassifier {
  Matrix weights;             // K x D
  std::vector<double> bias;   // length K

  std::size_t class_count() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }

  std::vector<double> logits(std::span<const double> x) const {
    if (x.size() != dim())
      throw std::invalid_argument("classifier: feature dimension mismatch");
    std::vector<double> z(class_count());
    for (std::size_t k = 0; k < class_count(); ++k) {
      double s = bias[k];
      auto wk = weights.row(k);
      for (std::size_t j = 0; j < x.size(); ++j) s += wk[j] * x[j];
      z[k] = s;
    }
    return z;
  }

  int predict_one(std::span<const double> x) const {
    const auto z = logits(x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
  }
};

inline std::vector<double> softmax(std::vector<double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

struct ClassifierTrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 1000;
  std::size_t batch_size = 128;  // used by the minority-balanced trainer
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("classifier config: learning_rate must be positive");
    if (steps < 1) throw std::invalid_argument("classifier config: steps must be >= 1");
    if (batch_size < 1)
      throw std::invalid_argument("classifier config: batch_size must be >= 1");
  }
};

namespace detail {

// Mean cross-entropy over the index set, accumulating softmax gradients into
// flat (K*D) weight and (K) bias gradient buffers scaled by `grad_scale`.
inline double softmax_ce_accumulate(const Matrix& features, const std::vector<int>& labels,
                                    std::span<const std::size_t> indices,
                                    const Matrix& weights, const std::vector<double>& bias,
                                    double grad_scale, std::vector<double>* gw,
                                    std::vector<double>* gb) {
  const std::size_t k_count = weights.rows();
  const std::size_t dim = weights.cols();
  double loss = 0.0;
  std::vector<double> z(k_count);
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (std::size_t idx : indices) {
    auto x = features.row(idx);
    for (std::size_t k = 0; k < k_count; ++k) {
      double s = bias[k];
      auto wk = weights.row(k);
      for (std::size_t j = 0; j < dim; ++j) s += wk[j] * x[j];
      z[k] = s;
    }
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double& v : z) {
      v = std::exp(v - zmax);
      sum += v;
    }
    const auto y = static_cast<std::size_t>(labels[idx]);
    loss -= inv * std::log(z[y] / sum);
    if (gw) {
      for (std::size_t k = 0; k < k_count; ++k) {
        const double p = z[k] / sum - (k == y ? 1.0 : 0.0);
        const double g = grad_scale * inv * p;
        for (std::size_t j = 0; j < dim; ++j) (*gw)[k * dim + j] += g * x[j];
        (*gb)[k] += g;
      }
    }
  }
  return loss;
}

inline LinearClassifier init_head(std::size_t k_count, std::size_t dim, Rng& rng) {
  LinearClassifier h;
  h.weights = Matrix(k_count, dim);
  h.bias.assign(k_count, 0.0);
  for (double& w : h.weights.data()) w = 0.01 * rng.next_gaussian();
  return h;
}

inline void check_finite(double loss, const char* what, std::size_t step) {
  if (!std::isfinite(loss))
    throw std::runtime_error(std::string(what) +
                             " diverged: non-finite loss at step " + std::to_string(step) +
                             "; try a lower learning rate");
}

}  // namespace detail

// ERM baseline: full-batch mean cross-entropy over every sample.
inline LinearClassifier train_erm_head(const EmbeddingDataset& ds,
                                       const ClassifierTrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  const auto k_count = static_cast<std::size_t>(ds.class_count);
  const std::size_t dim = ds.dim();
  Rng rng(cfg.seed);
  LinearClassifier h = detail::init_head(k_count, dim, rng);
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> gw(k_count * dim), gb(k_count);
  AdamOptimizer opt_w(gw.size(), cfg.learning_rate);
  AdamOptimizer opt_b(gb.size(), cfg.learning_rate);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    const double loss = detail::softmax_ce_accumulate(ds.features, ds.labels, all, h.weights,
                                                      h.bias, 1.0, &gw, &gb);
    detail::check_finite(loss, "ERM head training", step);
    opt_w.step(h.weights.data(), gw);
    opt_b.step(h.bias, gb);
  }
  return h;
}

struct SamplerState {
  std::vector<std::size_t> m1_indices;  // minority pool
  std::vector<std::size_t> m2_indices;  // majority pool
  bool m1_fallback = false;             // true when M1 fell back to all d>0 samples
};

// Two sampling pools: M1 holds samples deviating under the biased centroids
// but aligned with their class under the invariant centroids after the
// transform; M2 holds conforming samples. Samples from masked classes are
// eligible for M2 only.
inline SamplerState build_sampler(const EmbeddingDataset& ds, const AffineTransform& t,
                                  const CentroidSet& centroids, const GroupAssignment& ga) {
  SamplerState s;
  Matrix targets(centroids.biased.rows(), centroids.biased.cols());
  for (std::size_t k = 0; k < targets.rows(); ++k) {
    auto src = centroids.target(k);
    for (std::size_t j = 0; j < targets.cols(); ++j) targets(k, j) = src[j];
  }
  std::vector<std::size_t> u_pool;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double d = ga.rel_distance[i];
    if (d < 0.0) {
      s.m2_indices.push_back(i);
    } else if (d > 0.0 && ga.sample_mask[i]) {
      u_pool.push_back(i);
      const auto tx = t.apply(ds.features.row(i));
      if (relative_distance(tx, ds.labels[i], targets) < 0.0) s.m1_indices.push_back(i);
    }
  }
  if (s.m1_indices.empty()) {
    s.m1_indices = std::move(u_pool);
    s.m1_fallback = true;
  }
  if (s.m1_indices.empty() && s.m2_indices.empty())
    throw std::runtime_error("build_sampler: both pools empty, degenerate dataset");
  if (s.m1_indices.empty() || s.m2_indices.empty())
    throw std::runtime_error("build_sampler: a sampling pool is empty, cannot balance");
  return s;
}

// Minority-balanced head: each step draws equal-size batches with replacement
// from both pools and minimizes the sum of the two mean cross-entropy terms.
// Features pass through the fixed transform; no gradient reaches it.
inline LinearClassifier train_debiased_head(const EmbeddingDataset& ds,
                                            const AffineTransform& t, const SamplerState& s,
                                            const ClassifierTrainConfig& cfg) {
  cfg.validate();
  const auto k_count = static_cast<std::size_t>(ds.class_count);
  const std::size_t dim = ds.dim();
  const Matrix transformed = t.apply(ds.features);
  Rng rng(cfg.seed);
  LinearClassifier h = detail::init_head(k_count, dim, rng);
  std::vector<double> gw(k_count * dim), gb(k_count);
  AdamOptimizer opt_w(gw.size(), cfg.learning_rate);
  AdamOptimizer opt_b(gb.size(), cfg.learning_rate);
  std::vector<std::size_t> batch1(cfg.batch_size), batch2(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& idx : batch1) idx = s.m1_indices[rng.next_below(s.m1_indices.size())];
    for (auto& idx : batch2) idx = s.m2_indices[rng.next_below(s.m2_indices.size())];
    std::fill(gw.begin(), gw.end(), 0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
    double loss = detail::softmax_ce_accumulate(transformed, ds.labels, batch1, h.weights,
                                                h.bias, 1.0, &gw, &gb);
    loss += detail::softmax_ce_accumulate(transformed, ds.labels, batch2, h.weights, h.bias,
                                          1.0, &gw, &gb);
    detail::check_finite(loss, "debiased head training", step);
    opt_w.step(h.weights.data(), gw);
    opt_b.step(h.bias, gb);
  }
  return h;
}

// Argmax predictions, optionally through a transform.
inline std::vector<int> predict(const LinearClassifier& h, const Matrix& features,
                                const AffineTransform* transform = nullptr) {
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (transform) {
      const auto tx = transform->apply(features.row(i));
      out[i] = h.predict_one(tx);
    } else {
      out[i] = h.predict_one(features.row(i));
    }
  }
  return out;
}

}  // namespace nsf
