#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/adam.hpp"
#include "nsf/dataset.hpp"
#include "nsf/grouping.hpp"
#include "nsf/rng.hpp"

namespace nsf {

// Channel-wise affine map t(x) = w.(x - b) + b. Identity when w == 1.
struct AffineTransform {
  std::vector<double> scale;   // w
  std::vector<double> offset;  // b

  static AffineTransform identity(std::size_t dim) {
    return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
  }

  std::size_t dim() const { return scale.size(); }

  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != scale.size())
      throw std::invalid_argument("transform apply: dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
      out[j] = scale[j] * (x[j] - offset[j]) + offset[j];
    return out;
  }

  Matrix apply(const Matrix& features) const {
    if (features.cols() != scale.size())
      throw std::invalid_argument("transform apply: dimension mismatch");
    Matrix out(features.rows(), features.cols());
    for (std::size_t i = 0; i < features.rows(); ++i) {
      auto x = features.row(i);
      auto r = out.row(i);
      for (std::size_t j = 0; j < x.size(); ++j)
        r[j] = scale[j] * (x[j] - offset[j]) + offset[j];
    }
    return out;
  }
};

enum class TransformLossForm { Squared, L2Norm };

inline TransformLossForm parse_loss_form(const std::string& s) {
  if (s == "squared") return TransformLossForm::Squared;
  if (s == "l2norm") return TransformLossForm::L2Norm;
  throw std::invalid_argument("loss form must be 'squared' or 'l2norm', got '" + s + "'");
}

struct TransformTrainConfig {
  double lambda = 1e-4;
  double learning_rate = 1e-3;
  std::size_t steps = 2000;
  TransformLossForm loss_form = TransformLossForm::Squared;
  std::uint64_t seed = 0;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("transform config: lambda must be >= 0");
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("transform config: learning_rate must be positive");
    if (steps < 1) throw std::invalid_argument("transform config: steps must be >= 1");
  }
};

struct TransformTrainResult {
  AffineTransform transform;
  std::vector<double> loss_trace;  // one entry per step
  bool skipped = false;            // true when no class had bias detected
};

namespace detail {

constexpr double kL2NormEps = 1e-12;

// Alignment loss and its gradient w.r.t. (w, b) at the given parameters.
// loss = lambda*||w||_2 + (1/N) sum_i o_i * dist(t(x_i), target_{y_i}),
// dist being the squared norm or the (epsilon-guarded) norm.
inline double transform_loss_grad(const EmbeddingDataset& ds, const GroupAssignment& ga,
                                  const CentroidSet& centroids,
                                  const TransformTrainConfig& cfg,
                                  const std::vector<double>& w, const std::vector<double>& b,
                                  std::vector<double>* gw, std::vector<double>* gb) {
  const std::size_t n = ds.size();
  const std::size_t dim = ds.dim();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (gw) {
    std::fill(gw->begin(), gw->end(), 0.0);
    std::fill(gb->begin(), gb->end(), 0.0);
  }
  double loss = 0.0;
  std::vector<double> residual(dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!ga.sample_mask[i]) continue;
    const auto x = ds.features.row(i);
    const auto target = centroids.target(static_cast<std::size_t>(ds.labels[i]));
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      residual[j] = w[j] * (x[j] - b[j]) + b[j] - target[j];
      sq += residual[j] * residual[j];
    }
    double coeff;  // d(dist)/d(residual_j) = coeff * residual_j
    if (cfg.loss_form == TransformLossForm::Squared) {
      loss += sq * inv_n;
      coeff = 2.0 * inv_n;
    } else {
      const double norm = std::sqrt(sq + kL2NormEps);
      loss += norm * inv_n;
      coeff = inv_n / norm;
    }
    if (gw) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double g = coeff * residual[j];
        (*gw)[j] += g * (x[j] - b[j]);
        (*gb)[j] += g * (1.0 - w[j]);
      }
    }
  }
  double wnorm = 0.0;
  for (double v : w) wnorm += v * v;
  wnorm = std::sqrt(wnorm);
  loss += cfg.lambda * wnorm;
  if (gw && wnorm > 0.0) {
    for (std::size_t j = 0; j < dim; ++j) (*gw)[j] += cfg.lambda * w[j] / wnorm;
  }
  return loss;
}

}  // namespace detail

// Learn the channel-wise transform by full-batch adaptive gradient descent
// from the identity initialization. Returns the identity with skipped=true
// when no class has a detected bias.
inline TransformTrainResult train_transform(const EmbeddingDataset& ds,
                                            const GroupAssignment& ga,
                                            const CentroidSet& centroids,
                                            const TransformTrainConfig& cfg) {
  cfg.validate();
  const std::size_t dim = ds.dim();
  TransformTrainResult result;
  result.transform = AffineTransform::identity(dim);
  const bool any_active =
      std::any_of(ga.sample_mask.begin(), ga.sample_mask.end(), [](bool m) { return m; });
  if (!centroids.any_valid() || !any_active) {
    result.skipped = true;
    return result;
  }

  std::vector<double>& w = result.transform.scale;
  std::vector<double>& b = result.transform.offset;
  std::vector<double> gw(dim), gb(dim);
  AdamOptimizer opt_w(dim, cfg.learning_rate);
  AdamOptimizer opt_b(dim, cfg.learning_rate);
  result.loss_trace.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double loss = detail::transform_loss_grad(ds, ga, centroids, cfg, w, b, &gw, &gb);
    if (!std::isfinite(loss))
      throw std::runtime_error("transform training diverged: non-finite loss at step " +
                               std::to_string(step));
    result.loss_trace.push_back(loss);
    opt_w.step(w, gw);
    opt_b.step(b, gb);
  }
  return result;
}

enum class DiscardStrategy { LowestScale, Random };

inline DiscardStrategy parse_discard_strategy(const std::string& s) {
  if (s == "lowest_w") return DiscardStrategy::LowestScale;
  if (s == "random") return DiscardStrategy::Random;
  throw std::invalid_argument("discard strategy must be 'lowest_w' or 'random', got '" + s +
                              "'");
}

// Zero out floor(fraction * D) scale entries, chosen either as the channels
// with the smallest |w| or uniformly at random.
inline AffineTransform discard_channels(const AffineTransform& t, double fraction,
                                        DiscardStrategy strategy, std::uint64_t seed = 0) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("discard fraction must be in [0, 1)");
  const std::size_t dim = t.dim();
  const auto count = static_cast<std::size_t>(fraction * static_cast<double>(dim));
  AffineTransform out = t;
  if (count == 0) return out;
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), 0);
  if (strategy == DiscardStrategy::LowestScale) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(t.scale[a]) < std::abs(t.scale[b]);
    });
  } else {
    Rng rng(seed);
    for (std::size_t i = dim; i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);
  }
  for (std::size_t i = 0; i < count; ++i) out.scale[order[i]] = 0.0;
  return out;
}

}  // namespace nsf
