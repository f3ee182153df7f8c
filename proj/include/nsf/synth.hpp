#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "nsf/dataset.hpp"
#include "nsf/rng.hpp"

namespace nsf {

// Bias-sampled generator: features laid out [B*a, y, noise...], where the
// spurious attribute a agrees with the label y with probability rho.
struct SyntheticConfig {
  std::size_t n = 4000;
  std::size_t dim = 12;
  double rho = 0.9;
  double bias_scale = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 1) throw std::invalid_argument("synthetic config: n must be positive");
    if (dim < 3) throw std::invalid_argument("synthetic config: dim must be >= 3");
    if (!(rho > 0.5 && rho < 1.0))
      throw std::invalid_argument("synthetic config: rho must be in (0.5, 1)");
    if (!(bias_scale >= 1.0))
      throw std::invalid_argument("synthetic config: bias_scale must be >= 1");
  }
};

// Group encoding for the binary synthetic model: g = 2*label + conflict,
// where conflict is 1 when the attribute disagrees with the label. Odd group
// ids are the minority (bias-conflicting) groups.
inline int synthetic_group_id(int label01, int attribute_sign) {
  const int y = 2 * label01 - 1;
  return 2 * label01 + (attribute_sign == y ? 0 : 1);
}

inline int attribute_from_group(int group_id) {
  const int label01 = group_id / 2;
  const int y = 2 * label01 - 1;
  return (group_id % 2 == 0) ? y : -y;
}

inline EmbeddingDataset generate(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  EmbeddingDataset ds;
  ds.class_count = 2;
  ds.features = Matrix(config.n, config.dim);
  ds.labels.resize(config.n);
  ds.groups.resize(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    const int y = rng.next_bool() ? 1 : -1;
    const int a = (rng.next_double() < config.rho) ? y : -y;
    auto row = ds.features.row(i);
    row[0] = config.bias_scale * a;
    row[1] = static_cast<double>(y);
    for (std::size_t j = 2; j < config.dim; ++j) row[j] = rng.next_gaussian();
    const int label01 = (y + 1) / 2;
    ds.labels[i] = label01;
    ds.groups[i] = synthetic_group_id(label01, a);
  }
  return ds;
}

// 1 - (2*rho - 1)^2 * B^4. Negative means the strong-spurious condition holds
// and the group-separability guarantees apply.
inline double strong_spurious_margin(double rho, double bias_scale) {
  const double r = 2.0 * rho - 1.0;
  const double b2 = bias_scale * bias_scale;
  return 1.0 - r * r * b2 * b2;
}

}  // namespace nsf
