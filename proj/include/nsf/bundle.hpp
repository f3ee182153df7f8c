#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "nsf/classifier.hpp"
#include "nsf/grouping.hpp"
#include "nsf/transform.hpp"

namespace nsf {

// Persisted pipeline artifacts. Every numeric field is stored as a 64-bit
// float so a save/load round-trip is lossless.
struct ArtifactBundle {
  std::optional<AffineTransform> transform;
  std::optional<LinearClassifier> erm_classifier;
  std::optional<LinearClassifier> debiased_classifier;
  std::optional<CentroidSet> centroids;
  nlohmann::json metadata = nlohmann::json::object();

  static constexpr const char* kFormatVersion = "nsf-bundle-1";
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& row = j.at(i);
    if (row.size() != cols) throw std::runtime_error("bundle: ragged matrix rows");
    for (std::size_t jj = 0; jj < cols; ++jj) m(i, jj) = row.at(jj).get<double>();
  }
  return m;
}

inline nlohmann::json classifier_to_json(const LinearClassifier& h) {
  return {{"weights", matrix_to_json(h.weights)}, {"bias", h.bias}};
}

inline LinearClassifier classifier_from_json(const nlohmann::json& j) {
  LinearClassifier h;
  h.weights = matrix_from_json(j.at("weights"));
  h.bias = j.at("bias").get<std::vector<double>>();
  return h;
}

}  // namespace detail

inline void save_bundle(const ArtifactBundle& bundle, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = ArtifactBundle::kFormatVersion;
  j["metadata"] = bundle.metadata;
  if (bundle.transform) {
    j["transform"] = {{"scale", bundle.transform->scale},
                      {"offset", bundle.transform->offset}};
  }
  if (bundle.erm_classifier)
    j["erm_classifier"] = detail::classifier_to_json(*bundle.erm_classifier);
  if (bundle.debiased_classifier)
    j["debiased_classifier"] = detail::classifier_to_json(*bundle.debiased_classifier);
  if (bundle.centroids) {
    j["centroids"] = {{"biased", detail::matrix_to_json(bundle.centroids->biased)},
                      {"invariant", detail::matrix_to_json(bundle.centroids->invariant)},
                      {"valid_mask", bundle.centroids->valid_mask}};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open bundle for writing");
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error(path + ": bundle write failed");
}

inline ArtifactBundle load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open bundle");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": corrupt bundle: " + e.what());
  }
  if (!j.contains("format_version"))
    throw std::runtime_error(path + ": corrupt bundle: missing format_version");
  if (j.at("format_version") != ArtifactBundle::kFormatVersion)
    throw std::runtime_error(path + ": incompatible bundle version '" +
                             j.at("format_version").get<std::string>() + "', expected '" +
                             ArtifactBundle::kFormatVersion + "'");
  ArtifactBundle bundle;
  bundle.metadata = j.value("metadata", nlohmann::json::object());
  try {
    if (j.contains("transform")) {
      AffineTransform t;
      t.scale = j["transform"].at("scale").get<std::vector<double>>();
      t.offset = j["transform"].at("offset").get<std::vector<double>>();
      bundle.transform = std::move(t);
    }
    if (j.contains("erm_classifier"))
      bundle.erm_classifier = detail::classifier_from_json(j["erm_classifier"]);
    if (j.contains("debiased_classifier"))
      bundle.debiased_classifier = detail::classifier_from_json(j["debiased_classifier"]);
    if (j.contains("centroids")) {
      CentroidSet cs;
      cs.biased = detail::matrix_from_json(j["centroids"].at("biased"));
      cs.invariant = detail::matrix_from_json(j["centroids"].at("invariant"));
      cs.valid_mask = j["centroids"].at("valid_mask").get<std::vector<bool>>();
      bundle.centroids = std::move(cs);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": corrupt bundle: " + e.what());
  }
  return bundle;
}

}  // namespace nsf
