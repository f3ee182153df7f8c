#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "nsf/bundle.hpp"
#include "nsf/io.hpp"
#include "nsf/rng.hpp"
#include "nsf/synth.hpp"

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

nsf::EmbeddingDataset random_dataset(nsf::Rng& rng, bool with_groups) {
  nsf::EmbeddingDataset ds;
  const std::size_t n = 1 + rng.next_below(40);
  const std::size_t dim = 1 + rng.next_below(8);
  ds.class_count = 2 + static_cast<int>(rng.next_below(3));
  ds.features = nsf::Matrix(n, dim);
  // Values representable as float32 so the csv/binary round trip is exact.
  for (double& v : ds.features.data())
    v = static_cast<double>(static_cast<float>(rng.next_gaussian()));
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = static_cast<int>(rng.next_below(ds.class_count));
  // Densify so the loader's label remapping is the identity.
  nsf::densify_labels(ds.labels);
  int max_label = 0;
  for (int l : ds.labels) max_label = std::max(max_label, l);
  ds.class_count = std::max(max_label + 1, 2);
  if (with_groups) {
    ds.groups.resize(n);
    for (auto& g : ds.groups) g = static_cast<int>(rng.next_below(4));
  }
  return ds;
}

}  // namespace

TEST_CASE("csv parsing of a labeled, grouped sample") {
  TempFile f("nsf_io_basic.csv");
  {
    std::ofstream out(f.path);
    out << "label,group,f0,f1,f2\n1,0,2.4,1.0,0.1\n";
  }
  const auto ds = nsf::read_dataset(f.path, nsf::DatasetFormat::Csv);
  REQUIRE(ds.size() == 1);
  CHECK(ds.labels[0] == 0);  // labels densify to 0..K-1
  CHECK(ds.groups[0] == 0);
  CHECK(ds.features(0, 0) == Catch::Approx(2.4));
  CHECK(ds.features(0, 1) == Catch::Approx(1.0));
  CHECK(ds.features(0, 2) == Catch::Approx(0.1));
}

TEST_CASE("dataset round-trips through both formats") {
  nsf::Rng rng(2024);
  for (int iter = 0; iter < 20; ++iter) {
    const bool with_groups = rng.next_bool();
    const auto ds = random_dataset(rng, with_groups);
    for (auto format : {nsf::DatasetFormat::Csv, nsf::DatasetFormat::Binary}) {
      TempFile f(format == nsf::DatasetFormat::Csv ? "nsf_rt.csv" : "nsf_rt.bin");
      nsf::write_dataset(ds, f.path, format);
      const auto back = nsf::read_dataset(f.path, format);
      REQUIRE(back.size() == ds.size());
      REQUIRE(back.dim() == ds.dim());
      CHECK(back.labels == ds.labels);
      CHECK(back.groups == ds.groups);
      CHECK(back.features == ds.features);
    }
  }
}

TEST_CASE("csv errors carry row numbers") {
  TempFile f("nsf_io_bad.csv");
  {
    std::ofstream out(f.path);
    out << "label,f0,f1\n0,1.0,2.0\n1,3.0\n";
  }
  CHECK_THROWS_WITH(nsf::read_dataset(f.path, nsf::DatasetFormat::Csv),
                    Catch::Matchers::ContainsSubstring("row 3"));
}

TEST_CASE("empty and header-only csv files are rejected") {
  TempFile f("nsf_io_empty.csv");
  { std::ofstream out(f.path); }
  CHECK_THROWS_WITH(nsf::read_dataset(f.path, nsf::DatasetFormat::Csv),
                    Catch::Matchers::ContainsSubstring("no samples"));
  {
    std::ofstream out(f.path);
    out << "label,f0\n";
  }
  CHECK_THROWS_WITH(nsf::read_dataset(f.path, nsf::DatasetFormat::Csv),
                    Catch::Matchers::ContainsSubstring("no samples"));
}

TEST_CASE("binary reader rejects unknown magic and truncation") {
  TempFile f("nsf_io_magic.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "XXXX garbage";
  }
  CHECK_THROWS_WITH(nsf::read_dataset(f.path, nsf::DatasetFormat::Binary),
                    Catch::Matchers::ContainsSubstring("magic"));

  nsf::Rng rng(5);
  const auto ds = random_dataset(rng, true);
  TempFile g("nsf_io_trunc.bin");
  nsf::write_dataset(ds, g.path, nsf::DatasetFormat::Binary);
  const auto full = std::filesystem::file_size(g.path);
  std::filesystem::resize_file(g.path, full - 5);
  CHECK_THROWS_WITH(nsf::read_dataset(g.path, nsf::DatasetFormat::Binary),
                    Catch::Matchers::ContainsSubstring("truncated"));
}

TEST_CASE("dataset validation names the violated invariant") {
  nsf::EmbeddingDataset ds;
  ds.class_count = 2;
  ds.features = nsf::Matrix(2, 2);
  ds.labels = {0, 5};
  CHECK_THROWS_WITH(ds.validate(), Catch::Matchers::ContainsSubstring("label < K"));
  ds.labels = {0};
  CHECK_THROWS_WITH(ds.validate(),
                    Catch::Matchers::ContainsSubstring("feature row count equals label count"));
}

TEST_CASE("bundle round-trips losslessly") {
  nsf::ArtifactBundle bundle;
  bundle.transform = nsf::AffineTransform::identity(3);
  bundle.transform->scale = {1.0, 0.123456789012345678, -2.5};
  bundle.transform->offset = {0.0, 1e-17, 3.0};
  nsf::LinearClassifier h;
  h.weights = nsf::Matrix(2, 3);
  h.weights(0, 0) = 0.7;
  h.weights(1, 2) = -0.3;
  h.bias = {0.25, -0.5};
  bundle.erm_classifier = h;
  nsf::CentroidSet cs;
  cs.biased = nsf::Matrix(2, 3, 1.5);
  cs.invariant = nsf::Matrix(2, 3, 0.5);
  cs.valid_mask = {true, false};
  bundle.centroids = cs;
  bundle.metadata["seed"] = 7;

  TempFile f("nsf_bundle.json");
  nsf::save_bundle(bundle, f.path);
  const auto back = nsf::load_bundle(f.path);
  REQUIRE(back.transform.has_value());
  CHECK(back.transform->scale == bundle.transform->scale);
  CHECK(back.transform->offset == bundle.transform->offset);
  REQUIRE(back.erm_classifier.has_value());
  CHECK(back.erm_classifier->weights == h.weights);
  CHECK(back.erm_classifier->bias == h.bias);
  REQUIRE(back.centroids.has_value());
  CHECK(back.centroids->biased == cs.biased);
  CHECK(back.centroids->valid_mask == cs.valid_mask);
  CHECK(back.metadata["seed"] == 7);
  // Classifier-free bundles load with the classifier absent, not zeroed.
  CHECK_FALSE(back.debiased_classifier.has_value());
}

TEST_CASE("bundle loader reports corruption and version mismatch") {
  TempFile f("nsf_bundle_bad.json");
  {
    std::ofstream out(f.path);
    out << "{ \"format_version\": \"nsf-bundle-1\", \"transform\": { \"scale\": [1.0";
  }
  CHECK_THROWS_WITH(nsf::load_bundle(f.path), Catch::Matchers::ContainsSubstring("corrupt"));
  {
    std::ofstream out(f.path);
    out << "{ \"format_version\": \"nsf-bundle-99\" }";
  }
  CHECK_THROWS_WITH(nsf::load_bundle(f.path),
                    Catch::Matchers::ContainsSubstring("incompatible"));
}
