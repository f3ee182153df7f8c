#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nsf/dataset.hpp"

namespace nsf {

enum class DatasetFormat { Csv, Binary };

inline DatasetFormat parse_dataset_format(const std::string& s) {
  if (s == "csv") return DatasetFormat::Csv;
  if (s == "binary") return DatasetFormat::Binary;
  throw std::invalid_argument("dataset format must be 'csv' or 'binary', got '" + s + "'");
}

// Guess a format from the file extension, defaulting to CSV.
inline DatasetFormat format_from_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0
             ? DatasetFormat::Binary
             : DatasetFormat::Csv;
}

namespace detail {

constexpr char kDatasetMagic[4] = {'N', 'S', 'F', 'D'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error(std::string("dataset file truncated while reading ") + what);
  return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

inline EmbeddingDataset read_dataset_csv(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": no samples (empty file)");
  // Strip a potential UTF-8 BOM and trailing CR.
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "label")
    throw std::runtime_error(path + ": first header column must be 'label'");
  const bool has_groups = header.size() > 1 && header[1] == "group";
  const std::size_t feature_start = has_groups ? 2 : 1;
  if (header.size() <= feature_start)
    throw std::runtime_error(path + ": header declares no feature columns");
  const std::size_t dim = header.size() - feature_start;

  EmbeddingDataset ds;
  std::vector<double> values;
  std::size_t row_number = 1;
  int max_label = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error(path + ": row " + std::to_string(row_number) + " has " +
                               std::to_string(fields.size()) + " fields, expected " +
                               std::to_string(header.size()));
    try {
      ds.labels.push_back(std::stoi(fields[0]));
      if (has_groups) ds.groups.push_back(std::stoi(fields[1]));
      // Features are float32 on disk regardless of format; quantize so csv
      // and binary agree and round trips are exact.
      for (std::size_t j = 0; j < dim; ++j)
        values.push_back(static_cast<double>(
            static_cast<float>(std::stod(fields[feature_start + j]))));
    } catch (const std::exception&) {
      throw std::runtime_error(path + ": malformed row " + std::to_string(row_number));
    }
    max_label = std::max(max_label, ds.labels.back());
  }
  if (ds.labels.empty()) throw std::runtime_error(path + ": no samples");
  ds.features = Matrix(ds.labels.size(), dim);
  ds.features.data() = std::move(values);
  densify_labels(ds.labels);
  int k = 0;
  for (int l : ds.labels) k = std::max(k, l);
  ds.class_count = std::max(k + 1, 2);
  ds.validate();
  return ds;
}

inline EmbeddingDataset read_dataset_binary(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw std::runtime_error(path + ": unknown magic bytes, not an NSFD dataset");
  const auto version = read_raw<std::uint32_t>(in, "version");
  if (version != kDatasetVersion)
    throw std::runtime_error(path + ": unsupported dataset version " +
                             std::to_string(version));
  const auto n = read_raw<std::uint32_t>(in, "sample count");
  const auto dim = read_raw<std::uint32_t>(in, "dimension");
  const auto k = read_raw<std::uint32_t>(in, "class count");
  const auto has_groups = read_raw<std::uint8_t>(in, "group flag");
  if (n == 0) throw std::runtime_error(path + ": no samples");
  EmbeddingDataset ds;
  ds.class_count = static_cast<int>(k);
  ds.features = Matrix(n, dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * dim; ++i)
    ds.features.data()[i] = static_cast<double>(read_raw<float>(in, "features"));
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = static_cast<int>(read_raw<std::int32_t>(in, "labels"));
  if (has_groups) {
    ds.groups.resize(n);
    for (auto& g : ds.groups) g = static_cast<int>(read_raw<std::int32_t>(in, "groups"));
  }
  ds.validate();
  return ds;
}

}  // namespace detail

inline EmbeddingDataset read_dataset(const std::string& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open file");
  return format == DatasetFormat::Csv ? detail::read_dataset_csv(in, path)
                                      : detail::read_dataset_binary(in, path);
}

inline void write_dataset(const EmbeddingDataset& ds, const std::string& path,
                          DatasetFormat format) {
  ds.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  if (format == DatasetFormat::Csv) {
    out << "label";
    if (ds.has_groups()) out << ",group";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",f" << j;
    out << "\n";
    out.precision(9);  // float32 round-trip
    for (std::size_t i = 0; i < ds.size(); ++i) {
      out << ds.labels[i];
      if (ds.has_groups()) out << "," << ds.groups[i];
      auto row = ds.features.row(i);
      for (double v : row) out << "," << static_cast<float>(v);
      out << "\n";
    }
  } else {
    out.write(detail::kDatasetMagic, 4);
    detail::write_raw(out, detail::kDatasetVersion);
    detail::write_raw(out, static_cast<std::uint32_t>(ds.size()));
    detail::write_raw(out, static_cast<std::uint32_t>(ds.dim()));
    detail::write_raw(out, static_cast<std::uint32_t>(ds.class_count));
    detail::write_raw(out, static_cast<std::uint8_t>(ds.has_groups() ? 1 : 0));
    for (double v : ds.features.data()) detail::write_raw(out, static_cast<float>(v));
    for (int l : ds.labels) detail::write_raw(out, static_cast<std::int32_t>(l));
    for (int g : ds.groups) detail::write_raw(out, static_cast<std::int32_t>(g));
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace nsf
