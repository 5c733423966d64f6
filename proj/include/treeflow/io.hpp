#pragma once
// File and formatting utilities shared by serialization, CSV export, and the
// CLI.  Number formatting uses shortest-round-trip text so identical values
// always produce identical bytes.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeflow/dataset.hpp"
#include "treeflow/linalg.hpp"
#include "treeflow/sha256.hpp"

namespace treeflow {

// Shortest decimal text that round-trips the exact double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return data;
}

inline std::string sha256_file(const std::string& path) {
  return Sha256::hex(read_file_bytes(path));
}

// CSV of a plain matrix with a header row.
inline std::string matrix_to_csv(const std::vector<std::string>& header,
                                 const Matrix& m) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

// CSV of a labeled dataset in the input schema: features then the label
// column.  Label values use stored spellings when available.
inline std::string dataset_to_csv(const Dataset& ds, const std::string& label_column) {
  std::string out;
  for (const auto& name : ds.feature_names) {
    out += name;
    out += ',';
  }
  out += label_column;
  out += '\n';
  for (std::size_t r = 0; r < ds.n(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
      out += format_double(ds.features(static_cast<Eigen::Index>(r), c));
      out += ',';
    }
    const int y = ds.labels[r];
    if (static_cast<std::size_t>(y) < ds.label_names.size() &&
        !ds.label_names[static_cast<std::size_t>(y)].empty()) {
      out += ds.label_names[static_cast<std::size_t>(y)];
    } else {
      out += std::to_string(y);
    }
    out += '\n';
  }
  return out;
}

inline void ensure_dir(const std::string& path) {
  std::filesystem::create_directories(path);
}

}  // namespace treeflow
