#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "slim/numcore/types.hpp"

namespace slim {

/// Named tensors plus free-form metadata, stored as a JSON manifest next to
/// a raw sidecar of little-endian 64-bit floats in row-major order.
///
/// manifest: {"format": "slim-tensors", "version": 1, "dtype": "f64",
///            "byte_order": "little", "layout": "row-major",
///            "sidecar": "<file>", "sidecar_bytes": N, "checksum": "<fnv1a hex>",
///            "tensors": [{"name", "shape": [r, c], "offset"}], "meta": {...}}
struct TensorBundle {
  std::vector<std::pair<std::string, Matrix>> tensors;
  nlohmann::json meta = nlohmann::json::object();

  void add(std::string name, Matrix m) { tensors.emplace_back(std::move(name), std::move(m)); }
  const Matrix& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

inline constexpr int kTensorFormatVersion = 1;

/// Writes `<manifest>` and `<manifest stem>.bin`.
void save_bundle(const std::filesystem::path& manifest, const TensorBundle& bundle);
TensorBundle load_bundle(const std::filesystem::path& manifest);

void save_matrix(const std::filesystem::path& manifest, const Matrix& m);
Matrix load_matrix(const std::filesystem::path& manifest);

}  // namespace slim
