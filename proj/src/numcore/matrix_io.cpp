#include "slim/numcore/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "slim/numcore/rng.hpp"

namespace slim {

namespace fs = std::filesystem;

namespace {

void append_le(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

const Matrix& TensorBundle::get(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw IoError("tensor bundle: missing tensor '" + name + "'");
}

bool TensorBundle::contains(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void save_bundle(const fs::path& manifest, const TensorBundle& bundle) {
  std::string payload;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [name, m] : bundle.tensors) {
    require_finite(m, "save_bundle " + name);
    entries.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", payload.size()}});
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) append_le(payload, m(i, j));
    }
  }
  fs::path sidecar = manifest;
  sidecar.replace_extension(".bin");
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());

  nlohmann::json j = {
      {"format", "slim-tensors"},
      {"version", kTensorFormatVersion},
      {"dtype", "f64"},
      {"byte_order", "little"},
      {"layout", "row-major"},
      {"sidecar", sidecar.filename().string()},
      {"sidecar_bytes", payload.size()},
      {"checksum", hex64(fnv1a(payload))},
      {"tensors", entries},
      {"meta", bundle.meta},
  };
  {
    std::ofstream bin(sidecar, std::ios::binary | std::ios::trunc);
    if (!bin) throw IoError("cannot write " + sidecar.string());
    bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!bin) throw IoError("short write " + sidecar.string());
  }
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest.string());
  out << j.dump(2) << '\n';
}

TensorBundle load_bundle(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(manifest.string() + ": malformed manifest: " + e.what());
  }
  if (j.value("format", "") != "slim-tensors") throw IoError(manifest.string() + ": not a tensor manifest");
  if (j.value("version", -1) != kTensorFormatVersion) {
    throw IoError(manifest.string() + ": unsupported version " + j.value("version", nlohmann::json()).dump());
  }
  if (j.value("dtype", "") != "f64" || j.value("byte_order", "") != "little" ||
      j.value("layout", "") != "row-major") {
    throw IoError(manifest.string() + ": unsupported encoding");
  }
  const fs::path sidecar = manifest.parent_path() / j.at("sidecar").get<std::string>();
  std::ifstream bin(sidecar, std::ios::binary);
  if (!bin) throw IoError("cannot open " + sidecar.string());
  std::string payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (payload.size() != j.at("sidecar_bytes").get<std::size_t>()) {
    throw IoError(sidecar.string() + ": size mismatch (corrupted sidecar)");
  }
  if (hex64(fnv1a(payload)) != j.at("checksum").get<std::string>()) {
    throw IoError(sidecar.string() + ": checksum mismatch (corrupted sidecar)");
  }

  TensorBundle bundle;
  bundle.meta = j.value("meta", nlohmann::json::object());
  for (const auto& e : j.at("tensors")) {
    const auto rows = e.at("shape").at(0).get<Eigen::Index>();
    const auto cols = e.at("shape").at(1).get<Eigen::Index>();
    const auto offset = e.at("offset").get<std::size_t>();
    const auto bytes = static_cast<std::size_t>(rows * cols) * 8;
    if (rows < 0 || cols < 0 || offset + bytes > payload.size()) {
      throw IoError(manifest.string() + ": tensor extends past sidecar");
    }
    Matrix m(rows, cols);
    const char* p = payload.data() + offset;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index c = 0; c < cols; ++c, p += 8) m(i, c) = read_le(p);
    }
    require_finite(m, "load_bundle");
    bundle.add(e.at("name").get<std::string>(), std::move(m));
  }
  return bundle;
}

void save_matrix(const fs::path& manifest, const Matrix& m) {
  TensorBundle b;
  b.add("value", m);
  save_bundle(manifest, b);
}

Matrix load_matrix(const fs::path& manifest) { return load_bundle(manifest).get("value"); }

}  // namespace slim
