#pragma once

// Self-describing container of named dense arrays.
//
// Layout (little-endian):
//   bytes 0..3   magic "HCAR"
//   bytes 4..7   uint32 format version (1)
//   bytes 8..15  uint64 header length N
//   N bytes      JSON header: {"arrays":[{name,dtype,shape,offset,nbytes}...],"meta":{...}}
//   remainder    array payloads, back to back, at the recorded offsets
//
// Used for pixel videos, audio tracks, dataset samples and checkpoints.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcustom/tensor.hpp"

namespace hcustom {

enum class DType { f64, f32, u8 };

std::string to_string(DType d);
DType dtype_from_string(const std::string& s);

class Container {
 public:
  nlohmann::json meta = nlohmann::json::object();

  void put_f64(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> data);
  void put_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> data);
  void put_u8(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> data);
  /// Stores a matrix as f64 with shape [rows, cols].
  void put_matrix(const std::string& name, const Matrix& m);

  bool has(const std::string& name) const { return arrays_.count(name) != 0; }
  DType dtype(const std::string& name) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<std::string> names() const;

  /// Typed reads; numeric arrays convert between f64 and f32.
  std::vector<double> get_f64(const std::string& name) const;
  std::vector<float> get_f32(const std::string& name) const;
  std::vector<std::uint8_t> get_u8(const std::string& name) const;
  Matrix get_matrix(const std::string& name) const;

  std::string serialize() const;
  static Container parse(const std::string& bytes);

  /// Writes to a temporary sibling and renames it into place.
  void save(const std::filesystem::path& path) const;
  static Container load(const std::filesystem::path& path);

 private:
  struct Array {
    DType dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> bytes;
  };
  const Array& require(const std::string& name) const;
  std::map<std::string, Array> arrays_;
};

/// Writes `text` to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace hcustom
