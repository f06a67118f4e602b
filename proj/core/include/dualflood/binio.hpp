#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace dualflood::io {

using json = nlohmann::ordered_json;

// On-disk array convention shared by dataset containers, checkpoints and
// rollout dumps: headerless little-endian binaries, row-major, one file per
// array, described by an "arrays" section in the directory's manifest.json.
//
//   { "name": "...", "file": "...", "dtype": "float32|float64|int32",
//     "shape": [rows, cols] }

struct ArraySpec {
  std::string name;
  std::string file;
  std::string dtype;
  std::vector<std::int64_t> shape;
};

/// Accumulates arrays under a root directory and emits their manifest section.
class ArrayWriter {
 public:
  explicit ArrayWriter(std::filesystem::path root) : root_(std::move(root)) {}

  void f32(const std::string& name, const std::string& file, const Eigen::MatrixXd& m);
  void f64(const std::string& name, const std::string& file, const Eigen::MatrixXd& m);
  void i32(const std::string& name, const std::string& file, const std::vector<std::int32_t>& v,
           std::vector<std::int64_t> shape);

  json manifest_arrays() const;

 private:
  std::filesystem::path root_;
  std::vector<ArraySpec> specs_;
};

/// Resolves arrays from a manifest section, validating dtype, declared shape
/// and on-disk byte size. All lookups throw DataError on any mismatch.
class ArrayReader {
 public:
  ArrayReader(std::filesystem::path root, const json& manifest_arrays);

  bool has(const std::string& name) const { return specs_.count(name) > 0; }

  /// Shape expectations: pass -1 to accept any extent on that axis.
  Eigen::MatrixXd f32(const std::string& name, std::int64_t rows, std::int64_t cols) const;
  Eigen::MatrixXd f64(const std::string& name, std::int64_t rows, std::int64_t cols) const;
  std::vector<std::int32_t> i32(const std::string& name, std::int64_t rows, std::int64_t cols) const;

  const ArraySpec& spec(const std::string& name) const;

 private:
  std::filesystem::path root_;
  std::map<std::string, ArraySpec> specs_;
};

void write_json(const std::filesystem::path& path, const json& j);
json read_json(const std::filesystem::path& path);

/// Writes `bytes` to path, creating parent directories.
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);

}  // namespace dualflood::io
