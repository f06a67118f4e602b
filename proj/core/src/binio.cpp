#include "dualflood/binio.hpp"

#include <cstring>
#include <fstream>

#include "dualflood/errors.hpp"

namespace dualflood::io {

namespace fs = std::filesystem;

namespace {

void put_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

void put_le64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_le32(out, static_cast<std::uint32_t>(v & 0xffffffffULL));
  put_le32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_le64(const std::uint8_t* p) {
  return static_cast<std::uint64_t>(get_le32(p)) | (static_cast<std::uint64_t>(get_le32(p + 4)) << 32);
}

std::size_t dtype_size(const std::string& dtype) {
  if (dtype == "float32" || dtype == "int32") return 4;
  if (dtype == "float64") return 8;
  throw DataError("unsupported dtype '" + dtype + "'");
}

std::int64_t shape_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void check_shape(const ArraySpec& spec, std::int64_t rows, std::int64_t cols) {
  if (spec.shape.size() != 2)
    throw DataError("array '" + spec.name + "': expected 2-d shape in manifest");
  if ((rows >= 0 && spec.shape[0] != rows) || (cols >= 0 && spec.shape[1] != cols)) {
    throw DataError("array '" + spec.name + "': manifest shape [" + std::to_string(spec.shape[0]) +
                    "," + std::to_string(spec.shape[1]) + "] does not match expected [" +
                    std::to_string(rows) + "," + std::to_string(cols) + "]");
  }
}

std::vector<std::uint8_t> read_payload(const fs::path& path, const ArraySpec& spec) {
  auto bytes = read_bytes(path);
  const std::size_t expected = static_cast<std::size_t>(shape_count(spec.shape)) * dtype_size(spec.dtype);
  if (bytes.size() != expected) {
    throw DataError("array '" + spec.name + "': file " + path.string() + " has " +
                    std::to_string(bytes.size()) + " bytes, expected " + std::to_string(expected));
  }
  return bytes;
}

}  // namespace

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open " + path.string());
  const auto size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) throw DataError("short read from " + path.string());
  return bytes;
}

void write_json(const fs::path& path, const json& j) {
  const std::string text = j.dump(2) + "\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_bytes(path, bytes);
}

json read_json(const fs::path& path) {
  auto bytes = read_bytes(path);
  json j = json::parse(bytes.begin(), bytes.end(), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw DataError("corrupt JSON in " + path.string());
  return j;
}

void ArrayWriter::f32(const std::string& name, const std::string& file, const Eigen::MatrixXd& m) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put_le32(bytes, u);
    }
  write_bytes(root_ / file, bytes);
  specs_.push_back({name, file, "float32", {m.rows(), m.cols()}});
}

void ArrayWriter::f64(const std::string& name, const std::string& file, const Eigen::MatrixXd& m) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double d = m(r, c);
      std::uint64_t u;
      std::memcpy(&u, &d, 8);
      put_le64(bytes, u);
    }
  write_bytes(root_ / file, bytes);
  specs_.push_back({name, file, "float64", {m.rows(), m.cols()}});
}

void ArrayWriter::i32(const std::string& name, const std::string& file,
                      const std::vector<std::int32_t>& v, std::vector<std::int64_t> shape) {
  if (shape_count(shape) != static_cast<std::int64_t>(v.size()))
    throw DataError("array '" + name + "': shape does not match element count");
  std::vector<std::uint8_t> bytes;
  bytes.reserve(v.size() * 4);
  for (std::int32_t x : v) put_le32(bytes, static_cast<std::uint32_t>(x));
  write_bytes(root_ / file, bytes);
  specs_.push_back({name, file, "int32", std::move(shape)});
}

json ArrayWriter::manifest_arrays() const {
  json arr = json::array();
  for (const auto& s : specs_) {
    arr.push_back({{"name", s.name}, {"file", s.file}, {"dtype", s.dtype}, {"shape", s.shape}});
  }
  return arr;
}

ArrayReader::ArrayReader(fs::path root, const json& manifest_arrays) : root_(std::move(root)) {
  if (!manifest_arrays.is_array()) throw DataError("manifest 'arrays' section missing or not a list");
  for (const auto& e : manifest_arrays) {
    ArraySpec spec;
    try {
      spec.name = e.at("name").get<std::string>();
      spec.file = e.at("file").get<std::string>();
      spec.dtype = e.at("dtype").get<std::string>();
      spec.shape = e.at("shape").get<std::vector<std::int64_t>>();
    } catch (const json::exception& ex) {
      throw DataError(std::string("malformed array entry in manifest: ") + ex.what());
    }
    dtype_size(spec.dtype);  // reject unknown dtypes up front
    specs_[spec.name] = std::move(spec);
  }
}

const ArraySpec& ArrayReader::spec(const std::string& name) const {
  auto it = specs_.find(name);
  if (it == specs_.end()) throw DataError("array '" + name + "' missing from manifest");
  return it->second;
}

Eigen::MatrixXd ArrayReader::f32(const std::string& name, std::int64_t rows, std::int64_t cols) const {
  const auto& s = spec(name);
  if (s.dtype != "float32") throw DataError("array '" + name + "': expected float32, got " + s.dtype);
  check_shape(s, rows, cols);
  const auto bytes = read_payload(root_ / s.file, s);
  Eigen::MatrixXd m(s.shape[0], s.shape[1]);
  const std::uint8_t* p = bytes.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::uint32_t u = get_le32(p);
      p += 4;
      float f;
      std::memcpy(&f, &u, 4);
      m(r, c) = static_cast<double>(f);
    }
  return m;
}

Eigen::MatrixXd ArrayReader::f64(const std::string& name, std::int64_t rows, std::int64_t cols) const {
  const auto& s = spec(name);
  if (s.dtype != "float64") throw DataError("array '" + name + "': expected float64, got " + s.dtype);
  check_shape(s, rows, cols);
  const auto bytes = read_payload(root_ / s.file, s);
  Eigen::MatrixXd m(s.shape[0], s.shape[1]);
  const std::uint8_t* p = bytes.data();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::uint64_t u = get_le64(p);
      p += 8;
      double d;
      std::memcpy(&d, &u, 8);
      m(r, c) = d;
    }
  return m;
}

std::vector<std::int32_t> ArrayReader::i32(const std::string& name, std::int64_t rows,
                                           std::int64_t cols) const {
  const auto& s = spec(name);
  if (s.dtype != "int32") throw DataError("array '" + name + "': expected int32, got " + s.dtype);
  check_shape(s, rows, cols);
  const auto bytes = read_payload(root_ / s.file, s);
  std::vector<std::int32_t> v(static_cast<std::size_t>(shape_count(s.shape)));
  const std::uint8_t* p = bytes.data();
  for (auto& x : v) {
    x = static_cast<std::int32_t>(get_le32(p));
    p += 4;
  }
  return v;
}

}  // namespace dualflood::io
