#include "hcustom/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hcustom/errors.hpp"

static_assert(std::endian::native == std::endian::little, "container format assumes little-endian");

namespace hcustom {
namespace {

constexpr char kMagic[4] = {'H', 'C', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

std::size_t element_size(DType d) {
  switch (d) {
    case DType::f64: return 8;
    case DType::f32: return 4;
    case DType::u8: return 1;
  }
  return 0;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto s : shape) {
    if (s < 0) throw DimensionError("container: negative dimension");
    n *= s;
  }
  return n;
}

template <class T>
std::vector<std::uint8_t> to_bytes(std::span<const T> data) {
  std::vector<std::uint8_t> out(data.size_bytes());
  if (!out.empty()) std::memcpy(out.data(), data.data(), out.size());
  return out;
}

template <class T>
std::vector<T> from_bytes(const std::vector<std::uint8_t>& bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace

std::string to_string(DType d) {
  switch (d) {
    case DType::f64: return "f64";
    case DType::f32: return "f32";
    case DType::u8: return "u8";
  }
  return "?";
}

DType dtype_from_string(const std::string& s) {
  if (s == "f64") return DType::f64;
  if (s == "f32") return DType::f32;
  if (s == "u8") return DType::u8;
  throw IoError("container: unknown dtype '" + s + "'");
}

void Container::put_f64(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const double> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("container: shape does not match data for " + name);
  }
  arrays_[name] = Array{DType::f64, std::move(shape), to_bytes(data)};
}

void Container::put_f32(const std::string& name, std::vector<std::int64_t> shape,
                        std::span<const float> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("container: shape does not match data for " + name);
  }
  arrays_[name] = Array{DType::f32, std::move(shape), to_bytes(data)};
}

void Container::put_u8(const std::string& name, std::vector<std::int64_t> shape,
                       std::span<const std::uint8_t> data) {
  if (element_count(shape) != static_cast<std::int64_t>(data.size())) {
    throw DimensionError("container: shape does not match data for " + name);
  }
  arrays_[name] = Array{DType::u8, std::move(shape), to_bytes(data)};
}

void Container::put_matrix(const std::string& name, const Matrix& m) {
  put_f64(name, {m.rows(), m.cols()}, std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
}

const Container::Array& Container::require(const std::string& name) const {
  auto it = arrays_.find(name);
  if (it == arrays_.end()) throw IoError("container: missing array '" + name + "'");
  return it->second;
}

DType Container::dtype(const std::string& name) const { return require(name).dtype; }

const std::vector<std::int64_t>& Container::shape(const std::string& name) const {
  return require(name).shape;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : arrays_) out.push_back(n);
  return out;
}

std::vector<double> Container::get_f64(const std::string& name) const {
  const Array& a = require(name);
  switch (a.dtype) {
    case DType::f64: return from_bytes<double>(a.bytes);
    case DType::f32: {
      auto f = from_bytes<float>(a.bytes);
      return {f.begin(), f.end()};
    }
    case DType::u8: break;
  }
  throw IoError("container: '" + name + "' is not a floating-point array");
}

std::vector<float> Container::get_f32(const std::string& name) const {
  const Array& a = require(name);
  switch (a.dtype) {
    case DType::f32: return from_bytes<float>(a.bytes);
    case DType::f64: {
      auto d = from_bytes<double>(a.bytes);
      std::vector<float> out(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<float>(d[i]);
      return out;
    }
    case DType::u8: break;
  }
  throw IoError("container: '" + name + "' is not a floating-point array");
}

std::vector<std::uint8_t> Container::get_u8(const std::string& name) const {
  const Array& a = require(name);
  if (a.dtype != DType::u8) throw IoError("container: '" + name + "' is not a u8 array");
  return a.bytes;
}

Matrix Container::get_matrix(const std::string& name) const {
  const auto& s = shape(name);
  if (s.size() != 2) throw DimensionError("container: '" + name + "' is not rank 2");
  auto d = get_f64(name);
  Matrix m(s[0], s[1]);
  if (!d.empty()) std::memcpy(m.data(), d.data(), d.size() * sizeof(double));
  return m;
}

std::string Container::serialize() const {
  nlohmann::json header;
  header["meta"] = meta;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, a] : arrays_) {
    header["arrays"].push_back({{"name", name},
                                {"dtype", to_string(a.dtype)},
                                {"shape", a.shape},
                                {"offset", offset},
                                {"nbytes", a.bytes.size()}});
    offset += a.bytes.size();
  }
  const std::string h = header.dump();
  std::string out;
  out.reserve(16 + h.size() + offset);
  out.append(kMagic, 4);
  std::uint32_t version = kVersion;
  out.append(reinterpret_cast<const char*>(&version), 4);
  std::uint64_t hlen = h.size();
  out.append(reinterpret_cast<const char*>(&hlen), 8);
  out += h;
  for (const auto& [_, a] : arrays_) out.append(reinterpret_cast<const char*>(a.bytes.data()), a.bytes.size());
  return out;
}

Container Container::parse(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw IoError("container: bad magic");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kVersion) throw IoError("container: unsupported version " + std::to_string(version));
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  if (16 + hlen > bytes.size()) throw IoError("container: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("container: header is not valid JSON: ") + e.what());
  }
  Container c;
  c.meta = header.value("meta", nlohmann::json::object());
  const std::size_t data_start = 16 + hlen;
  for (const auto& entry : header.at("arrays")) {
    Array a;
    a.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
    a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(element_count(a.shape)) * element_size(a.dtype)) {
      throw IoError("container: size mismatch for " + entry.at("name").get<std::string>());
    }
    if (data_start + offset + nbytes > bytes.size()) throw IoError("container: truncated payload");
    a.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(data_start + offset),
                   bytes.begin() + static_cast<std::ptrdiff_t>(data_start + offset + nbytes));
    c.arrays_[entry.at("name").get<std::string>()] = std::move(a);
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Container Container::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hcustom
