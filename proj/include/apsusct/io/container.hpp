#pragma once

// APST tensor container: named, typed, little-endian sections in one file.
//
//   "APST" | version u8 | section count u32
//   per section: name length u32 | name bytes | dtype u8 (1 = f32, 2 = f64) | rank u8 |
//                extents u32 x rank | values row-major

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "apsusct/errors.hpp"
#include "apsusct/tensor.hpp"

namespace apsusct::io {

static_assert(std::endian::native == std::endian::little, "APST I/O assumes a little-endian host");

inline constexpr std::uint8_t container_version = 1;

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

struct Section {
  std::string name;
  DType dtype = DType::f64;
  std::vector<std::uint32_t> extents;
  std::vector<double> values;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (auto e : extents) n *= e;
    return n;
  }
  bool operator==(const Section&) const = default;
};

inline Section make_section(std::string name, DType dtype, std::vector<std::uint32_t> extents,
                            std::vector<double> values) {
  Section s{std::move(name), dtype, std::move(extents), std::move(values)};
  if (s.values.size() != s.element_count()) {
    throw ConfigError("section '" + s.name + "' has " + std::to_string(s.values.size()) + " values for " +
                      std::to_string(s.element_count()) + " elements");
  }
  return s;
}

inline Section scalar_section(std::string name, double v) { return make_section(std::move(name), DType::f64, {1}, {v}); }

template <class T>
Section tensor_section(std::string name, const Tensor4<T>& t) {
  const auto& s = t.shape();
  std::vector<double> v(t.values().begin(), t.values().end());
  return make_section(std::move(name), sizeof(T) == 4 ? DType::f32 : DType::f64,
                      {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                       static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)},
                      std::move(v));
}

template <class T>
Tensor4<T> section_tensor(const Section& s) {
  if (s.extents.size() != 4) throw DataError("section '" + s.name + "' is not a rank-4 tensor");
  Tensor4<T> t({s.extents[0], s.extents[1], s.extents[2], s.extents[3]});
  for (std::size_t i = 0; i < s.values.size(); ++i) t[i] = static_cast<T>(s.values[i]);
  return t;
}

namespace detail {

template <class U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class U>
  U get(const std::string& what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string take(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const std::string& what) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError("APST truncated in " + what + " at byte " + std::to_string(pos_) + " (need " +
                      std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) + " left)");
    }
  }

  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_container(const std::vector<Section>& sections) {
  std::string out = "APST";
  detail::put<std::uint8_t>(out, container_version);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& s : sections) {
    if (s.values.size() != s.element_count()) throw ConfigError("section '" + s.name + "' extents do not match values");
    if (s.extents.size() > 255) throw ConfigError("section '" + s.name + "' rank exceeds 255");
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(s.dtype));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(s.extents.size()));
    for (auto e : s.extents) detail::put<std::uint32_t>(out, e);
    if (s.dtype == DType::f32) {
      for (double v : s.values) detail::put<float>(out, static_cast<float>(v));
    } else {
      for (double v : s.values) detail::put<double>(out, v);
    }
  }
  return out;
}

inline std::vector<Section> decode_container(const std::string& bytes) {
  detail::Reader r(bytes);
  if (r.take(4, "header magic") != "APST") throw DataError("not an APST container (bad magic at byte 0)");
  const auto version = r.get<std::uint8_t>("header version");
  if (version != container_version) {
    throw DataError("unsupported APST version " + std::to_string(version) + " at byte 4");
  }
  const auto count = r.get<std::uint32_t>("header section count");
  std::vector<Section> sections;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "section " + std::to_string(i);
    const auto name_len = r.get<std::uint32_t>(where + " name length");
    Section s;
    s.name = r.take(name_len, where + " name");
    const std::string label = "section '" + s.name + "'";
    const std::size_t dtype_pos = r.position();
    const auto code = r.get<std::uint8_t>(label + " dtype");
    if (code != 1 && code != 2) {
      throw DataError(label + " has unknown dtype " + std::to_string(code) + " at byte " + std::to_string(dtype_pos));
    }
    s.dtype = static_cast<DType>(code);
    const auto rank = r.get<std::uint8_t>(label + " rank");
    for (std::uint8_t d = 0; d < rank; ++d) s.extents.push_back(r.get<std::uint32_t>(label + " extents"));
    const std::size_t n = s.element_count();
    const std::size_t width = s.dtype == DType::f32 ? 4 : 8;
    r.need(n * width, label + " values");
    s.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      s.values[k] = s.dtype == DType::f32 ? static_cast<double>(r.get<float>(label)) : r.get<double>(label);
    }
    sections.push_back(std::move(s));
  }
  if (!r.done()) throw DataError("APST has trailing bytes after the last section at byte " + std::to_string(r.position()));
  return sections;
}

inline void write_container(const std::string& path, const std::vector<Section>& sections) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  const std::string bytes = encode_container(sections);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path + "'");
}

inline std::vector<Section> read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_container(bytes);
  } catch (const DataError& e) {
    const std::string msg = e.what();
    const std::string prefix = "data error: ";
    throw DataError(path + ": " + (msg.rfind(prefix, 0) == 0 ? msg.substr(prefix.size()) : msg));
  }
}

inline const Section& find_section(const std::vector<Section>& sections, const std::string& name) {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw DataError("container has no section '" + name + "'");
}

}  // namespace apsusct::io
