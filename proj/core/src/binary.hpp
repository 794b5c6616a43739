#pragma once

// Little-endian byte buffers for the DISA*1 container formats.

#include "disa/common.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace disa::detail {

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");

class ByteWriter {
 public:
  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    const auto* p = reinterpret_cast<const char*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void put_vec3(const Vec3& v) {
    for (int i = 0; i < 3; ++i) put(v[i]);
  }

  void put_mat3(const Mat3& m) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) put(m(r, c));
  }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const char> bytes) : bytes_(bytes) {}

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> out) {
    std::memcpy(out.data(), take(out.size_bytes()), out.size_bytes());
  }

  std::string get_string(std::size_t n) {
    const char* p = take(n);
    return std::string(p, n);
  }

  Vec3 get_vec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = get<double>();
    return v;
  }

  Mat3 get_mat3() {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) m(r, c) = get<double>();
    return m;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const char* take(std::size_t n) {
    if (n > remaining()) throw DataError("truncated file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::span<const char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const char> bytes);

/// 8-byte magic: tag padded with NULs.
std::string magic(std::string_view tag);

}  // namespace disa::detail
