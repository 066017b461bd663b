#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>

#include "vmerge/error.hpp"

namespace vmerge::detail {

template <class T>
T to_little(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

/// Appends little-endian encoded values to a byte string.
class ByteWriter {
 public:
  template <class T>
  void put(T value) {
    value = to_little(value);
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.append(raw, sizeof(T));
  }
  void put_bytes(std::string_view bytes) { out_.append(bytes); }
  void put_floats(const float* values, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      out_.append(reinterpret_cast<const char*>(values), n * sizeof(float));
    } else {
      for (std::size_t i = 0; i < n; ++i) put(values[i]);
    }
  }
  void reserve(std::size_t n) { out_.reserve(n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

/// Bounds-checked little-endian reader; failures report the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void require(std::size_t n, const std::string& what) const {
    if (remaining() < n) throw FormatError("truncated " + what, pos_);
  }

  template <class T>
  T get(const std::string& what) {
    require(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(value);
  }

  std::string_view get_bytes(std::size_t n, const std::string& what) {
    require(n, what);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  void get_floats(float* out, std::size_t n, const std::string& what) {
    require(n * sizeof(float), what);
    std::memcpy(out, bytes_.data() + pos_, n * sizeof(float));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < n; ++i) out[i] = to_little(out[i]);
    }
    pos_ += n * sizeof(float);
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace vmerge::detail
