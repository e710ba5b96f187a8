#pragma once

// Little-endian binary encoding, whole-file reads, and atomic writes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "geosdg/error.hpp"

namespace geosdg::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  template <typename V>
    requires std::is_arithmetic_v<V>
  void put(V v) {
    char b[sizeof(V)];
    std::memcpy(b, &v, sizeof(V));
    buf_.append(b, sizeof(V));
  }

  void bytes(std::string_view s) { buf_.append(s); }

  /// u16 length prefix followed by the bytes.
  void short_string(std::string_view s) {
    if (s.size() > UINT16_MAX) throw InvalidValue("string too long for u16 length prefix");
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s);
  }

  template <typename V>
  void array(const V* data, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(data), n * sizeof(V));
  }

  const std::string& str() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

/// Bounds-checked reader; truncation raises FormatError with the byte offset.
class BinaryReader {
 public:
  BinaryReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename V>
    requires std::is_arithmetic_v<V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, data_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::string short_string() {
    const auto n = get<std::uint16_t>();
    return std::string(bytes(n));
  }

  template <typename V>
  void array(V* out, std::size_t n) {
    need(n * sizeof(V));
    std::memcpy(out, data_.data() + pos_, n * sizeof(V));
    pos_ += n * sizeof(V);
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_) + " (need " + std::to_string(n) +
                        " bytes, have " + std::to_string(data_.size() - pos_) + ")");
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

/// Reads a whole file; throws IngestError naming the path when unreadable.
std::string read_file(const std::filesystem::path& path);

/// Writes to a temporary sibling, then renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace geosdg::io
