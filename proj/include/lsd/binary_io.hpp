#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "lsd/error.hpp"

namespace lsd::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written natively");

/// Append-only byte buffer for the cache and checkpoint formats.
class Writer {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  template <typename T>
  void put_array(const T* data, std::size_t count) {
    buf_.append(reinterpret_cast<const char*>(data), count * sizeof(T));
  }
  void put_bytes(std::string_view bytes) { buf_.append(bytes); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  const std::string& bytes() const { return buf_; }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

/// Bounds-checked reader; truncation raises a ValidationError.
class Reader {
 public:
  Reader(std::string_view bytes, std::string origin)
      : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  template <typename T>
  void get_array(T* data, std::size_t count) {
    std::memcpy(data, take(count * sizeof(T)), count * sizeof(T));
  }
  std::string_view get_bytes(std::size_t n) { return {take(n), n}; }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    return std::string(get_bytes(n));
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& origin() const { return origin_; }

 private:
  const char* take(std::size_t n) {
    if (n > remaining())
      throw ValidationError(origin_ + ": truncated at byte " + std::to_string(pos_));
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string_view bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lsd::io
