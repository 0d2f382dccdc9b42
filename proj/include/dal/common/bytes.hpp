#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "dal/common/error.hpp"

namespace dal {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class ByteWriter {
 public:
  template <class T>
  void put(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::size_t size() const { return buf_.size(); }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string where)
      : p_(data), n_(size), where_(std::move(where)) {}

  template <class T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    need(n);
    std::memcpy(out, p_ + pos_, n);
    pos_ += n;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    get_bytes(s.data(), n);
    return s;
  }
  /// Guards element counts read from a file before allocating.
  std::size_t get_count(std::size_t element_size) {
    const auto n = get<std::uint64_t>();
    if (element_size && n > (n_ - pos_) / element_size) throw FormatError(where_ + ": truncated or corrupt record");
    return static_cast<std::size_t>(n);
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw FormatError(where_ + ": truncated or corrupt record");
  }
  const std::uint8_t* p_;
  std::size_t n_, pos_ = 0;
  std::string where_;
};

std::uint32_t crc32(const std::uint8_t* data, std::size_t n);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace dal
