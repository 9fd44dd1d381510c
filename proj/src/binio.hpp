#pragma once

// Little-endian binary stream helpers shared by the UNLN-DATA, UNLN-PERT and
// UNLN-CKPT file formats. Readers track the byte offset so format errors can
// name the exact position.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "unln/error.hpp"

namespace unln::detail {

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    T out;
    auto* src = reinterpret_cast<const unsigned char*>(&v);
    auto* dst = reinterpret_cast<unsigned char*>(&out);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = src[sizeof(T) - 1 - i];
    return out;
  }
  return v;
}

class BinWriter {
 public:
  explicit BinWriter(const std::string& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw FormatError("cannot open for writing: " + path);
  }

  void raw(const void* p, std::size_t n) {
    f_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!f_) throw FormatError("write failed: " + path_);
  }

  template <class T>
  void num(T v) {
    T le = to_little(v);
    raw(&le, sizeof(T));
  }

  void u8(std::uint8_t v) { num(v); }
  void u16(std::uint16_t v) { num(v); }
  void u32(std::uint32_t v) { num(v); }
  void u64(std::uint64_t v) { num(v); }
  void f32(float v) { num(v); }
  void f64(double v) { num(v); }

  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  void f32_block(const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::big) {
      for (float x : v) f32(x);
    } else {
      raw(v.data(), v.size() * sizeof(float));
    }
  }

  void f64_block(const std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::big) {
      for (double x : v) f64(x);
    } else {
      raw(v.data(), v.size() * sizeof(double));
    }
  }

 private:
  std::string path_;
  std::ofstream f_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path) : path_(path), f_(path, std::ios::binary) {
    if (!f_) throw FormatError("cannot open: " + path);
    f_.seekg(0, std::ios::end);
    size_ = static_cast<std::size_t>(f_.tellg());
    f_.seekg(0);
  }

  std::size_t size() const { return size_; }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return size_ - offset_; }
  const std::string& path() const { return path_; }

  void raw(void* p, std::size_t n) {
    if (remaining() < n)
      throw FormatError(path_ + ": truncated at offset " + std::to_string(offset_) +
                        " (need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()) + ")");
    f_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!f_) throw FormatError(path_ + ": read failed at offset " + std::to_string(offset_));
    offset_ += n;
  }

  template <class T>
  T num() {
    T v;
    raw(&v, sizeof(T));
    return to_little(v);
  }

  std::uint8_t u8() { return num<std::uint8_t>(); }
  std::uint16_t u16() { return num<std::uint16_t>(); }
  std::uint32_t u32() { return num<std::uint32_t>(); }
  std::uint64_t u64() { return num<std::uint64_t>(); }
  float f32() { return num<float>(); }
  double f64() { return num<double>(); }

  std::string str(std::size_t max_len = 1 << 20) {
    std::uint32_t len = u32();
    if (len > max_len)
      throw FormatError(path_ + ": string length " + std::to_string(len) +
                        " out of range at offset " + std::to_string(offset_ - 4));
    std::string s(len, '\0');
    raw(s.data(), len);
    return s;
  }

  void magic(const char* expect, std::size_t n) {
    std::vector<char> buf(n);
    raw(buf.data(), n);
    if (std::memcmp(buf.data(), expect, n) != 0)
      throw FormatError(path_ + ": bad magic at offset 0 (expected \"" +
                        std::string(expect, n) + "\")");
  }

  void f32_block(std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& x : v) x = f32();
    } else {
      raw(v.data(), v.size() * sizeof(float));
    }
  }

  void f64_block(std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::big) {
      for (auto& x : v) x = f64();
    } else {
      raw(v.data(), v.size() * sizeof(double));
    }
  }

 private:
  std::string path_;
  std::ifstream f_;
  std::size_t size_ = 0;
  std::size_t offset_ = 0;
};

}  // namespace unln::detail
