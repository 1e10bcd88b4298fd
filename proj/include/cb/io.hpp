#pragma once

// Little-endian binary readers/writers with byte-offset error reporting, and
// atomic file replacement (write temp, rename).

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cb/common.hpp"

namespace cb {

class BinWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); }

  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class BinReader {
 public:
  BinReader(const std::string& bytes, std::string origin)
      : buf_(bytes), origin_(std::move(origin)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }

  std::string str(std::size_t n) {
    const char* p = take(n);
    return std::string(p, n);
  }
  void raw(void* out, std::size_t n) {
    const char* p = take(n);
    std::memcpy(out, p, n);
  }

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  void expect_end() const {
    if (!at_end())
      throw IoError(origin_ + ": " + std::to_string(buf_.size() - pos_) +
                    " trailing bytes at offset " + std::to_string(pos_));
  }

 private:
  const char* take(std::size_t n) {
    if (pos_ + n > buf_.size())
      throw IoError(origin_ + ": truncated at byte offset " + std::to_string(pos_) +
                    " (need " + std::to_string(n) + " more bytes)");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t le(int n) {
    const char* p = take(n);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
  }

  const std::string& buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

// Write to <path>.tmp then rename, so readers never see partial files.
inline void write_file_atomic(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline std::uint64_t file_hash(const std::string& path) {
  const std::string data = read_file(path);
  return fnv1a64(data.data(), data.size());
}

}  // namespace cb
