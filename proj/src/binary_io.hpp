#pragma once

// Little-endian byte helpers shared by the utterance and checkpoint formats.

#include "mgvae/error.hpp"
#include "mgvae/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace mgvae::io {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, Real v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

inline void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[at_ + i])) << (8 * i);
    at_ += 4;
    return v;
  }
  Real f32() { return static_cast<Real>(std::bit_cast<float>(u32())); }
  std::string string() {
    const auto n = u32();
    need(n);
    std::string s = bytes_.substr(at_, n);
    at_ += n;
    return s;
  }
  void magic(const char* m, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + at_, m, n) != 0) fail("bad magic bytes");
    at_ += n;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - at_ < n) fail("truncated at byte " + std::to_string(at_));
  }
  std::size_t remaining() const { return bytes_.size() - at_; }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(source_ + ": " + what); }

 private:
  const std::string& bytes_;
  std::string source_;
  std::size_t at_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace mgvae::io
