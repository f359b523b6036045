#pragma once

// Little-endian primitives shared by the file codecs.

#include <cstdint>
#include <string>
#include <string_view>

namespace s3t::io::bin {

class Writer {
 public:
  void magic(std::string_view m);
  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void str(std::string_view s);

  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : in_(bytes) {}

  // Throws FormatError when the leading bytes differ from m.
  void magic(std::string_view m);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return in_.size() - pos_; }
  // Throws CorruptionError when declared items would overrun the payload.
  void require(std::uint64_t count, std::size_t item_bytes, std::string_view what) const;
  // Throws CorruptionError when bytes are left over.
  void finish() const;

 private:
  const char* take(std::size_t n, std::string_view what);

  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace s3t::io::bin
