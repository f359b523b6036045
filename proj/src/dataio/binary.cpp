#include "binary.hpp"

#include "s3t/error.hpp"

#include <bit>
#include <cstring>

namespace s3t::io::bin {

static_assert(std::endian::native == std::endian::little, "codecs assume a little-endian host");

namespace {

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace

void Writer::magic(std::string_view m) { out_.append(m.data(), m.size()); }
void Writer::u8(std::uint8_t v) { put(out_, v); }
void Writer::u32(std::uint32_t v) { put(out_, v); }
void Writer::u64(std::uint64_t v) { put(out_, v); }
void Writer::f64(double v) { put(out_, v); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.append(s.data(), s.size());
}

void Reader::magic(std::string_view m) {
  if (in_.substr(0, m.size()) != m) {
    throw FormatError("bad magic header: expected '" + std::string(m) + "'");
  }
  pos_ = m.size();
}

const char* Reader::take(std::size_t n, std::string_view what) {
  if (remaining() < n) {
    throw CorruptionError("truncated payload at byte offset " + std::to_string(pos_) + ": need " + std::to_string(n) +
                          " bytes for " + std::string(what) + ", " + std::to_string(remaining()) + " left");
  }
  const char* p = in_.data() + pos_;
  pos_ += n;
  return p;
}

namespace {

template <class T>
T get(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace

std::uint8_t Reader::u8() { return get<std::uint8_t>(take(1, "u8")); }
std::uint32_t Reader::u32() { return get<std::uint32_t>(take(4, "u32")); }
std::uint64_t Reader::u64() { return get<std::uint64_t>(take(8, "u64")); }
double Reader::f64() { return get<double>(take(8, "f64")); }

std::string Reader::str() {
  const auto n = u32();
  const char* p = take(n, "string");
  return std::string(p, n);
}

void Reader::require(std::uint64_t count, std::size_t item_bytes, std::string_view what) const {
  if (item_bytes != 0 && count > remaining() / item_bytes) {
    throw CorruptionError("truncated payload at byte offset " + std::to_string(pos_) + ": header declares " +
                          std::to_string(count) + " " + std::string(what) + " but only " +
                          std::to_string(remaining()) + " bytes remain");
  }
}

void Reader::finish() const {
  if (remaining() != 0) {
    throw CorruptionError("payload length mismatch at byte offset " + std::to_string(pos_) + ": " +
                          std::to_string(remaining()) + " unexpected trailing bytes");
  }
}

}  // namespace s3t::io::bin
