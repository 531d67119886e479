#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace securedirect {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;
using TimestampMs = std::int64_t;

inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}

inline std::string to_string(ByteView b) {
  return std::string(b.begin(), b.end());
}

inline bool contains_subsequence(ByteView haystack, ByteView needle) {
  if (needle.empty()) return true;
  if (needle.size() > haystack.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    std::size_t j = 0;
    while (j < needle.size() && haystack[i + j] == needle[j]) ++j;
    if (j == needle.size()) return true;
  }
  return false;
}

// ---- big-endian codecs ----

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
  put_u32(out, static_cast<std::uint32_t>(v));
}

inline std::uint16_t get_u16(ByteView b, std::size_t off) {
  return static_cast<std::uint16_t>((b[off] << 8) | b[off + 1]);
}

inline std::uint32_t get_u32(ByteView b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

inline std::uint64_t get_u64(ByteView b, std::size_t off) {
  return (static_cast<std::uint64_t>(get_u32(b, off)) << 32) | get_u32(b, off + 4);
}

// ---- hex ----

inline std::string to_hex(ByteView b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (auto byte : b) {
    s.push_back(digits[byte >> 4]);
    s.push_back(digits[byte & 0xF]);
  }
  return s;
}

inline std::optional<Bytes> parse_hex(std::string_view s) {
  if (s.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i < s.size(); i += 2) {
    int hi = nibble(s[i]), lo = nibble(s[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

// ---- FNV-1a 64-bit (content digests; not cryptographic) ----

inline std::uint64_t fnv1a64(ByteView data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto b : data) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---- dotted-quad IPv4 addresses, host byte order ----

inline std::optional<std::uint32_t> parse_ipv4_addr(std::string_view s) {
  std::uint32_t addr = 0;
  int octets = 0;
  std::size_t i = 0;
  while (i <= s.size()) {
    std::size_t start = i;
    std::uint32_t value = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
      value = value * 10 + static_cast<std::uint32_t>(s[i] - '0');
      if (value > 255) return std::nullopt;
      ++i;
    }
    if (i == start) return std::nullopt;
    addr = (addr << 8) | value;
    ++octets;
    if (i == s.size()) break;
    if (s[i] != '.' || octets == 4) return std::nullopt;
    ++i;
  }
  if (octets != 4) return std::nullopt;
  return addr;
}

inline std::string format_ipv4_addr(std::uint32_t ip) {
  return std::to_string((ip >> 24) & 0xFF) + "." + std::to_string((ip >> 16) & 0xFF) + "." +
         std::to_string((ip >> 8) & 0xFF) + "." + std::to_string(ip & 0xFF);
}

// ---- trim/split helpers for the text formats ----

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// ---- error propagation ----

enum class Errc {
  malformed,
  oversize,
  not_tcp,
  no_state,
  buffer_limit,
  table_full,
  no_healthy_backend,
  parse_error,
  duplicate_id,
  timeout,
  connect_failed,
  protocol_error,
  io_error,
  schedule_overflow,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::malformed: return "malformed";
    case Errc::oversize: return "oversize";
    case Errc::not_tcp: return "not-tcp";
    case Errc::no_state: return "no-state";
    case Errc::buffer_limit: return "buffer-limit";
    case Errc::table_full: return "table-full";
    case Errc::no_healthy_backend: return "no-healthy-backend";
    case Errc::parse_error: return "parse-error";
    case Errc::duplicate_id: return "duplicate-id";
    case Errc::timeout: return "timeout";
    case Errc::connect_failed: return "connect-failed";
    case Errc::protocol_error: return "protocol-error";
    case Errc::io_error: return "io-error";
    case Errc::schedule_overflow: return "schedule-overflow";
  }
  return "unknown";
}

struct Error {
  Errc code;
  std::string detail;
};

/// Value-or-error result. value()/error() assume the caller checked ok().
template <typename T>
class Expected {
 public:
  Expected(T value) : v_(std::move(value)) {}
  Expected(Error err) : v_(std::move(err)) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  T& value() { return std::get<T>(v_); }
  const T& value() const { return std::get<T>(v_); }
  T&& take() { return std::move(std::get<T>(v_)); }

  const Error& error() const { return std::get<Error>(v_); }

 private:
  std::variant<T, Error> v_;
};

using Status = Expected<std::monostate>;

inline Status ok_status() { return Status(std::monostate{}); }

}  // namespace securedirect
