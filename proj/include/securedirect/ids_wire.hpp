#pragma once

#include "securedirect/signature.hpp"
#include "securedirect/util.hpp"

// Balancer <-> IDS wire protocol, bit-exact:
//   query    = 0x53 0x44 ("SD"), version 0x01, u16 BE payload length, payload
//   response = verdict byte (0x00 benign, 0x01 attack, 0xFF protocol error);
//              on 0x01: u8 match count n, then n u32 BE signature ids
// One query per connection in the default mode; pooled mode repeats frames
// on one connection.

namespace securedirect {
namespace idswire {

constexpr std::uint8_t kMagic0 = 0x53;
constexpr std::uint8_t kMagic1 = 0x44;
constexpr std::uint8_t kVersion = 0x01;
constexpr std::size_t kQueryHeaderLen = 5;

constexpr std::uint8_t kVerdictBenign = 0x00;
constexpr std::uint8_t kVerdictAttack = 0x01;
constexpr std::uint8_t kVerdictError = 0xFF;

constexpr std::size_t kMaxPayload = 65535;
constexpr std::size_t kMaxMatchedIds = 255;  // count field is one byte

inline Bytes encode_query(ByteView payload) {
  Bytes out;
  out.reserve(kQueryHeaderLen + payload.size());
  out.push_back(kMagic0);
  out.push_back(kMagic1);
  out.push_back(kVersion);
  put_u16(out, static_cast<std::uint16_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

/// Validates a complete query frame and extracts the payload.
inline Expected<Bytes> decode_query(ByteView frame) {
  if (frame.size() < kQueryHeaderLen) return Error{Errc::protocol_error, "short query frame"};
  if (frame[0] != kMagic0 || frame[1] != kMagic1) {
    return Error{Errc::protocol_error, "bad magic"};
  }
  if (frame[2] != kVersion) return Error{Errc::protocol_error, "unsupported version"};
  const std::size_t len = get_u16(frame, 3);
  if (frame.size() != kQueryHeaderLen + len) {
    return Error{Errc::protocol_error, "length field does not match frame size"};
  }
  return Bytes(frame.begin() + kQueryHeaderLen, frame.end());
}

inline Bytes encode_response(const Verdict& verdict) {
  Bytes out;
  if (!verdict.attack) {
    out.push_back(kVerdictBenign);
    return out;
  }
  out.push_back(kVerdictAttack);
  const std::size_t n = std::min(verdict.matched.size(), kMaxMatchedIds);
  out.push_back(static_cast<std::uint8_t>(n));
  for (std::size_t i = 0; i < n; ++i) put_u32(out, verdict.matched[i]);
  return out;
}

inline Bytes encode_error_response() { return Bytes{kVerdictError}; }

inline Expected<Verdict> decode_response(ByteView frame) {
  if (frame.empty()) return Error{Errc::protocol_error, "empty response"};
  switch (frame[0]) {
    case kVerdictBenign:
      if (frame.size() != 1) return Error{Errc::protocol_error, "trailing bytes after benign"};
      return Verdict{};
    case kVerdictAttack: {
      if (frame.size() < 2) return Error{Errc::protocol_error, "missing match count"};
      const std::size_t n = frame[1];
      if (n == 0) return Error{Errc::protocol_error, "attack verdict with zero matches"};
      if (frame.size() != 2 + 4 * n) return Error{Errc::protocol_error, "match list size mismatch"};
      Verdict v;
      v.attack = true;
      v.matched.reserve(n);
      for (std::size_t i = 0; i < n; ++i) v.matched.push_back(get_u32(frame, 2 + 4 * i));
      return v;
    }
    case kVerdictError:
      return Error{Errc::protocol_error, "server reported a protocol error"};
    default:
      return Error{Errc::protocol_error, "unknown verdict byte"};
  }
}

}  // namespace idswire
}  // namespace securedirect
