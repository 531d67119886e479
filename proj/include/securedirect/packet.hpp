#pragma once

#include <compare>
#include <cstdint>

#include "securedirect/util.hpp"

// Wire codecs for the two packet shapes the balancer speaks: IPv4 datagrams
// and TCP segments. Layouts are the plain 20-byte RFC 791 / RFC 793 headers;
// IP options are rejected, TCP options are carried as opaque bytes.

namespace securedirect {

namespace tcpflag {
constexpr std::uint8_t kFin = 0x01;
constexpr std::uint8_t kSyn = 0x02;
constexpr std::uint8_t kRst = 0x04;
constexpr std::uint8_t kPsh = 0x08;
constexpr std::uint8_t kAck = 0x10;
}  // namespace tcpflag

struct FiveTuple {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint8_t protocol = 0;

  auto operator<=>(const FiveTuple&) const = default;
};

constexpr std::uint8_t kProtocolTcp = 6;
constexpr std::size_t kIpHeaderLen = 20;
constexpr std::size_t kTcpHeaderLen = 20;
constexpr std::size_t kMaxDatagram = 65535;

struct IpPacket {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint8_t protocol = 0;
  std::uint16_t identification = 0;
  std::uint16_t fragment_offset = 0;  // units of 8 bytes
  bool more_fragments = false;
  bool dont_fragment = false;
  std::uint8_t ttl = 64;
  Bytes payload;

  bool is_fragment() const { return more_fragments || fragment_offset != 0; }
};

struct TcpSegment {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t seq = 0;
  std::uint32_t ack = 0;
  std::uint8_t flags = 0;
  std::uint16_t window = 65535;
  std::uint16_t checksum = 0;
  std::uint16_t urgent = 0;
  Bytes options;  // opaque, length must be a multiple of 4
  Bytes payload;

  bool has(std::uint8_t flag) const { return (flags & flag) != 0; }
  std::size_t wire_size() const { return kTcpHeaderLen + options.size() + payload.size(); }
};

// ---- one's-complement arithmetic (RFC 1071 style accumulate/fold) ----

inline std::uint32_t ocsum_add(std::uint32_t acc, ByteView data) {
  std::size_t i = 0;
  for (; i + 1 < data.size(); i += 2) {
    acc += static_cast<std::uint32_t>((data[i] << 8) | data[i + 1]);
  }
  if (i < data.size()) acc += static_cast<std::uint32_t>(data[i] << 8);
  return acc;
}

inline std::uint16_t ocsum_fold(std::uint32_t acc) {
  while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
  return static_cast<std::uint16_t>(acc);
}

// ---- IPv4 ----

inline Expected<Bytes> serialize_ipv4(const IpPacket& pkt) {
  const std::size_t total = kIpHeaderLen + pkt.payload.size();
  if (total > kMaxDatagram) {
    return Error{Errc::oversize, "total length " + std::to_string(total) + " exceeds 65535"};
  }
  if (static_cast<std::size_t>(pkt.fragment_offset) * 8 + pkt.payload.size() > kMaxDatagram) {
    return Error{Errc::oversize, "fragment extends past the 65535-byte datagram bound"};
  }
  if (pkt.fragment_offset > 0x1FFF) {
    return Error{Errc::oversize, "fragment offset does not fit the 13-bit field"};
  }
  Bytes out;
  out.reserve(total);
  out.push_back(0x45);  // version 4, IHL 5
  out.push_back(0x00);
  put_u16(out, static_cast<std::uint16_t>(total));
  put_u16(out, pkt.identification);
  std::uint16_t fragword = pkt.fragment_offset;
  if (pkt.more_fragments) fragword |= 0x2000;
  if (pkt.dont_fragment) fragword |= 0x4000;
  put_u16(out, fragword);
  out.push_back(pkt.ttl);
  out.push_back(pkt.protocol);
  put_u16(out, 0);  // checksum placeholder
  put_u32(out, pkt.src_ip);
  put_u32(out, pkt.dst_ip);
  const std::uint16_t cksum =
      static_cast<std::uint16_t>(~ocsum_fold(ocsum_add(0, ByteView(out.data(), kIpHeaderLen))));
  out[10] = static_cast<std::uint8_t>(cksum >> 8);
  out[11] = static_cast<std::uint8_t>(cksum);
  out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
  return out;
}

inline Expected<IpPacket> parse_ipv4(ByteView bytes) {
  if (bytes.size() < kIpHeaderLen) {
    return Error{Errc::malformed, "truncated header: " + std::to_string(bytes.size()) + " bytes"};
  }
  const std::uint8_t version = bytes[0] >> 4;
  if (version != 4) {
    return Error{Errc::malformed, "version " + std::to_string(version) + " is not IPv4"};
  }
  const std::uint8_t ihl = bytes[0] & 0x0F;
  if (ihl != 5) {
    return Error{Errc::malformed, "IP options unsupported (IHL " + std::to_string(ihl) + ")"};
  }
  if (ocsum_fold(ocsum_add(0, bytes.subspan(0, kIpHeaderLen))) != 0xFFFF) {
    return Error{Errc::malformed, "header checksum invalid"};
  }
  const std::uint16_t total = get_u16(bytes, 2);
  if (total != bytes.size()) {
    return Error{Errc::malformed, "total length field " + std::to_string(total) +
                                      " does not match buffer size " + std::to_string(bytes.size())};
  }
  const std::uint16_t fragword = get_u16(bytes, 6);
  if (fragword & 0x8000) {
    return Error{Errc::malformed, "reserved flag bit set"};
  }
  IpPacket pkt;
  pkt.identification = get_u16(bytes, 4);
  pkt.fragment_offset = fragword & 0x1FFF;
  pkt.more_fragments = (fragword & 0x2000) != 0;
  pkt.dont_fragment = (fragword & 0x4000) != 0;
  pkt.ttl = bytes[8];
  pkt.protocol = bytes[9];
  pkt.src_ip = get_u32(bytes, 12);
  pkt.dst_ip = get_u32(bytes, 16);
  pkt.payload.assign(bytes.begin() + kIpHeaderLen, bytes.end());
  if (static_cast<std::size_t>(pkt.fragment_offset) * 8 + pkt.payload.size() > kMaxDatagram) {
    return Error{Errc::malformed, "fragment extends past the 65535-byte datagram bound"};
  }
  return pkt;
}

// ---- TCP ----

namespace detail {

inline Bytes encode_tcp_header(const TcpSegment& seg, std::uint16_t checksum) {
  Bytes out;
  out.reserve(seg.wire_size());
  put_u16(out, seg.src_port);
  put_u16(out, seg.dst_port);
  put_u32(out, seg.seq);
  put_u32(out, seg.ack);
  const std::uint8_t doff = static_cast<std::uint8_t>(5 + seg.options.size() / 4);
  out.push_back(static_cast<std::uint8_t>(doff << 4));
  out.push_back(seg.flags);
  put_u16(out, seg.window);
  put_u16(out, checksum);
  put_u16(out, seg.urgent);
  out.insert(out.end(), seg.options.begin(), seg.options.end());
  return out;
}

inline std::uint32_t pseudo_header_sum(std::uint32_t src_ip, std::uint32_t dst_ip,
                                       std::size_t tcp_len) {
  std::uint32_t acc = 0;
  acc += src_ip >> 16;
  acc += src_ip & 0xFFFF;
  acc += dst_ip >> 16;
  acc += dst_ip & 0xFFFF;
  acc += kProtocolTcp;
  acc += static_cast<std::uint32_t>(tcp_len);
  return acc;
}

}  // namespace detail

inline std::uint16_t compute_tcp_checksum(const TcpSegment& seg, std::uint32_t src_ip,
                                          std::uint32_t dst_ip) {
  std::uint32_t acc = detail::pseudo_header_sum(src_ip, dst_ip, seg.wire_size());
  const Bytes header = detail::encode_tcp_header(seg, 0);
  acc = ocsum_add(acc, header);
  acc = ocsum_add(acc, seg.payload);
  return static_cast<std::uint16_t>(~ocsum_fold(acc));
}

/// True iff the one's-complement sum over pseudo-header, header (with the
/// stored checksum field), and payload folds to all-ones.
inline bool verify_checksum(const TcpSegment& seg, std::uint32_t src_ip, std::uint32_t dst_ip) {
  std::uint32_t acc = detail::pseudo_header_sum(src_ip, dst_ip, seg.wire_size());
  const Bytes header = detail::encode_tcp_header(seg, seg.checksum);
  acc = ocsum_add(acc, header);
  acc = ocsum_add(acc, seg.payload);
  return ocsum_fold(acc) == 0xFFFF;
}

/// Serializes the segment with a freshly computed checksum.
inline Expected<Bytes> serialize_tcp(const TcpSegment& seg, std::uint32_t src_ip,
                                     std::uint32_t dst_ip) {
  if (seg.options.size() % 4 != 0 || seg.options.size() > 40) {
    return Error{Errc::malformed, "TCP options must be 0..40 bytes in multiples of 4"};
  }
  const std::uint16_t cksum = compute_tcp_checksum(seg, src_ip, dst_ip);
  Bytes out = detail::encode_tcp_header(seg, cksum);
  out.insert(out.end(), seg.payload.begin(), seg.payload.end());
  return out;
}

/// Decodes the TCP segment carried by an unfragmented IPv4 packet. The
/// returned payload excludes all headers; the checksum field is stored
/// as-is (verify_checksum decides whether it is sane).
inline Expected<TcpSegment> parse_tcp(const IpPacket& pkt) {
  if (pkt.protocol != kProtocolTcp) {
    return Error{Errc::not_tcp, "protocol " + std::to_string(pkt.protocol)};
  }
  const Bytes& b = pkt.payload;
  if (b.size() < kTcpHeaderLen) {
    return Error{Errc::malformed, "truncated TCP header"};
  }
  const std::uint8_t doff = b[12] >> 4;
  if ((b[12] & 0x0F) != 0) {
    return Error{Errc::malformed, "reserved bits set in data offset byte"};
  }
  if (doff < 5 || static_cast<std::size_t>(doff) * 4 > b.size()) {
    return Error{Errc::malformed, "data offset " + std::to_string(doff) + " out of range"};
  }
  TcpSegment seg;
  seg.src_port = get_u16(b, 0);
  seg.dst_port = get_u16(b, 2);
  seg.seq = get_u32(b, 4);
  seg.ack = get_u32(b, 8);
  seg.flags = b[13];
  seg.window = get_u16(b, 14);
  seg.checksum = get_u16(b, 16);
  seg.urgent = get_u16(b, 18);
  seg.options.assign(b.begin() + kTcpHeaderLen, b.begin() + doff * 4);
  seg.payload.assign(b.begin() + doff * 4, b.end());
  return seg;
}

/// Wraps a TCP segment into an IPv4 packet, computing both checksums.
inline Expected<IpPacket> make_tcp_packet(std::uint32_t src_ip, std::uint32_t dst_ip,
                                          const TcpSegment& seg, std::uint16_t identification = 0,
                                          std::uint8_t ttl = 64) {
  auto wire = serialize_tcp(seg, src_ip, dst_ip);
  if (!wire.ok()) return wire.error();
  IpPacket pkt;
  pkt.src_ip = src_ip;
  pkt.dst_ip = dst_ip;
  pkt.protocol = kProtocolTcp;
  pkt.identification = identification;
  pkt.ttl = ttl;
  pkt.payload = wire.take();
  if (pkt.payload.size() + kIpHeaderLen > kMaxDatagram) {
    return Error{Errc::oversize, "segment does not fit one datagram"};
  }
  return pkt;
}

inline FiveTuple tuple_of(const IpPacket& pkt, const TcpSegment& seg) {
  return FiveTuple{pkt.src_ip, pkt.dst_ip, seg.src_port, seg.dst_port, pkt.protocol};
}

inline std::string flags_to_string(std::uint8_t flags) {
  std::string s;
  if (flags & tcpflag::kSyn) s.push_back('S');
  if (flags & tcpflag::kAck) s.push_back('A');
  if (flags & tcpflag::kFin) s.push_back('F');
  if (flags & tcpflag::kRst) s.push_back('R');
  if (flags & tcpflag::kPsh) s.push_back('P');
  if (s.empty()) s.push_back('-');
  return s;
}

}  // namespace securedirect
