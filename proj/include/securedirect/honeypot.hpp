#pragma once

#include <istream>
#include <map>
#include <ostream>

#include "securedirect/packet.hpp"
#include "securedirect/util.hpp"

// The decoy endpoint. It accepts everything the balancer deflects, answers
// just enough to keep the attacker engaged (SYN-ACK + banner, scripted canned
// replies, otherwise bare ACKs), caps what it ever sends back out, and
// captures every inbound byte as evidence.

namespace securedirect {

struct CaptureRecord {
  enum class Direction : std::uint8_t { in = 0, out = 1 };

  TimestampMs timestamp = 0;
  std::uint32_t src_ip = 0;    // the remote peer, both directions
  std::uint16_t src_port = 0;
  Direction direction = Direction::in;
  Bytes bytes;

  bool operator==(const CaptureRecord&) const = default;
};

/// Append-only capture log with a bit-exact binary file form:
///   header line "HPLOG1\n", then per record:
///   u64 timestamp-ms, u32 src_ip, u16 src_port, u8 direction (0 in / 1 out),
///   u32 length, payload bytes — all big-endian.
class CaptureLog {
 public:
  static constexpr const char* kMagic = "HPLOG1\n";

  void append(CaptureRecord rec) {
    if (!records_.empty() && rec.timestamp < records_.back().timestamp) {
      throw std::logic_error("CaptureLog: timestamps must not decrease");
    }
    records_.push_back(std::move(rec));
  }

  const std::vector<CaptureRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  /// Writes the capture format; returns the number of records written.
  Expected<std::size_t> export_to(std::ostream& out) const {
    out.write(kMagic, 7);
    for (const auto& rec : records_) {
      Bytes buf;
      put_u64(buf, static_cast<std::uint64_t>(rec.timestamp));
      put_u32(buf, rec.src_ip);
      put_u16(buf, rec.src_port);
      buf.push_back(static_cast<std::uint8_t>(rec.direction));
      put_u32(buf, static_cast<std::uint32_t>(rec.bytes.size()));
      buf.insert(buf.end(), rec.bytes.begin(), rec.bytes.end());
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
    if (!out.good()) return Error{Errc::io_error, "capture sink write failure"};
    return records_.size();
  }

  static Expected<CaptureLog> import_from(std::istream& in) {
    char magic[7];
    in.read(magic, 7);
    if (in.gcount() != 7 || std::string_view(magic, 7) != kMagic) {
      return Error{Errc::parse_error, "not a capture file (bad magic)"};
    }
    CaptureLog log;
    while (true) {
      std::uint8_t head[19];
      in.read(reinterpret_cast<char*>(head), sizeof(head));
      if (in.gcount() == 0 && in.eof()) break;
      if (in.gcount() != sizeof(head)) {
        return Error{Errc::parse_error, "truncated record header"};
      }
      CaptureRecord rec;
      rec.timestamp = static_cast<TimestampMs>(get_u64(ByteView(head, sizeof(head)), 0));
      rec.src_ip = get_u32(ByteView(head, sizeof(head)), 8);
      rec.src_port = get_u16(ByteView(head, sizeof(head)), 12);
      if (head[14] > 1) return Error{Errc::parse_error, "bad direction byte"};
      rec.direction = static_cast<CaptureRecord::Direction>(head[14]);
      const std::uint32_t len = get_u32(ByteView(head, sizeof(head)), 15);
      rec.bytes.resize(len);
      if (len > 0) {
        in.read(reinterpret_cast<char*>(rec.bytes.data()), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) {
          return Error{Errc::parse_error, "truncated record payload"};
        }
      }
      log.records_.push_back(std::move(rec));
    }
    return log;
  }

  /// Inbound payload bytes from one source, concatenated in order.
  Bytes inbound_bytes(std::uint32_t src_ip) const {
    Bytes out;
    for (const auto& rec : records_) {
      if (rec.direction == CaptureRecord::Direction::in && rec.src_ip == src_ip) {
        out.insert(out.end(), rec.bytes.begin(), rec.bytes.end());
      }
    }
    return out;
  }

 private:
  std::vector<CaptureRecord> records_;
};

struct DecoyScript {
  Bytes banner;
  std::vector<std::pair<Bytes, Bytes>> responses;  // request substring -> canned reply
};

/// A plausible generic web decoy. Whether to mimic the production banner is
/// an operator decision; this default does not.
inline DecoyScript default_decoy_script() {
  DecoyScript script;
  script.banner = to_bytes("220 service ready\r\n");
  script.responses = {
      {to_bytes("GET /"), to_bytes("HTTP/1.0 200 OK\r\nContent-Length: 13\r\n\r\n<html>ok</html>")},
      {to_bytes("USER"), to_bytes("331 password required\r\n")},
      {to_bytes("PASS"), to_bytes("230 login ok\r\n")},
  };
  return script;
}

struct HoneypotConfig {
  DecoyScript script = default_decoy_script();
  std::uint32_t outbound_budget = 4096;  // payload bytes per connection
  std::uint32_t vip = 0;                 // replies come from the service address
  std::uint16_t service_port = 0;
};

class Honeypot {
 public:
  explicit Honeypot(HoneypotConfig cfg = {}) : cfg_(std::move(cfg)) {}

  /// Consumes one deflected packet, captures it, and produces reply packets.
  /// A honeypot never refuses input; unparseable traffic is still captured.
  std::vector<IpPacket> accept(const IpPacket& pkt, TimestampMs now) {
    std::vector<IpPacket> replies;
    auto parsed = parse_tcp(pkt);
    if (!parsed.ok()) {
      log_.append(CaptureRecord{now, pkt.src_ip, 0, CaptureRecord::Direction::in, pkt.payload});
      return replies;
    }
    const TcpSegment& seg = parsed.value();
    log_.append(
        CaptureRecord{now, pkt.src_ip, seg.src_port, CaptureRecord::Direction::in, seg.payload});

    const auto conn_key = std::make_pair(pkt.src_ip, seg.src_port);
    if (seg.has(tcpflag::kSyn) && !seg.has(tcpflag::kAck)) {
      // fresh engagement: handshake plus banner
      Conn conn;
      conn.our_seq = 1000;
      conn.peer_next = seg.seq + 1;
      conns_[conn_key] = conn;
      Conn& c = conns_[conn_key];

      TcpSegment synack;
      synack.src_port = cfg_.service_port;
      synack.dst_port = seg.src_port;
      synack.seq = c.our_seq;
      synack.ack = c.peer_next;
      synack.flags = tcpflag::kSyn | tcpflag::kAck;
      push_reply(replies, pkt.src_ip, synack, now, c, /*count_budget=*/false);
      ++c.our_seq;

      if (!cfg_.script.banner.empty()) {
        send_payload(replies, pkt.src_ip, seg.src_port, c, cfg_.script.banner, now);
      }
      return replies;
    }

    Conn& c = conns_[conn_key];  // mid-stream traffic lands on an implicit conn
    if (seg.payload.empty() && !seg.has(tcpflag::kFin)) {
      return replies;  // pure ACK/RST: captured, nothing to say
    }
    c.peer_next = seg.seq + static_cast<std::uint32_t>(seg.payload.size()) +
                  (seg.has(tcpflag::kFin) ? 1 : 0);

    if (!seg.payload.empty()) {
      for (const auto& [needle, reply] : cfg_.script.responses) {
        if (contains_subsequence(seg.payload, needle)) {
          send_payload(replies, pkt.src_ip, seg.src_port, c, reply, now);
          return replies;
        }
      }
    }
    // nothing scripted: acknowledge and keep listening
    TcpSegment ack;
    ack.src_port = cfg_.service_port;
    ack.dst_port = seg.src_port;
    ack.seq = c.our_seq;
    ack.ack = c.peer_next;
    ack.flags = tcpflag::kAck;
    push_reply(replies, pkt.src_ip, ack, now, c, /*count_budget=*/false);
    return replies;
  }

  const CaptureLog& log() const { return log_; }
  CaptureLog& log() { return log_; }
  const HoneypotConfig& config() const { return cfg_; }

  std::uint32_t budget_used(std::uint32_t src_ip, std::uint16_t src_port) const {
    auto it = conns_.find(std::make_pair(src_ip, src_port));
    return it == conns_.end() ? 0 : it->second.budget_used;
  }

 private:
  struct Conn {
    std::uint32_t our_seq = 1000;
    std::uint32_t peer_next = 0;
    std::uint32_t budget_used = 0;
  };

  void send_payload(std::vector<IpPacket>& replies, std::uint32_t dst_ip, std::uint16_t dst_port,
                    Conn& c, const Bytes& body, TimestampMs now) {
    const std::uint32_t remaining =
        cfg_.outbound_budget > c.budget_used ? cfg_.outbound_budget - c.budget_used : 0;
    const std::size_t n = std::min<std::size_t>(body.size(), remaining);
    if (n == 0) {
      // budget exhausted: fall back to a bare ACK so the peer stays engaged
      TcpSegment ack;
      ack.src_port = cfg_.service_port;
      ack.dst_port = dst_port;
      ack.seq = c.our_seq;
      ack.ack = c.peer_next;
      ack.flags = tcpflag::kAck;
      push_reply(replies, dst_ip, ack, now, c, /*count_budget=*/false);
      return;
    }
    TcpSegment reply;
    reply.src_port = cfg_.service_port;
    reply.dst_port = dst_port;
    reply.seq = c.our_seq;
    reply.ack = c.peer_next;
    reply.flags = tcpflag::kAck | tcpflag::kPsh;
    reply.payload.assign(body.begin(), body.begin() + static_cast<std::ptrdiff_t>(n));
    c.our_seq += static_cast<std::uint32_t>(n);
    c.budget_used += static_cast<std::uint32_t>(n);
    push_reply(replies, dst_ip, reply, now, c, /*count_budget=*/true);
  }

  void push_reply(std::vector<IpPacket>& replies, std::uint32_t dst_ip, const TcpSegment& seg,
                  TimestampMs now, Conn&, bool count_budget) {
    auto pkt = make_tcp_packet(cfg_.vip, dst_ip, seg, next_ip_id_++);
    if (!pkt.ok()) return;
    if (count_budget || !seg.payload.empty()) {
      log_.append(CaptureRecord{now, dst_ip, seg.dst_port, CaptureRecord::Direction::out,
                                seg.payload});
    }
    replies.push_back(pkt.take());
  }

  HoneypotConfig cfg_;
  CaptureLog log_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, Conn> conns_;
  std::uint16_t next_ip_id_ = 1;
};

}  // namespace securedirect
