#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>

#include "securedirect/packet.hpp"
#include "securedirect/util.hpp"

// Connection table with timestamp expiry, the duplicate-sequence consistency
// check, and the attacker registry fast path. All state is owned by the
// balancer event loop; timestamps must be monotone (a smaller timestamp than
// the last observed one is a programming error and throws).

namespace securedirect {

using BackendId = std::uint32_t;

enum class ConsistencyResult { fresh_segment, exact_retransmit, inconsistent };

inline const char* consistency_name(ConsistencyResult r) {
  switch (r) {
    case ConsistencyResult::fresh_segment: return "fresh";
    case ConsistencyResult::exact_retransmit: return "exact-retransmit";
    case ConsistencyResult::inconsistent: return "inconsistent";
  }
  return "unknown";
}

enum class AttackReason { signature_match, duplicate_seq, frag_evasion };

inline const char* attack_reason_name(AttackReason r) {
  switch (r) {
    case AttackReason::signature_match: return "signature-match";
    case AttackReason::duplicate_seq: return "duplicate-seq";
    case AttackReason::frag_evasion: return "frag-evasion";
  }
  return "unknown";
}

struct AttackerRecord {
  std::uint32_t ip = 0;
  AttackReason reason = AttackReason::signature_match;
  std::vector<std::uint32_t> signature_ids;  // set for signature_match
  TimestampMs flagged_at = 0;
};

struct SessionEntry {
  enum class State { active, reset_sent };

  FiveTuple key;
  BackendId backend = 0;
  TimestampMs last_seen = 0;
  State state = State::active;

  // Digest log for the duplicate-sequence check. Only payload-bearing
  // segments are recorded; pure control segments carry nothing the check
  // could compare.
  struct SeqDigest {
    std::uint32_t length = 0;
    std::uint64_t digest = 0;
  };
  std::map<std::uint32_t, SeqDigest> seq_digests;
  std::deque<std::uint32_t> seq_order;  // insertion order, oldest first

  // Sequence anchor advanced by segments actually forwarded to the backend;
  // an injected RST must match what the backend expects next.
  bool forwarded_any = false;
  std::uint32_t next_backend_seq = 0;

  void note_forwarded(const TcpSegment& seg) {
    std::uint32_t next = seg.seq + static_cast<std::uint32_t>(seg.payload.size());
    if (seg.has(tcpflag::kSyn)) ++next;
    if (seg.has(tcpflag::kFin)) ++next;
    if (!forwarded_any || static_cast<std::int32_t>(next - next_backend_seq) > 0) {
      next_backend_seq = next;
    }
    forwarded_any = true;
  }
};

/// Fabricates the reset that tears down the entry's backend connection:
/// client five-tuple, next expected client sequence, RST flag only, empty
/// payload, valid checksum.
inline Expected<IpPacket> make_rst(const SessionEntry& conn) {
  if (!conn.forwarded_any) {
    return Error{Errc::no_state, "no observed server-bound segment to anchor the reset"};
  }
  TcpSegment seg;
  seg.src_port = conn.key.src_port;
  seg.dst_port = conn.key.dst_port;
  seg.seq = conn.next_backend_seq;
  seg.ack = 0;
  seg.flags = tcpflag::kRst;
  return make_tcp_packet(conn.key.src_ip, conn.key.dst_ip, seg);
}

struct SessionConfig {
  TimestampMs session_timeout_ms = 240'000;  // 4 minutes
  std::size_t max_tracked_segments = 256;
  std::size_t table_capacity = 65536;
};

class SessionTable {
 public:
  explicit SessionTable(SessionConfig cfg = {}) : cfg_(cfg) {}

  /// Returns the live entry for the key, updating its timestamp, or admits a
  /// new one with a backend from the selection callback. The callback is only
  /// invoked for fresh connections, which is what enforces session affinity.
  Expected<SessionEntry*> lookup_or_admit(const FiveTuple& key, TimestampMs now,
                                          const std::function<Expected<BackendId>()>& assign) {
    check_clock(now);
    auto it = entries_.find(key);
    if (it != entries_.end()) {
      it->second.last_seen = now;
      return &it->second;
    }
    if (entries_.size() >= cfg_.table_capacity) {
      return Error{Errc::table_full, "session table at capacity"};
    }
    auto backend = assign();
    if (!backend.ok()) return backend.error();
    SessionEntry entry;
    entry.key = key;
    entry.backend = backend.value();
    entry.last_seen = now;
    auto [pos, inserted] = entries_.emplace(key, std::move(entry));
    (void)inserted;
    return &pos->second;
  }

  SessionEntry* find(const FiveTuple& key) {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Removes every entry idle strictly longer than the session timeout.
  std::vector<FiveTuple> expire(TimestampMs now) {
    check_clock(now);
    std::vector<FiveTuple> removed;
    for (auto it = entries_.begin(); it != entries_.end();) {
      if (now - it->second.last_seen > cfg_.session_timeout_ms) {
        removed.push_back(it->first);
        it = entries_.erase(it);
      } else {
        ++it;
      }
    }
    return removed;
  }

  /// The duplicate-sequence consistency check. Pre: the segment's checksum
  /// verified (insane checksums never reach this point). Empty payloads are
  /// reported fresh and not recorded.
  ConsistencyResult record_segment(SessionEntry& entry, const TcpSegment& seg) {
    if (seg.payload.empty()) return ConsistencyResult::fresh_segment;
    const std::uint64_t digest = fnv1a64(seg.payload);
    const std::uint32_t length = static_cast<std::uint32_t>(seg.payload.size());
    auto it = entry.seq_digests.find(seg.seq);
    if (it != entry.seq_digests.end()) {
      if (it->second.length == length && it->second.digest == digest) {
        return ConsistencyResult::exact_retransmit;
      }
      return ConsistencyResult::inconsistent;
    }
    entry.seq_digests.emplace(seg.seq, SessionEntry::SeqDigest{length, digest});
    entry.seq_order.push_back(seg.seq);
    while (entry.seq_order.size() > cfg_.max_tracked_segments) {
      entry.seq_digests.erase(entry.seq_order.front());
      entry.seq_order.pop_front();
    }
    return ConsistencyResult::fresh_segment;
  }

  std::size_t size() const { return entries_.size(); }
  const SessionConfig& config() const { return cfg_; }

  const std::map<FiveTuple, SessionEntry>& entries() const { return entries_; }

 private:
  void check_clock(TimestampMs now) {
    if (now < last_now_) {
      throw std::logic_error("SessionTable: clock went backwards");
    }
    last_now_ = now;
  }

  SessionConfig cfg_;
  std::map<FiveTuple, SessionEntry> entries_;
  TimestampMs last_now_ = INT64_MIN;
};

struct AttackerRegistryConfig {
  std::optional<TimestampMs> attacker_ttl_ms;  // no un-flagging by default
};

class AttackerRegistry {
 public:
  explicit AttackerRegistry(AttackerRegistryConfig cfg = {}) : cfg_(cfg) {}

  /// Idempotent: re-flagging keeps the original reason and flag time.
  const AttackerRecord& flag(std::uint32_t ip, AttackReason reason, TimestampMs now,
                             std::vector<std::uint32_t> signature_ids = {}) {
    check_clock(now);
    auto it = records_.find(ip);
    if (it != records_.end()) return it->second;
    AttackerRecord rec;
    rec.ip = ip;
    rec.reason = reason;
    rec.signature_ids = std::move(signature_ids);
    rec.flagged_at = now;
    return records_.emplace(ip, std::move(rec)).first->second;
  }

  /// True iff a live record exists. Records live forever unless a TTL was
  /// configured, in which case one strictly past its TTL is dead.
  bool is_flagged(std::uint32_t ip, TimestampMs now) const {
    check_clock(now);
    auto it = records_.find(ip);
    if (it == records_.end()) return false;
    if (cfg_.attacker_ttl_ms && now - it->second.flagged_at > *cfg_.attacker_ttl_ms) return false;
    return true;
  }

  const AttackerRecord* find(std::uint32_t ip) const {
    auto it = records_.find(ip);
    return it == records_.end() ? nullptr : &it->second;
  }

  /// Removes expired records in TTL mode; no-op otherwise.
  std::vector<std::uint32_t> expire_ttl(TimestampMs now) {
    check_clock(now);
    std::vector<std::uint32_t> removed;
    if (!cfg_.attacker_ttl_ms) return removed;
    for (auto it = records_.begin(); it != records_.end();) {
      if (now - it->second.flagged_at > *cfg_.attacker_ttl_ms) {
        removed.push_back(it->first);
        it = records_.erase(it);
      } else {
        ++it;
      }
    }
    return removed;
  }

  /// Report export: one `<ip> <reason> <flagged_at>` line per record,
  /// ascending by address.
  std::string export_report() const { return format_attacker_report(snapshot()); }

  static std::string format_attacker_report(const std::vector<AttackerRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
      out += format_ipv4_addr(rec.ip);
      out += ' ';
      out += attack_reason_name(rec.reason);
      out += ' ';
      out += std::to_string(rec.flagged_at);
      out += '\n';
    }
    return out;
  }

  std::vector<AttackerRecord> snapshot() const {
    std::vector<AttackerRecord> out;
    out.reserve(records_.size());
    for (const auto& [ip, rec] : records_) out.push_back(rec);
    return out;
  }

  std::size_t size() const { return records_.size(); }

 private:
  void check_clock(TimestampMs now) const {
    if (now < last_now_) {
      throw std::logic_error("AttackerRegistry: clock went backwards");
    }
    last_now_ = now;
  }

  AttackerRegistryConfig cfg_;
  std::map<std::uint32_t, AttackerRecord> records_;
  mutable TimestampMs last_now_ = INT64_MIN;
};

}  // namespace securedirect
