#pragma once

#include <map>
#include <optional>
#include <stdexcept>

#include "securedirect/packet.hpp"
#include "securedirect/util.hpp"

// IP fragment reassembly at the balancer. The policy is strict: overlapping
// ranges must be byte-identical (retransmission), any disagreement is treated
// as an evasion attempt and the whole buffer is discarded so the source can
// be flagged upstream. No OS-specific overlap favoritism is emulated.

namespace securedirect {

struct FragmentKey {
  std::uint32_t src_ip = 0;
  std::uint32_t dst_ip = 0;
  std::uint8_t protocol = 0;
  std::uint16_t identification = 0;

  auto operator<=>(const FragmentKey&) const = default;
};

inline FragmentKey fragment_key_of(const IpPacket& pkt) {
  return FragmentKey{pkt.src_ip, pkt.dst_ip, pkt.protocol, pkt.identification};
}

struct AssemblyResult {
  enum class Status { complete, pending, evasion_detected };

  Status status = Status::pending;
  std::optional<IpPacket> packet;  // set when complete
  std::string reason;              // set when evasion_detected

  static AssemblyResult complete(IpPacket pkt) {
    AssemblyResult r;
    r.status = Status::complete;
    r.packet = std::move(pkt);
    return r;
  }
  static AssemblyResult pending() { return AssemblyResult{}; }
  static AssemblyResult evasion(std::string why) {
    AssemblyResult r;
    r.status = Status::evasion_detected;
    r.reason = std::move(why);
    return r;
  }
};

struct FragmentConfig {
  TimestampMs reassembly_timeout_ms = 30'000;
  std::size_t per_source_quota = 64;  // concurrent buffers per source IP
};

class FragmentAssembler {
 public:
  explicit FragmentAssembler(FragmentConfig cfg = {}) : cfg_(cfg) {}

  /// Feeds one parsed packet. Unfragmented input completes immediately;
  /// fragments are buffered until every byte of [0, total_length) is covered
  /// consistently. Conflicting overlap drops the buffer and reports evasion.
  Expected<AssemblyResult> offer(const IpPacket& frag, TimestampMs now) {
    check_clock(now);
    if (!frag.is_fragment()) {
      return AssemblyResult::complete(frag);
    }
    if (frag.payload.empty()) {
      return Error{Errc::malformed, "fragment with empty payload"};
    }
    if (frag.more_fragments && frag.payload.size() % 8 != 0) {
      return Error{Errc::malformed, "non-final fragment length not a multiple of 8"};
    }

    const FragmentKey key = fragment_key_of(frag);
    auto it = buffers_.find(key);
    if (it == buffers_.end()) {
      if (source_count(key.src_ip) >= cfg_.per_source_quota) {
        return Error{Errc::buffer_limit, "per-source fragment buffer quota exceeded"};
      }
      it = buffers_.emplace(key, Buffer{}).first;
      it->second.first_seen = now;
      ++per_source_[key.src_ip];
    }
    Buffer& buf = it->second;

    const std::uint32_t begin = static_cast<std::uint32_t>(frag.fragment_offset) * 8;
    const std::uint32_t end = begin + static_cast<std::uint32_t>(frag.payload.size());

    // Total length is pinned by the final fragment; later fragments may not
    // contradict it.
    if (!frag.more_fragments) {
      if (buf.total_length && *buf.total_length != end) {
        return evict_as_evasion(it, "final fragments disagree on datagram length");
      }
      buf.total_length = end;
    }
    if (buf.total_length && end > *buf.total_length) {
      return evict_as_evasion(it, "fragment extends past the final fragment's end");
    }
    if (buf.total_length && frag.more_fragments && end == *buf.total_length) {
      // A non-final fragment that lands exactly on the end claims more data
      // exists beyond it; the recorded final says otherwise.
      return evict_as_evasion(it, "non-final fragment at datagram end");
    }

    // Overlap check against every stored range: shared bytes must agree.
    for (const auto& [off, bytes] : buf.ranges) {
      const std::uint32_t r_begin = off;
      const std::uint32_t r_end = off + static_cast<std::uint32_t>(bytes.size());
      const std::uint32_t lo = std::max(begin, r_begin);
      const std::uint32_t hi = std::min(end, r_end);
      for (std::uint32_t pos = lo; pos < hi; ++pos) {
        if (bytes[pos - r_begin] != frag.payload[pos - begin]) {
          return evict_as_evasion(it, "overlapping fragments with conflicting bytes");
        }
      }
    }

    if (frag.fragment_offset == 0) {
      buf.first_ttl = frag.ttl;
      buf.first_df = frag.dont_fragment;
      buf.have_first = true;
    }

    auto range_it = buf.ranges.find(begin);
    if (range_it == buf.ranges.end()) {
      buf.ranges.emplace(begin, frag.payload);
    } else if (frag.payload.size() > range_it->second.size()) {
      range_it->second = frag.payload;  // longer identical-prefix range wins
    }

    if (!buf.total_length) return AssemblyResult::pending();

    // Coverage: walk the sorted ranges and confirm [0, total) has no gap.
    std::uint32_t covered = 0;
    for (const auto& [off, bytes] : buf.ranges) {
      if (off > covered) return AssemblyResult::pending();
      covered = std::max(covered, off + static_cast<std::uint32_t>(bytes.size()));
    }
    if (covered < *buf.total_length || !buf.have_first) return AssemblyResult::pending();

    IpPacket assembled;
    assembled.src_ip = key.src_ip;
    assembled.dst_ip = key.dst_ip;
    assembled.protocol = key.protocol;
    assembled.identification = key.identification;
    assembled.ttl = buf.first_ttl;
    assembled.dont_fragment = buf.first_df;
    assembled.fragment_offset = 0;
    assembled.more_fragments = false;
    assembled.payload.assign(*buf.total_length, 0);
    for (const auto& [off, bytes] : buf.ranges) {
      std::copy(bytes.begin(), bytes.end(), assembled.payload.begin() + off);
    }
    erase_buffer(it);
    return AssemblyResult::complete(std::move(assembled));
  }

  /// Evicts every buffer older than the reassembly timeout (strictly).
  std::vector<FragmentKey> sweep(TimestampMs now) {
    check_clock(now);
    std::vector<FragmentKey> evicted;
    for (auto it = buffers_.begin(); it != buffers_.end();) {
      if (now - it->second.first_seen > cfg_.reassembly_timeout_ms) {
        evicted.push_back(it->first);
        it = erase_buffer(it);
      } else {
        ++it;
      }
    }
    return evicted;
  }

  std::size_t buffer_count() const { return buffers_.size(); }
  const FragmentConfig& config() const { return cfg_; }

 private:
  struct Buffer {
    std::map<std::uint32_t, Bytes> ranges;  // offset bytes -> content
    std::optional<std::uint32_t> total_length;
    TimestampMs first_seen = 0;
    std::uint8_t first_ttl = 64;
    bool first_df = false;
    bool have_first = false;
  };

  using BufferMap = std::map<FragmentKey, Buffer>;

  std::size_t source_count(std::uint32_t src_ip) const {
    auto it = per_source_.find(src_ip);
    return it == per_source_.end() ? 0 : it->second;
  }

  BufferMap::iterator erase_buffer(BufferMap::iterator it) {
    auto cnt = per_source_.find(it->first.src_ip);
    if (cnt != per_source_.end() && --cnt->second == 0) per_source_.erase(cnt);
    return buffers_.erase(it);
  }

  Expected<AssemblyResult> evict_as_evasion(BufferMap::iterator it, std::string why) {
    erase_buffer(it);
    return AssemblyResult::evasion(std::move(why));
  }

  void check_clock(TimestampMs now) {
    if (now < last_now_) {
      throw std::logic_error("FragmentAssembler: clock went backwards");
    }
    last_now_ = now;
  }

  FragmentConfig cfg_;
  BufferMap buffers_;
  std::map<std::uint32_t, std::size_t> per_source_;
  TimestampMs last_now_ = INT64_MIN;
};

}  // namespace securedirect
