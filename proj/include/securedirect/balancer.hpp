#pragma once

#include <fstream>
#include <functional>
#include <sstream>

#include "securedirect/fragment.hpp"
#include "securedirect/packet.hpp"
#include "securedirect/session.hpp"
#include "securedirect/signature.hpp"

// The dispatch core: VIP filtering, attacker fast path, fragment reassembly,
// the duplicate-sequence check, IDS consultation, round-robin forwarding,
// honeypot deflection, RST injection, and fail-closed error handling. One
// logical event loop owns a Balancer; packets, ticks and probe results are
// processed strictly in timestamp order.

namespace securedirect {

// ---- backend pool ----

struct Backend {
  BackendId id = 0;
  std::string address;  // as configured
  std::uint32_t ip = 0;
  std::uint16_t port = 0;
  bool healthy = true;
  std::uint32_t consecutive_failures = 0;
};

class BackendPool {
 public:
  BackendPool() = default;
  explicit BackendPool(std::vector<Backend> backends) : backends_(std::move(backends)) {}

  /// Next healthy backend after the cursor, cyclically; advances the cursor.
  Expected<BackendId> select_backend() {
    const std::size_t n = backends_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = (cursor_ + i) % n;
      if (backends_[idx].healthy) {
        cursor_ = (idx + 1) % n;
        return backends_[idx].id;
      }
    }
    return Error{Errc::no_healthy_backend, "no healthy backend in the pool"};
  }

  Backend& backend(BackendId id) { return backends_.at(id); }
  const Backend& backend(BackendId id) const { return backends_.at(id); }
  const std::vector<Backend>& backends() const { return backends_; }
  std::vector<Backend>& backends() { return backends_; }

  std::size_t healthy_count() const {
    std::size_t n = 0;
    for (const auto& b : backends_) n += b.healthy ? 1 : 0;
    return n;
  }

 private:
  std::vector<Backend> backends_;
  std::size_t cursor_ = 0;
};

// ---- configuration ----

struct BalancerConfig {
  std::string vip_str;
  std::uint32_t vip = 0;
  std::uint16_t service_port = 0;
  std::vector<std::string> backend_addrs;
  std::string honeypot_str;
  std::uint32_t honeypot_ip = 0;
  std::uint16_t honeypot_port = 0;
  std::string ids_host;
  std::uint16_t ids_port = 0;
  int ids_timeout_ms = 1000;
  int session_timeout_s = 240;
  int probe_interval_s = 5;
  std::uint32_t failure_threshold = 3;
  std::optional<int> attacker_ttl_s;
  std::string signatures_path;

  /// `key = value` text config; unknown keys are errors.
  static Expected<BalancerConfig> parse(std::string_view text);
  static Expected<BalancerConfig> load_file(const std::string& path);

  /// Backends resolved into pool entries; ports default to the service port.
  Expected<std::vector<Backend>> resolve_backends() const {
    std::vector<Backend> out;
    for (std::size_t i = 0; i < backend_addrs.size(); ++i) {
      Backend b;
      b.id = static_cast<BackendId>(i);
      b.address = backend_addrs[i];
      std::string_view addr = backend_addrs[i];
      std::string_view host = addr;
      if (auto colon = addr.find(':'); colon != std::string_view::npos) {
        host = addr.substr(0, colon);
        int port = 0;
        for (char c : addr.substr(colon + 1)) {
          if (c < '0' || c > '9') return Error{Errc::parse_error, "bad backend port in " + b.address};
          port = port * 10 + (c - '0');
          if (port > 65535) return Error{Errc::parse_error, "backend port out of range"};
        }
        b.port = static_cast<std::uint16_t>(port);
      } else {
        b.port = service_port;
      }
      auto ip = parse_ipv4_addr(host);
      if (!ip) return Error{Errc::parse_error, "bad backend address " + b.address};
      b.ip = *ip;
      out.push_back(std::move(b));
    }
    return out;
  }
};

namespace detail {

inline Expected<std::pair<std::string, std::uint16_t>> parse_hostport(std::string_view s,
                                                                      std::uint16_t default_port) {
  std::string_view host = s;
  std::uint32_t port = default_port;
  if (auto colon = s.find(':'); colon != std::string_view::npos) {
    host = s.substr(0, colon);
    auto digits = s.substr(colon + 1);
    if (digits.empty()) return Error{Errc::parse_error, "empty port"};
    port = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') return Error{Errc::parse_error, "bad port"};
      port = port * 10 + static_cast<std::uint32_t>(c - '0');
      if (port > 65535) return Error{Errc::parse_error, "port out of range"};
    }
  }
  if (host.empty()) return Error{Errc::parse_error, "empty host"};
  return std::make_pair(std::string(host), static_cast<std::uint16_t>(port));
}

inline Expected<std::int64_t> parse_int(std::string_view s) {
  if (s.empty()) return Error{Errc::parse_error, "empty number"};
  std::int64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return Error{Errc::parse_error, "bad number"};
    v = v * 10 + (c - '0');
    if (v > 0x7FFFFFFF) return Error{Errc::parse_error, "number out of range"};
  }
  return v;
}

}  // namespace detail

inline Expected<BalancerConfig> BalancerConfig::parse(std::string_view text) {
  BalancerConfig cfg;
  bool saw_vip = false, saw_port = false, saw_backends = false, saw_honeypot = false,
       saw_ids = false, saw_sigs = false;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": expected key = value"};
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    auto bad = [&](const std::string& why) -> Error {
      return Error{Errc::parse_error, "line " + std::to_string(line_no) + ": " + why};
    };

    if (key == "vip") {
      auto ip = parse_ipv4_addr(value);
      if (!ip) return bad("bad vip address");
      cfg.vip_str = value;
      cfg.vip = *ip;
      saw_vip = true;
    } else if (key == "service_port") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() > 65535) return bad("bad service_port");
      cfg.service_port = static_cast<std::uint16_t>(v.value());
      saw_port = true;
    } else if (key == "backends") {
      for (auto part : split(value, ',')) {
        auto addr = trim(part);
        if (addr.empty()) return bad("empty backend address");
        cfg.backend_addrs.emplace_back(addr);
      }
      if (cfg.backend_addrs.empty()) return bad("backends list is empty");
      saw_backends = true;
    } else if (key == "honeypot") {
      auto hp = detail::parse_hostport(value, 0);
      if (!hp.ok()) return bad("bad honeypot address");
      auto ip = parse_ipv4_addr(hp.value().first);
      if (!ip) return bad("bad honeypot address");
      cfg.honeypot_str = value;
      cfg.honeypot_ip = *ip;
      cfg.honeypot_port = hp.value().second;
      saw_honeypot = true;
    } else if (key == "ids_endpoint") {
      auto hp = detail::parse_hostport(value, 0);
      if (!hp.ok() || hp.value().second == 0) return bad("ids_endpoint needs host:port");
      cfg.ids_host = hp.value().first;
      cfg.ids_port = hp.value().second;
      saw_ids = true;
    } else if (key == "ids_timeout_ms") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() < 1) return bad("bad ids_timeout_ms");
      cfg.ids_timeout_ms = static_cast<int>(v.value());
    } else if (key == "session_timeout_s") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() < 1) return bad("bad session_timeout_s");
      cfg.session_timeout_s = static_cast<int>(v.value());
    } else if (key == "probe_interval_s") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() < 1) return bad("bad probe_interval_s");
      cfg.probe_interval_s = static_cast<int>(v.value());
    } else if (key == "failure_threshold") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() < 1) return bad("failure_threshold must be >= 1");
      cfg.failure_threshold = static_cast<std::uint32_t>(v.value());
    } else if (key == "attacker_ttl_s") {
      auto v = detail::parse_int(value);
      if (!v.ok() || v.value() < 1) return bad("bad attacker_ttl_s");
      cfg.attacker_ttl_s = static_cast<int>(v.value());
    } else if (key == "signatures") {
      if (value.empty()) return bad("empty signatures path");
      cfg.signatures_path = value;
      saw_sigs = true;
    } else {
      return bad("unknown key `" + key + "`");
    }
  }
  if (!saw_vip) return Error{Errc::parse_error, "missing required key `vip`"};
  if (!saw_port) return Error{Errc::parse_error, "missing required key `service_port`"};
  if (!saw_backends) return Error{Errc::parse_error, "missing required key `backends`"};
  if (!saw_honeypot) return Error{Errc::parse_error, "missing required key `honeypot`"};
  if (!saw_ids) return Error{Errc::parse_error, "missing required key `ids_endpoint`"};
  if (!saw_sigs) return Error{Errc::parse_error, "missing required key `signatures`"};
  return cfg;
}

inline Expected<BalancerConfig> BalancerConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Error{Errc::io_error, "cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

// ---- actions ----

struct Action {
  enum class Type { forward_to_backend, forward_to_honeypot, emit_rst, drop };

  Type type = Type::drop;
  BackendId backend = 0;  // target for forward_to_backend / emit_rst
  IpPacket packet;
  std::string reason;  // drop reason

  static Action forward(BackendId id, IpPacket pkt) {
    Action a;
    a.type = Type::forward_to_backend;
    a.backend = id;
    a.packet = std::move(pkt);
    return a;
  }
  static Action honeypot(IpPacket pkt) {
    Action a;
    a.type = Type::forward_to_honeypot;
    a.packet = std::move(pkt);
    return a;
  }
  static Action rst(BackendId id, IpPacket pkt) {
    Action a;
    a.type = Type::emit_rst;
    a.backend = id;
    a.packet = std::move(pkt);
    return a;
  }
  static Action drop(std::string reason) {
    Action a;
    a.type = Type::drop;
    a.reason = std::move(reason);
    return a;
  }
};

inline const char* action_type_name(Action::Type t) {
  switch (t) {
    case Action::Type::forward_to_backend: return "forward";
    case Action::Type::forward_to_honeypot: return "honeypot";
    case Action::Type::emit_rst: return "rst";
    case Action::Type::drop: return "drop";
  }
  return "unknown";
}

/// Canonical one-line rendering, the unit of action-level determinism.
inline std::string action_to_string(const Action& a) {
  switch (a.type) {
    case Action::Type::forward_to_backend:
      return "forward b=" + std::to_string(a.backend) + " " + format_ipv4_addr(a.packet.src_ip) +
             ">" + format_ipv4_addr(a.packet.dst_ip) + " len=" +
             std::to_string(a.packet.payload.size());
    case Action::Type::forward_to_honeypot:
      return "honeypot " + format_ipv4_addr(a.packet.src_ip) + ">" +
             format_ipv4_addr(a.packet.dst_ip) + " len=" + std::to_string(a.packet.payload.size());
    case Action::Type::emit_rst:
      return "rst b=" + std::to_string(a.backend) + " " + format_ipv4_addr(a.packet.src_ip) + ">" +
             format_ipv4_addr(a.packet.dst_ip);
    case Action::Type::drop:
      return "drop reason=" + a.reason;
  }
  return "?";
}

struct HealthSummary {
  std::vector<BackendId> became_unhealthy;
  std::vector<BackendId> became_healthy;
};

struct BalancerCounters {
  std::uint64_t packets_in = 0;
  std::uint64_t forwarded_backend = 0;
  std::uint64_t forwarded_honeypot = 0;
  std::uint64_t rst_emitted = 0;
  std::uint64_t ids_queries = 0;
  std::uint64_t sessions_expired = 0;
  std::uint64_t frag_buffers_swept = 0;
  std::map<std::uint32_t, std::uint64_t> ids_queries_by_source;
  std::map<std::string, std::uint64_t> drops_by_reason;
};

// ---- the core ----

using IdsQueryFn = std::function<Expected<Verdict>(ByteView payload)>;

class Balancer {
 public:
  Balancer(BalancerConfig cfg, std::vector<Backend> backends, IdsQueryFn ids_query)
      : cfg_(std::move(cfg)),
        pool_(std::move(backends)),
        sessions_(SessionConfig{static_cast<TimestampMs>(cfg_.session_timeout_s) * 1000, 256,
                                65536}),
        attackers_(AttackerRegistryConfig{
            cfg_.attacker_ttl_s
                ? std::optional<TimestampMs>(static_cast<TimestampMs>(*cfg_.attacker_ttl_s) * 1000)
                : std::nullopt}),
        ids_query_(std::move(ids_query)) {}

  /// Processes one packet addressed to the wire. Evaluation order:
  ///   (a) not the VIP service -> drop
  ///   (b) flagged source -> honeypot, never the IDS
  ///   (c) fragments -> reassemble or flag fragmentation evasion
  ///   (d) duplicate-seq consistency check -> RST + drop on conflict
  ///   (e) empty payload -> forward by affinity, nothing to inspect
  ///   (f) IDS verdict -> forward, or flag + RST + honeypot
  ///   (g) every internal failure -> drop, never an unchecked forward
  std::vector<Action> ingest(const IpPacket& pkt, TimestampMs now) {
    check_clock(now);
    ++counters_.packets_in;

    // (a) only the service port on the VIP is served
    if (pkt.dst_ip != cfg_.vip || pkt.protocol != kProtocolTcp) {
      return {drop_action(pkt, "not-vip")};
    }
    TcpSegment seg;
    if (!pkt.is_fragment()) {
      auto parsed = parse_tcp(pkt);
      if (!parsed.ok()) return {drop_action(pkt, "malformed")};
      seg = parsed.take();
      if (seg.dst_port != cfg_.service_port) return {drop_action(pkt, "not-vip")};
    }

    // (b) attacker fast path: straight to the honeypot, zero IDS work
    if (attackers_.is_flagged(pkt.src_ip, now)) {
      ++counters_.forwarded_honeypot;
      return {Action::honeypot(pkt)};
    }

    // (c) fragment reassembly
    IpPacket work = pkt;
    if (pkt.is_fragment()) {
      auto offered = frags_.offer(pkt, now);
      if (!offered.ok()) {
        return {drop_action(pkt, offered.error().code == Errc::buffer_limit
                                     ? "frag-buffer-limit"
                                     : "malformed-fragment")};
      }
      switch (offered.value().status) {
        case AssemblyResult::Status::pending:
          return {};
        case AssemblyResult::Status::evasion_detected: {
          attackers_.flag(pkt.src_ip, AttackReason::frag_evasion, now);
          ++counters_.forwarded_honeypot;
          return {Action::honeypot(pkt)};
        }
        case AssemblyResult::Status::complete:
          work = std::move(*offered.value().packet);
          break;
      }
      auto parsed = parse_tcp(work);
      if (!parsed.ok()) return {drop_action(work, "malformed")};
      seg = parsed.take();
      if (seg.dst_port != cfg_.service_port) return {drop_action(work, "not-vip")};
    }

    // Insane checksums are rejected outright; the duplicate-seq check is
    // scoped to segments a real end-host would accept.
    if (!verify_checksum(seg, work.src_ip, work.dst_ip)) {
      return {drop_action(work, "bad-checksum")};
    }

    const FiveTuple key = tuple_of(work, seg);
    const bool existed = sessions_.find(key) != nullptr;
    auto admitted = sessions_.lookup_or_admit(key, now, [this] { return pool_.select_backend(); });
    if (!admitted.ok()) {
      return {drop_action(work, admitted.error().code == Errc::table_full ? "table-full"
                                                                          : "no-backend")};
    }
    SessionEntry& entry = *admitted.value();

    // (d) duplicate-sequence consistency
    if (!seg.payload.empty()) {
      switch (sessions_.record_segment(entry, seg)) {
        case ConsistencyResult::inconsistent: {
          attackers_.flag(work.src_ip, AttackReason::duplicate_seq, now);
          entry.state = SessionEntry::State::reset_sent;
          std::vector<Action> actions;
          if (auto rst = make_rst(entry); rst.ok()) {
            ++counters_.rst_emitted;
            actions.push_back(Action::rst(entry.backend, rst.take()));
          }
          actions.push_back(drop_action(work, "duplicate-seq"));
          return actions;
        }
        case ConsistencyResult::fresh_segment:
        case ConsistencyResult::exact_retransmit:
          break;
      }
    }

    // (e) pure control segments carry nothing to inspect
    if (seg.payload.empty()) {
      entry.note_forwarded(seg);
      ++counters_.forwarded_backend;
      return {Action::forward(entry.backend, std::move(work))};
    }

    // (f) consult the IDS
    ++counters_.ids_queries;
    ++counters_.ids_queries_by_source[work.src_ip];
    auto verdict = ids_query_(seg.payload);
    if (!verdict.ok()) {
      // (g) fail closed: an uninspected payload never reaches production
      const char* reason = verdict.error().code == Errc::timeout ? "ids-timeout"
                                                                 : "ids-unavailable";
      return {drop_action(work, reason)};
    }
    if (verdict.value().attack) {
      attackers_.flag(work.src_ip, AttackReason::signature_match, now, verdict.value().matched);
      entry.state = SessionEntry::State::reset_sent;
      std::vector<Action> actions;
      if (existed) {
        if (auto rst = make_rst(entry); rst.ok()) {
          ++counters_.rst_emitted;
          actions.push_back(Action::rst(entry.backend, rst.take()));
        }
      }
      ++counters_.forwarded_honeypot;
      actions.push_back(Action::honeypot(std::move(work)));
      return actions;
    }

    entry.note_forwarded(seg);
    ++counters_.forwarded_backend;
    return {Action::forward(entry.backend, std::move(work))};
  }

  /// Housekeeping: session expiry, fragment sweeps, attacker TTL expiry, and
  /// health-probe scheduling at the configured interval.
  std::vector<Action> tick(TimestampMs now) {
    check_clock(now);
    counters_.sessions_expired += sessions_.expire(now).size();
    counters_.frag_buffers_swept += frags_.sweep(now).size();
    attackers_.expire_ttl(now);
    if (now >= next_probe_at_) {
      probe_requested_ = true;
      const TimestampMs interval = static_cast<TimestampMs>(cfg_.probe_interval_s) * 1000;
      next_probe_at_ = now + interval;
    }
    return {};
  }

  /// True once per probe interval; consuming it arms the next one.
  bool take_probe_request() {
    const bool due = probe_requested_;
    probe_requested_ = false;
    return due;
  }

  /// Applies injected probe results: a failure increments the consecutive
  /// count and trips unhealthy at the threshold; any success restores health.
  HealthSummary health_tick(const std::vector<std::pair<BackendId, bool>>& results,
                            TimestampMs now) {
    check_clock(now);
    HealthSummary summary;
    for (const auto& [id, ok] : results) {
      Backend& b = pool_.backend(id);
      if (ok) {
        b.consecutive_failures = 0;
        if (!b.healthy) {
          b.healthy = true;
          summary.became_healthy.push_back(id);
        }
      } else {
        ++b.consecutive_failures;
        if (b.healthy && b.consecutive_failures >= cfg_.failure_threshold) {
          b.healthy = false;
          summary.became_unhealthy.push_back(id);
        }
      }
    }
    return summary;
  }

  const BalancerConfig& config() const { return cfg_; }
  BackendPool& pool() { return pool_; }
  const BackendPool& pool() const { return pool_; }
  SessionTable& sessions() { return sessions_; }
  AttackerRegistry& attackers() { return attackers_; }
  FragmentAssembler& fragments() { return frags_; }
  const BalancerCounters& counters() const { return counters_; }

 private:
  Action drop_action(const IpPacket&, std::string reason) {
    ++counters_.drops_by_reason[reason];
    return Action::drop(std::move(reason));
  }

  void check_clock(TimestampMs now) {
    if (now < last_now_) throw std::logic_error("Balancer: clock went backwards");
    last_now_ = now;
  }

  BalancerConfig cfg_;
  BackendPool pool_;
  SessionTable sessions_;
  AttackerRegistry attackers_;
  FragmentAssembler frags_;
  IdsQueryFn ids_query_;
  BalancerCounters counters_;
  TimestampMs last_now_ = INT64_MIN;
  TimestampMs next_probe_at_ = 0;
  bool probe_requested_ = false;
};

}  // namespace securedirect
