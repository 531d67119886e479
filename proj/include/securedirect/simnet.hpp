#pragma once

#include <queue>
#include <random>

#include "securedirect/balancer.hpp"
#include "securedirect/honeypot.hpp"
#include "securedirect/signature.hpp"

// Deterministic discrete-event simulation of the test topology: clients and
// attackers, the balancer, an in-simulation IDS with a fixed query latency,
// round-robin backends, and the honeypot. The virtual clock is integer
// milliseconds; identical (topology, scripts, seed) inputs produce a
// byte-identical trace.

namespace securedirect {

struct LinkSpec {
  TimestampMs latency_ms = 1;
  double loss_rate = 0.0;
};

struct BackendOutage {
  std::size_t backend_index = 0;
  TimestampMs down_at = 0;
  std::optional<TimestampMs> up_at;
};

struct Topology {
  std::uint32_t vip = 0x0A000064;  // 10.0.0.100
  std::uint16_t service_port = 80;
  // The minimum deployment footprint: two production servers, one honeypot
  // host, and the VIP as the fourth address.
  std::vector<std::uint32_t> backend_ips = {0x0A000001, 0x0A000002};
  std::uint32_t honeypot_ip = 0x0A000003;

  LinkSpec client_to_balancer{1, 0.0};
  LinkSpec balancer_to_backend{1, 0.0};
  LinkSpec backend_to_client{1, 0.0};
  LinkSpec balancer_to_honeypot{1, 0.0};
  LinkSpec honeypot_to_client{1, 0.0};

  TimestampMs ids_query_latency_ms = 2;
  TimestampMs backend_service_ms = 5;
  std::uint32_t backend_page_bytes = 1024;
  bool ids_enabled = true;

  int session_timeout_s = 240;
  int probe_interval_s = 5;
  std::uint32_t failure_threshold = 3;
  std::optional<int> attacker_ttl_s;
  std::uint32_t honeypot_outbound_budget = 4096;

  std::vector<BackendOutage> outages;
  std::uint64_t max_events = 5'000'000;
};

struct TrafficScript {
  enum class Kind {
    benign_request,
    exploit_direct,
    duplicate_seq_evasion,
    frag_evasion,
    reconnect,
  };

  Kind kind = Kind::benign_request;
  std::uint32_t client_ip = 0;
  std::uint16_t base_port = 40000;
  TimestampMs start_ms = 0;

  // benign_request
  int request_count = 1;
  TimestampMs think_ms = 50;
  Bytes request;

  // attacks
  Bytes benign_bytes;            // duplicate_seq: the decoy segment
  Bytes attack_bytes;            // duplicate_seq conflict / exploit payload
  bool identical_retransmit = false;   // duplicate_seq control run
  bool conflicting_fragments = false;  // frag_evasion plan flavor
  std::vector<std::size_t> frag_cuts;  // custom 8-aligned cuts over the wire bytes
  TimestampMs reconnect_after_ms = 400;
  Bytes post_detection_bytes;
};

struct CompletedRequest {
  std::uint32_t client_ip = 0;
  std::uint16_t src_port = 0;
  TimestampMs start = 0;
  TimestampMs end = 0;
  TimestampMs latency() const { return end - start; }
};

struct BackendConnSummary {
  BackendId backend = 0;
  FiveTuple key;
  Bytes received;
  bool open = true;
  bool rst_accepted = false;
};

struct FlagEvent {
  std::uint32_t ip = 0;
  AttackReason reason = AttackReason::signature_match;
  TimestampMs at = 0;
  std::uint64_t ids_queries_at_flag = 0;  // queries attributed to ip when flagged
};

struct SimTrace {
  std::vector<std::string> lines;
  std::vector<CompletedRequest> completed;
  std::vector<BackendConnSummary> backend_conns;
  CaptureLog honeypot_log;
  std::vector<AttackerRecord> flagged;
  std::vector<FlagEvent> flag_events;
  BalancerCounters balancer_counters;
  std::uint64_t injected = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
  std::uint64_t lost = 0;
  std::uint64_t events_processed = 0;

  std::string text() const {
    std::string out;
    for (const auto& l : lines) {
      out += l;
      out += '\n';
    }
    return out;
  }

  Bytes backend_bytes(BackendId id) const {
    Bytes out;
    for (const auto& c : backend_conns) {
      if (c.backend == id) out.insert(out.end(), c.received.begin(), c.received.end());
    }
    return out;
  }
};

/// The database the canned scenarios run against.
inline SignatureDb default_signature_db() {
  return SignatureDb::load(
             "7 shellshock 2f62696e2f7368\n"            // /bin/sh
             "9 cmdexe 636d642e657865\n"                // cmd.exe
             "12 probe deadbeef\n"                      // 0xdeadbeef marker
             "15 traversal 2e2e2f2e2e2f6574632f706173737764\n"  // ../../etc/passwd
             "21 xss 3c7363726970743e\n")               // <script>
      .take();
}

class Simulator {
 public:
  Simulator(Topology topo, const SignatureDb& db, std::vector<TrafficScript> scripts,
            std::uint64_t seed)
      : topo_(std::move(topo)), db_(db), scripts_(std::move(scripts)), rng_(seed) {
    BalancerConfig cfg;
    cfg.vip = topo_.vip;
    cfg.vip_str = format_ipv4_addr(topo_.vip);
    cfg.service_port = topo_.service_port;
    cfg.honeypot_ip = topo_.honeypot_ip;
    cfg.honeypot_str = format_ipv4_addr(topo_.honeypot_ip);
    cfg.session_timeout_s = topo_.session_timeout_s;
    cfg.probe_interval_s = topo_.probe_interval_s;
    cfg.failure_threshold = topo_.failure_threshold;
    cfg.attacker_ttl_s = topo_.attacker_ttl_s;
    std::vector<Backend> backends;
    for (std::size_t i = 0; i < topo_.backend_ips.size(); ++i) {
      const auto ip = topo_.backend_ips[i];
      backends.push_back(Backend{static_cast<BackendId>(i), format_ipv4_addr(ip), ip,
                                 topo_.service_port, true, 0});
      cfg.backend_addrs.push_back(format_ipv4_addr(ip));
      SimBackend node;
      node.id = static_cast<BackendId>(i);
      node.ip = ip;
      backends_.push_back(std::move(node));
    }
    balancer_.emplace(cfg, std::move(backends), [this](ByteView payload) -> Expected<Verdict> {
      if (!topo_.ids_enabled) {
        return Error{Errc::connect_failed, "ids node disabled"};
      }
      ids_queried_ = true;
      return inspect(db_, payload);
    });

    HoneypotConfig hp_cfg;
    hp_cfg.vip = topo_.vip;
    hp_cfg.service_port = topo_.service_port;
    hp_cfg.outbound_budget = topo_.honeypot_outbound_budget;
    honeypot_.emplace(hp_cfg);

    for (std::size_t i = 0; i < scripts_.size(); ++i) {
      client_by_ip_[scripts_[i].client_ip] = i;
      states_.emplace_back();
    }
  }

  Expected<SimTrace> run(TimestampMs until) {
    for (std::size_t i = 0; i < scripts_.size(); ++i) {
      schedule_wakeup(scripts_[i].start_ms, i, 0);
    }
    for (TimestampMs t = 0; t <= until; t += 1000) {
      Event ev;
      ev.at = t;
      ev.kind = Event::Kind::balancer_tick;
      schedule(std::move(ev));
    }
    for (const auto& outage : topo_.outages) {
      Event down;
      down.at = outage.down_at;
      down.kind = Event::Kind::outage;
      down.node = static_cast<int>(outage.backend_index);
      down.flag = false;
      schedule(std::move(down));
      if (outage.up_at) {
        Event up;
        up.at = *outage.up_at;
        up.kind = Event::Kind::outage;
        up.node = static_cast<int>(outage.backend_index);
        up.flag = true;
        schedule(std::move(up));
      }
    }

    while (!queue_.empty()) {
      if (++trace_.events_processed > topo_.max_events) {
        return Error{Errc::schedule_overflow, "event budget exceeded"};
      }
      Event ev = queue_.top();
      queue_.pop();
      if (ev.at > until) break;
      if (ev.at < now_) throw std::logic_error("Simulator: event scheduled in the past");
      now_ = ev.at;
      dispatch(ev);
    }

    finalize_trace();
    return std::move(trace_);
  }

 private:
  // ---- nodes ----

  struct SimBackend {
    BackendId id = 0;
    std::uint32_t ip = 0;
    bool up = true;
    std::uint32_t reply_seq = 9000;
    TimestampMs busy_until = 0;
    struct Conn {
      std::uint32_t next_expected = 0;
      bool open = true;
      bool rst_accepted = false;
      Bytes received;
    };
    std::map<FiveTuple, Conn> conns;
  };

  struct ClientConn {
    TimestampMs started = 0;
    bool completed = false;
    std::uint32_t isn = 1000;
    int request_index = 0;
  };

  struct ScriptState {
    std::map<std::uint16_t, ClientConn> conns;  // by source port
  };

  struct Event {
    TimestampMs at = 0;
    std::uint64_t seq = 0;
    enum class Kind {
      deliver,
      balancer_tick,
      probe_result,
      client_wakeup,
      outage,
    } kind = Kind::deliver;
    int node = -1;  // deliver: destination node; probe_result/outage: backend index
    IpPacket pkt;
    std::uint64_t pkt_id = 0;
    std::size_t script = 0;
    int phase = 0;
    bool flag = false;  // probe_result: reachable; outage: back up

    bool operator>(const Event& other) const {
      if (at != other.at) return at > other.at;
      return seq > other.seq;
    }
  };

  // node ids: 0 balancer, 100+i backends, 200 honeypot, 300+i clients
  static constexpr int kBalancerNode = 0;
  static constexpr int kBackendBase = 100;
  static constexpr int kHoneypotNode = 200;
  static constexpr int kClientBase = 300;

  // ---- scheduling ----

  void schedule(Event ev) {
    if (ev.at < now_) throw std::logic_error("Simulator: scheduling into the past");
    ev.seq = next_seq_++;
    queue_.push(std::move(ev));
  }

  void schedule_wakeup(TimestampMs at, std::size_t script, int phase) {
    Event ev;
    ev.at = at;
    ev.kind = Event::Kind::client_wakeup;
    ev.script = script;
    ev.phase = phase;
    schedule(std::move(ev));
  }

  bool lose_on(const LinkSpec& link) {
    if (link.loss_rate <= 0.0) return false;
    const double draw = static_cast<double>(rng_() >> 11) * (1.0 / 9007199254740992.0);
    return draw < link.loss_rate;
  }

  /// Puts one packet on a link toward a node; accounts loss.
  void transmit(const IpPacket& pkt, int dest_node, const LinkSpec& link, TimestampMs at,
                const char* link_name) {
    ++trace_.injected;
    const std::uint64_t id = next_pkt_id_++;
    line("SEND t=" + std::to_string(at) + " id=" + std::to_string(id) + " link=" + link_name +
         " " + pkt_str(pkt));
    if (lose_on(link)) {
      ++trace_.lost;
      line("LOST t=" + std::to_string(at) + " id=" + std::to_string(id) + " link=" + link_name);
      return;
    }
    Event ev;
    ev.at = at + link.latency_ms;
    ev.kind = Event::Kind::deliver;
    ev.node = dest_node;
    ev.pkt = pkt;
    ev.pkt_id = id;
    schedule(std::move(ev));
  }

  // ---- dispatch ----

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case Event::Kind::deliver:
        deliver(ev);
        break;
      case Event::Kind::balancer_tick: {
        balancer_->tick(now_);
        if (balancer_->take_probe_request()) {
          // one injected probe result per backend, as ordinary events
          for (const auto& b : backends_) {
            Event probe;
            probe.at = now_;
            probe.kind = Event::Kind::probe_result;
            probe.node = static_cast<int>(b.id);
            probe.flag = b.up;
            schedule(std::move(probe));
          }
        }
        break;
      }
      case Event::Kind::probe_result: {
        const BackendId id = static_cast<BackendId>(ev.node);
        auto changes = balancer_->health_tick({{id, ev.flag}}, now_);
        line("PROBE t=" + std::to_string(now_) + " b=" + std::to_string(id) + " ok=" +
             (ev.flag ? "1" : "0"));
        for (auto changed : changes.became_unhealthy) {
          line("HEALTH t=" + std::to_string(now_) + " b=" + std::to_string(changed) +
               " state=down");
        }
        for (auto changed : changes.became_healthy) {
          line("HEALTH t=" + std::to_string(now_) + " b=" + std::to_string(changed) +
               " state=up");
        }
        break;
      }
      case Event::Kind::client_wakeup:
        client_wakeup(ev.script, ev.phase);
        break;
      case Event::Kind::outage: {
        backends_[static_cast<std::size_t>(ev.node)].up = ev.flag;
        line(std::string("OUTAGE t=") + std::to_string(now_) + " b=" + std::to_string(ev.node) +
             " up=" + (ev.flag ? "1" : "0"));
        break;
      }
    }
  }

  void deliver(const Event& ev) {
    if (ev.node == kBalancerNode) {
      deliver_to_balancer(ev);
      return;
    }
    ++trace_.delivered;
    line("RECV t=" + std::to_string(now_) + " id=" + std::to_string(ev.pkt_id) + " node=" +
         node_name(ev.node) + " " + pkt_str(ev.pkt));
    if (ev.node >= kClientBase) {
      deliver_to_client(static_cast<std::size_t>(ev.node - kClientBase), ev.pkt);
    } else if (ev.node == kHoneypotNode) {
      deliver_to_honeypot(ev.pkt);
    } else if (ev.node >= kBackendBase) {
      deliver_to_backend(backends_[static_cast<std::size_t>(ev.node - kBackendBase)], ev.pkt);
    }
  }

  // The IDS consultation is a blocking step of the balancer loop: packets
  // arriving while a query is in flight wait their turn.
  void deliver_to_balancer(const Event& ev) {
    if (now_ < balancer_busy_until_) {
      Event requeue = ev;
      requeue.at = balancer_busy_until_;
      schedule(std::move(requeue));
      return;
    }
    line("RECV t=" + std::to_string(now_) + " id=" + std::to_string(ev.pkt_id) +
         " node=balancer " + pkt_str(ev.pkt));

    const std::size_t attackers_before = balancer_->attackers().size();
    ids_queried_ = false;
    auto actions = balancer_->ingest(ev.pkt, now_);

    TimestampMs eff = now_;
    if (ids_queried_) {
      eff = now_ + topo_.ids_query_latency_ms;
      balancer_busy_until_ = eff;
      line("QRY t=" + std::to_string(now_) + " src=" + format_ipv4_addr(ev.pkt.src_ip) +
           " done=" + std::to_string(eff));
    }
    if (balancer_->attackers().size() != attackers_before) {
      record_flags();
    }

    bool dropped = false;
    for (const auto& a : actions) {
      line("ACT t=" + std::to_string(eff) + " " + action_to_string(a));
      switch (a.type) {
        case Action::Type::forward_to_backend:
          transmit(a.packet, kBackendBase + static_cast<int>(a.backend), topo_.balancer_to_backend,
                   eff, "b2s");
          break;
        case Action::Type::emit_rst:
          transmit(a.packet, kBackendBase + static_cast<int>(a.backend), topo_.balancer_to_backend,
                   eff, "b2s");
          break;
        case Action::Type::forward_to_honeypot:
          transmit(a.packet, kHoneypotNode, topo_.balancer_to_honeypot, eff, "b2h");
          break;
        case Action::Type::drop:
          dropped = true;
          break;
      }
    }
    if (dropped) {
      ++trace_.dropped;
    } else {
      ++trace_.delivered;
    }
  }

  void record_flags() {
    for (const auto& rec : balancer_->attackers().snapshot()) {
      bool known = false;
      for (const auto& seen : trace_.flag_events) {
        if (seen.ip == rec.ip) {
          known = true;
          break;
        }
      }
      if (known) continue;
      const auto& by_source = balancer_->counters().ids_queries_by_source;
      auto it = by_source.find(rec.ip);
      FlagEvent fe;
      fe.ip = rec.ip;
      fe.reason = rec.reason;
      fe.at = rec.flagged_at;
      fe.ids_queries_at_flag = it == by_source.end() ? 0 : it->second;
      trace_.flag_events.push_back(fe);
      line("FLAG t=" + std::to_string(now_) + " ip=" + format_ipv4_addr(rec.ip) + " reason=" +
           attack_reason_name(rec.reason) + " qcount=" + std::to_string(fe.ids_queries_at_flag));
    }
  }

  void deliver_to_backend(SimBackend& backend, const IpPacket& pkt) {
    if (!backend.up) return;  // a crashed server consumes and says nothing
    auto parsed = parse_tcp(pkt);
    if (!parsed.ok()) return;
    const TcpSegment& seg = parsed.value();
    const FiveTuple key = tuple_of(pkt, seg);

    if (seg.has(tcpflag::kRst)) {
      auto it = backend.conns.find(key);
      if (it != backend.conns.end() && it->second.open && seg.seq == it->second.next_expected) {
        it->second.open = false;
        it->second.rst_accepted = true;
        line("RSTCLOSE t=" + std::to_string(now_) + " b=" + std::to_string(backend.id) + " " +
             format_ipv4_addr(key.src_ip) + ":" + std::to_string(key.src_port));
      }
      return;
    }
    if (seg.has(tcpflag::kSyn)) {
      auto& conn = backend.conns[key];
      conn = SimBackend::Conn{};
      conn.next_expected = seg.seq + 1;
      TcpSegment synack;
      synack.src_port = topo_.service_port;
      synack.dst_port = seg.src_port;
      synack.seq = backend.reply_seq;
      synack.ack = conn.next_expected;
      synack.flags = tcpflag::kSyn | tcpflag::kAck;
      auto reply = make_tcp_packet(topo_.vip, pkt.src_ip, synack, next_ip_id());
      if (reply.ok()) route_to_client(reply.value(), topo_.backend_to_client, now_, "s2c");
      return;
    }
    auto it = backend.conns.find(key);
    if (it == backend.conns.end() || !it->second.open) return;
    SimBackend::Conn& conn = it->second;
    if (seg.payload.empty()) {
      if (seg.has(tcpflag::kFin) && seg.seq == conn.next_expected) {
        conn.open = false;
      }
      return;
    }
    if (seg.seq != conn.next_expected) return;  // duplicate or gap: not consumed
    conn.received.insert(conn.received.end(), seg.payload.begin(), seg.payload.end());
    conn.next_expected += static_cast<std::uint32_t>(seg.payload.size());

    // serve the page after the service time; the server is sequential
    const TimestampMs start = std::max(now_, backend.busy_until);
    const TimestampMs done = start + topo_.backend_service_ms;
    backend.busy_until = done;
    TcpSegment page;
    page.src_port = topo_.service_port;
    page.dst_port = seg.src_port;
    page.seq = backend.reply_seq;
    page.ack = conn.next_expected;
    page.flags = tcpflag::kAck | tcpflag::kPsh;
    page.payload = page_body();
    backend.reply_seq += static_cast<std::uint32_t>(page.payload.size());
    auto reply = make_tcp_packet(topo_.vip, pkt.src_ip, page, next_ip_id());
    if (reply.ok()) route_to_client(reply.value(), topo_.backend_to_client, done, "s2c");
  }

  void deliver_to_honeypot(const IpPacket& pkt) {
    const std::size_t before = honeypot_->log().size();
    auto replies = honeypot_->accept(pkt, now_);
    for (std::size_t i = before; i < honeypot_->log().size(); ++i) {
      const auto& rec = honeypot_->log().records()[i];
      line(std::string("CAP t=") + std::to_string(now_) + " dir=" +
           (rec.direction == CaptureRecord::Direction::in ? "in" : "out") + " src=" +
           format_ipv4_addr(rec.src_ip) + ":" + std::to_string(rec.src_port) + " len=" +
           std::to_string(rec.bytes.size()));
    }
    for (const auto& reply : replies) {
      route_to_client(reply, topo_.honeypot_to_client, now_, "h2c");
    }
  }

  void route_to_client(const IpPacket& pkt, const LinkSpec& link, TimestampMs at,
                       const char* link_name) {
    auto it = client_by_ip_.find(pkt.dst_ip);
    if (it == client_by_ip_.end()) return;
    transmit(pkt, kClientBase + static_cast<int>(it->second), link, at, link_name);
  }

  // ---- client machines ----

  void send_to_balancer(const IpPacket& pkt) {
    transmit(pkt, kBalancerNode, topo_.client_to_balancer, now_, "c2b");
  }

  IpPacket client_packet(const TrafficScript& s, std::uint16_t sport, TcpSegment seg) {
    seg.src_port = sport;
    seg.dst_port = topo_.service_port;
    return make_tcp_packet(s.client_ip, topo_.vip, seg, next_ip_id()).take();
  }

  void send_syn(const TrafficScript& s, ScriptState& st, std::uint16_t sport) {
    ClientConn conn;
    conn.started = now_;
    conn.isn = 1000;
    st.conns[sport] = conn;
    TcpSegment syn;
    syn.seq = st.conns[sport].isn;
    syn.flags = tcpflag::kSyn;
    send_to_balancer(client_packet(s, sport, syn));
  }

  void send_data(const TrafficScript& s, std::uint16_t sport, std::uint32_t seq,
                 const Bytes& payload) {
    TcpSegment seg;
    seg.seq = seq;
    seg.flags = tcpflag::kAck | tcpflag::kPsh;
    seg.payload = payload;
    send_to_balancer(client_packet(s, sport, seg));
  }

  /// Sends one request segment as IP fragments of the full TCP wire bytes.
  /// Cuts come from the script plan when present, with a default split after
  /// the TCP header otherwise. A conflicting plan re-sends the first piece
  /// with mutated bytes while its range is still buffered.
  void send_fragments(const TrafficScript& s, std::uint16_t sport, std::uint32_t seq,
                      const Bytes& payload, bool conflicting) {
    TcpSegment seg;
    seg.src_port = sport;
    seg.dst_port = topo_.service_port;
    seg.seq = seq;
    seg.flags = tcpflag::kAck | tcpflag::kPsh;
    seg.payload = payload;
    Bytes wire = serialize_tcp(seg, s.client_ip, topo_.vip).take();

    std::vector<std::size_t> cuts;
    for (std::size_t c : s.frag_cuts) {
      if (c % 8 == 0 && c > 0 && c < wire.size()) cuts.push_back(c);
    }
    if (cuts.empty()) {
      std::size_t cut = 24;
      while (cut + 8 >= wire.size()) {
        if (cut <= 8) break;
        cut -= 8;
      }
      cuts.push_back(cut);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.push_back(wire.size());

    IpPacket base;
    base.src_ip = s.client_ip;
    base.dst_ip = topo_.vip;
    base.protocol = kProtocolTcp;
    base.identification = sport;

    std::size_t begin = 0;
    bool first_piece = true;
    for (std::size_t end : cuts) {
      IpPacket piece = base;
      piece.fragment_offset = static_cast<std::uint16_t>(begin / 8);
      piece.more_fragments = end < wire.size();
      piece.payload.assign(wire.begin() + static_cast<std::ptrdiff_t>(begin),
                           wire.begin() + static_cast<std::ptrdiff_t>(end));
      send_to_balancer(piece);
      if (first_piece && conflicting) {
        IpPacket evil = piece;
        for (auto& b : evil.payload) b ^= 0xA5;
        send_to_balancer(evil);
        return;  // the conflict kills the buffer; nothing else to send
      }
      first_piece = false;
      begin = end;
    }
  }

  void client_wakeup(std::size_t idx, int phase) {
    const TrafficScript& s = scripts_[idx];
    ScriptState& st = states_[idx];
    switch (s.kind) {
      case TrafficScript::Kind::benign_request: {
        // phase is the request index
        if (phase >= s.request_count) return;
        const std::uint16_t sport = static_cast<std::uint16_t>(s.base_port + phase);
        send_syn(s, st, sport);
        st.conns[sport].request_index = phase;
        break;
      }
      case TrafficScript::Kind::exploit_direct: {
        if (phase == 0) {
          send_syn(s, st, s.base_port);
        } else {
          // follow-up traffic after the server went silent
          const std::uint32_t seq =
              1001 + static_cast<std::uint32_t>(s.attack_bytes.size());
          send_data(s, s.base_port, seq, to_bytes("are you still there?"));
        }
        break;
      }
      case TrafficScript::Kind::duplicate_seq_evasion: {
        if (phase == 0) {
          send_syn(s, st, s.base_port);
        } else if (phase == 1) {
          const Bytes& second = s.identical_retransmit ? s.benign_bytes : s.attack_bytes;
          send_data(s, s.base_port, 1001, second);
          if (!s.identical_retransmit) {
            schedule_wakeup(now_ + s.reconnect_after_ms, idx, 2);
          }
        } else {
          send_data(s, s.base_port, 2001, s.post_detection_bytes.empty()
                                              ? to_bytes("retry after silence")
                                              : s.post_detection_bytes);
        }
        break;
      }
      case TrafficScript::Kind::frag_evasion: {
        if (phase == 0) send_syn(s, st, s.base_port);
        break;
      }
      case TrafficScript::Kind::reconnect: {
        if (phase == 0) {
          send_syn(s, st, s.base_port);
        } else {
          // the server looks crashed; try again from a fresh port
          send_syn(s, st, static_cast<std::uint16_t>(s.base_port + 1));
        }
        break;
      }
    }
  }

  void deliver_to_client(std::size_t idx, const IpPacket& pkt) {
    const TrafficScript& s = scripts_[idx];
    ScriptState& st = states_[idx];
    auto parsed = parse_tcp(pkt);
    if (!parsed.ok()) return;
    const TcpSegment& seg = parsed.value();
    const std::uint16_t sport = seg.dst_port;
    auto conn_it = st.conns.find(sport);
    if (conn_it == st.conns.end()) return;
    ClientConn& conn = conn_it->second;

    const bool synack = seg.has(tcpflag::kSyn) && seg.has(tcpflag::kAck);
    if (synack) {
      on_synack(idx, s, st, conn, sport);
      return;
    }
    if (!seg.payload.empty()) {
      on_response_data(idx, s, conn, sport);
    }
  }

  void on_synack(std::size_t idx, const TrafficScript& s, ScriptState&, ClientConn& conn,
                 std::uint16_t sport) {
    const std::uint32_t seq = conn.isn + 1;
    switch (s.kind) {
      case TrafficScript::Kind::benign_request:
        send_data(s, sport, seq, s.request);
        break;
      case TrafficScript::Kind::exploit_direct:
        send_data(s, sport, seq, s.attack_bytes);
        schedule_wakeup(now_ + s.reconnect_after_ms, idx, 1);
        break;
      case TrafficScript::Kind::duplicate_seq_evasion:
        send_data(s, sport, seq, s.benign_bytes);
        schedule_wakeup(now_ + 5, idx, 1);
        break;
      case TrafficScript::Kind::frag_evasion:
        send_fragments(s, sport, seq, s.request, s.conflicting_fragments);
        break;
      case TrafficScript::Kind::reconnect:
        if (sport == s.base_port) {
          send_data(s, sport, seq, s.attack_bytes);
          schedule_wakeup(now_ + s.reconnect_after_ms, idx, 1);
        } else {
          send_data(s, sport, seq, s.post_detection_bytes);
        }
        break;
    }
  }

  void on_response_data(std::size_t idx, const TrafficScript& s, ClientConn& conn,
                        std::uint16_t sport) {
    const bool counts_as_request =
        s.kind == TrafficScript::Kind::benign_request ||
        (s.kind == TrafficScript::Kind::duplicate_seq_evasion && s.identical_retransmit) ||
        (s.kind == TrafficScript::Kind::frag_evasion && !s.conflicting_fragments);
    if (!counts_as_request || conn.completed) return;
    conn.completed = true;
    CompletedRequest done;
    done.client_ip = s.client_ip;
    done.src_port = sport;
    done.start = conn.started;
    done.end = now_;
    trace_.completed.push_back(done);
    line("DONE t=" + std::to_string(now_) + " client=" + format_ipv4_addr(s.client_ip) + ":" +
         std::to_string(sport) + " latency=" + std::to_string(done.latency()));
    if (s.kind == TrafficScript::Kind::benign_request &&
        conn.request_index + 1 < s.request_count) {
      schedule_wakeup(now_ + s.think_ms, idx, conn.request_index + 1);
    }
  }

  // ---- helpers ----

  Bytes page_body() const {
    Bytes body = to_bytes("HTTP/1.0 200 OK\r\n\r\n");
    body.resize(topo_.backend_page_bytes, 'x');
    return body;
  }

  std::uint16_t next_ip_id() { return ip_id_++; }

  std::string node_name(int node) const {
    if (node == kBalancerNode) return "balancer";
    if (node == kHoneypotNode) return "honeypot";
    if (node >= kClientBase) return "client" + std::to_string(node - kClientBase);
    return "backend" + std::to_string(node - kBackendBase);
  }

  std::string pkt_str(const IpPacket& pkt) const {
    std::string s = format_ipv4_addr(pkt.src_ip) + ">" + format_ipv4_addr(pkt.dst_ip);
    if (pkt.is_fragment()) {
      s += " frag=" + std::to_string(pkt.fragment_offset) + "/" +
           (pkt.more_fragments ? "1" : "0") + " id=" + std::to_string(pkt.identification) +
           " len=" + std::to_string(pkt.payload.size());
      return s;
    }
    auto seg = parse_tcp(pkt);
    if (seg.ok()) {
      s += " " + std::to_string(seg.value().src_port) + ">" + std::to_string(seg.value().dst_port) +
           " " + flags_to_string(seg.value().flags) + " seq=" + std::to_string(seg.value().seq) +
           " len=" + std::to_string(seg.value().payload.size());
    } else {
      s += " len=" + std::to_string(pkt.payload.size());
    }
    return s;
  }

  void line(std::string text) { trace_.lines.push_back(std::move(text)); }

  void finalize_trace() {
    for (const auto& b : backends_) {
      for (const auto& [key, conn] : b.conns) {
        BackendConnSummary summary;
        summary.backend = b.id;
        summary.key = key;
        summary.received = conn.received;
        summary.open = conn.open;
        summary.rst_accepted = conn.rst_accepted;
        trace_.backend_conns.push_back(std::move(summary));
      }
    }
    trace_.honeypot_log = honeypot_->log();
    trace_.flagged = balancer_->attackers().snapshot();
    trace_.balancer_counters = balancer_->counters();
    line("SUM injected=" + std::to_string(trace_.injected) + " delivered=" +
         std::to_string(trace_.delivered) + " dropped=" + std::to_string(trace_.dropped) +
         " lost=" + std::to_string(trace_.lost) + " completed=" +
         std::to_string(trace_.completed.size()) + " flagged=" +
         std::to_string(trace_.flagged.size()));
  }

  Topology topo_;
  const SignatureDb& db_;
  std::vector<TrafficScript> scripts_;
  std::vector<ScriptState> states_;
  std::mt19937_64 rng_;

  std::optional<Balancer> balancer_;
  std::optional<Honeypot> honeypot_;
  std::vector<SimBackend> backends_;
  std::map<std::uint32_t, std::size_t> client_by_ip_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_pkt_id_ = 0;
  std::uint16_t ip_id_ = 1;
  TimestampMs now_ = 0;
  TimestampMs balancer_busy_until_ = 0;
  bool ids_queried_ = false;

  SimTrace trace_;
};

/// Convenience wrapper mirroring the simulator's contract.
inline Expected<SimTrace> run(const Topology& topo, const SignatureDb& db,
                              std::vector<TrafficScript> scripts, std::uint64_t seed,
                              TimestampMs until) {
  Simulator sim(topo, db, std::move(scripts), seed);
  return sim.run(until);
}

}  // namespace securedirect
