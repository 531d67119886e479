#pragma once

#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include "securedirect/balancer.hpp"
#include "securedirect/ids_service.hpp"
#include "securedirect/net.hpp"

// Stream-level approximation of the architecture over ordinary sockets:
// accept on the service address, inspect each client chunk via the IDS,
// splice benign streams to a round-robin backend and detected streams to the
// honeypot, and skip the IDS entirely for already-flagged sources.
// Packet-level mechanics (RST injection, fragment handling, duplicate-seq
// detection) are simulation-only; this mode works on byte streams.

namespace securedirect {

struct LiveProxyOptions {
  bool pooled_ids = false;
  int relay_poll_ms = 100;
};

class LiveProxy {
 public:
  LiveProxy(BalancerConfig cfg, LiveProxyOptions opts = {})
      : cfg_(std::move(cfg)), opts_(opts) {}

  ~LiveProxy() { stop(); }

  Status start() {
    auto backends = cfg_.resolve_backends();
    if (!backends.ok()) return backends.error();
    backends_ = backends.take();
    auto listener = TcpListener::bind(cfg_.vip_str, cfg_.service_port);
    if (!listener.ok()) return listener.error();
    listener_ = listener.take();
    accept_thread_ = std::thread([this] { accept_loop(); });
    prober_thread_ = std::thread([this] { probe_loop(); });
    return ok_status();
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    listener_.close();
    prober_cv_notify_ = true;
    if (accept_thread_.joinable()) accept_thread_.join();
    if (prober_thread_.joinable()) prober_thread_.join();
    std::lock_guard lock(workers_mutex_);
    for (auto& t : workers_) {
      if (t.joinable()) t.join();
    }
    workers_.clear();
  }

  std::uint16_t port() const { return listener_.port(); }

  bool is_flagged(std::uint32_t ip) const {
    std::lock_guard lock(state_mutex_);
    return flagged_.count(ip) > 0;
  }

  std::uint64_t ids_queries() const { return ids_queries_.load(); }
  std::uint64_t backend_splices() const { return backend_splices_.load(); }
  std::uint64_t honeypot_splices() const { return honeypot_splices_.load(); }

 private:
  void accept_loop() {
    while (!stopped_.load()) {
      std::uint32_t peer_ip = 0;
      std::uint16_t peer_port = 0;
      auto conn = listener_.accept(&peer_ip, &peer_port);
      if (!conn.ok()) break;
      std::lock_guard lock(workers_mutex_);
      workers_.emplace_back(
          [this, peer_ip](TcpStream stream) { handle(std::move(stream), peer_ip); }, conn.take());
    }
  }

  // TCP connect checks as the health probe; the same consecutive-failure
  // threshold as the packet-level balancer.
  void probe_loop() {
    std::int64_t waited_ms = 0;
    while (!stopped_.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      waited_ms += 50;
      if (waited_ms < cfg_.probe_interval_s * 1000) continue;
      waited_ms = 0;
      for (std::size_t i = 0; i < backends_.size(); ++i) {
        std::string host;
        std::uint16_t port;
        {
          std::lock_guard lock(state_mutex_);
          host = format_ipv4_addr(backends_[i].ip);
          port = backends_[i].port;
        }
        auto probe = TcpStream::connect(host, port, 500);
        std::lock_guard lock(state_mutex_);
        Backend& b = backends_[i];
        if (probe.ok()) {
          b.consecutive_failures = 0;
          b.healthy = true;
        } else {
          ++b.consecutive_failures;
          if (b.consecutive_failures >= cfg_.failure_threshold) b.healthy = false;
        }
      }
    }
  }

  Expected<std::pair<std::string, std::uint16_t>> next_backend() {
    std::lock_guard lock(state_mutex_);
    for (std::size_t i = 0; i < backends_.size(); ++i) {
      const std::size_t idx = (cursor_ + i) % backends_.size();
      if (backends_[idx].healthy) {
        cursor_ = (idx + 1) % backends_.size();
        return std::make_pair(format_ipv4_addr(backends_[idx].ip), backends_[idx].port);
      }
    }
    return Error{Errc::no_healthy_backend, "no healthy backend"};
  }

  void flag(std::uint32_t ip) {
    std::lock_guard lock(state_mutex_);
    flagged_.insert(ip);
  }

  Expected<TcpStream> connect_honeypot() {
    const std::uint16_t port = cfg_.honeypot_port != 0 ? cfg_.honeypot_port : cfg_.service_port;
    auto conn = TcpStream::connect(format_ipv4_addr(cfg_.honeypot_ip), port, 1000);
    if (conn.ok()) ++honeypot_splices_;
    return conn;
  }

  void handle(TcpStream client, std::uint32_t peer_ip) {
    IdsClient ids(cfg_.ids_host, cfg_.ids_port, cfg_.ids_timeout_ms, opts_.pooled_ids);
    TcpStream upstream;
    bool to_honeypot = false;

    if (is_flagged(peer_ip)) {
      auto hp = connect_honeypot();
      if (!hp.ok()) return;
      upstream = hp.take();
      to_honeypot = true;
    }

    std::uint8_t buf[16384];
    while (!stopped_.load()) {
      pollfd fds[2];
      fds[0] = {client.fd(), POLLIN, 0};
      nfds_t nfds = 1;
      if (upstream.valid()) {
        fds[1] = {upstream.fd(), POLLIN, 0};
        nfds = 2;
      }
      int rc = ::poll(fds, nfds, opts_.relay_poll_ms);
      if (rc < 0) break;
      if (rc == 0) continue;

      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        auto n = client.read_some(buf, sizeof(buf), 0);
        if (!n.ok() || n.value() == 0) break;  // client gone
        ByteView chunk(buf, n.value());

        if (!to_honeypot) {
          ++ids_queries_;
          ++ids_queries_by_source_at(peer_ip);
          auto verdict = ids.query(chunk);
          if (!verdict.ok()) break;  // fail closed: nothing unchecked flows
          if (verdict.value().attack) {
            flag(peer_ip);
            upstream.close();  // the production conversation ends here
            auto hp = connect_honeypot();
            if (!hp.ok()) break;
            upstream = hp.take();
            to_honeypot = true;
          } else if (!upstream.valid()) {
            auto target = next_backend();
            if (!target.ok()) break;  // fail closed
            auto conn =
                TcpStream::connect(target.value().first, target.value().second, 1000);
            if (!conn.ok()) break;
            upstream = conn.take();
            ++backend_splices_;
          }
        }
        if (!upstream.write_all(chunk).ok()) break;
      }
      if (nfds == 2 && (fds[1].revents & (POLLIN | POLLHUP | POLLERR))) {
        auto n = upstream.read_some(buf, sizeof(buf), 0);
        if (!n.ok() || n.value() == 0) break;
        if (!client.write_all(ByteView(buf, n.value())).ok()) break;
      }
    }
  }

  std::uint64_t& ids_queries_by_source_at(std::uint32_t ip) {
    std::lock_guard lock(state_mutex_);
    return ids_queries_by_source_[ip];
  }

 public:
  std::uint64_t ids_queries_for(std::uint32_t ip) const {
    std::lock_guard lock(state_mutex_);
    auto it = ids_queries_by_source_.find(ip);
    return it == ids_queries_by_source_.end() ? 0 : it->second;
  }

 private:
  BalancerConfig cfg_;
  LiveProxyOptions opts_;
  TcpListener listener_;
  std::vector<Backend> backends_;
  std::size_t cursor_ = 0;

  mutable std::mutex state_mutex_;
  std::set<std::uint32_t> flagged_;
  std::map<std::uint32_t, std::uint64_t> ids_queries_by_source_;

  std::thread accept_thread_;
  std::thread prober_thread_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopped_{false};
  std::atomic<bool> prober_cv_notify_{false};
  std::atomic<std::uint64_t> ids_queries_{0};
  std::atomic<std::uint64_t> backend_splices_{0};
  std::atomic<std::uint64_t> honeypot_splices_{0};
};

}  // namespace securedirect
