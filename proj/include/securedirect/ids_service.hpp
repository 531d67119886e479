#pragma once

#include <atomic>
#include <chrono>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "securedirect/ids_wire.hpp"
#include "securedirect/net.hpp"
#include "securedirect/signature.hpp"

// The IDS query service: a concurrent TCP server answering one boolean
// inspection per connection (or a frame stream in pooled mode), and the
// balancer-side client. Every client-side failure (connect, timeout,
// protocol) is surfaced as an error so the caller can fail closed.

namespace securedirect {

struct IdsServerConfig {
  bool pooled = false;       // keep the connection open for further frames
  int frame_timeout_ms = 5000;
};

class IdsServer {
 public:
  IdsServer(const SignatureDb& db, TcpListener listener, IdsServerConfig cfg = {})
      : db_(db), listener_(std::move(listener)), cfg_(cfg) {}

  ~IdsServer() { stop(); }

  void start() {
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    listener_.close();
    if (accept_thread_.joinable()) accept_thread_.join();
    std::lock_guard lock(workers_mutex_);
    for (auto& t : workers_) {
      if (t.joinable()) t.join();
    }
    workers_.clear();
  }

  std::uint16_t port() const { return listener_.port(); }
  std::uint64_t queries_served() const { return queries_served_.load(); }

 private:
  void accept_loop() {
    while (true) {
      auto conn = listener_.accept();
      if (!conn.ok()) break;  // listener closed
      std::lock_guard lock(workers_mutex_);
      workers_.emplace_back(
          [this](TcpStream stream) { handle(std::move(stream)); }, conn.take());
    }
  }

  void handle(TcpStream stream) {
    do {
      std::uint8_t header[idswire::kQueryHeaderLen];
      auto hr = stream.read_exact(header, sizeof(header), cfg_.frame_timeout_ms);
      if (!hr.ok()) {
        // Orderly close before the next frame is a normal end of a pooled
        // conversation; anything else gets the error byte.
        if (hr.error().code != Errc::protocol_error || hr.error().detail.find("closed") ==
                                                           std::string::npos) {
          stream.write_all(idswire::encode_error_response());
        }
        return;
      }
      if (header[0] != idswire::kMagic0 || header[1] != idswire::kMagic1 ||
          header[2] != idswire::kVersion) {
        stream.write_all(idswire::encode_error_response());
        return;
      }
      const std::size_t len = (header[3] << 8) | header[4];
      Bytes payload(len);
      if (len > 0) {
        auto pr = stream.read_exact(payload.data(), len, cfg_.frame_timeout_ms);
        if (!pr.ok()) {
          stream.write_all(idswire::encode_error_response());
          return;
        }
      }
      const Verdict verdict = inspect(db_, payload);
      queries_served_.fetch_add(1);
      if (!stream.write_all(idswire::encode_response(verdict)).ok()) return;
    } while (cfg_.pooled);
  }

  const SignatureDb& db_;
  TcpListener listener_;
  IdsServerConfig cfg_;
  std::thread accept_thread_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopped_{false};
  std::atomic<std::uint64_t> queries_served_{0};
};

class IdsClient {
 public:
  IdsClient(std::string host, std::uint16_t port, int timeout_ms = 1000, bool pooled = false)
      : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms), pooled_(pooled) {}

  /// Encodes one query frame, awaits the response within the timeout, and
  /// decodes the verdict. Timeout, ConnectFailed, and ProtocolError are all
  /// fail-closed signals to the caller.
  Expected<Verdict> query(ByteView payload) {
    if (payload.size() > idswire::kMaxPayload) {
      return Error{Errc::protocol_error, "payload exceeds the 16-bit length field"};
    }
    auto result = query_once(payload);
    if (!result.ok()) pooled_stream_.reset();
    return result;
  }

 private:
  Expected<Verdict> query_once(ByteView payload) {
    const auto start = std::chrono::steady_clock::now();
    auto remaining = [&]() -> int {
      const auto spent = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      return static_cast<int>(std::max<std::int64_t>(0, timeout_ms_ - spent));
    };

    TcpStream* stream = nullptr;
    TcpStream fresh;
    if (pooled_ && pooled_stream_ && pooled_stream_->valid()) {
      stream = &*pooled_stream_;
    } else {
      auto conn = TcpStream::connect(host_, port_, timeout_ms_);
      if (!conn.ok()) return conn.error();
      if (pooled_) {
        pooled_stream_ = conn.take();
        stream = &*pooled_stream_;
      } else {
        fresh = conn.take();
        stream = &fresh;
      }
    }

    auto wr = stream->write_all(idswire::encode_query(payload));
    if (!wr.ok()) return wr.error();

    Bytes frame(1);
    auto r = stream->read_exact(frame.data(), 1, remaining());
    if (!r.ok()) return r.error();
    if (frame[0] == idswire::kVerdictAttack) {
      frame.resize(2);
      auto rc = stream->read_exact(frame.data() + 1, 1, remaining());
      if (!rc.ok()) return rc.error();
      const std::size_t n = frame[1];
      frame.resize(2 + 4 * n);
      if (n > 0) {
        auto ri = stream->read_exact(frame.data() + 2, 4 * n, remaining());
        if (!ri.ok()) return ri.error();
      }
    }
    return idswire::decode_response(frame);
  }

  std::string host_;
  std::uint16_t port_;
  int timeout_ms_;
  bool pooled_;
  std::optional<TcpStream> pooled_stream_;
};

}  // namespace securedirect
