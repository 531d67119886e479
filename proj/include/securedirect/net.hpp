#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>
#include <utility>

#include "securedirect/util.hpp"

// Small RAII layer over POSIX TCP sockets: enough for the IDS query protocol
// and the live stream proxy. IPv4 only, millisecond deadlines via poll.

namespace securedirect {

inline std::optional<std::uint32_t> resolve_host(const std::string& host) {
  if (host == "localhost") return 0x7F000001;
  return parse_ipv4_addr(host);
}

class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream() { close(); }

  TcpStream(TcpStream&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  TcpStream& operator=(TcpStream&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  static Expected<TcpStream> connect(const std::string& host, std::uint16_t port,
                                     int timeout_ms) {
    auto addr = resolve_host(host);
    if (!addr) return Error{Errc::connect_failed, "unresolvable host " + host};
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return Error{Errc::connect_failed, std::strerror(errno)};
    TcpStream stream(fd);

    int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);

    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = htonl(*addr);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa));
    if (rc != 0) {
      if (errno != EINPROGRESS) return Error{Errc::connect_failed, std::strerror(errno)};
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, timeout_ms);
      if (rc == 0) return Error{Errc::timeout, "connect timed out"};
      if (rc < 0) return Error{Errc::connect_failed, std::strerror(errno)};
      int err = 0;
      socklen_t len = sizeof(err);
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      if (err != 0) return Error{Errc::connect_failed, std::strerror(err)};
    }
    ::fcntl(fd, F_SETFL, flags);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return stream;
  }

  /// Reads exactly buf.size() bytes or fails. timeout_ms bounds the whole
  /// read; -1 waits forever.
  Status read_exact(std::uint8_t* buf, std::size_t len, int timeout_ms) {
    std::size_t got = 0;
    while (got < len) {
      if (!wait_readable(timeout_ms)) return Error{Errc::timeout, "read timed out"};
      ssize_t n = ::recv(fd_, buf + got, len - got, 0);
      if (n == 0) return Error{Errc::protocol_error, "connection closed mid-frame"};
      if (n < 0) {
        if (errno == EINTR) continue;
        return Error{Errc::io_error, std::strerror(errno)};
      }
      got += static_cast<std::size_t>(n);
    }
    return ok_status();
  }

  /// One recv; 0 means orderly EOF.
  Expected<std::size_t> read_some(std::uint8_t* buf, std::size_t len, int timeout_ms) {
    if (!wait_readable(timeout_ms)) return Error{Errc::timeout, "read timed out"};
    while (true) {
      ssize_t n = ::recv(fd_, buf, len, 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      return Error{Errc::io_error, std::strerror(errno)};
    }
  }

  Status write_all(ByteView data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
      ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        return Error{Errc::io_error, std::strerror(errno)};
      }
      sent += static_cast<std::size_t>(n);
    }
    return ok_status();
  }

  void shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

 private:
  bool wait_readable(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    while (true) {
      int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc > 0) return true;
      if (rc == 0) return false;
      if (errno != EINTR) return false;
    }
  }

  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  ~TcpListener() { close(); }

  TcpListener(TcpListener&& other) noexcept
      : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
  TcpListener& operator=(TcpListener&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
      port_ = other.port_;
    }
    return *this;
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Binds and listens; port 0 picks an ephemeral port (readable via port()).
  static Expected<TcpListener> bind(const std::string& host, std::uint16_t port) {
    auto addr = resolve_host(host);
    if (!addr) return Error{Errc::connect_failed, "unresolvable host " + host};
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return Error{Errc::io_error, std::strerror(errno)};
    TcpListener listener;
    listener.fd_ = fd;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    sa.sin_addr.s_addr = htonl(*addr);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof(sa)) != 0) {
      return Error{Errc::io_error, std::string("bind: ") + std::strerror(errno)};
    }
    if (::listen(fd, 64) != 0) {
      return Error{Errc::io_error, std::string("listen: ") + std::strerror(errno)};
    }
    socklen_t len = sizeof(sa);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    listener.port_ = ntohs(sa.sin_port);
    return listener;
  }

  /// Blocks until a peer connects or the listener is closed.
  Expected<TcpStream> accept(std::uint32_t* peer_ip = nullptr,
                             std::uint16_t* peer_port = nullptr) {
    sockaddr_in sa{};
    socklen_t len = sizeof(sa);
    while (true) {
      int fd = ::accept(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
      if (fd >= 0) {
        if (peer_ip) *peer_ip = ntohl(sa.sin_addr.s_addr);
        if (peer_port) *peer_port = ntohs(sa.sin_port);
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return TcpStream(fd);
      }
      if (errno == EINTR) continue;
      return Error{Errc::io_error, std::strerror(errno)};
    }
  }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  bool valid() const { return fd_ >= 0; }
  std::uint16_t port() const { return port_; }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace securedirect
