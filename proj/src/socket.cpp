#include "socket.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "rtopt/error.hpp"

namespace rtopt::net {

namespace {

using Clock = std::chrono::steady_clock;

[[noreturn]] void transport_fail(const std::string& what) {
  throw Error(ErrorCode::TransportError, what + ": " + std::strerror(errno));
}

/// poll() for one fd, restarting on EINTR with the remaining budget.
IoStatus wait_for(int fd, short events, Timeout timeout, Clock::time_point deadline) {
  while (true) {
    int ms = -1;
    if (timeout.count() > 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) return IoStatus::TimedOut;
      ms = static_cast<int>(left.count());
    }
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, ms);
    if (rc > 0) return IoStatus::Ok;
    if (rc == 0) return IoStatus::TimedOut;
    if (errno != EINTR) return IoStatus::Closed;
  }
}

sockaddr_in resolve(const Endpoint& where) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(where.port);
  if (::inet_pton(AF_INET, where.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(where.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorCode::TransportError, "cannot resolve host '" + where.host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace

void UniqueFd::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorCode::ConfigError, "expected host:port, got '" + text + "'");
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  const auto port_text = text.substr(colon + 1);
  char* end = nullptr;
  const long port = std::strtol(port_text.c_str(), &end, 10);
  if (*end != '\0' || port < 0 || port > 65535) throw Error(ErrorCode::ConfigError, "bad port in '" + text + "'");
  e.port = static_cast<std::uint16_t>(port);
  return e;
}

UniqueFd listen_tcp(const Endpoint& where, Endpoint& bound) {
  UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!fd) transport_fail("socket");
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(where);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    transport_fail("bind " + where.host + ":" + std::to_string(where.port));
  }
  if (::listen(fd.get(), 64) != 0) transport_fail("listen");
  socklen_t len = sizeof(addr);
  ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
  bound.host = where.host;
  bound.port = ntohs(addr.sin_port);
  return fd;
}

UniqueFd accept_one(int listen_fd, Timeout timeout) {
  const auto deadline = Clock::now() + timeout;
  const auto status = wait_for(listen_fd, POLLIN, timeout, deadline);
  if (status == IoStatus::TimedOut) {
    throw Error(ErrorCode::TransportError, "timed out waiting for a worker to connect");
  }
  UniqueFd fd(::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC));
  if (!fd) transport_fail("accept");
  set_nodelay(fd.get());
  return fd;
}

UniqueFd connect_tcp(const Endpoint& where, Timeout timeout) {
  const auto deadline = Clock::now() + timeout;
  sockaddr_in addr = resolve(where);
  // Retry while the leader is still coming up.
  while (true) {
    UniqueFd fd(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) transport_fail("socket");
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0) {
      set_nodelay(fd.get());
      return fd;
    }
    if (timeout.count() > 0 && Clock::now() >= deadline) {
      transport_fail("connect " + where.host + ":" + std::to_string(where.port));
    }
    ::usleep(20000);
  }
}

IoStatus write_all(int fd, std::span<const std::uint8_t> bytes) {
  while (!bytes.empty()) {
    const auto n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return IoStatus::Closed;
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
  return IoStatus::Ok;
}

IoStatus read_exact(int fd, std::span<std::uint8_t> out, Timeout timeout) {
  const auto deadline = Clock::now() + timeout;
  while (!out.empty()) {
    const auto status = wait_for(fd, POLLIN, timeout, deadline);
    if (status != IoStatus::Ok) return status;
    const auto n = ::recv(fd, out.data(), out.size(), 0);
    if (n == 0) return IoStatus::Closed;
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return IoStatus::Closed;
    }
    out = out.subspan(static_cast<std::size_t>(n));
  }
  return IoStatus::Ok;
}

IoStatus read_frame(int fd, Frame& frame, Timeout timeout) {
  std::uint8_t header[wire::kFrameHeaderSize];
  if (auto s = read_exact(fd, header, timeout); s != IoStatus::Ok) return s;
  const auto parsed = wire::decode_header(header);
  frame.tag = parsed->first;
  frame.payload.resize(parsed->second);
  return read_exact(fd, frame.payload, timeout);
}

IoStatus write_message(int fd, const wire::Message& m) { return write_all(fd, wire::encode(m)); }

}  // namespace rtopt::net
