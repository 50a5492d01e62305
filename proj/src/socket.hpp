#pragma once

// POSIX TCP plumbing for the socket transport. Internal to the library.

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rtopt/wire.hpp"

namespace rtopt::net {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& other) noexcept {
    if (this != &other) {
      reset();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset();

 private:
  int fd_ = -1;
};

/// Zero means wait forever.
using Timeout = std::chrono::milliseconds;

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// "host:port" -> Endpoint. Throws ConfigError.
Endpoint parse_endpoint(const std::string& text);

/// Binds and listens; port 0 picks an ephemeral port, reported back through `bound`.
UniqueFd listen_tcp(const Endpoint& where, Endpoint& bound);
/// Throws TransportError on timeout.
UniqueFd accept_one(int listen_fd, Timeout timeout);
UniqueFd connect_tcp(const Endpoint& where, Timeout timeout);

enum class IoStatus { Ok, Closed, TimedOut };

IoStatus write_all(int fd, std::span<const std::uint8_t> bytes);
IoStatus read_exact(int fd, std::span<std::uint8_t> out, Timeout timeout);

struct Frame {
  wire::Tag tag;
  std::vector<std::uint8_t> payload;
};

/// Reads one frame. Ok with `frame` filled, or the failure status.
IoStatus read_frame(int fd, Frame& frame, Timeout timeout);
IoStatus write_message(int fd, const wire::Message& m);

}  // namespace rtopt::net
