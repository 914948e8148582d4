#pragma once

#include <netinet/in.h>
#include <sys/socket.h>

#include <optional>
#include <string>

namespace mass::replay::net {

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept;
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() { reset(); }

  int get() const { return fd_; }
  explicit operator bool() const { return fd_ >= 0; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset();

 private:
  int fd_ = -1;
};

sockaddr_in resolve(const std::string& host, int port);
std::string to_string(const sockaddr_in& addr);

/// Both bind with SO_REUSEADDR; port 0 picks an ephemeral port.
Fd tcp_listen(const std::string& host, int port);
Fd udp_bind(const std::string& host, int port);
int local_port(int fd);

/// Throws mass::Error on failure or timeout.
Fd tcp_connect(const std::string& host, int port, int timeout_ms);
Fd udp_connect(const std::string& host, int port);

/// poll() for readability; false on timeout.
bool wait_readable(int fd, int timeout_ms);
bool send_all(int fd, const void* data, std::size_t n);
/// Reads up to and excluding '\n', byte by byte so nothing past the line
/// is consumed. nullopt on timeout, EOF, or a line longer than max_len.
std::optional<std::string> read_line(int fd, std::size_t max_len, int timeout_ms);

}  // namespace mass::replay::net
