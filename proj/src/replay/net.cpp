#include "net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mass/error.hpp"

namespace mass::replay::net {

Fd& Fd::operator=(Fd&& o) noexcept {
  if (this != &o) {
    reset();
    fd_ = o.release();
  }
  return *this;
}

void Fd::reset() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

sockaddr_in resolve(const std::string& host, int port) {
  if (port < 0 || port > 65535) throw Error("invalid port " + std::to_string(port));
  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  const char* name = host.empty() ? "0.0.0.0" : host.c_str();
  if (int rc = ::getaddrinfo(name, nullptr, &hints, &res); rc != 0 || !res)
    throw Error("cannot resolve " + host + ": " + gai_strerror(rc));
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  return addr;
}

std::string to_string(const sockaddr_in& addr) {
  char buf[INET_ADDRSTRLEN] = {};
  ::inet_ntop(AF_INET, &addr.sin_addr, buf, sizeof buf);
  return std::string(buf) + ":" + std::to_string(ntohs(addr.sin_port));
}

namespace {

Fd bound_socket(int type, const std::string& host, int port) {
  Fd fd(::socket(AF_INET, type, 0));
  if (!fd) throw Error(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = resolve(host, port);
  if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw Error("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  return fd;
}

}  // namespace

Fd tcp_listen(const std::string& host, int port) {
  Fd fd = bound_socket(SOCK_STREAM, host, port);
  if (::listen(fd.get(), 16) != 0) throw Error(std::string("listen: ") + std::strerror(errno));
  return fd;
}

Fd udp_bind(const std::string& host, int port) { return bound_socket(SOCK_DGRAM, host, port); }

int local_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

Fd tcp_connect(const std::string& host, int port, int timeout_ms) {
  sockaddr_in addr = resolve(host, port);
  Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
  if (!fd) throw Error(std::string("socket: ") + std::strerror(errno));
  const int flags = ::fcntl(fd.get(), F_GETFL, 0);
  ::fcntl(fd.get(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc != 0 && errno != EINPROGRESS)
    throw Error("connect " + to_string(addr) + ": " + std::strerror(errno));
  if (rc != 0) {
    pollfd p{fd.get(), POLLOUT, 0};
    if (::poll(&p, 1, timeout_ms) <= 0) throw Error("connect " + to_string(addr) + ": timed out");
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(fd.get(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err != 0) throw Error("connect " + to_string(addr) + ": " + std::strerror(err));
  }
  ::fcntl(fd.get(), F_SETFL, flags);
  return fd;
}

Fd udp_connect(const std::string& host, int port) {
  sockaddr_in addr = resolve(host, port);
  Fd fd(::socket(AF_INET, SOCK_DGRAM, 0));
  if (!fd) throw Error(std::string("socket: ") + std::strerror(errno));
  if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw Error("connect " + to_string(addr) + ": " + std::strerror(errno));
  return fd;
}

bool wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  int rc;
  do rc = ::poll(&p, 1, timeout_ms);
  while (rc < 0 && errno == EINTR);
  return rc > 0;
}

bool send_all(int fd, const void* data, std::size_t n) {
  const char* p = static_cast<const char*>(data);
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

std::optional<std::string> read_line(int fd, std::size_t max_len, int timeout_ms) {
  std::string line;
  while (line.size() <= max_len) {
    if (!wait_readable(fd, timeout_ms)) return std::nullopt;
    char c;
    const ssize_t r = ::recv(fd, &c, 1, 0);
    if (r <= 0) return std::nullopt;
    if (c == '\n') return line;
    line.push_back(c);
  }
  return std::nullopt;
}

}  // namespace mass::replay::net
