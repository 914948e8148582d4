#include "mass/replay/perf.hpp"

#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "mass/error.hpp"
#include "mass/trace/trace_io.hpp"
#include "net.hpp"

namespace mass::replay {

using clock_type = std::chrono::steady_clock;

namespace {

constexpr int kHeaderTimeoutMs = 2000;
constexpr std::size_t kMaxHeader = 128;

double seconds_since(clock_type::time_point t) {
  return std::chrono::duration<double>(clock_type::now() - t).count();
}

std::vector<char> payload(std::size_t n, std::uint64_t seed) {
  std::vector<char> buf(n);
  std::mt19937_64 rng(seed);
  for (auto& c : buf) c = static_cast<char>(rng() & 0xff);
  return buf;
}

double mbps(std::uint64_t bytes, double seconds) {
  return seconds > 0.0 ? static_cast<double>(bytes) * 8.0 / 1e6 / seconds : 0.0;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_num(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::up ? "up" : "down"; }
std::string_view to_string(Transport t) { return t == Transport::tcp ? "tcp" : "udp"; }

std::string_view to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::ok: return "ok";
    case RecordStatus::partial: return "partial";
    case RecordStatus::failed: return "failed";
    case RecordStatus::busy: return "busy";
  }
  return "?";
}

std::string format_header(const PerfHeader& h) {
  return std::string(to_string(h.direction)) + " " + format_number(h.duration_s) + " " +
         format_number(h.rate_mbps) + " " + std::to_string(h.msg_size) + "\n";
}

PerfHeader parse_header(std::string_view line, Transport transport) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  const auto f = split_ws(line);
  if (f.size() != 4) throw Error("expected 4 fields");
  PerfHeader h;
  if (f[0] == "up") h.direction = Direction::up;
  else if (f[0] == "down") h.direction = Direction::down;
  else throw Error("bad direction");
  if (!parse_num(f[1], h.duration_s) || !std::isfinite(h.duration_s) || h.duration_s <= 0.0 ||
      h.duration_s > kMaxDuration)
    throw Error("bad duration");
  if (!parse_num(f[2], h.rate_mbps) || !std::isfinite(h.rate_mbps) || h.rate_mbps < 0.0)
    throw Error("bad rate");
  const std::size_t max_msg = transport == Transport::udp ? kMaxUdpPayload : kMaxMessage;
  if (!parse_num(f[3], h.msg_size) || h.msg_size == 0 || h.msg_size > max_msg)
    throw Error("bad message size");
  return h;
}

void write_history_header(std::ostream& out) {
  out << "#epoch\tdirection\ttransport\tcontext\trequested_mbps\tachieved_mbps\tbytes\t"
         "duration_s\tstatus\tdetail\n";
}

void write_history_line(std::ostream& out, const PerfRecord& r) {
  out << r.epoch << '\t' << to_string(r.direction) << '\t' << to_string(r.transport) << '\t'
      << (r.context.empty() ? "-" : r.context) << '\t' << format_number(r.requested_mbps) << '\t'
      << format_number(r.achieved_mbps) << '\t' << r.bytes << '\t' << format_number(r.duration_s)
      << '\t' << to_string(r.status) << '\t' << (r.detail.empty() ? "-" : r.detail) << '\n';
  out.flush();
}

// ---------------------------------------------------------------- server

PerfServer::PerfServer(std::string host, int port, double grace_s)
    : host_(std::move(host)), port_(port), grace_s_(grace_s) {}

PerfServer::~PerfServer() { stop(); }

void PerfServer::start() {
  if (running_) return;
  net::Fd tcp = net::tcp_listen(host_, port_);
  if (port_ == 0) port_ = net::local_port(tcp.get());
  net::Fd udp = net::udp_bind(host_, port_);
  tcp_fd_ = tcp.release();
  udp_fd_ = udp.release();
  running_ = true;
  tcp_thread_ = std::thread([this] { tcp_loop(); });
  udp_thread_ = std::thread([this] { udp_loop(); });
}

void PerfServer::stop() {
  if (!running_.exchange(false)) return;
  if (tcp_thread_.joinable()) tcp_thread_.join();
  if (udp_thread_.joinable()) udp_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  ::close(tcp_fd_);
  ::close(udp_fd_);
  tcp_fd_ = udp_fd_ = -1;
}

std::vector<PerfRecord> PerfServer::history() const {
  std::lock_guard lock(history_mu_);
  return history_;
}

void PerfServer::record(PerfRecord r) {
  std::lock_guard lock(history_mu_);
  r.epoch = sessions_++;
  if (sink_) sink_(r);
  history_.push_back(std::move(r));
}

void PerfServer::tcp_loop() {
  while (running_) {
    if (!net::wait_readable(tcp_fd_, 50)) continue;
    const int fd = ::accept(tcp_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back([this, fd] { tcp_session(fd); });
  }
}

void PerfServer::tcp_session(int raw_fd) {
  net::Fd fd(raw_fd);
  auto line = net::read_line(fd.get(), kMaxHeader, kHeaderTimeoutMs);
  if (!line) {
    const std::string msg = "ERR no header\n";
    net::send_all(fd.get(), msg.data(), msg.size());
    return;
  }
  PerfHeader h;
  try {
    h = parse_header(*line, Transport::tcp);
  } catch (const Error& e) {
    const std::string msg = std::string("ERR ") + e.what() + "\n";
    net::send_all(fd.get(), msg.data(), msg.size());
    return;
  }
  bool expected = false;
  if (!busy_.compare_exchange_strong(expected, true)) {
    net::send_all(fd.get(), "BUSY\n", 5);
    return;
  }
  net::send_all(fd.get(), "OK\n", 3);

  PerfRecord r;
  r.direction = h.direction;
  r.transport = Transport::tcp;
  r.requested_mbps = h.rate_mbps;
  r.duration_s = h.duration_s;
  if (h.direction == Direction::down) {
    const auto buf = payload(h.msg_size, sessions_ + 1);
    auto res = pace(h.duration_s, h.rate_mbps, h.msg_size,
                    [&] { return running_ && net::send_all(fd.get(), buf.data(), buf.size()); });
    r.bytes = res.bytes;
    if (!res.completed) r.status = RecordStatus::partial;
  } else {
    std::vector<char> buf(64 * 1024);
    const auto start = clock_type::now();
    for (;;) {
      const double left = h.duration_s + grace_s_ - seconds_since(start);
      if (left <= 0 || !running_) {
        r.status = RecordStatus::partial;
        r.detail = "sender did not finish";
        break;
      }
      if (!net::wait_readable(fd.get(), static_cast<int>(std::min(left, 0.05) * 1000) + 1)) continue;
      const ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
      if (n == 0) break;
      if (n < 0) {
        r.status = RecordStatus::partial;
        r.detail = "receive error";
        break;
      }
      r.bytes += static_cast<std::uint64_t>(n);
    }
  }
  r.achieved_mbps = mbps(r.bytes, h.duration_s);
  const std::string done = "DONE " + std::to_string(r.bytes) + "\n";
  const Direction dir = r.direction;
  // Free the endpoint and log before the client hears back.
  busy_ = false;
  record(std::move(r));
  if (dir == Direction::up) net::send_all(fd.get(), done.data(), done.size());
}

void PerfServer::udp_loop() {
  struct Session {
    bool active = false;
    sockaddr_in peer{};
    PerfHeader header;
    clock_type::time_point start;
    std::uint64_t bytes = 0;
    std::thread sender;
    std::atomic<bool> sender_done{false};
    std::uint64_t sent = 0;
    bool sender_ok = true;
  };
  Session s;
  std::vector<char> buf(kMaxUdpPayload + 1);
  auto same_peer = [](const sockaddr_in& a, const sockaddr_in& b) {
    return a.sin_addr.s_addr == b.sin_addr.s_addr && a.sin_port == b.sin_port;
  };
  auto reply = [&](const sockaddr_in& to, const std::string& msg) {
    ::sendto(udp_fd_, msg.data(), msg.size(), 0, reinterpret_cast<const sockaddr*>(&to), sizeof to);
  };
  auto finish = [&] {
    PerfRecord r;
    r.direction = s.header.direction;
    r.transport = Transport::udp;
    r.requested_mbps = s.header.rate_mbps;
    r.duration_s = s.header.duration_s;
    if (s.header.direction == Direction::down) {
      s.sender.join();
      r.bytes = s.sent;
      if (!s.sender_ok) r.status = RecordStatus::partial;
    } else {
      r.bytes = s.bytes;
    }
    r.achieved_mbps = mbps(r.bytes, s.header.duration_s);
    s.active = false;
    busy_ = false;
    record(std::move(r));
    if (s.header.direction == Direction::up) reply(s.peer, "DONE " + std::to_string(s.bytes) + "\n");
  };

  while (running_) {
    if (s.active) {
      const bool over = s.header.direction == Direction::down
                            ? s.sender_done.load()
                            : seconds_since(s.start) >= s.header.duration_s + grace_s_;
      if (over) finish();
    }
    if (!net::wait_readable(udp_fd_, 10)) continue;
    sockaddr_in from{};
    socklen_t len = sizeof from;
    const ssize_t n =
        ::recvfrom(udp_fd_, buf.data(), buf.size(), 0, reinterpret_cast<sockaddr*>(&from), &len);
    if (n < 0) continue;
    if (s.active && same_peer(from, s.peer)) {
      if (s.header.direction == Direction::up) s.bytes += static_cast<std::uint64_t>(n);
      continue;
    }
    PerfHeader h;
    try {
      if (static_cast<std::size_t>(n) > kMaxHeader) throw Error("header too long");
      h = parse_header(std::string_view(buf.data(), static_cast<std::size_t>(n)), Transport::udp);
    } catch (const Error& e) {
      reply(from, std::string("ERR ") + e.what() + "\n");
      continue;
    }
    bool expected = false;
    if (s.active || !busy_.compare_exchange_strong(expected, true)) {
      reply(from, "BUSY\n");
      continue;
    }
    s.active = true;
    s.peer = from;
    s.header = h;
    s.start = clock_type::now();
    s.bytes = 0;
    s.sent = 0;
    s.sender_ok = true;
    s.sender_done = false;
    reply(from, "OK\n");
    if (h.direction == Direction::down) {
      s.sender = std::thread([this, &s] {
        const auto data = payload(s.header.msg_size, sessions_ + 1);
        auto res = pace(s.header.duration_s, s.header.rate_mbps, s.header.msg_size, [&] {
          return running_ && ::sendto(udp_fd_, data.data(), data.size(), 0,
                                      reinterpret_cast<const sockaddr*>(&s.peer),
                                      sizeof s.peer) >= 0;
        });
        s.sent = res.bytes;
        s.sender_ok = res.completed;
        s.sender_done = true;
      });
    }
  }
  if (s.active && s.sender.joinable()) s.sender.join();
}

// ---------------------------------------------------------------- client

namespace {

PerfRecord base_record(Transport transport, const PerfHeader& h) {
  PerfRecord r;
  r.direction = h.direction;
  r.transport = transport;
  r.requested_mbps = h.rate_mbps;
  r.duration_s = h.duration_s;
  return r;
}

void apply_reply(PerfRecord& r, const std::optional<std::string>& reply) {
  if (!reply) {
    r.status = RecordStatus::failed;
    r.detail = "no reply to header";
  } else if (*reply == "BUSY") {
    r.status = RecordStatus::busy;
    r.detail = "endpoint busy";
  } else if (*reply != "OK") {
    r.status = RecordStatus::failed;
    r.detail = *reply;
  }
}

std::optional<std::uint64_t> parse_done(std::string_view s) {
  if (!s.starts_with("DONE ")) return std::nullopt;
  std::uint64_t v = 0;
  if (!parse_num(s.substr(5), v)) return std::nullopt;
  return v;
}

PerfRecord tcp_client(const std::string& host, int port, const PerfHeader& h, double grace_s) {
  PerfRecord r = base_record(Transport::tcp, h);
  net::Fd fd;
  try {
    fd = net::tcp_connect(host, port, kHeaderTimeoutMs);
  } catch (const Error& e) {
    r.status = RecordStatus::failed;
    r.detail = e.what();
    return r;
  }
  const std::string header = format_header(h);
  if (!net::send_all(fd.get(), header.data(), header.size())) {
    r.status = RecordStatus::failed;
    r.detail = "send failed";
    return r;
  }
  apply_reply(r, net::read_line(fd.get(), kMaxHeader, kHeaderTimeoutMs));
  if (r.status != RecordStatus::ok) return r;

  if (h.direction == Direction::down) {
    std::vector<char> buf(64 * 1024);
    const auto start = clock_type::now();
    for (;;) {
      const double left = h.duration_s + grace_s - seconds_since(start);
      if (left <= 0) {
        r.status = RecordStatus::partial;
        r.detail = "server did not close";
        break;
      }
      if (!net::wait_readable(fd.get(), static_cast<int>(std::min(left, 0.05) * 1000) + 1)) continue;
      const ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
      if (n == 0) break;
      if (n < 0) {
        r.status = RecordStatus::partial;
        r.detail = "disconnected";
        break;
      }
      r.bytes += static_cast<std::uint64_t>(n);
    }
  } else {
    const auto buf = payload(h.msg_size, 7);
    auto res = pace(h.duration_s, h.rate_mbps, h.msg_size,
                    [&] { return net::send_all(fd.get(), buf.data(), buf.size()); });
    ::shutdown(fd.get(), SHUT_WR);
    auto done = net::read_line(fd.get(), kMaxHeader, static_cast<int>(grace_s * 1000) + 1000);
    auto confirmed = done ? parse_done(*done) : std::nullopt;
    r.bytes = confirmed ? *confirmed : res.bytes;
    if (!res.completed || !confirmed) {
      r.status = RecordStatus::partial;
      r.detail = res.completed ? "no receive confirmation" : "disconnected";
    }
  }
  r.achieved_mbps = mbps(r.bytes, h.duration_s);
  return r;
}

PerfRecord udp_client(const std::string& host, int port, const PerfHeader& h, double grace_s) {
  PerfRecord r = base_record(Transport::udp, h);
  net::Fd fd;
  try {
    fd = net::udp_connect(host, port);
  } catch (const Error& e) {
    r.status = RecordStatus::failed;
    r.detail = e.what();
    return r;
  }
  const std::string header = format_header(h);
  std::optional<std::string> reply;
  std::vector<char> buf(kMaxUdpPayload + 1);
  for (int attempt = 0; attempt < 3 && !reply; ++attempt) {
    ::send(fd.get(), header.data(), header.size(), 0);
    if (!net::wait_readable(fd.get(), kHeaderTimeoutMs / 2)) continue;
    const ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
    if (n <= 0) {
      r.status = RecordStatus::failed;
      r.detail = "connection refused";
      return r;
    }
    std::string s(buf.data(), static_cast<std::size_t>(n));
    if (!s.empty() && s.back() == '\n') s.pop_back();
    reply = s;
  }
  apply_reply(r, reply);
  if (r.status != RecordStatus::ok) return r;

  if (h.direction == Direction::down) {
    const auto start = clock_type::now();
    for (;;) {
      const double left = h.duration_s + grace_s - seconds_since(start);
      if (left <= 0) break;
      if (!net::wait_readable(fd.get(), static_cast<int>(std::min(left, 0.05) * 1000) + 1)) {
        // quiet after the nominal end: the sender is done
        if (seconds_since(start) > h.duration_s + 0.2) break;
        continue;
      }
      const ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
      if (n > 0) r.bytes += static_cast<std::uint64_t>(n);
    }
  } else {
    const auto data = payload(h.msg_size, 7);
    auto res = pace(h.duration_s, h.rate_mbps, h.msg_size,
                    [&] { return ::send(fd.get(), data.data(), data.size(), 0) >= 0; });
    std::optional<std::uint64_t> confirmed;
    const auto wait_start = clock_type::now();
    while (!confirmed && seconds_since(wait_start) < grace_s + 1.0) {
      if (!net::wait_readable(fd.get(), 50)) continue;
      const ssize_t n = ::recv(fd.get(), buf.data(), buf.size(), 0);
      if (n <= 0) continue;
      std::string s(buf.data(), static_cast<std::size_t>(n));
      if (!s.empty() && s.back() == '\n') s.pop_back();
      confirmed = parse_done(s);
    }
    r.bytes = confirmed.value_or(0);
    if (!res.completed || !confirmed) {
      r.status = RecordStatus::partial;
      r.detail = confirmed ? "send error" : "no receive confirmation";
    }
  }
  r.achieved_mbps = mbps(r.bytes, h.duration_s);
  return r;
}

}  // namespace

PerfRecord run_session(const std::string& host, int port, Transport transport,
                       const PerfHeader& header, double grace_s) {
  return transport == Transport::tcp ? tcp_client(host, port, header, grace_s)
                                     : udp_client(host, port, header, grace_s);
}

}  // namespace mass::replay
