#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace mass::replay {

enum class Direction { up, down };
enum class Transport { tcp, udp };

std::string_view to_string(Direction d);
std::string_view to_string(Transport t);

/// `<direction> <duration_s> <rate_mbps> <msg_size>`
struct PerfHeader {
  Direction direction = Direction::down;
  double duration_s = 0.0;
  double rate_mbps = 0.0;
  std::size_t msg_size = 1024;

  bool operator==(const PerfHeader&) const = default;
};

inline constexpr std::size_t kMaxUdpPayload = 65507;
inline constexpr std::size_t kMaxMessage = 1 << 20;
inline constexpr double kMaxDuration = 3600.0;

std::string format_header(const PerfHeader& h);
/// Throws mass::Error with the reason for the ERR reply.
PerfHeader parse_header(std::string_view line, Transport transport);

/// Rate limiter refilled continuously at `rate` bytes/s up to `capacity`.
class TokenBucket {
 public:
  TokenBucket(double rate, double capacity, double initial = 0.0)
      : rate_(rate), capacity_(capacity), tokens_(initial) {}

  void refill(double seconds) { tokens_ = std::min(capacity_, tokens_ + rate_ * seconds); }
  bool consume(double n) {
    if (tokens_ < n) return false;
    tokens_ -= n;
    return true;
  }
  double tokens() const { return tokens_; }

 private:
  double rate_, capacity_, tokens_;
};

inline constexpr double kPacingTick = 0.010;

/// Sends msg_size-byte messages at rate_mbps for duration_s on a 10 ms
/// tick. `send` returns false to abort. Returns bytes sent and whether the
/// run finished.
struct PaceResult {
  std::uint64_t bytes = 0;
  bool completed = true;
};
template <typename Send>
PaceResult pace(double duration_s, double rate_mbps, std::size_t msg_size, Send&& send);

enum class RecordStatus { ok, partial, failed, busy };
std::string_view to_string(RecordStatus s);

struct PerfRecord {
  Direction direction = Direction::down;
  std::size_t epoch = 0;
  Transport transport = Transport::tcp;
  std::string context;
  double requested_mbps = 0.0;
  double achieved_mbps = 0.0;
  std::uint64_t bytes = 0;
  double duration_s = 0.0;
  RecordStatus status = RecordStatus::ok;
  std::string detail;
};

/// Tab-separated: epoch direction transport context requested achieved
/// bytes duration status detail.
void write_history_header(std::ostream& out);
void write_history_line(std::ostream& out, const PerfRecord& r);

/// One TCP listener and one UDP socket on the same port, serving a single
/// stream at a time across both.
class PerfServer {
 public:
  PerfServer(std::string host, int port, double grace_s = 1.0);
  ~PerfServer();
  PerfServer(const PerfServer&) = delete;
  PerfServer& operator=(const PerfServer&) = delete;

  /// Binds both sockets; throws mass::Error if either bind fails.
  void start();
  void stop();
  int port() const { return port_; }

  std::vector<PerfRecord> history() const;
  /// Called with each finished session from a server thread, if set
  /// before start().
  void on_record(std::function<void(const PerfRecord&)> sink) { sink_ = std::move(sink); }

 private:
  void tcp_loop();
  void udp_loop();
  void tcp_session(int fd);
  void record(PerfRecord r);

  std::string host_;
  int port_;
  double grace_s_;
  int tcp_fd_ = -1;
  int udp_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<bool> busy_{false};
  std::thread tcp_thread_, udp_thread_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
  mutable std::mutex history_mu_;
  std::vector<PerfRecord> history_;
  std::function<void(const PerfRecord&)> sink_;
  std::size_t sessions_ = 0;
};

/// Client side of one session. Never throws for network failures: they
/// come back as failed or partial records.
PerfRecord run_session(const std::string& host, int port, Transport transport,
                       const PerfHeader& header, double grace_s = 1.0);

// ---- implementation of the pacing template

template <typename Send>
PaceResult pace(double duration_s, double rate_mbps, std::size_t msg_size, Send&& send) {
  using clock = std::chrono::steady_clock;
  PaceResult res;
  if (rate_mbps <= 0.0 || duration_s <= 0.0) return res;
  const double rate = rate_mbps * 1e6 / 8.0;
  TokenBucket bucket(rate, std::max<double>(msg_size, 2.0 * rate * kPacingTick));
  const auto start = clock::now();
  auto last = start;
  auto next = start;
  for (;;) {
    const auto now = clock::now();
    const double elapsed = std::chrono::duration<double>(now - start).count();
    if (elapsed >= duration_s) break;
    bucket.refill(std::chrono::duration<double>(now - last).count());
    last = now;
    while (bucket.consume(static_cast<double>(msg_size))) {
      if (!send()) {
        res.completed = false;
        return res;
      }
      res.bytes += msg_size;
    }
    next += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(kPacingTick));
    const auto end = start + std::chrono::duration_cast<clock::duration>(
                                 std::chrono::duration<double>(duration_s));
    std::this_thread::sleep_until(std::min(next, end));
  }
  return res;
}

}  // namespace mass::replay
