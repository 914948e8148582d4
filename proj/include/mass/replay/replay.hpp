#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mass/replay/perf.hpp"
#include "mass/trace/context.hpp"
#include "mass/trace/trace_tensor.hpp"

namespace mass::replay {

inline constexpr int kDefaultApiPort = 8000;
inline constexpr double kLowSignalDbm = -75.0;

struct ReplayConfig {
  std::string mass_host = "localhost";
  int mass_port = kDefaultApiPort;
  std::string perf_host = "localhost";
  std::size_t seq_len = 10;
  double max_down = 1.0;  // Mbps
  double max_up = 1.0;
  std::size_t buffer = 1024;
  int down_port = 5557;
  int up_port = 6666;
  double epoch_time = 5.0;
  App initial_context = App::interact;
  double interact_stay_prob = 0.5;
  double stream_stay_prob = 0.5;
  bool use_signal = true;
  double udp_prob = 0.5;
  bool continuous = false;
  bool use_iperf = false;
  std::optional<std::uint64_t> seed;

  void validate() const;

  using Getenv = std::function<const char*(const char*)>;
  /// Reads the replay variables; unset ones keep their defaults. USE_IPERF=1
  /// is accepted but only produces a warning.
  static ReplayConfig from_env(std::vector<std::string>* warnings = nullptr);
  static ReplayConfig from_env(const Getenv& get, std::vector<std::string>* warnings = nullptr);
};

App next_app_context(App current, double interact_stay_prob, double stream_stay_prob,
                     std::mt19937_64& rng);

Signal signal_context(std::optional<double> rssi, bool use_signal);

/// Contexts the replay can ask for: the four signal/app pairs, or just
/// STREAM and INTERACT when signal is not used.
std::vector<ContextLabel> replay_contexts(bool use_signal);

class SignalSource {
 public:
  virtual ~SignalSource() = default;
  /// RSSI in dBm, or nullopt when unavailable.
  virtual std::optional<double> rssi() = 0;
};

class ConstantSignal : public SignalSource {
 public:
  explicit ConstantSignal(std::optional<double> value) : value_(value) {}
  std::optional<double> rssi() override { return value_; }

 private:
  std::optional<double> value_;
};

/// Plays back a fixed list, wrapping around at the end.
class ScriptedSignal : public SignalSource {
 public:
  explicit ScriptedSignal(std::vector<std::optional<double>> values);
  /// One value per line; "-" or "none" means no reading. '#' starts a comment.
  static ScriptedSignal load(const std::string& path);
  std::optional<double> rssi() override;

 private:
  std::vector<std::optional<double>> values_;
  std::size_t next_ = 0;
};

/// Signal level of the first interface in /proc/net/wireless.
class LiveSignal : public SignalSource {
 public:
  explicit LiveSignal(std::string path = "/proc/net/wireless") : path_(std::move(path)) {}
  std::optional<double> rssi() override;

 private:
  std::string path_;
};

std::optional<double> parse_proc_wireless(const std::string& contents);

class ApiClient {
 public:
  virtual ~ApiClient() = default;
  /// One user, `seq_len` steps, minmax-normalized. Throws mass::Error.
  virtual TraceTensor fetch(ContextLabel context, std::size_t seq_len, std::uint64_t seed) = 0;
};

class HttpApiClient : public ApiClient {
 public:
  HttpApiClient(std::string host, int port, double timeout_s = 10.0);
  TraceTensor fetch(ContextLabel context, std::size_t seq_len, std::uint64_t seed) override;

 private:
  std::string host_;
  int port_;
  double timeout_s_;
};

/// Parses a {"trace": [[[dl, ul], ...], ...]} body.
TraceTensor trace_from_json(std::string_view body);

struct RetryPolicy {
  int attempts = 5;
  double initial_backoff_s = 0.5;
  double factor = 2.0;
};

using TraceCache = std::map<ContextLabel, TraceTensor>;

/// Fetches one trace per replay context. Each context is retried with
/// exponential backoff; if it still fails, throws mass::Error.
TraceCache precache_traces(const ReplayConfig& cfg, ApiClient& api, std::uint64_t seed,
                           const RetryPolicy& retry = {});

struct EpochStep {
  std::size_t epoch = 0;
  App app = App::interact;
  Signal signal = Signal::high;
  ContextLabel context = ContextLabel::interact_high;
  double dl_rate = 0.0;  // Mbps
  double ul_rate = 0.0;
  Transport transport = Transport::tcp;

  bool operator==(const EpochStep&) const = default;
};

/// Turns cached traces into per-epoch rates. Draw order per epoch: app
/// transition (skipped on the very first epoch), then transport.
class ReplayPlanner {
 public:
  ReplayPlanner(const ReplayConfig& cfg, std::uint64_t seed);
  EpochStep next(const TraceCache& cache, std::size_t step, std::optional<double> rssi);

 private:
  ReplayConfig cfg_;
  std::mt19937_64 rng_;
  App app_;
  std::size_t epoch_ = 0;
};

/// Runs the upload and download sessions of one epoch concurrently and
/// returns {down, up}. A zero rate records an idle direction without
/// opening a session.
std::array<PerfRecord, 2> run_epoch(const ReplayConfig& cfg, const EpochStep& step);

struct ReplayResult {
  std::vector<EpochStep> steps;
  std::vector<PerfRecord> records;
  std::size_t sequences = 0;
};

using EpochRunner = std::function<std::array<PerfRecord, 2>(const ReplayConfig&, const EpochStep&)>;

/// Replays seq_len epochs per sequence. Without CONTINUOUS that is one
/// sequence; with it, a fresh cache is fetched after each sequence until
/// `max_sequences` (0 means forever).
ReplayResult run_replay(const ReplayConfig& cfg, ApiClient& api, SignalSource& signal,
                        std::ostream* history = nullptr, std::size_t max_sequences = 0,
                        const EpochRunner& runner = run_epoch);

/// intended_up/intended_down - measured_up/measured_down.
double bias(double intended_up, double intended_down, double measured_up, double measured_down);

}  // namespace mass::replay
