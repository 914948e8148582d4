#include "mass/replay/replay.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "mass/error.hpp"
#include "json.hpp"
#include "httplib.h"

namespace mass::replay {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front())
    out = out.substr(1, out.size() - 2);
  return out;
}

template <typename T>
T parse_value(const char* name, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw Error(std::string(name) + ": cannot parse '" + v + "'");
  return out;
}

bool parse_flag(const char* name, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw Error(std::string(name) + ": expected 0 or 1, got '" + v + "'");
}

void check_prob(const char* name, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string(name) + " must be in [0, 1]");
}

void check_port(const char* name, int port) {
  if (port < 1 || port > 65535) throw Error(std::string(name) + " is not a valid port");
}

}  // namespace

void ReplayConfig::validate() const {
  if (mass_host.empty()) throw Error("MASS_HOST is empty");
  if (perf_host.empty()) throw Error("PERF_HOST is empty");
  check_port("MASS_HOST port", mass_port);
  check_port("DOWN_PORT", down_port);
  check_port("UP_PORT", up_port);
  if (seq_len == 0) throw Error("SEQ_LEN must be positive");
  if (!(max_down > 0.0) || !std::isfinite(max_down)) throw Error("MAX_DOWN must be positive");
  if (!(max_up > 0.0) || !std::isfinite(max_up)) throw Error("MAX_UP must be positive");
  if (buffer == 0 || buffer > kMaxUdpPayload)
    throw Error("BUFFER must be in [1, " + std::to_string(kMaxUdpPayload) + "]");
  if (!(epoch_time > 0.0) || epoch_time > kMaxDuration) throw Error("EPOCH_TIME out of range");
  check_prob("INTERACT_STAY_PROB", interact_stay_prob);
  check_prob("STREAM_STAY_PROB", stream_stay_prob);
  check_prob("UDP_PROB", udp_prob);
}

ReplayConfig ReplayConfig::from_env(std::vector<std::string>* warnings) {
  return from_env([](const char* n) -> const char* { return std::getenv(n); }, warnings);
}

ReplayConfig ReplayConfig::from_env(const Getenv& get, std::vector<std::string>* warnings) {
  ReplayConfig c;
  auto read = [&](const char* name) -> std::optional<std::string> {
    const char* v = get(name);
    if (!v) return std::nullopt;
    std::string s = trim(v);
    if (s.empty()) return std::nullopt;
    return s;
  };
  if (auto v = read("MASS_HOST")) {
    const auto colon = v->rfind(':');
    if (colon != std::string::npos) {
      c.mass_host = v->substr(0, colon);
      c.mass_port = parse_value<int>("MASS_HOST", v->substr(colon + 1));
    } else {
      c.mass_host = *v;
    }
  }
  if (auto v = read("PERF_HOST")) c.perf_host = *v;
  if (auto v = read("SEQ_LEN")) c.seq_len = parse_value<std::size_t>("SEQ_LEN", *v);
  if (auto v = read("MAX_DOWN")) c.max_down = parse_value<double>("MAX_DOWN", *v);
  if (auto v = read("MAX_UP")) c.max_up = parse_value<double>("MAX_UP", *v);
  if (auto v = read("BUFFER")) c.buffer = parse_value<std::size_t>("BUFFER", *v);
  if (auto v = read("DOWN_PORT")) c.down_port = parse_value<int>("DOWN_PORT", *v);
  if (auto v = read("UP_PORT")) c.up_port = parse_value<int>("UP_PORT", *v);
  if (auto v = read("EPOCH_TIME")) c.epoch_time = parse_value<double>("EPOCH_TIME", *v);
  if (auto v = read("INITIAL_CONTEXT")) {
    if (*v == "INTERACT") c.initial_context = App::interact;
    else if (*v == "STREAM") c.initial_context = App::stream;
    else throw Error("INITIAL_CONTEXT must be INTERACT or STREAM, got '" + *v + "'");
  }
  if (auto v = read("INTERACT_STAY_PROB"))
    c.interact_stay_prob = parse_value<double>("INTERACT_STAY_PROB", *v);
  if (auto v = read("STREAM_STAY_PROB"))
    c.stream_stay_prob = parse_value<double>("STREAM_STAY_PROB", *v);
  if (auto v = read("USE_SIGNAL")) c.use_signal = parse_flag("USE_SIGNAL", *v);
  if (auto v = read("UDP_PROB")) c.udp_prob = parse_value<double>("UDP_PROB", *v);
  if (auto v = read("CONTINUOUS")) c.continuous = parse_flag("CONTINUOUS", *v);
  if (auto v = read("USE_IPERF")) {
    c.use_iperf = parse_flag("USE_IPERF", *v);
    if (c.use_iperf && warnings)
      warnings->push_back("USE_IPERF=1 ignored: the built-in perf servers are always used");
  }
  if (auto v = read("REPLAY_SEED")) c.seed = parse_value<std::uint64_t>("REPLAY_SEED", *v);
  c.validate();
  return c;
}

App next_app_context(App current, double interact_stay_prob, double stream_stay_prob,
                     std::mt19937_64& rng) {
  const double stay = current == App::interact ? interact_stay_prob : stream_stay_prob;
  check_prob("stay probability", stay);
  std::bernoulli_distribution coin(stay);
  if (coin(rng)) return current;
  return current == App::interact ? App::stream : App::interact;
}

Signal signal_context(std::optional<double> rssi, bool use_signal) {
  return use_signal && rssi && *rssi < kLowSignalDbm ? Signal::low : Signal::high;
}

std::vector<ContextLabel> replay_contexts(bool use_signal) {
  if (!use_signal) return {ContextLabel::stream, ContextLabel::interact};
  return {ContextLabel::stream_high, ContextLabel::stream_low, ContextLabel::interact_high,
          ContextLabel::interact_low};
}

// ---------------------------------------------------------------- signal

ScriptedSignal::ScriptedSignal(std::vector<std::optional<double>> values)
    : values_(std::move(values)) {
  if (values_.empty()) throw Error("ScriptedSignal: empty script");
}

ScriptedSignal ScriptedSignal::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open signal script " + path);
  std::vector<std::optional<double>> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string v = trim(line);
    if (v.empty()) continue;
    if (v == "-" || v == "none") {
      values.emplace_back();
      continue;
    }
    try {
      values.emplace_back(parse_value<double>("rssi", v));
    } catch (const Error&) {
      throw Error(path + ":" + std::to_string(lineno) + ": bad RSSI '" + v + "'");
    }
  }
  return ScriptedSignal(std::move(values));
}

std::optional<double> ScriptedSignal::rssi() {
  const auto v = values_[next_];
  next_ = (next_ + 1) % values_.size();
  return v;
}

std::optional<double> parse_proc_wireless(const std::string& contents) {
  std::istringstream in(contents);
  std::string line;
  // Two header lines, then "iface: status link level noise ..."
  for (int i = 0; i < 2 && std::getline(in, line); ++i) {
  }
  while (std::getline(in, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::istringstream fields(line.substr(colon + 1));
    std::string status, link, level;
    if (!(fields >> status >> link >> level)) continue;
    while (!level.empty() && level.back() == '.') level.pop_back();
    double v = 0.0;
    auto [p, ec] = std::from_chars(level.data(), level.data() + level.size(), v);
    if (ec == std::errc() && p == level.data() + level.size()) return v;
  }
  return std::nullopt;
}

std::optional<double> LiveSignal::rssi() {
  std::ifstream in(path_);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_proc_wireless(ss.str());
}

// ---------------------------------------------------------------- API

TraceTensor trace_from_json(std::string_view body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("trace response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("trace") || !j["trace"].is_array())
    throw Error("trace response has no \"trace\" array");
  const auto& t = j["trace"];
  const std::size_t users = t.size();
  const std::size_t steps = users ? t[0].size() : 0;
  TraceTensor out(users, steps, Normalization::minmax);
  for (std::size_t u = 0; u < users; ++u) {
    if (!t[u].is_array() || t[u].size() != steps) throw Error("trace response is ragged");
    for (std::size_t k = 0; k < steps; ++k) {
      const auto& pair = t[u][k];
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number())
        throw Error("trace response step is not a [download, upload] pair");
      out.at(u, k, Feature::download) = pair[0].get<double>();
      out.at(u, k, Feature::upload) = pair[1].get<double>();
    }
  }
  return out;
}

HttpApiClient::HttpApiClient(std::string host, int port, double timeout_s)
    : host_(std::move(host)), port_(port), timeout_s_(timeout_s) {}

TraceTensor HttpApiClient::fetch(ContextLabel context, std::size_t seq_len, std::uint64_t seed) {
  httplib::Client cli(host_, port_);
  const auto timeout = std::chrono::duration<double>(timeout_s_);
  cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  const nlohmann::json req = {{"context", std::string(to_string(context))},
                              {"users", 1},
                              {"seq_len", seq_len},
                              {"normalize", "minmax"},
                              {"seed", seed}};
  auto res = cli.Post("/generate?format=json", req.dump(), "application/json");
  if (!res)
    throw Error("generation API at " + host_ + ":" + std::to_string(port_) +
                " unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200)
    throw Error("generation API returned " + std::to_string(res->status) + ": " + res->body);
  auto trace = trace_from_json(res->body);
  if (trace.users() != 1 || trace.steps() != seq_len)
    throw Error("generation API returned a trace of the wrong shape");
  return trace;
}

TraceCache precache_traces(const ReplayConfig& cfg, ApiClient& api, std::uint64_t seed,
                           const RetryPolicy& retry) {
  TraceCache cache;
  const auto contexts = replay_contexts(cfg.use_signal);
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const ContextLabel ctx = contexts[i];
    double backoff = retry.initial_backoff_s;
    for (int attempt = 1;; ++attempt) {
      try {
        cache[ctx] = api.fetch(ctx, cfg.seq_len, seed + i);
        break;
      } catch (const Error& e) {
        if (attempt >= retry.attempts)
          throw Error("could not fetch " + std::string(to_string(ctx)) + " trace after " +
                      std::to_string(attempt) + " attempts: " + e.what());
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= retry.factor;
      }
    }
  }
  return cache;
}

// ---------------------------------------------------------------- replay

ReplayPlanner::ReplayPlanner(const ReplayConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed), app_(cfg.initial_context) {}

EpochStep ReplayPlanner::next(const TraceCache& cache, std::size_t step,
                              std::optional<double> rssi) {
  if (epoch_ > 0)
    app_ = next_app_context(app_, cfg_.interact_stay_prob, cfg_.stream_stay_prob, rng_);
  EpochStep s;
  s.epoch = epoch_++;
  s.app = app_;
  s.signal = signal_context(rssi, cfg_.use_signal);
  s.context = cfg_.use_signal ? compose(s.app, s.signal) : compose(s.app, std::nullopt);
  const auto it = cache.find(s.context);
  if (it == cache.end()) throw Error("no cached trace for " + std::string(to_string(s.context)));
  if (step >= it->second.steps()) throw Error("cached trace shorter than the sequence");
  auto unit = [](double v) { return std::clamp(v, 0.0, 1.0); };
  s.dl_rate = unit(it->second.at(0, step, Feature::download)) * cfg_.max_down;
  s.ul_rate = unit(it->second.at(0, step, Feature::upload)) * cfg_.max_up;
  std::bernoulli_distribution udp(cfg_.udp_prob);
  s.transport = udp(rng_) ? Transport::udp : Transport::tcp;
  return s;
}

std::array<PerfRecord, 2> run_epoch(const ReplayConfig& cfg, const EpochStep& step) {
  auto session = [&](Direction dir, int port, double rate) {
    PerfHeader h{dir, cfg.epoch_time, rate, cfg.buffer};
    PerfRecord r;
    if (rate <= 0.0) {
      r.direction = dir;
      r.transport = step.transport;
      r.duration_s = cfg.epoch_time;
      r.detail = "idle";
    } else {
      r = run_session(cfg.perf_host, port, step.transport, h);
    }
    r.epoch = step.epoch;
    r.context = std::string(to_string(step.context));
    return r;
  };
  const auto start = std::chrono::steady_clock::now();
  auto up = std::async(std::launch::async, session, Direction::up, cfg.up_port, step.ul_rate);
  PerfRecord down = session(Direction::down, cfg.down_port, step.dl_rate);
  PerfRecord upr = up.get();
  // Keep the epoch grid even when both sessions end early.
  std::this_thread::sleep_until(start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                            std::chrono::duration<double>(cfg.epoch_time)));
  return {down, upr};
}

ReplayResult run_replay(const ReplayConfig& cfg, ApiClient& api, SignalSource& signal,
                        std::ostream* history, std::size_t max_sequences,
                        const EpochRunner& runner) {
  cfg.validate();
  const std::uint64_t seed = cfg.seed ? *cfg.seed : std::random_device{}();
  std::seed_seq seq{seed, std::uint64_t{0x5eed}};
  std::array<std::uint64_t, 2> seeds{};
  seq.generate(seeds.begin(), seeds.end());
  ReplayPlanner planner(cfg, seeds[0]);
  const std::size_t sequences = cfg.continuous ? max_sequences : 1;

  ReplayResult result;
  if (history) write_history_header(*history);
  for (std::size_t n = 0; sequences == 0 || n < sequences; ++n) {
    const TraceCache cache = precache_traces(cfg, api, seeds[1] + 1000 * n);
    for (std::size_t k = 0; k < cfg.seq_len; ++k) {
      const EpochStep step = planner.next(cache, k, signal.rssi());
      result.steps.push_back(step);
      for (auto& r : runner(cfg, step)) {
        if (history) write_history_line(*history, r);
        result.records.push_back(std::move(r));
      }
    }
    ++result.sequences;
  }
  return result;
}

double bias(double intended_up, double intended_down, double measured_up, double measured_down) {
  if (intended_down == 0.0 || measured_down == 0.0) throw Error("bias: zero download throughput");
  return intended_up / intended_down - measured_up / measured_down;
}

}  // namespace mass::replay
