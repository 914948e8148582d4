#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mass/trace/context.hpp"

namespace mass {

/// One raw telemetry sample: byte counts observed in a short window.
struct SampleRecord {
  std::string user_id;
  std::int64_t timestamp = 0;  // seconds since epoch
  double rx_bytes = 0.0;
  double tx_bytes = 0.0;
  std::optional<double> rssi;                // dBm
  std::optional<std::string> app_category;  // store category
};

struct AggregationConfig {
  int samples_per_bucket = 6;
  int sample_period_s = 600;
  double rssi_threshold = -75.0;

  int bucket_seconds() const { return samples_per_bucket * sample_period_s; }
};

struct HourlyStep {
  std::int64_t bucket = 0;  // wall-clock bucket index, timestamp / bucket_seconds
  double dl = 0.0;
  double ul = 0.0;
  std::optional<Signal> signal;
  std::optional<App> app;
};

struct UserSeries {
  std::string user_id;
  std::vector<HourlyStep> steps;
};

/// Per-user labeled series, ordered by user id.
using Dataset = std::vector<UserSeries>;

/// Categories whose apps count as streaming; every other mapped
/// category is interactive.
bool is_stream_category(std::string_view category);

/// Maps a store category to an app context. Empty or UNKNOWN categories
/// are unmapped and yield nullopt.
std::optional<App> map_category(std::string_view category);

/// Reads `user,timestamp,rx_bytes,tx_bytes,rssi,app_category` CSV with a
/// header row. Empty rssi/app fields mean absent.
std::vector<SampleRecord> read_samples_csv(std::istream& in);

/// Buckets samples into fixed wall-clock windows per user and labels each
/// bucket with signal strength and carried-forward app context.
Dataset ingest(std::vector<SampleRecord> records,
               const AggregationConfig& cfg = {});

void write_hourly_csv(std::ostream& out, const Dataset& data);
Dataset read_hourly_csv(std::istream& in);

}  // namespace mass
