#include "mass/trace/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <ostream>
#include <tuple>

#include "mass/error.hpp"
#include "mass/trace/trace_io.hpp"

namespace mass {

namespace {

constexpr std::array<std::string_view, 4> kStreamCategories = {
    "MUSIC_AND_AUDIO", "MAPS_AND_NAVIGATION", "SPORTS", "VIDEO_PLAYERS"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_field(std::string_view field, std::string_view name, std::size_t line_no) {
  T v{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw Error("line " + std::to_string(line_no) + ": bad " + std::string(name) +
                " '" + std::string(field) + "'");
  return v;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

struct Bucket {
  std::int64_t index = 0;
  int count = 0;
  double rx_sum = 0.0;
  double tx_sum = 0.0;
  int rssi_count = 0;
  double rssi_sum = 0.0;
};

}  // namespace

bool is_stream_category(std::string_view category) {
  return std::find(kStreamCategories.begin(), kStreamCategories.end(), category) !=
         kStreamCategories.end();
}

std::optional<App> map_category(std::string_view category) {
  category = trim(category);
  if (category.empty() || category == "UNKNOWN" || category == "unknown")
    return std::nullopt;
  return is_stream_category(category) ? App::stream : App::interact;
}

std::vector<SampleRecord> read_samples_csv(std::istream& in) {
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      if (trim(split_csv(line).front()) == "user") continue;
    }
    auto f = split_csv(line);
    if (f.size() != 6)
      throw Error("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                  std::to_string(f.size()));
    SampleRecord r;
    r.user_id = std::string(f[0]);
    if (r.user_id.empty()) throw Error("line " + std::to_string(line_no) + ": empty user");
    r.timestamp = parse_field<std::int64_t>(f[1], "timestamp", line_no);
    r.rx_bytes = parse_field<double>(f[2], "rx_bytes", line_no);
    r.tx_bytes = parse_field<double>(f[3], "tx_bytes", line_no);
    if (r.rx_bytes < 0 || r.tx_bytes < 0)
      throw Error("line " + std::to_string(line_no) + ": negative byte count");
    if (!f[4].empty()) r.rssi = parse_field<double>(f[4], "rssi", line_no);
    if (!f[5].empty()) r.app_category = std::string(f[5]);
    records.push_back(std::move(r));
  }
  return records;
}

Dataset ingest(std::vector<SampleRecord> records, const AggregationConfig& cfg) {
  if (cfg.samples_per_bucket <= 0 || cfg.sample_period_s <= 0)
    throw Error("aggregation config must be positive");
  auto key = [](const SampleRecord& r) {
    return std::tie(r.user_id, r.timestamp, r.rx_bytes, r.tx_bytes, r.rssi,
                    r.app_category);
  };
  std::sort(records.begin(), records.end(),
            [&](const SampleRecord& a, const SampleRecord& b) { return key(a) < key(b); });

  Dataset out;
  const std::int64_t width = cfg.bucket_seconds();
  std::size_t i = 0;
  while (i < records.size()) {
    UserSeries series{records[i].user_id, {}};
    std::optional<App> app_memory;
    std::optional<Signal> last_signal;
    Bucket bucket;
    bool open = false;

    auto flush = [&](bool trailing) {
      if (!open) return;
      open = false;
      if (trailing && bucket.count < cfg.samples_per_bucket) return;
      HourlyStep step;
      step.bucket = bucket.index;
      step.dl = bucket.rx_sum / bucket.count;
      step.ul = bucket.tx_sum / bucket.count;
      if (bucket.rssi_count > 0) {
        const double mean_rssi = bucket.rssi_sum / bucket.rssi_count;
        last_signal = mean_rssi < cfg.rssi_threshold ? Signal::low : Signal::high;
      }
      step.signal = last_signal.value_or(Signal::high);
      step.app = app_memory;
      series.steps.push_back(step);
    };

    for (; i < records.size() && records[i].user_id == series.user_id; ++i) {
      const auto& r = records[i];
      const std::int64_t idx = floor_div(r.timestamp, width);
      if (!open || idx != bucket.index) {
        flush(false);
        bucket = Bucket{idx};
        open = true;
      }
      ++bucket.count;
      bucket.rx_sum += r.rx_bytes;
      bucket.tx_sum += r.tx_bytes;
      if (r.rssi) {
        ++bucket.rssi_count;
        bucket.rssi_sum += *r.rssi;
      }
      if (r.app_category)
        if (auto mapped = map_category(*r.app_category)) app_memory = mapped;
    }
    flush(true);
    if (!series.steps.empty()) out.push_back(std::move(series));
  }
  return out;
}

void write_hourly_csv(std::ostream& out, const Dataset& data) {
  out << "user,bucket,dl,ul,signal,app\n";
  for (const auto& user : data) {
    for (const auto& s : user.steps) {
      out << user.user_id << ',' << s.bucket << ',' << format_number(s.dl) << ','
          << format_number(s.ul) << ',' << (s.signal ? to_string(*s.signal) : "")
          << ',' << (s.app ? to_string(*s.app) : "") << '\n';
    }
  }
}

Dataset read_hourly_csv(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || trim(line).empty()) continue;
    auto f = split_csv(line);
    if (f.size() != 6)
      throw Error("hourly line " + std::to_string(line_no) + ": expected 6 fields");
    HourlyStep step;
    step.bucket = parse_field<std::int64_t>(f[1], "bucket", line_no);
    step.dl = parse_field<double>(f[2], "dl", line_no);
    step.ul = parse_field<double>(f[3], "ul", line_no);
    if (f[4] == "HIGH") step.signal = Signal::high;
    else if (f[4] == "LOW") step.signal = Signal::low;
    else if (!f[4].empty()) throw Error("hourly line " + std::to_string(line_no) + ": bad signal");
    if (f[5] == "STREAM") step.app = App::stream;
    else if (f[5] == "INTERACT") step.app = App::interact;
    else if (!f[5].empty()) throw Error("hourly line " + std::to_string(line_no) + ": bad app");
    if (data.empty() || data.back().user_id != f[0]) data.push_back({std::string(f[0]), {}});
    data.back().steps.push_back(step);
  }
  return data;
}

}  // namespace mass
