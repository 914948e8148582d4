#include "mass/trace/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mass {

std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::pos:
      return "pos";
    case Normalization::minmax:
      return "minmax";
    default:
      return "raw";
  }
}

Normalization parse_normalization(std::string_view s) {
  if (s == "pos") return Normalization::pos;
  if (s == "minmax") return Normalization::minmax;
  if (s == "raw") return Normalization::raw;
  throw Error("unknown normalization '" + std::string(s) + "'");
}

std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("cannot format number");
  return std::string(buf, end);
}

void write_trace_text(std::ostream& out, const TraceTensor& trace) {
  for (std::size_t u = 0; u < trace.users(); ++u) {
    if (u > 0) out << '\n';
    for (std::size_t k = 0; k < trace.steps(); ++k) {
      out << format_number(trace.at(u, k, Feature::download)) << ' '
          << format_number(trace.at(u, k, Feature::upload)) << '\n';
    }
  }
}

std::string trace_to_text(const TraceTensor& trace) {
  std::ostringstream out;
  write_trace_text(out, trace);
  return out.str();
}

namespace {

double parse_double(std::string_view token, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size())
    throw Error("trace line " + std::to_string(line_no) + ": bad number '" +
                std::string(token) + "'");
  return v;
}

}  // namespace

TraceTensor read_trace_text(std::istream& in) {
  std::vector<std::vector<std::pair<double, double>>> users;
  std::vector<std::pair<double, double>> current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!current.empty()) users.push_back(std::move(current));
      current.clear();
      continue;
    }
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a >> b) || (fields >> extra))
      throw Error("trace line " + std::to_string(line_no) + ": expected 'dl ul'");
    current.emplace_back(parse_double(a, line_no), parse_double(b, line_no));
  }
  if (!current.empty()) users.push_back(std::move(current));
  if (users.empty()) return {};

  const std::size_t steps = users.front().size();
  TraceTensor trace(users.size(), steps);
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (users[u].size() != steps)
      throw Error("trace user " + std::to_string(u) + " has " +
                  std::to_string(users[u].size()) + " steps, expected " +
                  std::to_string(steps));
    for (std::size_t k = 0; k < steps; ++k) {
      trace.at(u, k, Feature::download) = users[u][k].first;
      trace.at(u, k, Feature::upload) = users[u][k].second;
    }
  }
  return trace;
}

TraceTensor load_trace_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file " + path);
  return read_trace_text(in);
}

void save_trace_file(const std::string& path, const TraceTensor& trace) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace file " + path);
  write_trace_text(out, trace);
}

}  // namespace mass
