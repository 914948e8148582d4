#pragma once

#include <iosfwd>
#include <string>

#include "mass/trace/trace_tensor.hpp"

namespace mass {

/// Shortest decimal that parses back to the same double.
std::string format_number(double v);

/// Text interchange layout: one "dl ul" line per step, an empty line
/// between users, no trailing empty line.
void write_trace_text(std::ostream& out, const TraceTensor& trace);
std::string trace_to_text(const TraceTensor& trace);

/// Parses the layout written by write_trace_text. All users must have the
/// same number of steps.
TraceTensor read_trace_text(std::istream& in);

TraceTensor load_trace_file(const std::string& path);
void save_trace_file(const std::string& path, const TraceTensor& trace);

}  // namespace mass
