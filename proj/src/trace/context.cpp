#include "mass/trace/context.hpp"

#include <utility>

namespace mass {

namespace {

constexpr std::pair<ContextLabel, std::string_view> kNames[] = {
    {ContextLabel::global, "GLOBAL"},
    {ContextLabel::high, "HIGH"},
    {ContextLabel::low, "LOW"},
    {ContextLabel::stream, "STREAM"},
    {ContextLabel::interact, "INTERACT"},
    {ContextLabel::stream_high, "STREAM_HIGH"},
    {ContextLabel::stream_low, "STREAM_LOW"},
    {ContextLabel::interact_high, "INTERACT_HIGH"},
    {ContextLabel::interact_low, "INTERACT_LOW"},
};

}  // namespace

std::string_view to_string(ContextLabel label) {
  for (const auto& [l, name] : kNames)
    if (l == label) return name;
  return "GLOBAL";
}

std::optional<ContextLabel> parse_context(std::string_view name) {
  for (const auto& [l, n] : kNames)
    if (n == name) return l;
  return std::nullopt;
}

std::optional<Signal> signal_part(ContextLabel label) {
  switch (label) {
    case ContextLabel::high:
    case ContextLabel::stream_high:
    case ContextLabel::interact_high:
      return Signal::high;
    case ContextLabel::low:
    case ContextLabel::stream_low:
    case ContextLabel::interact_low:
      return Signal::low;
    default:
      return std::nullopt;
  }
}

std::optional<App> app_part(ContextLabel label) {
  switch (label) {
    case ContextLabel::stream:
    case ContextLabel::stream_high:
    case ContextLabel::stream_low:
      return App::stream;
    case ContextLabel::interact:
    case ContextLabel::interact_high:
    case ContextLabel::interact_low:
      return App::interact;
    default:
      return std::nullopt;
  }
}

ContextLabel compose(std::optional<App> app, std::optional<Signal> signal) {
  if (!app && !signal) return ContextLabel::global;
  if (!app) return *signal == Signal::high ? ContextLabel::high : ContextLabel::low;
  if (*app == App::stream) {
    if (!signal) return ContextLabel::stream;
    return *signal == Signal::high ? ContextLabel::stream_high : ContextLabel::stream_low;
  }
  if (!signal) return ContextLabel::interact;
  return *signal == Signal::high ? ContextLabel::interact_high : ContextLabel::interact_low;
}

bool matches(ContextLabel label, std::optional<Signal> signal,
             std::optional<App> app) {
  const auto want_signal = signal_part(label);
  const auto want_app = app_part(label);
  if (want_signal && signal != want_signal) return false;
  if (want_app && app != want_app) return false;
  return true;
}

std::string_view to_string(Signal s) { return s == Signal::high ? "HIGH" : "LOW"; }

std::string_view to_string(App a) { return a == App::stream ? "STREAM" : "INTERACT"; }

}  // namespace mass
