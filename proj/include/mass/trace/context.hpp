#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace mass {

enum class Signal { high, low };
enum class App { stream, interact };

/// Generator selector: GLOBAL or a signal/app combination.
enum class ContextLabel {
  global,
  high,
  low,
  stream,
  interact,
  stream_high,
  stream_low,
  interact_high,
  interact_low,
};

/// The eight non-GLOBAL labels in a fixed order.
inline constexpr std::array<ContextLabel, 8> kContextLabels = {
    ContextLabel::high,          ContextLabel::low,
    ContextLabel::stream,        ContextLabel::interact,
    ContextLabel::stream_high,   ContextLabel::stream_low,
    ContextLabel::interact_high, ContextLabel::interact_low,
};

std::string_view to_string(ContextLabel label);
std::optional<ContextLabel> parse_context(std::string_view name);

std::optional<Signal> signal_part(ContextLabel label);
std::optional<App> app_part(ContextLabel label);

/// Inverse of signal_part/app_part; both empty yields GLOBAL.
ContextLabel compose(std::optional<App> app, std::optional<Signal> signal);

/// A step belongs to a context iff every part the label names matches.
/// GLOBAL matches everything; an unlabeled part never matches a named one.
bool matches(ContextLabel label, std::optional<Signal> signal,
             std::optional<App> app);

std::string_view to_string(Signal s);
std::string_view to_string(App a);

}  // namespace mass
