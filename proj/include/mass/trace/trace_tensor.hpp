#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mass/error.hpp"

namespace mass {

enum class Feature : std::size_t { download = 0, upload = 1 };
inline constexpr std::size_t kFeatureCount = 2;

enum class Normalization { raw, pos, minmax };

std::string_view to_string(Normalization n);
Normalization parse_normalization(std::string_view s);

/// Users x steps x 2 block of (download, upload) volumes, stored
/// user-major so one user's trace is contiguous.
class TraceTensor {
 public:
  TraceTensor() = default;
  TraceTensor(std::size_t users, std::size_t steps,
              Normalization normalization = Normalization::raw)
      : users_(users),
        steps_(steps),
        normalization_(normalization),
        values_(users * steps * kFeatureCount, 0.0) {}

  std::size_t users() const { return users_; }
  std::size_t steps() const { return steps_; }
  bool empty() const { return values_.empty(); }

  Normalization normalization() const { return normalization_; }
  void set_normalization(Normalization n) { normalization_ = n; }

  double& at(std::size_t user, std::size_t step, Feature f) {
    return values_[index(user, step, f)];
  }
  double at(std::size_t user, std::size_t step, Feature f) const {
    return values_[index(user, step, f)];
  }

  std::vector<double> series(std::size_t user, Feature f) const {
    std::vector<double> out(steps_);
    for (std::size_t k = 0; k < steps_; ++k) out[k] = at(user, k, f);
    return out;
  }

  /// All values of one feature, every user and step lumped together.
  std::vector<double> lumped(Feature f) const {
    std::vector<double> out;
    out.reserve(users_ * steps_);
    for (std::size_t u = 0; u < users_; ++u)
      for (std::size_t k = 0; k < steps_; ++k) out.push_back(at(u, k, f));
    return out;
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const TraceTensor&) const = default;

 private:
  std::size_t index(std::size_t user, std::size_t step, Feature f) const {
    return (user * steps_ + step) * kFeatureCount + static_cast<std::size_t>(f);
  }

  std::size_t users_ = 0;
  std::size_t steps_ = 0;
  Normalization normalization_ = Normalization::raw;
  std::vector<double> values_;
};

}  // namespace mass
