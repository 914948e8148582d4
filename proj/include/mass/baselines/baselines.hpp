#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mass/trace/trace_tensor.hpp"

namespace mass::baselines {

enum class Family { uniform, normal, lognormal, exponential, gamma, beta, weibull };

inline constexpr std::array<Family, 7> kFamilies{Family::uniform,     Family::normal,
                                                 Family::lognormal,   Family::exponential,
                                                 Family::gamma,       Family::beta,
                                                 Family::weibull};

std::string_view to_string(Family f);
std::size_t param_count(Family f);

/// Parameters by family:
///   uniform (lo, hi), normal (mu, sigma), lognormal (mu, sigma of log),
///   exponential (rate, -), gamma (shape, scale), beta (alpha, beta),
///   weibull (shape, scale).
/// A uniform with lo == hi is the constant distribution.
struct Distribution {
  Family family = Family::uniform;
  std::array<double, 2> params{};
  double log_likelihood = 0.0;
  /// Set when dist_fit found no feasible family and fell back to uniform_fit.
  bool fallback = false;

  bool operator==(const Distribution&) const = default;
};

double log_pdf(const Distribution& d, double x);

/// Maximum-likelihood fit of one family; nullopt if the data lie outside
/// the family's support or the fit is degenerate.
std::optional<Distribution> fit_family(Family f, std::span<const double> data);

/// Uniform on [min, max] of the data.
Distribution uniform_fit(std::span<const double> data);
Distribution uniform_fit(const TraceTensor& trace, Feature f);

/// Best log-likelihood over all families, fewest parameters on ties.
/// Needs at least 10 observations.
Distribution dist_fit(std::span<const double> data);
Distribution dist_fit(const TraceTensor& trace, Feature f);

class Sampler {
 public:
  Sampler(Distribution d, std::uint64_t seed);

  double operator()();
  const Distribution& distribution() const { return dist_; }

 private:
  Distribution dist_;
  std::mt19937_64 rng_;
};

/// U x K trace with every value drawn independently; samplers[f] feeds
/// feature f.
TraceTensor baseline_generate(std::array<Sampler, 2>& samplers, std::size_t users,
                              std::size_t steps);

enum class BaselineKind { uni, dist };

/// Per-feature fits on the lumped values of a trace.
struct BaselineModel {
  BaselineKind kind = BaselineKind::uni;
  std::array<Distribution, 2> features;
};

BaselineModel fit_baseline(BaselineKind kind, const TraceTensor& trace);
TraceTensor baseline_generate(const BaselineModel& model, std::size_t users, std::size_t steps,
                              std::uint64_t seed);

}  // namespace mass::baselines
