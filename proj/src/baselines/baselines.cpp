#include "mass/baselines/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "mass/error.hpp"

namespace mass::baselines {

namespace {

constexpr int kMaxIter = 200;
constexpr double kTol = 1e-8;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using boost::math::digamma;
using boost::math::trigamma;

double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size());
}

std::vector<double> logs(std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return std::log(v); });
  return out;
}

double total_log_likelihood(const Distribution& d, std::span<const double> data) {
  double ll = 0.0;
  for (double x : data) ll += log_pdf(d, x);
  return ll;
}

bool all_positive(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0; });
}

std::optional<std::array<double, 2>> fit_gamma(std::span<const double> x) {
  const double m = mean(x);
  const auto lx = logs(x);
  const double s = std::log(m) - mean(lx);
  if (!(s > 0.0)) return std::nullopt;
  // Newton on log k - digamma(k) = s from the usual closed-form start.
  double k = (3.0 - s + std::sqrt((s - 3.0) * (s - 3.0) + 24.0 * s)) / (12.0 * s);
  for (int it = 0; it < kMaxIter; ++it) {
    const double g = std::log(k) - digamma(k) - s;
    const double dg = 1.0 / k - trigamma(k);
    double next = k - g / dg;
    if (next <= 0.0) next = k / 2;
    const bool done = std::abs(next - k) <= kTol * k;
    k = next;
    if (done) break;
  }
  return std::array{k, m / k};
}

std::optional<std::array<double, 2>> fit_beta(std::span<const double> x) {
  if (!std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0 && v < 1.0; }))
    return std::nullopt;
  const double m = mean(x);
  const double v = variance(x, m);
  if (!(v > 0.0)) return std::nullopt;
  double common = m * (1 - m) / v - 1;
  if (!(common > 0.0)) common = 1.0;
  double a = m * common, b = (1 - m) * common;
  double sa = 0.0, sb = 0.0;
  for (double xi : x) {
    sa += std::log(xi);
    sb += std::log1p(-xi);
  }
  sa /= static_cast<double>(x.size());
  sb /= static_cast<double>(x.size());

  // Coordinate-wise Newton: each score equation in one shape parameter
  // with the other held fixed.
  auto solve = [](double p, double q, double target) {
    for (int it = 0; it < kMaxIter; ++it) {
      const double g = digamma(p) - digamma(p + q) - target;
      const double dg = trigamma(p) - trigamma(p + q);
      double next = p - g / dg;
      if (next <= 0.0) next = p / 2;
      const bool done = std::abs(next - p) <= kTol * p;
      p = next;
      if (done) break;
    }
    return p;
  };
  for (int sweep = 0; sweep < kMaxIter; ++sweep) {
    const double a_new = solve(a, b, sa);
    const double b_new = solve(b, a_new, sb);
    const bool done = std::abs(a_new - a) <= kTol * a && std::abs(b_new - b) <= kTol * b;
    a = a_new;
    b = b_new;
    if (done) break;
  }
  return std::array{a, b};
}

std::optional<std::array<double, 2>> fit_weibull(std::span<const double> x) {
  const auto lx = logs(x);
  const double mlx = mean(lx);
  const double sd = std::sqrt(variance(lx, mlx));
  if (!(sd > 0.0)) return std::nullopt;
  // Profile score in the shape k; terms scaled by max x to avoid overflow.
  const double xmax = *std::max_element(x.begin(), x.end());
  const double lmax = std::log(xmax);
  double k = 1.2825 / sd;
  auto sums = [&](double kk) {
    double s0 = 0, s1 = 0, s2 = 0;
    for (double l : lx) {
      const double w = std::exp(kk * (l - lmax));
      s0 += w;
      s1 += w * l;
      s2 += w * l * l;
    }
    return std::array{s0, s1, s2};
  };
  for (int it = 0; it < kMaxIter; ++it) {
    const auto [s0, s1, s2] = sums(k);
    const double g = 1.0 / k + mlx - s1 / s0;
    const double dg = -1.0 / (k * k) - (s2 * s0 - s1 * s1) / (s0 * s0);
    double next = k - g / dg;
    if (next <= 0.0) next = k / 2;
    const bool done = std::abs(next - k) <= kTol * k;
    k = next;
    if (done) break;
  }
  const auto [s0, s1, s2] = sums(k);
  (void)s1;
  (void)s2;
  const double scale = xmax * std::pow(s0 / static_cast<double>(x.size()), 1.0 / k);
  return std::array{k, scale};
}

std::vector<double> lumped(const TraceTensor& trace, Feature f) {
  auto v = trace.lumped(f);
  return {v.begin(), v.end()};
}

}  // namespace

std::string_view to_string(Family f) {
  switch (f) {
    case Family::uniform: return "uniform";
    case Family::normal: return "normal";
    case Family::lognormal: return "lognormal";
    case Family::exponential: return "exponential";
    case Family::gamma: return "gamma";
    case Family::beta: return "beta";
    case Family::weibull: return "weibull";
  }
  return "?";
}

std::size_t param_count(Family f) { return f == Family::exponential ? 1 : 2; }

double log_pdf(const Distribution& d, double x) {
  const auto [p, q] = d.params;
  switch (d.family) {
    case Family::uniform:
      if (x < p || x > q) return kNegInf;
      return q > p ? -std::log(q - p) : 0.0;
    case Family::normal: {
      const double z = (x - p) / q;
      return -0.5 * z * z - std::log(q) - 0.5 * std::log(2 * std::numbers::pi);
    }
    case Family::lognormal: {
      if (x <= 0) return kNegInf;
      const double z = (std::log(x) - p) / q;
      return -0.5 * z * z - std::log(q) - std::log(x) - 0.5 * std::log(2 * std::numbers::pi);
    }
    case Family::exponential:
      if (x < 0) return kNegInf;
      return std::log(p) - p * x;
    case Family::gamma:
      if (x <= 0) return kNegInf;
      return (p - 1) * std::log(x) - x / q - std::lgamma(p) - p * std::log(q);
    case Family::beta:
      if (x <= 0 || x >= 1) return kNegInf;
      return (p - 1) * std::log(x) + (q - 1) * std::log1p(-x) - std::lgamma(p) -
             std::lgamma(q) + std::lgamma(p + q);
    case Family::weibull:
      if (x <= 0) return kNegInf;
      return std::log(p / q) + (p - 1) * std::log(x / q) - std::pow(x / q, p);
  }
  return kNegInf;
}

std::optional<Distribution> fit_family(Family f, std::span<const double> data) {
  if (data.empty()) return std::nullopt;
  std::optional<std::array<double, 2>> params;
  switch (f) {
    case Family::uniform: {
      const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
      if (*hi > *lo) params = std::array{*lo, *hi};
      break;
    }
    case Family::normal: {
      const double m = mean(data);
      const double v = variance(data, m);
      if (v > 0) params = std::array{m, std::sqrt(v)};
      break;
    }
    case Family::lognormal: {
      if (!all_positive(data)) break;
      const auto lx = logs(data);
      const double m = mean(lx);
      const double v = variance(lx, m);
      if (v > 0) params = std::array{m, std::sqrt(v)};
      break;
    }
    case Family::exponential: {
      if (!std::all_of(data.begin(), data.end(), [](double v) { return v >= 0; })) break;
      const double m = mean(data);
      if (m > 0) params = std::array{1.0 / m, 0.0};
      break;
    }
    case Family::gamma:
      if (all_positive(data)) params = fit_gamma(data);
      break;
    case Family::beta:
      params = fit_beta(data);
      break;
    case Family::weibull:
      if (all_positive(data)) params = fit_weibull(data);
      break;
  }
  if (!params) return std::nullopt;
  Distribution d{f, *params, 0.0, false};
  d.log_likelihood = total_log_likelihood(d, data);
  if (!std::isfinite(d.log_likelihood)) return std::nullopt;
  return d;
}

Distribution uniform_fit(std::span<const double> data) {
  if (data.empty()) throw Error("uniform_fit: empty data");
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  Distribution d{Family::uniform, {*lo, *hi}, 0.0, false};
  d.log_likelihood = total_log_likelihood(d, data);
  return d;
}

Distribution uniform_fit(const TraceTensor& trace, Feature f) {
  return uniform_fit(lumped(trace, f));
}

Distribution dist_fit(std::span<const double> data) {
  if (data.size() < 10) throw Error("dist_fit: needs at least 10 observations");
  std::optional<Distribution> best;
  for (Family f : kFamilies) {
    auto d = fit_family(f, data);
    if (!d) continue;
    if (!best) {
      best = d;
      continue;
    }
    const double tol = 1e-9 * std::max(1.0, std::abs(best->log_likelihood));
    const double diff = d->log_likelihood - best->log_likelihood;
    if (diff > tol || (std::abs(diff) <= tol && param_count(f) < param_count(best->family)))
      best = d;
  }
  if (best) return *best;
  Distribution d = uniform_fit(data);
  d.fallback = true;
  return d;
}

Distribution dist_fit(const TraceTensor& trace, Feature f) { return dist_fit(lumped(trace, f)); }

Sampler::Sampler(Distribution d, std::uint64_t seed) : dist_(d), rng_(seed) {}

double Sampler::operator()() {
  const auto [p, q] = dist_.params;
  switch (dist_.family) {
    case Family::uniform:
      if (q <= p) return p;
      return std::uniform_real_distribution<double>(p, q)(rng_);
    case Family::normal: return std::normal_distribution<double>(p, q)(rng_);
    case Family::lognormal: return std::lognormal_distribution<double>(p, q)(rng_);
    case Family::exponential: return std::exponential_distribution<double>(p)(rng_);
    case Family::gamma: return std::gamma_distribution<double>(p, q)(rng_);
    case Family::beta: {
      const double x = std::gamma_distribution<double>(p, 1.0)(rng_);
      const double y = std::gamma_distribution<double>(q, 1.0)(rng_);
      return x / (x + y);
    }
    case Family::weibull: return std::weibull_distribution<double>(p, q)(rng_);
  }
  return p;
}

TraceTensor baseline_generate(std::array<Sampler, 2>& samplers, std::size_t users,
                              std::size_t steps) {
  if (users == 0 || steps == 0) throw Error("baseline_generate: users and steps must be >= 1");
  TraceTensor t(users, steps, Normalization::raw);
  for (std::size_t f = 0; f < kFeatureCount; ++f)
    for (std::size_t u = 0; u < users; ++u)
      for (std::size_t k = 0; k < steps; ++k) t.at(u, k, static_cast<Feature>(f)) = samplers[f]();
  return t;
}

BaselineModel fit_baseline(BaselineKind kind, const TraceTensor& trace) {
  BaselineModel m{kind, {}};
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    const auto feat = static_cast<Feature>(f);
    m.features[f] = kind == BaselineKind::uni ? uniform_fit(trace, feat) : dist_fit(trace, feat);
  }
  return m;
}

TraceTensor baseline_generate(const BaselineModel& model, std::size_t users, std::size_t steps,
                              std::uint64_t seed) {
  std::seed_seq seq{seed};
  std::array<std::uint64_t, 2> seeds{};
  std::array<std::uint32_t, 4> words{};
  seq.generate(words.begin(), words.end());
  seeds[0] = (std::uint64_t{words[0]} << 32) | words[1];
  seeds[1] = (std::uint64_t{words[2]} << 32) | words[3];
  std::array<Sampler, 2> samplers{Sampler(model.features[0], seeds[0]),
                                  Sampler(model.features[1], seeds[1])};
  return baseline_generate(samplers, users, steps);
}

}  // namespace mass::baselines
