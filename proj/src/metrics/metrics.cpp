#include "mass/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mass::metrics {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error("pearson: length mismatch " + std::to_string(x.size()) + " vs " +
                std::to_string(y.size()));
  if (x.size() < 2) throw Error("pearson: need at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrVector corr_vector(const TraceTensor& trace) {
  if (trace.steps() < 2) throw Error("corr_vector: need at least 2 steps");
  if (trace.users() == 0) throw Error("corr_vector: empty trace");
  CorrVector out;
  for (std::size_t a = 0; a < kFeatureCount; ++a) {
    for (std::size_t b = a + 1; b < kFeatureCount; ++b) {
      double sum = 0.0;
      for (std::size_t u = 0; u < trace.users(); ++u) {
        auto xa = trace.series(u, static_cast<Feature>(a));
        auto xb = trace.series(u, static_cast<Feature>(b));
        sum += pearson(xa, xb);
      }
      out.push_back(sum / static_cast<double>(trace.users()));
    }
  }
  return out;
}

double corr_distance(const CorrVector& data, const CorrVector& gen) {
  if (data.size() != gen.size())
    throw Error("corr_distance: dimension mismatch " + std::to_string(data.size()) +
                " vs " + std::to_string(gen.size()));
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double d = data[i] - gen[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

MomentTriple moments(std::span<const double> values) {
  if (values.size() < 2) throw Error("moments: need at least 2 samples");
  const double n = static_cast<double>(values.size());
  double mu = 0.0;
  for (double v : values) mu += v;
  mu /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - mu;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  MomentTriple t;
  t.mu = mu;
  t.sigma = std::sqrt(m2);
  t.skew = m2 > 0.0 ? m3 / (m2 * t.sigma) : 0.0;
  return t;
}

MomentTriple moments(const TraceTensor& trace, Feature f) {
  return moments(trace.lumped(f));
}

double moments_distance(const MomentTriple& data, const MomentTriple& gen) {
  const double a = data.mu - gen.mu;
  const double b = data.sigma - gen.sigma;
  const double c = data.skew - gen.skew;
  return a * a + b * b + c * c;
}

double moments_distance(const TraceTensor& data, const TraceTensor& gen) {
  double sum = 0.0;
  for (Feature f : {Feature::download, Feature::upload})
    sum += moments_distance(moments(data, f), moments(gen, f));
  return sum;
}

double cross_correlation(std::span<const double> x, std::span<const double> y,
                         std::size_t lag) {
  if (x.size() != y.size()) throw Error("cross_correlation: length mismatch");
  if (lag >= x.size() || x.size() - lag < 2)
    throw Error("cross_correlation: overlap below 2 samples at lag " +
                std::to_string(lag));
  const std::size_t overlap = x.size() - lag;
  return pearson(x.subspan(0, overlap), y.subspan(lag, overlap));
}

std::size_t novelty_max_lag(std::size_t steps) {
  if (steps < 2) throw Error("novelty: need at least 2 steps");
  const double bound = 10.0 * std::log10(static_cast<double>(steps) / 2.0);
  const auto lag = static_cast<std::size_t>(std::floor(bound + 1e-9));
  return std::min(lag, steps - 2);
}

double novelty(const TraceTensor& trace, Feature f) {
  if (trace.users() < 2) throw Error("novelty: need at least 2 users");
  const std::size_t max_lag = novelty_max_lag(trace.steps());
  std::vector<std::vector<double>> series(trace.users());
  for (std::size_t u = 0; u < trace.users(); ++u) series[u] = trace.series(u, f);

  double total = 0.0;
  for (std::size_t i = 0; i < trace.users(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < trace.users(); ++j) {
      if (j == i) continue;
      for (std::size_t k = 0; k <= max_lag; ++k)
        best = std::max(best, cross_correlation(series[i], series[j], k));
    }
    total += best;
  }
  return 1.0 - total / static_cast<double>(trace.users());
}

}  // namespace mass::metrics
