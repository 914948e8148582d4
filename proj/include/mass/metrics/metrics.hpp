#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mass/trace/trace_tensor.hpp"

namespace mass::metrics {

/// Upper-triangular (row-major) across-user mean Pearson coefficients.
using CorrVector = std::vector<double>;

struct MomentTriple {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  double skew = 0.0;   // third standardized moment, 0 when sigma == 0

  bool operator==(const MomentTriple&) const = default;
};

/// Pearson r. Returns 0 when either sequence is constant.
double pearson(std::span<const double> x, std::span<const double> y);

/// Per-user Pearson for every feature pair, averaged over users.
CorrVector corr_vector(const TraceTensor& trace);

double corr_distance(const CorrVector& data, const CorrVector& gen);

/// Population moments of a sample.
MomentTriple moments(std::span<const double> values);

/// Moments of one feature over all users and steps lumped together.
MomentTriple moments(const TraceTensor& trace, Feature f);

/// Squared Euclidean distance between two moment triples.
double moments_distance(const MomentTriple& data, const MomentTriple& gen);

/// Sum over both features of moments_distance on lumped moments.
double moments_distance(const TraceTensor& data, const TraceTensor& gen);

/// Pearson of x[0..L-k) against y[k..L).
double cross_correlation(std::span<const double> x, std::span<const double> y,
                         std::size_t lag);

/// floor(10 log10(K/2)), capped so at least two samples overlap.
std::size_t novelty_max_lag(std::size_t steps);

/// 1 - mean over users of the best lagged correlation to any other user.
double novelty(const TraceTensor& trace, Feature f = Feature::download);

}  // namespace mass::metrics
