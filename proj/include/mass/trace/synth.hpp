#pragma once

#include <cstddef>
#include <cstdint>

#include "mass/metrics/metrics.hpp"
#include "mass/trace/trace_tensor.hpp"

namespace mass {

struct SynthOptions {
  /// Lag-one autocorrelation of the latent per-user processes.
  double temporal_corr = 0.6;
};

/// Seeded stand-in for private source traces. Both features share the
/// target lumped moments (skew must be positive unless sigma is 0), and
/// the across-user mean dl/ul Pearson coefficient hits `target_corr`.
/// Throws mass::Error for infeasible targets.
TraceTensor synth_dataset(std::uint64_t seed, std::size_t users,
                          std::size_t steps, double target_corr,
                          const metrics::MomentTriple& target_moments,
                          const SynthOptions& options = {});

}  // namespace mass
