#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "mass/metrics/metrics.hpp"
#include "mass/trace/context.hpp"
#include "mass/trace/trace_tensor.hpp"

namespace mass::gan {

/// Flat parameter storage. Eigen's small-product kernels pick their
/// reduction order from pointer alignment, so parameters are always
/// allocated on the same boundary to keep results bitwise reproducible.
using ParamVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct GanConfig {
  static constexpr std::size_t latent_dim = 2;
  static constexpr std::size_t feature_dim = 2;

  std::size_t hidden_size = 64;
  std::size_t num_layers = 2;
  std::size_t seq_len = 12;
  std::size_t batch_users = 100;

  void validate() const;
  bool operator==(const GanConfig&) const = default;
};

/// Statistics of the training data the generator losses aim for. The
/// moment targets use the same estimator as the moments loss: per-user
/// moments averaged over users, one triple per feature.
struct TargetStats {
  double c_target = 0.0;
  std::array<metrics::MomentTriple, 2> moments{};

  bool operator==(const TargetStats&) const = default;
};

TargetStats compute_target_stats(const TraceTensor& data);

/// Mean over users of per-user moments of one feature.
metrics::MomentTriple mean_user_moments(const TraceTensor& trace, Feature f);

/// Parameter counts of the two networks for a configuration.
std::size_t generator_param_count(const GanConfig& cfg);
std::size_t discriminator_param_count(const GanConfig& cfg);

/// Generator: unidirectional LSTM stack with a per-step affine head
/// squashed to [0,1]^2. Discriminator: bidirectional LSTM stack with a
/// per-step affine logit head.
struct GanModel {
  GanConfig config;
  ContextLabel context = ContextLabel::global;
  TargetStats stats;
  ParamVector generator;
  ParamVector discriminator;

  /// Fan-in scaled uniform weights, forget-gate biases at 1.
  static GanModel initialize(const GanConfig& cfg, std::uint64_t seed);

  /// Throws unless parameter counts match the configuration and every
  /// parameter is finite.
  void validate() const;

  bool operator==(const GanModel&) const = default;
};

/// users x steps x 2 latent draws, i.i.d. uniform on [0,1].
struct LatentBatch {
  std::size_t users = 0;
  std::size_t steps = 0;
  std::vector<double> values;

  double at(std::size_t u, std::size_t k, std::size_t d) const {
    return values[(u * steps + k) * GanConfig::latent_dim + d];
  }

  static LatentBatch draw(std::size_t users, std::size_t steps, std::mt19937_64& rng);
  static LatentBatch draw(std::size_t users, std::size_t steps, std::uint64_t seed);
};

}  // namespace mass::gan
