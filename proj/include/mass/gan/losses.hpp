#pragma once

#include <span>
#include <vector>

#include "mass/gan/model.hpp"

namespace mass::gan {

/// Where the generator statistics are measured: on the generated values
/// themselves, or on the discriminator's per-step logits of each feature
/// channel with the other channel zeroed.
enum class StatsMode { raw, representation };

/// Lower bound applied to log arguments.
inline constexpr double kLogClamp = 1e-7;

struct DiscriminatorOutput {
  std::size_t users = 0;
  std::size_t steps = 0;
  std::vector<double> logits;  // users x steps
  std::vector<double> probs;   // sigmoid(logits)

  /// Per-trace probability: mean of the per-step probabilities.
  std::vector<double> trace_probs() const;
};

TraceTensor generator_forward(const GanModel& model, const LatentBatch& z);
DiscriminatorOutput discriminator_forward(const GanModel& model, const TraceTensor& trace);

/// (1/b) sum log(1 - D(G(z))).
double loss_discrimination(std::span<const double> gen_probs);

/// (1/k) sum [-log D(t) - log(1 - D(G(z)))].
double loss_discriminator_train(std::span<const double> real_probs,
                                std::span<const double> gen_probs);

/// |c_target - batch mean of per-user dl/ul Pearson|.
double loss_corr_dist(const GanModel& model, const TraceTensor& gen,
                      StatsMode mode = StatsMode::raw);

/// Squared errors of batch-mean per-user (mu, sigma, skew) against the
/// targets, summed over both features.
double loss_mom_dist(const GanModel& model, const TraceTensor& gen,
                     StatsMode mode = StatsMode::raw);

struct LossTerms {
  double disc = 0.0;
  double corr = 0.0;
  double mom = 0.0;
};

/// Conditional-descent switches; (0,0) never occurs during training but
/// is a valid input here.
struct Deltas {
  int corr = 1;
  int mom = 1;

  bool operator==(const Deltas&) const = default;
};

double loss_total(const LossTerms& terms, Deltas deltas);
LossTerms generator_loss_terms(const GanModel& model, const TraceTensor& gen,
                               StatsMode mode = StatsMode::raw);

enum class LossSelector { disc, corr, mom, total };

struct Gradient {
  double loss = 0.0;
  LossTerms terms;
  ParamVector grad;
  TraceTensor generated;
};

/// Exact dL/dtheta of a generator loss at latent batch `z`.
Gradient generator_gradient(const GanModel& model, const LatentBatch& z,
                            LossSelector selector, Deltas deltas = {},
                            StatsMode mode = StatsMode::raw);

/// Exact dL_D/domega for a real batch and a generated batch.
Gradient discriminator_gradient(const GanModel& model, const TraceTensor& real,
                                const TraceTensor& gen);

}  // namespace mass::gan
