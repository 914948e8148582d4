#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "mass/gan/losses.hpp"
#include "mass/gan/model.hpp"
#include "mass/trace/dataset.hpp"

namespace mass::train {

struct TrainConfig {
  gan::GanConfig gan;
  std::size_t max_epochs = 2000;
  std::size_t validation_period = 50;
  std::size_t delta_window = 25;
  std::size_t patience = 5;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  gan::StatsMode stats_mode = gan::StatsMode::raw;
  std::uint64_t seed = 0;

  void validate() const;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg);
  std::size_t steps() const { return t_; }

  bool operator==(const Adam&) const = default;

 private:
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

inline constexpr double kWorstInit = 1e9;

struct TrainState {
  std::size_t epoch = 0;
  gan::Deltas deltas{1, 1};
  std::size_t delta_window_remaining = 0;
  double worst_prev = kWorstInit;
  std::optional<gan::GanModel> candidate;
  std::size_t failed_validations = 0;
  double best_total = 0.0;
  bool have_best_total = false;
  std::mt19937_64 rng;
  Adam g_opt, d_opt;

  TrainState() = default;
  TrainState(const gan::GanModel& model, std::uint64_t seed);
};

struct EpochResult {
  bool ok = true;
  double loss_d = 0.0;
  gan::LossTerms terms;
  double loss_total = 0.0;
};

/// One discriminator update on L_D, then one generator update on the
/// delta-weighted generator loss with the same latent batch. A non-finite
/// loss leaves model and optimizer state untouched and returns ok = false.
EpochResult train_epoch(TrainState& state, gan::GanModel& model, const TraceTensor& train_data,
                        const TrainConfig& cfg);

/// b users (with replacement only when the data has fewer) and a random
/// window of seq_len steps per user.
TraceTensor sample_batch(const TraceTensor& data, std::size_t users, std::size_t steps,
                         std::mt19937_64& rng);

struct Validation {
  double corr = 0.0;
  double mom = 0.0;
  double worst = 0.0;
  double uni_corr = 0.0;  // same losses on a uniform-fit batch of equal size
  double uni_mom = 0.0;
};

Validation benchmark_validation(const gan::GanModel& model, const TraceTensor& train_data,
                                gan::StatsMode mode, std::uint64_t seed);

/// Keeps the statistic that is doing worse; `coin` decides ties.
gan::Deltas update_deltas(double l_corr, double l_mom, bool coin);

struct TrainResult {
  gan::GanModel model;
  bool candidate_found = false;  // false: model is the final parameters
  bool stopped_early = false;
  std::size_t epochs_run = 0;
  std::vector<double> accepted_worst;
  std::size_t skipped_epochs = 0;
};

/// Line-delimited JSON records; null disables logging.
struct TrainLog {
  std::ostream* out = nullptr;
};

TrainResult conditional_gradient_descent(const TrainConfig& cfg, const TraceTensor& train_data,
                                         ContextLabel context = ContextLabel::global,
                                         TrainLog log = {});

/// Same loop starting from given parameters; stats are recomputed from the
/// data.
TrainResult conditional_gradient_descent(const TrainConfig& cfg, const TraceTensor& train_data,
                                         gan::GanModel start, TrainLog log = {});

/// Continues training a global model on one context's traces for
/// `epochs` epochs. The split must be significant.
TrainResult fine_tune(const gan::GanModel& global, const ContextSplit& split, std::size_t epochs,
                      TrainConfig cfg, TrainLog log = {});

}  // namespace mass::train
