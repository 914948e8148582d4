#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mass/gan/model.hpp"
#include "mass/trace/dataset.hpp"

namespace mass::train {

/// Train/test tensors, seq_len steps per user, minmax-normalized.
struct PreparedData {
  TraceTensor train;
  TraceTensor test;
};

PreparedData prepare_data(const Dataset& data, std::uint64_t split_seed, std::size_t seq_len);

struct MetricRow {
  double corr_distance = 0.0;
  double moments_distance = 0.0;
  double novelty = 0.0;
};

/// Metrics of a generated batch against reference data.
MetricRow score(const TraceTensor& reference, const TraceTensor& generated);

struct BenchmarkRow {
  std::string name;  // Uni, Dist, MASS
  MetricRow train;
  MetricRow test;
};

inline constexpr std::size_t kNoveltySteps = 100;

/// Each benchmark generates a batch the size of the reference set; the
/// baselines are fitted on the training data. Novelty is taken from a
/// second batch of the same users but `novelty_steps` long (0 reuses the
/// first batch): on a dozen steps even independent noise finds a near
/// perfect lagged match among 100 users.
std::vector<BenchmarkRow> evaluate(const gan::GanModel& model, const TraceTensor& train,
                                   const TraceTensor& test, std::uint64_t seed,
                                   std::size_t novelty_steps = kNoveltySteps);

std::string format_table(const std::vector<BenchmarkRow>& rows);
/// One `benchmark split metric value` line per cell.
std::string format_lines(const std::vector<BenchmarkRow>& rows);

}  // namespace mass::train
