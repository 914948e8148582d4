#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mass/trace/context.hpp"
#include "mass/trace/ingest.hpp"
#include "mass/trace/trace_tensor.hpp"

namespace mass {

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Drops users with fewer than `min_hours` steps, then shuffles the rest
/// with `seed` and splits them into two disjoint halves (train gets the
/// extra user when the count is odd).
TrainTestSplit split_train_test(const Dataset& data, std::uint64_t seed,
                                std::size_t min_hours = 10);

/// Stacks the first `steps` steps of every user that has at least that
/// many into a raw tensor; shorter users are skipped.
TraceTensor to_trace(const Dataset& data, std::size_t steps);

/// Unlabeled dataset view of a tensor, one user per row.
Dataset dataset_from_trace(const TraceTensor& trace);

struct SplitThresholds {
  std::size_t min_users = 5;
  std::size_t seq_len = 12;
  double min_relative_delta = 0.10;
};

struct ContextSplit {
  ContextLabel label = ContextLabel::global;
  TraceTensor trace;  // qualifying users, first seq_len matching steps each
  std::size_t qualifying_users = 0;
  bool significant = false;
  double mean_delta_dl = 0.0;  // (context mean - global mean) / global mean
  double mean_delta_ul = 0.0;
};

/// Evaluates all eight candidate contexts. Insignificant splits are kept
/// but flagged.
std::vector<ContextSplit> context_split(const Dataset& data,
                                        const SplitThresholds& thresholds = {});

/// GLOBAL followed by every significant label.
std::vector<ContextLabel> usable_contexts(const std::vector<ContextSplit>& splits);

/// minmax: per user, per feature (x - min) / (max - min), constant series
/// map to 0. pos: negatives clamped to 0. raw is not a valid target.
TraceTensor normalize(const TraceTensor& trace, Normalization mode);

}  // namespace mass
