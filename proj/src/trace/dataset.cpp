#include "mass/trace/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace mass {

TrainTestSplit split_train_test(const Dataset& data, std::uint64_t seed,
                                std::size_t min_hours) {
  std::vector<const UserSeries*> eligible;
  for (const auto& u : data)
    if (u.steps.size() >= min_hours) eligible.push_back(&u);
  if (eligible.size() < 2)
    throw Error("train/test split needs at least 2 users with " +
                std::to_string(min_hours) + "h, got " + std::to_string(eligible.size()));

  std::sort(eligible.begin(), eligible.end(),
            [](auto* a, auto* b) { return a->user_id < b->user_id; });
  std::mt19937_64 rng(seed);
  for (std::size_t i = eligible.size() - 1; i > 0; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i);
    std::swap(eligible[i], eligible[pick(rng)]);
  }

  TrainTestSplit split;
  const std::size_t n_train = (eligible.size() + 1) / 2;
  for (std::size_t i = 0; i < eligible.size(); ++i)
    (i < n_train ? split.train : split.test).push_back(*eligible[i]);
  return split;
}

TraceTensor to_trace(const Dataset& data, std::size_t steps) {
  std::vector<const UserSeries*> keep;
  for (const auto& u : data)
    if (u.steps.size() >= steps) keep.push_back(&u);
  TraceTensor trace(keep.size(), steps);
  for (std::size_t u = 0; u < keep.size(); ++u) {
    for (std::size_t k = 0; k < steps; ++k) {
      trace.at(u, k, Feature::download) = keep[u]->steps[k].dl;
      trace.at(u, k, Feature::upload) = keep[u]->steps[k].ul;
    }
  }
  return trace;
}

Dataset dataset_from_trace(const TraceTensor& trace) {
  Dataset data;
  for (std::size_t u = 0; u < trace.users(); ++u) {
    UserSeries series{"u" + std::to_string(u), {}};
    for (std::size_t k = 0; k < trace.steps(); ++k) {
      HourlyStep s;
      s.bucket = static_cast<std::int64_t>(k);
      s.dl = trace.at(u, k, Feature::download);
      s.ul = trace.at(u, k, Feature::upload);
      series.steps.push_back(s);
    }
    data.push_back(std::move(series));
  }
  return data;
}

namespace {

double relative_delta(double context_mean, double global_mean) {
  if (global_mean == 0.0)
    return context_mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return (context_mean - global_mean) / global_mean;
}

}  // namespace

std::vector<ContextSplit> context_split(const Dataset& data,
                                        const SplitThresholds& thresholds) {
  double g_dl = 0.0, g_ul = 0.0;
  std::size_t g_n = 0;
  for (const auto& u : data)
    for (const auto& s : u.steps) {
      g_dl += s.dl;
      g_ul += s.ul;
      ++g_n;
    }
  if (g_n > 0) {
    g_dl /= static_cast<double>(g_n);
    g_ul /= static_cast<double>(g_n);
  }

  std::vector<ContextSplit> splits;
  for (ContextLabel label : kContextLabels) {
    ContextSplit split;
    split.label = label;
    double c_dl = 0.0, c_ul = 0.0;
    std::size_t c_n = 0;
    std::vector<std::vector<const HourlyStep*>> qualifying;
    for (const auto& u : data) {
      std::vector<const HourlyStep*> hits;
      for (const auto& s : u.steps) {
        if (!matches(label, s.signal, s.app)) continue;
        hits.push_back(&s);
        c_dl += s.dl;
        c_ul += s.ul;
        ++c_n;
      }
      if (hits.size() >= thresholds.seq_len) qualifying.push_back(std::move(hits));
    }
    if (c_n > 0) {
      split.mean_delta_dl = relative_delta(c_dl / static_cast<double>(c_n), g_dl);
      split.mean_delta_ul = relative_delta(c_ul / static_cast<double>(c_n), g_ul);
    }
    split.qualifying_users = qualifying.size();
    split.significant = split.qualifying_users >= thresholds.min_users &&
                       (std::abs(split.mean_delta_dl) > thresholds.min_relative_delta ||
                        std::abs(split.mean_delta_ul) > thresholds.min_relative_delta);

    split.trace = TraceTensor(qualifying.size(), thresholds.seq_len);
    for (std::size_t u = 0; u < qualifying.size(); ++u)
      for (std::size_t k = 0; k < thresholds.seq_len; ++k) {
        split.trace.at(u, k, Feature::download) = qualifying[u][k]->dl;
        split.trace.at(u, k, Feature::upload) = qualifying[u][k]->ul;
      }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<ContextLabel> usable_contexts(const std::vector<ContextSplit>& splits) {
  std::vector<ContextLabel> out{ContextLabel::global};
  for (const auto& s : splits)
    if (s.significant) out.push_back(s.label);
  return out;
}

TraceTensor normalize(const TraceTensor& trace, Normalization mode) {
  TraceTensor out = trace;
  out.set_normalization(mode);
  switch (mode) {
    case Normalization::pos:
      for (double& v : out.values()) v = std::max(v, 0.0);
      return out;
    case Normalization::minmax:
      for (std::size_t u = 0; u < trace.users(); ++u) {
        for (Feature f : {Feature::download, Feature::upload}) {
          double lo = std::numeric_limits<double>::infinity();
          double hi = -lo;
          for (std::size_t k = 0; k < trace.steps(); ++k) {
            lo = std::min(lo, trace.at(u, k, f));
            hi = std::max(hi, trace.at(u, k, f));
          }
          const double range = hi - lo;
          for (std::size_t k = 0; k < trace.steps(); ++k)
            out.at(u, k, f) = range > 0.0 ? (trace.at(u, k, f) - lo) / range : 0.0;
        }
      }
      return out;
    default:
      throw Error("normalize: target mode must be pos or minmax");
  }
}

}  // namespace mass
