#include "mass/train/evaluate.hpp"

#include <cstdio>
#include <random>

#include "mass/baselines/baselines.hpp"
#include "mass/gan/losses.hpp"
#include "mass/metrics/metrics.hpp"

namespace mass::train {

PreparedData prepare_data(const Dataset& data, std::uint64_t split_seed, std::size_t seq_len) {
  auto split = split_train_test(data, split_seed, seq_len);
  return {normalize(to_trace(split.train, seq_len), Normalization::minmax),
          normalize(to_trace(split.test, seq_len), Normalization::minmax)};
}

MetricRow score(const TraceTensor& reference, const TraceTensor& generated) {
  return {metrics::corr_distance(metrics::corr_vector(reference), metrics::corr_vector(generated)),
          metrics::moments_distance(reference, generated), metrics::novelty(generated)};
}

std::vector<BenchmarkRow> evaluate(const gan::GanModel& model, const TraceTensor& train,
                                   const TraceTensor& test, std::uint64_t seed,
                                   std::size_t novelty_steps) {
  std::mt19937_64 rng(seed);
  // Fills a row from a generator of (users, steps) batches.
  auto bench = [&](const std::string& name, auto&& gen) {
    BenchmarkRow row{name, {}, {}};
    for (int s = 0; s < 2; ++s) {
      const TraceTensor& ref = s == 0 ? train : test;
      MetricRow m = score(ref, gen(ref.users(), ref.steps()));
      if (novelty_steps > 0) m.novelty = metrics::novelty(gen(ref.users(), novelty_steps));
      (s == 0 ? row.train : row.test) = m;
    }
    return row;
  };
  std::vector<BenchmarkRow> rows;
  for (auto kind : {baselines::BaselineKind::uni, baselines::BaselineKind::dist}) {
    const auto fit = baselines::fit_baseline(kind, train);
    rows.push_back(bench(kind == baselines::BaselineKind::uni ? "Uni" : "Dist",
                         [&](std::size_t u, std::size_t k) {
                           return baselines::baseline_generate(fit, u, k, rng());
                         }));
  }
  rows.push_back(bench("MASS", [&](std::size_t u, std::size_t k) {
    return gan::generator_forward(model, gan::LatentBatch::draw(u, k, rng));
  }));
  return rows;
}

std::string format_table(const std::vector<BenchmarkRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-6s %10s %10s %10s\n", "Benchmark", "Data", "CorrDist",
                "MomDist", "Novelty");
  out += buf;
  for (const auto& r : rows)
    for (int s = 0; s < 2; ++s) {
      const MetricRow& m = s == 0 ? r.train : r.test;
      std::snprintf(buf, sizeof buf, "%-10s %-6s %10.4f %10.4f %10.4f\n",
                    s == 0 ? r.name.c_str() : "", s == 0 ? "train" : "test", m.corr_distance,
                    m.moments_distance, m.novelty);
      out += buf;
    }
  return out;
}

std::string format_lines(const std::vector<BenchmarkRow>& rows) {
  std::string out;
  char buf[160];
  for (const auto& r : rows)
    for (int s = 0; s < 2; ++s) {
      const MetricRow& m = s == 0 ? r.train : r.test;
      const char* split = s == 0 ? "train" : "test";
      for (auto [name, v] : {std::pair{"corr_distance", m.corr_distance},
                             std::pair{"moments_distance", m.moments_distance},
                             std::pair{"novelty", m.novelty}}) {
        std::snprintf(buf, sizeof buf, "%s %s %s %.17g\n", r.name.c_str(), split, name, v);
        out += buf;
      }
    }
  return out;
}

}  // namespace mass::train
