#include "mass/gan/model.hpp"

#include <cmath>

#include "mass/gan/network.hpp"

namespace mass::gan {

void GanConfig::validate() const {
  if (hidden_size == 0 || num_layers == 0) throw Error("GanConfig: empty network");
  if (seq_len < 2) throw Error("GanConfig: seq_len must be >= 2");
  if (batch_users < 2) throw Error("GanConfig: batch_users must be >= 2");
}

metrics::MomentTriple mean_user_moments(const TraceTensor& trace, Feature f) {
  if (trace.users() == 0) throw Error("mean_user_moments: empty trace");
  metrics::MomentTriple sum;
  for (std::size_t u = 0; u < trace.users(); ++u) {
    const auto m = metrics::moments(trace.series(u, f));
    sum.mu += m.mu;
    sum.sigma += m.sigma;
    sum.skew += m.skew;
  }
  const double n = static_cast<double>(trace.users());
  return {sum.mu / n, sum.sigma / n, sum.skew / n};
}

TargetStats compute_target_stats(const TraceTensor& data) {
  TargetStats stats;
  stats.c_target = metrics::corr_vector(data).front();
  stats.moments[0] = mean_user_moments(data, Feature::download);
  stats.moments[1] = mean_user_moments(data, Feature::upload);
  return stats;
}

GanModel GanModel::initialize(const GanConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  GanModel model;
  model.config = cfg;
  std::mt19937_64 rng(seed);
  model.generator.resize(generator_param_count(cfg));
  model.discriminator.resize(discriminator_param_count(cfg));
  init_generator(cfg, model.generator, rng);
  init_discriminator(cfg, model.discriminator, rng);
  return model;
}

void GanModel::validate() const {
  config.validate();
  if (generator.size() != generator_param_count(config))
    throw Error("GanModel: generator has " + std::to_string(generator.size()) +
                " parameters, architecture needs " +
                std::to_string(generator_param_count(config)));
  if (discriminator.size() != discriminator_param_count(config))
    throw Error("GanModel: discriminator has " + std::to_string(discriminator.size()) +
                " parameters, architecture needs " +
                std::to_string(discriminator_param_count(config)));
  for (double p : generator)
    if (!std::isfinite(p)) throw Error("GanModel: non-finite generator parameter");
  for (double p : discriminator)
    if (!std::isfinite(p)) throw Error("GanModel: non-finite discriminator parameter");
}

LatentBatch LatentBatch::draw(std::size_t users, std::size_t steps, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LatentBatch z{users, steps, std::vector<double>(users * steps * GanConfig::latent_dim)};
  for (double& v : z.values) v = unit(rng);
  return z;
}

LatentBatch LatentBatch::draw(std::size_t users, std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return draw(users, steps, rng);
}

}  // namespace mass::gan
