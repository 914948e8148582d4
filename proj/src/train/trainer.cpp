#include "mass/train/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "mass/baselines/baselines.hpp"
#include "mass/error.hpp"

namespace mass::train {

using gan::Deltas;
using gan::GanModel;
using gan::LatentBatch;
using nlohmann::json;

void TrainConfig::validate() const {
  gan.validate();
  if (validation_period == 0 || patience == 0)
    throw Error("train config: validation period and patience must be positive");
  if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(adam_epsilon > 0.0))
    throw Error("train config: invalid optimizer settings");
}

void Adam::step(std::span<double> params, std::span<const double> grad, const TrainConfig& cfg) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg.beta1 * m_[i] + (1 - cfg.beta1) * grad[i];
    v_[i] = cfg.beta2 * v_[i] + (1 - cfg.beta2) * grad[i] * grad[i];
    params[i] -= cfg.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg.adam_epsilon);
  }
}

TrainState::TrainState(const GanModel& model, std::uint64_t seed)
    : rng(seed), g_opt(model.generator.size()), d_opt(model.discriminator.size()) {}

TraceTensor sample_batch(const TraceTensor& data, std::size_t users, std::size_t steps,
                         std::mt19937_64& rng) {
  if (data.users() == 0 || data.steps() < steps)
    throw Error("sample_batch: data has too few users or steps");
  std::vector<std::size_t> idx(data.users());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::size_t> pick(users);
  if (data.users() >= users) {
    // partial Fisher-Yates
    for (std::size_t i = 0; i < users; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
      std::swap(idx[i], idx[d(rng)]);
      pick[i] = idx[i];
    }
  } else {
    std::uniform_int_distribution<std::size_t> d(0, data.users() - 1);
    for (auto& p : pick) p = d(rng);
  }
  TraceTensor out(users, steps, data.normalization());
  std::uniform_int_distribution<std::size_t> offset(0, data.steps() - steps);
  for (std::size_t u = 0; u < users; ++u) {
    const std::size_t off = data.steps() == steps ? 0 : offset(rng);
    for (std::size_t k = 0; k < steps; ++k)
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        out.at(u, k, static_cast<Feature>(f)) = data.at(pick[u], off + k, static_cast<Feature>(f));
  }
  return out;
}

EpochResult train_epoch(TrainState& state, GanModel& model, const TraceTensor& train_data,
                        const TrainConfig& cfg) {
  const auto& g = model.config;
  const TraceTensor real = sample_batch(train_data, g.batch_users, g.seq_len, state.rng);
  const LatentBatch z = LatentBatch::draw(g.batch_users, g.seq_len, state.rng);

  const GanModel saved_model = model;
  const Adam saved_g = state.g_opt, saved_d = state.d_opt;
  EpochResult r;
  try {
    const TraceTensor fake = gan::generator_forward(model, z);
    auto dg = gan::discriminator_gradient(model, real, fake);
    state.d_opt.step(model.discriminator, dg.grad, cfg);
    r.loss_d = dg.loss;

    auto gg = gan::generator_gradient(model, z, gan::LossSelector::total, state.deltas,
                                      cfg.stats_mode);
    state.g_opt.step(model.generator, gg.grad, cfg);
    r.terms = gg.terms;
    r.loss_total = gg.loss;
    for (double p : model.generator)
      if (!std::isfinite(p)) throw Error("generator parameters became non-finite");
    for (double p : model.discriminator)
      if (!std::isfinite(p)) throw Error("discriminator parameters became non-finite");
  } catch (const Error&) {
    model = saved_model;
    state.g_opt = saved_g;
    state.d_opt = saved_d;
    r.ok = false;
  }
  ++state.epoch;
  return r;
}

Validation benchmark_validation(const GanModel& model, const TraceTensor& train_data,
                                gan::StatsMode mode, std::uint64_t seed) {
  const auto& g = model.config;
  std::mt19937_64 rng(seed);
  const LatentBatch z = LatentBatch::draw(g.batch_users, g.seq_len, rng);
  const TraceTensor gen = gan::generator_forward(model, z);
  Validation v;
  v.corr = gan::loss_corr_dist(model, gen, mode);
  v.mom = gan::loss_mom_dist(model, gen, mode);
  v.worst = std::max(v.corr, v.mom);

  const auto uni = baselines::fit_baseline(baselines::BaselineKind::uni, train_data);
  const TraceTensor ub = baselines::baseline_generate(uni, g.batch_users, g.seq_len, rng());
  v.uni_corr = gan::loss_corr_dist(model, ub, mode);
  v.uni_mom = gan::loss_mom_dist(model, ub, mode);
  return v;
}

Deltas update_deltas(double l_corr, double l_mom, bool coin) {
  if (l_corr > l_mom) return {1, 0};
  if (l_mom > l_corr) return {0, 1};
  return coin ? Deltas{1, 0} : Deltas{0, 1};
}

namespace {

void log_line(TrainLog log, const json& j) {
  if (log.out) *log.out << j.dump() << '\n';
}

TrainResult run(const TrainConfig& cfg, const TraceTensor& data, GanModel model, TrainLog log) {
  cfg.validate();
  model.config = cfg.gan;
  model.validate();
  if (data.steps() < cfg.gan.seq_len)
    throw Error("training data has fewer steps than seq_len");
  model.stats = gan::compute_target_stats(data);

  TrainState st(model, cfg.seed);
  TrainResult res;
  std::bernoulli_distribution coin(0.5);

  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    const Deltas used = st.deltas;
    const EpochResult r = train_epoch(st, model, data, cfg);
    if (!r.ok) {
      ++res.skipped_epochs;
      log_line(log, {{"event", "skip"}, {"epoch", st.epoch}});
      continue;
    }
    log_line(log, {{"event", "epoch"},
                   {"epoch", st.epoch},
                   {"L_D", r.loss_d},
                   {"L_disc", r.terms.disc},
                   {"L_corr", r.terms.corr},
                   {"L_mom", r.terms.mom},
                   {"L_total", r.loss_total},
                   {"delta_corr", used.corr},
                   {"delta_mom", used.mom}});

    if (st.delta_window_remaining > 0 && --st.delta_window_remaining == 0) st.deltas = {1, 1};

    const bool periodic = st.epoch % cfg.validation_period == 0;
    const bool new_min = !st.have_best_total || r.loss_total < st.best_total;
    if (new_min) {
      st.best_total = r.loss_total;
      st.have_best_total = true;
    }
    if (!periodic && !new_min) continue;

    const std::uint64_t vseed = st.rng();
    const Validation v = benchmark_validation(model, data, cfg.stats_mode, vseed);
    const bool improved = v.worst < st.worst_prev;
    log_line(log, {{"event", "validate"},
                   {"epoch", st.epoch},
                   {"trigger", periodic ? "periodic" : "minimum"},
                   {"seed", vseed},
                   {"L_corr", v.corr},
                   {"L_mom", v.mom},
                   {"L_worst", v.worst},
                   {"uni_L_corr", v.uni_corr},
                   {"uni_L_mom", v.uni_mom},
                   {"accepted", improved}});
    if (improved) {
      st.candidate = model;
      st.worst_prev = v.worst;
      st.failed_validations = 0;
      res.accepted_worst.push_back(v.worst);
      st.deltas = update_deltas(v.corr, v.mom, coin(st.rng));
      st.delta_window_remaining = cfg.delta_window;
    } else if (periodic && ++st.failed_validations >= cfg.patience) {
      res.stopped_early = true;
      break;
    }
  }

  res.epochs_run = st.epoch;
  res.candidate_found = st.candidate.has_value();
  res.model = res.candidate_found ? *st.candidate : model;
  log_line(log, {{"event", "done"},
                 {"epochs", res.epochs_run},
                 {"candidate", res.candidate_found},
                 {"stopped_early", res.stopped_early},
                 {"L_worst", st.worst_prev}});
  return res;
}

}  // namespace

TrainResult conditional_gradient_descent(const TrainConfig& cfg, const TraceTensor& train_data,
                                         ContextLabel context, TrainLog log) {
  GanModel model = GanModel::initialize(cfg.gan, cfg.seed);
  model.context = context;
  return run(cfg, train_data, std::move(model), log);
}

TrainResult conditional_gradient_descent(const TrainConfig& cfg, const TraceTensor& train_data,
                                         GanModel start, TrainLog log) {
  return run(cfg, train_data, std::move(start), log);
}

TrainResult fine_tune(const GanModel& global, const ContextSplit& split, std::size_t epochs,
                      TrainConfig cfg, TrainLog log) {
  if (!split.significant)
    throw Error("fine_tune: context " + std::string(to_string(split.label)) +
                " is not significant; use the global model");
  TraceTensor data = split.trace.normalization() == Normalization::minmax
                         ? split.trace
                         : normalize(split.trace, Normalization::minmax);
  cfg.gan = global.config;
  cfg.max_epochs = epochs;
  GanModel start = global;
  start.context = split.label;
  if (epochs == 0) {
    start.stats = gan::compute_target_stats(data);
    TrainResult r;
    r.model = start;
    return r;
  }
  TrainResult r = conditional_gradient_descent(cfg, data, start, log);
  r.model.context = split.label;
  return r;
}

}  // namespace mass::train
