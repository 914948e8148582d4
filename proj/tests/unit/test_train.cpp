#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "mass/gan/checkpoint.hpp"
#include "mass/trace/synth.hpp"
#include "mass/train/evaluate.hpp"
#include "mass/train/trainer.hpp"
#include "oracles.hpp"

using namespace mass;
using namespace mass::train;
using doctest::Approx;
using nlohmann::json;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.gan.hidden_size = 4;
  cfg.gan.num_layers = 1;
  cfg.gan.seq_len = 5;
  cfg.gan.batch_users = 8;
  cfg.max_epochs = 60;
  cfg.validation_period = 5;
  cfg.delta_window = 2;
  cfg.patience = 3;
  cfg.learning_rate = 5e-3;
  cfg.seed = 11;
  return cfg;
}

TraceTensor tiny_data(std::uint64_t seed = 3) {
  return normalize(synth_dataset(seed, 12, 5, 0.5, {3.0, 1.5, 2.0}), Normalization::minmax);
}

std::vector<json> parse_log(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("adam first step moves each parameter by about lr against its gradient") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<double> p{1.0, -2.0, 0.5};
  std::vector<double> g{3.0, -0.5, 0.0};
  Adam opt(3);
  opt.step(p, g, cfg);
  CHECK(p[0] == Approx(0.99));
  CHECK(p[1] == Approx(-1.99));
  CHECK(p[2] == 0.5);
  CHECK(opt.steps() == 1);
}

TEST_CASE("update_deltas indicator") {
  CHECK(update_deltas(0.5, 0.2, false) == gan::Deltas{1, 0});
  CHECK(update_deltas(0.1, 0.4, true) == gan::Deltas{0, 1});
  CHECK(update_deltas(0.3, 0.3, true) == gan::Deltas{1, 0});
  CHECK(update_deltas(0.3, 0.3, false) == gan::Deltas{0, 1});

  std::mt19937_64 rng(1);
  std::bernoulli_distribution coin(0.5);
  int corr_kept = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) corr_kept += update_deltas(0.3, 0.3, coin(rng)).corr;
  CHECK(std::abs(corr_kept / double(n) - 0.5) < 0.05);
}

TEST_CASE("sample_batch draws whole user windows") {
  std::mt19937_64 rng(2);
  auto data = oracle::random_tensor(rng, 6, 9);
  auto b = sample_batch(data, 4, 5, rng);
  CHECK(b.users() == 4);
  CHECK(b.steps() == 5);
  // every sampled row is a contiguous window of some user
  for (std::size_t u = 0; u < 4; ++u) {
    bool found = false;
    for (std::size_t src = 0; src < 6 && !found; ++src)
      for (std::size_t off = 0; off + 5 <= 9 && !found; ++off) {
        bool same = true;
        for (std::size_t k = 0; k < 5; ++k)
          for (std::size_t f = 0; f < 2; ++f)
            same &= b.at(u, k, Feature(f)) == data.at(src, off + k, Feature(f));
        found = same;
      }
    CHECK(found);
  }
  // fewer users than requested: with replacement
  CHECK(sample_batch(data, 20, 9, rng).users() == 20);
  CHECK_THROWS_AS(sample_batch(data, 2, 10, rng), Error);
}

TEST_CASE("benchmark_validation worst is the max and zero for matching stats") {
  auto cfg = tiny_config();
  auto data = tiny_data();
  auto model = gan::GanModel::initialize(cfg.gan, 1);
  model.stats = gan::compute_target_stats(data);
  auto v = benchmark_validation(model, data, gan::StatsMode::raw, 77);
  CHECK(v.worst == std::max(v.corr, v.mom));
  CHECK(v.uni_mom > 0.0);

  std::mt19937_64 rng(77);
  auto gen = gan::generator_forward(model, gan::LatentBatch::draw(8, 5, rng));
  model.stats = gan::compute_target_stats(gen);
  v = benchmark_validation(model, data, gan::StatsMode::raw, 77);
  CHECK(v.corr == Approx(0.0).epsilon(1e-12));
  CHECK(v.mom == Approx(0.0).epsilon(1e-12));
  CHECK(v.worst == Approx(0.0).epsilon(1e-12));
}

TEST_CASE("train_epoch is deterministic and rejects non-finite parameters") {
  auto cfg = tiny_config();
  auto data = tiny_data();
  auto m1 = gan::GanModel::initialize(cfg.gan, 5);
  m1.stats = gan::compute_target_stats(data);
  auto m2 = m1;
  TrainState s1(m1, 9), s2(m2, 9);
  for (int e = 0; e < 5; ++e) {
    auto r1 = train_epoch(s1, m1, data, cfg);
    auto r2 = train_epoch(s2, m2, data, cfg);
    CHECK(r1.ok);
    CHECK(r1.loss_total == r2.loss_total);
  }
  CHECK(m1 == m2);
  CHECK(s1.g_opt == s2.g_opt);

  auto bad = m1;
  bad.generator[3] = std::nan("");
  auto before = bad.discriminator;
  TrainState s3(bad, 1);
  auto r = train_epoch(s3, bad, data, cfg);
  CHECK_FALSE(r.ok);
  CHECK(bad.discriminator == before);
  CHECK(std::isnan(bad.generator[3]));
  CHECK(s3.d_opt.steps() == 0);
}

TEST_CASE("conditional gradient descent bookkeeping") {
  auto cfg = tiny_config();
  auto data = tiny_data();
  std::ostringstream log;
  auto res = conditional_gradient_descent(cfg, data, ContextLabel::global, {&log});
  CHECK(res.candidate_found);
  auto records = parse_log(log.str());

  double prev = kWorstInit;
  json last_accepted;
  int forced_remaining = 0;
  std::size_t epochs = 0;
  for (const auto& r : records) {
    if (r["event"] == "epoch") {
      ++epochs;
      const int dc = r["delta_corr"], dm = r["delta_mom"];
      CHECK(dc + dm >= 1);
      if (forced_remaining > 0) {
        CHECK(dc + dm == 1);
        --forced_remaining;
      } else {
        CHECK(dc + dm == 2);
      }
    } else if (r["event"] == "validate" && r["accepted"]) {
      const double w = r["L_worst"];
      CHECK(w < prev);
      prev = w;
      last_accepted = r;
      forced_remaining = static_cast<int>(cfg.delta_window);
    }
  }
  CHECK(epochs == res.epochs_run);
  REQUIRE(!last_accepted.is_null());
  CHECK(res.accepted_worst.back() == prev);

  // The returned model is the last accepted candidate.
  auto v = benchmark_validation(res.model, data, cfg.stats_mode, last_accepted["seed"]);
  CHECK(v.worst == last_accepted["L_worst"].get<double>());
}

TEST_CASE("first validation creates a candidate") {
  auto cfg = tiny_config();
  cfg.max_epochs = 1;
  auto res = conditional_gradient_descent(cfg, tiny_data(), ContextLabel::global);
  CHECK(res.candidate_found);
  CHECK(res.accepted_worst.size() == 1);
}

TEST_CASE("patience stops a stalled run") {
  auto cfg = tiny_config();
  cfg.max_epochs = 5000;
  cfg.learning_rate = 1e-12;
  cfg.patience = 2;
  std::ostringstream log;
  auto res = conditional_gradient_descent(cfg, tiny_data(), ContextLabel::global, {&log});
  CHECK(res.stopped_early);
  CHECK(res.epochs_run < cfg.max_epochs);
  CHECK(res.epochs_run % cfg.validation_period == 0);
  // the last two periodic validations failed
  std::vector<bool> periodic;
  for (const auto& r : parse_log(log.str()))
    if (r["event"] == "validate" && r["trigger"] == "periodic") periodic.push_back(r["accepted"]);
  REQUIRE(periodic.size() >= 2);
  CHECK_FALSE(periodic[periodic.size() - 1]);
  CHECK_FALSE(periodic[periodic.size() - 2]);
}

TEST_CASE("training is reproducible bit for bit") {
  auto cfg = tiny_config();
  auto data = tiny_data();
  auto a = conditional_gradient_descent(cfg, data, ContextLabel::global);
  auto b = conditional_gradient_descent(cfg, data, ContextLabel::global);
  CHECK(gan::serialize_checkpoint(a.model) == gan::serialize_checkpoint(b.model));
  cfg.seed += 1;
  auto c = conditional_gradient_descent(cfg, data, ContextLabel::global);
  CHECK(gan::serialize_checkpoint(a.model) != gan::serialize_checkpoint(c.model));
}

TEST_CASE("discriminator loss stays bounded over 200 epochs") {
  TrainConfig cfg;
  cfg.gan.hidden_size = 16;
  cfg.gan.batch_users = 32;
  cfg.seed = 4;
  auto data = normalize(synth_dataset(8, 64, 12, 0.5, {3.0, 1.5, 2.0}), Normalization::minmax);
  auto model = gan::GanModel::initialize(cfg.gan, 4);
  model.stats = gan::compute_target_stats(data);
  TrainState st(model, 4);
  for (int e = 0; e < 200; ++e) {
    auto r = train_epoch(st, model, data, cfg);
    REQUIRE(r.ok);
    CHECK(std::isfinite(r.loss_d));
    CHECK(r.loss_d < 2 * std::log(2.0) + 1);
  }
}

TEST_CASE("fine_tune") {
  auto cfg = tiny_config();
  auto global = conditional_gradient_descent(cfg, tiny_data(), ContextLabel::global).model;

  ContextSplit split;
  split.label = ContextLabel::stream;
  split.trace = synth_dataset(21, 5, 5, 0.2, {3.0, 1.0, 1.0});
  split.qualifying_users = 5;
  split.significant = true;

  auto same = fine_tune(global, split, 0, cfg);
  CHECK(same.model.generator == global.generator);
  CHECK(same.model.discriminator == global.discriminator);
  CHECK(same.model.context == ContextLabel::stream);

  auto tuned = fine_tune(global, split, 10, cfg);
  CHECK(tuned.model.context == ContextLabel::stream);
  CHECK(tuned.model.stats ==
        gan::compute_target_stats(normalize(split.trace, Normalization::minmax)));
  CHECK(tuned.model.generator != global.generator);

  split.significant = false;
  CHECK_THROWS_AS(fine_tune(global, split, 10, cfg), Error);
}

TEST_CASE("evaluation report layout") {
  auto cfg = tiny_config();
  auto data = tiny_data();
  auto test = tiny_data(4);
  auto model = conditional_gradient_descent(cfg, data, ContextLabel::global).model;
  auto rows = evaluate(model, data, test, 1);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].name == "Uni");
  CHECK(rows[1].name == "Dist");
  CHECK(rows[2].name == "MASS");
  CHECK(evaluate(model, data, test, 1)[2].train.corr_distance == rows[2].train.corr_distance);
  auto lines = format_lines(rows);
  CHECK(std::count(lines.begin(), lines.end(), '\n') == 18);
  auto table = format_table(rows);
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);

  auto same = score(data, data);
  CHECK(same.corr_distance == 0.0);
  CHECK(same.moments_distance == 0.0);
}
