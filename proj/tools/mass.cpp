// mass: command-line entry point for the trace pipeline.

#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include "CLI11.hpp"
#include "mass/error.hpp"
#include "mass/gan/checkpoint.hpp"
#include "mass/replay/perf.hpp"
#include "mass/replay/replay.hpp"
#include "mass/serve/genserver.hpp"
#include "mass/trace/dataset.hpp"
#include "mass/trace/ingest.hpp"
#include "mass/trace/synth.hpp"
#include "mass/trace/trace_io.hpp"
#include "mass/train/evaluate.hpp"
#include "mass/train/trainer.hpp"

namespace fs = std::filesystem;
using namespace mass;

namespace {

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return read_hourly_csv(in);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

// Blocks SIGINT/SIGTERM in this and every later thread so sigwait can
// pick them up in the main thread.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_stop(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

ContextLabel context_option(const std::string& name) {
  auto c = parse_context(name);
  if (!c) throw CLI::ValidationError("--context", "unknown context '" + name + "'");
  return *c;
}

struct TrainFlags {
  std::size_t hidden = 64, layers = 2, seq_len = 12, batch_users = 100;
  std::size_t epochs = 2000, period = 50, window = 25, patience = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0, split_seed = 0;
  std::string stats = "raw";

  void add(CLI::App* app, bool architecture) {
    if (architecture) {
      app->add_option("--hidden", hidden, "LSTM hidden units")->capture_default_str();
      app->add_option("--layers", layers, "stacked LSTM layers")->capture_default_str();
      app->add_option("--seq-len", seq_len, "training window in steps")->capture_default_str();
      app->add_option("--batch-users", batch_users, "users per batch")->capture_default_str();
    }
    app->add_option("--epochs", epochs, "maximum epochs")->capture_default_str();
    app->add_option("--validation-period", period)->capture_default_str();
    app->add_option("--delta-window", window)->capture_default_str();
    app->add_option("--patience", patience)->capture_default_str();
    app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app->add_option("--seed", seed, "training seed")->capture_default_str();
    app->add_option("--split-seed", split_seed, "train/test split seed")->capture_default_str();
    app->add_option("--stats", stats, "statistics on raw outputs or D logits")
        ->check(CLI::IsMember({"raw", "representation"}))
        ->capture_default_str();
  }

  train::TrainConfig config() const {
    train::TrainConfig c;
    c.gan.hidden_size = hidden;
    c.gan.num_layers = layers;
    c.gan.seq_len = seq_len;
    c.gan.batch_users = batch_users;
    c.max_epochs = epochs;
    c.validation_period = period;
    c.delta_window = window;
    c.patience = patience;
    c.learning_rate = lr;
    c.seed = seed;
    c.stats_mode = stats == "raw" ? gan::StatsMode::raw : gan::StatsMode::representation;
    c.validate();
    return c;
  }
};

void report_training(const train::TrainResult& r) {
  std::cerr << "epochs run: " << r.epochs_run << (r.stopped_early ? " (early stop)" : "")
            << ", skipped: " << r.skipped_epochs << ", accepted validations: "
            << r.accepted_worst.size();
  if (!r.accepted_worst.empty()) std::cerr << ", L_worst " << r.accepted_worst.back();
  std::cerr << (r.candidate_found ? "" : ", no candidate: final parameters kept") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context-aware mobile traffic trace generation and replay"};
  app.require_subcommand(1);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "aggregate raw samples into hourly series");
  std::string ingest_in, ingest_out;
  AggregationConfig agg;
  bool show_contexts = false;
  std::size_t ctx_seq_len = 12;
  ingest_cmd->add_option("input", ingest_in, "sample CSV")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("-o,--output", ingest_out, "hourly CSV")->required();
  ingest_cmd->add_option("--samples-per-bucket", agg.samples_per_bucket)->capture_default_str();
  ingest_cmd->add_option("--sample-period", agg.sample_period_s, "seconds")->capture_default_str();
  ingest_cmd->add_option("--rssi-threshold", agg.rssi_threshold, "dBm")->capture_default_str();
  ingest_cmd->add_flag("--contexts", show_contexts, "print the context significance table");
  ingest_cmd->add_option("--seq-len", ctx_seq_len, "steps a context user needs")
      ->capture_default_str();

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic dataset");
  std::string synth_out, synth_format = "csv";
  std::uint64_t synth_seed = 1;
  std::size_t synth_users = 100, synth_steps = 12;
  double synth_corr = 0.5;
  metrics::MomentTriple synth_moments{3.0, 1.5, 2.0};
  SynthOptions synth_opts;
  synth_cmd->add_option("-o,--output", synth_out)->required();
  synth_cmd->add_option("--format", synth_format, "csv (hourly) or text (trace)")
      ->check(CLI::IsMember({"csv", "text"}))
      ->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
  synth_cmd->add_option("--users", synth_users)->capture_default_str();
  synth_cmd->add_option("--steps", synth_steps)->capture_default_str();
  synth_cmd->add_option("--corr", synth_corr, "dl/ul Pearson target")->capture_default_str();
  synth_cmd->add_option("--mean", synth_moments.mu)->capture_default_str();
  synth_cmd->add_option("--std", synth_moments.sigma)->capture_default_str();
  synth_cmd->add_option("--skew", synth_moments.skew)->capture_default_str();
  synth_cmd->add_option("--temporal-corr", synth_opts.temporal_corr)->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train the global generator");
  std::string train_data, train_out, train_log;
  TrainFlags train_flags;
  train_cmd->add_option("data", train_data, "hourly CSV")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("-o,--output", train_out, "checkpoint path")->required();
  train_cmd->add_option("--log", train_log, "JSON-lines training log");
  train_flags.add(train_cmd, true);

  // finetune
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune per-context generators");
  std::string ft_data, ft_global, ft_dir, ft_log;
  std::vector<std::string> ft_contexts;
  TrainFlags ft_flags;
  ft_flags.epochs = 500;
  ft_cmd->add_option("data", ft_data, "hourly CSV")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--global", ft_global, "GLOBAL checkpoint")->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("-o,--out-dir", ft_dir, "model directory")->required();
  ft_cmd->add_option("--context", ft_contexts, "only these contexts (default: all significant)");
  ft_cmd->add_option("--log", ft_log, "JSON-lines training log");
  ft_flags.add(ft_cmd, false);

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "score Uni, Dist and MASS on train and test");
  std::string eval_data, eval_model, eval_format = "both";
  std::uint64_t eval_seed = 0, eval_split_seed = 0;
  std::size_t eval_novelty_steps = train::kNoveltySteps;
  eval_cmd->add_option("data", eval_data, "hourly CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("-m,--model", eval_model, "checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--seed", eval_seed)->capture_default_str();
  eval_cmd->add_option("--split-seed", eval_split_seed)->capture_default_str();
  eval_cmd->add_option("--novelty-steps", eval_novelty_steps, "0 scores novelty on the batch itself")
      ->capture_default_str();
  eval_cmd->add_option("--format", eval_format)
      ->check(CLI::IsMember({"table", "lines", "both"}))
      ->capture_default_str();

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the generation REST API");
  std::string serve_dir, serve_host = "0.0.0.0";
  int serve_port = replay::kDefaultApiPort;
  serve_cmd->add_option("models", serve_dir, "directory of <CONTEXT>.ckpt files")
      ->required()
      ->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--host", serve_host)->capture_default_str();
  serve_cmd->add_option("--port", serve_port)->capture_default_str();

  // perf-server
  auto* perf_cmd = app.add_subcommand("perf-server", "run the download and upload perf servers");
  std::string perf_host = "0.0.0.0", perf_history;
  int perf_down = 5557, perf_up = 6666;
  double perf_grace = 1.0;
  perf_cmd->add_option("--host", perf_host)->capture_default_str();
  perf_cmd->add_option("--down-port", perf_down)->envname("DOWN_PORT")->capture_default_str();
  perf_cmd->add_option("--up-port", perf_up)->envname("UP_PORT")->capture_default_str();
  perf_cmd->add_option("--grace", perf_grace, "seconds past the requested duration")
      ->capture_default_str();
  perf_cmd->add_option("--history", perf_history, "tab-separated session log");

  // replay
  auto* replay_cmd = app.add_subcommand("replay", "replay generated traces against perf servers");
  std::optional<std::string> r_mass_host, r_perf_host, r_initial;
  std::optional<std::size_t> r_seq_len, r_buffer;
  std::optional<double> r_max_down, r_max_up, r_epoch_time, r_istay, r_sstay, r_udp;
  std::optional<int> r_down_port, r_up_port, r_use_signal, r_continuous;
  std::optional<std::uint64_t> r_seed;
  std::optional<double> r_rssi;
  std::string r_signal_script, r_history;
  std::size_t r_sequences = 0;
  replay_cmd->add_option("--mass-host", r_mass_host, "MASS_HOST, host[:port]");
  replay_cmd->add_option("--perf-host", r_perf_host, "PERF_HOST");
  replay_cmd->add_option("--seq-len", r_seq_len, "SEQ_LEN");
  replay_cmd->add_option("--max-down", r_max_down, "MAX_DOWN, Mbps");
  replay_cmd->add_option("--max-up", r_max_up, "MAX_UP, Mbps");
  replay_cmd->add_option("--buffer", r_buffer, "BUFFER, message bytes");
  replay_cmd->add_option("--down-port", r_down_port, "DOWN_PORT");
  replay_cmd->add_option("--up-port", r_up_port, "UP_PORT");
  replay_cmd->add_option("--epoch-time", r_epoch_time, "EPOCH_TIME, seconds");
  replay_cmd->add_option("--initial-context", r_initial, "INITIAL_CONTEXT")
      ->check(CLI::IsMember({"INTERACT", "STREAM"}));
  replay_cmd->add_option("--interact-stay-prob", r_istay, "INTERACT_STAY_PROB");
  replay_cmd->add_option("--stream-stay-prob", r_sstay, "STREAM_STAY_PROB");
  replay_cmd->add_option("--use-signal", r_use_signal, "USE_SIGNAL, 0 or 1")->check(CLI::Range(0, 1));
  replay_cmd->add_option("--udp-prob", r_udp, "UDP_PROB");
  replay_cmd->add_option("--continuous", r_continuous, "CONTINUOUS, 0 or 1")->check(CLI::Range(0, 1));
  replay_cmd->add_option("--seed", r_seed, "REPLAY_SEED");
  auto* rssi_opt = replay_cmd->add_option("--rssi", r_rssi, "constant RSSI in dBm");
  replay_cmd->add_option("--signal-script", r_signal_script, "RSSI per epoch, one per line")
      ->check(CLI::ExistingFile)
      ->excludes(rssi_opt);
  replay_cmd->add_option("--history", r_history, "tab-separated epoch log (default stdout)");
  replay_cmd->add_option("--sequences", r_sequences, "stop CONTINUOUS replay after N sequences");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      std::ifstream in(ingest_in);
      if (!in) throw Error("cannot open " + ingest_in);
      const Dataset data = ingest(read_samples_csv(in), agg);
      auto out = open_out(ingest_out);
      write_hourly_csv(out, data);
      std::cerr << data.size() << " users written to " << ingest_out << "\n";
      if (show_contexts) {
        SplitThresholds th;
        th.seq_len = ctx_seq_len;
        std::cout << "context\tusers\tdelta_dl\tdelta_ul\tsignificant\n";
        for (const auto& s : context_split(data, th))
          std::cout << to_string(s.label) << '\t' << s.qualifying_users << '\t'
                    << format_number(s.mean_delta_dl) << '\t' << format_number(s.mean_delta_ul)
                    << '\t' << (s.significant ? "yes" : "no") << '\n';
      }
    } else if (*synth_cmd) {
      const TraceTensor t =
          synth_dataset(synth_seed, synth_users, synth_steps, synth_corr, synth_moments, synth_opts);
      if (synth_format == "text") {
        save_trace_file(synth_out, t);
      } else {
        auto out = open_out(synth_out);
        write_hourly_csv(out, dataset_from_trace(t));
      }
    } else if (*train_cmd) {
      const auto cfg = train_flags.config();
      const auto data = train::prepare_data(load_dataset(train_data), train_flags.split_seed,
                                            cfg.gan.seq_len);
      std::ofstream log_file;
      train::TrainLog log;
      if (!train_log.empty()) {
        log_file = open_out(train_log);
        log.out = &log_file;
      }
      std::cerr << "training on " << data.train.users() << " users\n";
      const auto r = train::conditional_gradient_descent(cfg, data.train, ContextLabel::global, log);
      report_training(r);
      gan::save_checkpoint(train_out, r.model);
    } else if (*ft_cmd) {
      const auto global = gan::load_checkpoint(ft_global);
      auto cfg = ft_flags.config();
      const auto split = split_train_test(load_dataset(ft_data), ft_flags.split_seed,
                                          global.config.seq_len);
      SplitThresholds th;
      th.seq_len = global.config.seq_len;
      std::vector<ContextLabel> wanted;
      for (const auto& name : ft_contexts) wanted.push_back(context_option(name));
      fs::create_directories(ft_dir);
      gan::save_checkpoint((fs::path(ft_dir) / "GLOBAL.ckpt").string(), global);
      std::ofstream log_file;
      train::TrainLog log;
      if (!ft_log.empty()) {
        log_file = open_out(ft_log);
        log.out = &log_file;
      }
      for (const auto& s : context_split(split.train, th)) {
        const bool asked = std::find(wanted.begin(), wanted.end(), s.label) != wanted.end();
        if (!wanted.empty() && !asked) continue;
        if (!s.significant) {
          std::cerr << to_string(s.label) << ": not significant ("
                    << s.qualifying_users << " users), GLOBAL will serve it\n";
          if (asked) return 1;
          continue;
        }
        std::cerr << to_string(s.label) << ": fine-tuning on " << s.qualifying_users << " users\n";
        const auto r = train::fine_tune(global, s, ft_flags.epochs, cfg, log);
        report_training(r);
        gan::save_checkpoint(
            (fs::path(ft_dir) / (std::string(to_string(s.label)) + ".ckpt")).string(), r.model);
      }
    } else if (*eval_cmd) {
      const auto model = gan::load_checkpoint(eval_model);
      const auto data =
          train::prepare_data(load_dataset(eval_data), eval_split_seed, model.config.seq_len);
      const auto rows = train::evaluate(model, data.train, data.test, eval_seed, eval_novelty_steps);
      if (eval_format != "lines") std::cout << train::format_table(rows);
      if (eval_format == "both") std::cout << "\n";
      if (eval_format != "table") std::cout << train::format_lines(rows);
    } else if (*serve_cmd) {
      std::vector<std::string> warnings;
      auto registry =
          std::make_shared<const serve::ModelRegistry>(serve::ModelRegistry::load(serve_dir, &warnings));
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      const sigset_t stop = block_stop_signals();
      serve::GenServer server(registry);
      if (!server.bind(serve_host, serve_port))
        throw Error("cannot listen on " + serve_host + ":" + std::to_string(serve_port));
      std::thread t([&] { server.listen_after_bind(); });
      server.wait_until_ready();
      std::cerr << "serving " << registry->contexts().size() << " models on " << serve_host << ":"
                << serve_port << "\n";
      wait_for_stop(stop);
      server.stop();
      t.join();
    } else if (*perf_cmd) {
      std::ofstream history;
      std::mutex history_mu;
      const sigset_t stop = block_stop_signals();
      replay::PerfServer down(perf_host, perf_down, perf_grace), up(perf_host, perf_up, perf_grace);
      if (!perf_history.empty()) {
        history = open_out(perf_history);
        replay::write_history_header(history);
        auto sink = [&](const replay::PerfRecord& r) {
          std::lock_guard lock(history_mu);
          replay::write_history_line(history, r);
        };
        down.on_record(sink);
        up.on_record(sink);
      }
      down.start();
      up.start();
      std::cerr << "perf servers: down " << perf_host << ":" << down.port() << ", up "
                << perf_host << ":" << up.port() << "\n";
      wait_for_stop(stop);
      down.stop();
      up.stop();
    } else if (*replay_cmd) {
      std::vector<std::string> warnings;
      auto cfg = replay::ReplayConfig::from_env(&warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
      if (r_mass_host) {
        const auto colon = r_mass_host->rfind(':');
        cfg.mass_host = r_mass_host->substr(0, colon);
        if (colon != std::string::npos) cfg.mass_port = std::stoi(r_mass_host->substr(colon + 1));
      }
      if (r_perf_host) cfg.perf_host = *r_perf_host;
      if (r_seq_len) cfg.seq_len = *r_seq_len;
      if (r_max_down) cfg.max_down = *r_max_down;
      if (r_max_up) cfg.max_up = *r_max_up;
      if (r_buffer) cfg.buffer = *r_buffer;
      if (r_down_port) cfg.down_port = *r_down_port;
      if (r_up_port) cfg.up_port = *r_up_port;
      if (r_epoch_time) cfg.epoch_time = *r_epoch_time;
      if (r_initial) cfg.initial_context = *r_initial == "STREAM" ? App::stream : App::interact;
      if (r_istay) cfg.interact_stay_prob = *r_istay;
      if (r_sstay) cfg.stream_stay_prob = *r_sstay;
      if (r_use_signal) cfg.use_signal = *r_use_signal == 1;
      if (r_udp) cfg.udp_prob = *r_udp;
      if (r_continuous) cfg.continuous = *r_continuous == 1;
      if (r_seed) cfg.seed = *r_seed;
      cfg.validate();

      std::unique_ptr<replay::SignalSource> signal;
      if (!r_signal_script.empty())
        signal = std::make_unique<replay::ScriptedSignal>(replay::ScriptedSignal::load(r_signal_script));
      else if (r_rssi)
        signal = std::make_unique<replay::ConstantSignal>(*r_rssi);
      else
        signal = std::make_unique<replay::LiveSignal>();

      std::ofstream history_file;
      std::ostream* history = &std::cout;
      if (!r_history.empty()) {
        history_file = open_out(r_history);
        history = &history_file;
      }
      replay::HttpApiClient api(cfg.mass_host, cfg.mass_port);
      const auto result = replay::run_replay(cfg, api, *signal, history, r_sequences);
      std::size_t failed = 0;
      for (const auto& r : result.records) failed += r.status == replay::RecordStatus::failed;
      std::cerr << result.records.size() << " records, " << failed << " failed\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
