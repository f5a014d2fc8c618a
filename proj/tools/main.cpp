#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "skate/checkpoint.hpp"
#include "skate/config.hpp"
#include "skate/csv.hpp"
#include "skate/distill.hpp"
#include "skate/evalharness.hpp"
#include "skate/ppo.hpp"
#include "skate/threadpool.hpp"

#ifndef SKATERL_BUILD_ID
#define SKATERL_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace skate;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (JSON)");
  cmd->add_option("--out", args.out, "output directory (default: timestamped run dir)");
  cmd->add_option("--override", args.overrides, "config override, key.path=value")
      ->take_all();
  cmd->add_option("--seed", args.seed, "master seed")->each([&](const std::string&) {
    args.seed_set = true;
  });
  cmd->add_option("--threads", args.threads, "worker threads");
}

Config resolve_config(const CommonArgs& args) {
  json tree;
  if (!args.config_path.empty()) {
    std::string err;
    Config file_cfg = load_config_file(args.config_path, &err);
    if (!err.empty()) throw std::runtime_error(err);
    tree = config_to_json(file_cfg);
  } else {
    tree = config_to_json(Config{});
  }
  for (const auto& ov : args.overrides) {
    std::string err;
    if (!apply_override(tree, ov, &err)) throw std::runtime_error(err);
  }
  Config cfg = config_from_json(tree);
  if (args.seed_set) cfg.seed = args.seed;
  if (args.threads > 0) cfg.threads = args.threads;

  auto errors = config_validate(cfg);
  if (!errors.empty()) {
    std::cerr << "invalid configuration:\n";
    for (const auto& e : errors) std::cerr << "  - " << e << "\n";
    throw std::runtime_error("configuration rejected");
  }
  return cfg;
}

std::string make_run_dir(const CommonArgs& args, const Config& cfg, const std::string& kind) {
  std::string dir = args.out;
  if (dir.empty()) {
    std::string root = cfg.out_dir;
    if (const char* env_root = std::getenv("SKATERL_OUT_ROOT")) root = env_root;
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::localtime(&now));
    dir = root + "/" + kind + "-" + stamp;
  }
  fs::create_directories(dir);
  save_config_file(cfg, dir + "/resolved_config.json");
  std::ofstream info(dir + "/run_info.txt");
  info << "build: " << SKATERL_BUILD_ID << "\nseed: " << cfg.seed << "\nkind: " << kind
       << "\n";
  return dir;
}

PolicyNets load_policy(const Config& cfg, const std::string& ckpt) {
  if (ckpt.empty()) throw std::runtime_error("missing required --checkpoint");
  PolicyNets nets;
  Rng rng = Rng::stream(cfg.seed, rngp::kNetInit);
  nets.init(cfg.nets, rng);
  std::string err;
  if (!nets.load(ckpt, nullptr, &err))
    throw std::runtime_error("cannot load checkpoint " + ckpt + ": " + err);
  return nets;
}

int cmd_bench(const CommonArgs& args) {
  Config cfg = resolve_config(args);
  const int B = 1024;
  const int steps = 40;
  VectorXd zero = VectorXd::Zero(kActDim);

  std::vector<Env> envs;
  envs.reserve(B);
  for (int e = 0; e < B; ++e) envs.emplace_back(cfg.env, cfg.board, cfg.rider, cfg.seed, e);
  for (auto& e : envs) e.reset();

  // Serial loop through the public bundle-returning interface.
  auto t0 = std::chrono::steady_clock::now();
  ObservationBundle bundle;
  for (int t = 0; t < steps; ++t)
    for (auto& e : envs) {
      e.step(zero, bundle);
      if (e.terminated()) e.reset();
    }
  double serial_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double serial_rate = static_cast<double>(B) * steps / serial_s;

  for (auto& e : envs) e.reset();
  t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < steps; ++t) {
    parallel_for(B, cfg.threads, [&](int i) {
      envs[i].step_core(zero);
      if (envs[i].terminated()) envs[i].reset();
    });
  }
  double batch_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  double batch_rate = static_cast<double>(B) * steps / batch_s;

  std::cout << "serial:  " << serial_rate << " env-steps/s\n";
  std::cout << "batched: " << batch_rate << " env-steps/s\n";
  std::cout << "speedup: " << batch_rate / serial_rate << "x\n";
  return 0;
}

int cmd_rollout(const CommonArgs& args, const std::string& ckpt, double seconds) {
  Config cfg = resolve_config(args);
  std::string dir = make_run_dir(args, cfg, "rollout");

  EnvOptions opt = cfg.env;
  opt.max_episode_time = seconds + 1.0;
  Env env(opt, cfg.board, cfg.rider, cfg.seed, 0);
  env.reset();

  std::unique_ptr<PolicyRunner> runner;
  if (!ckpt.empty()) {
    PolicyNets nets = load_policy(cfg, ckpt);
    runner = std::make_unique<PolicyRunner>(nets, nullptr, cfg.distill, cfg.seed);
    runner->reset(env.period());
  }

  std::vector<std::string> cols{"time", "phase", "mode", "cmd_v", "cmd_w"};
  for (int i = 1; i <= 11; ++i) cols.push_back("r" + std::to_string(i));
  cols.insert(cols.end(), {"board_speed", "yaw_rate", "terminated"});
  CsvWriter csv(dir + "/rollout.csv", cols);

  VectorXd zero = VectorXd::Zero(kActDim);
  int steps = static_cast<int>(seconds / opt.control_dt);
  for (int t = 0; t < steps; ++t) {
    double phase = env.current_phase();
    VectorXd action = runner ? runner->act(env, phase) : zero;
    EnvStepResult r = env.step_core(action);
    std::vector<double> row{env.time(), phase,
                            static_cast<double>(static_cast<int>(mode_of(phase))),
                            env.command().v, env.command().w};
    for (double term : r.terms) row.push_back(term);
    row.insert(row.end(), {env.board_state().speed_long, env.board_state().yaw_rate,
                           r.terminated ? 1.0 : 0.0});
    csv.row(row);
    if (r.done) break;
  }
  csv.flush();
  std::cout << "trace written to " << dir << "/rollout.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skateboard-rider simulator and phase-aware training pipeline"};
  app.require_subcommand(1);

  CommonArgs train_args, distill_args, heatmap_args, power_args, features_args, rollout_args,
      bench_args, config_args;
  std::string distill_ckpt, heatmap_ckpt, heatmap_est, power_ckpt, features_ckpt, rollout_ckpt;
  std::string train_resume;
  double rollout_seconds = 10.0;
  bool power_deployed = false;

  auto* train_cmd = app.add_subcommand("train", "stage-1 policy optimization");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");

  auto* distill_cmd = app.add_subcommand("distill", "stage-2 estimator distillation");
  add_common(distill_cmd, distill_args);
  distill_cmd->add_option("--checkpoint", distill_ckpt, "stage-1 policy checkpoint")
      ->required();

  auto* heatmap_cmd = app.add_subcommand("eval-heatmap", "command-tracking heatmap sweep");
  add_common(heatmap_cmd, heatmap_args);
  heatmap_cmd->add_option("--checkpoint", heatmap_ckpt, "policy checkpoint")->required();
  heatmap_cmd->add_option("--estimators", heatmap_est,
                          "estimator checkpoint (evaluate the deployed stack)");

  auto* power_cmd = app.add_subcommand("eval-power", "motor-power comparison");
  add_common(power_cmd, power_args);
  power_cmd->add_option("--checkpoint", power_ckpt, "policy checkpoint")->required();
  power_cmd->add_flag("--deployed", power_deployed, "unused placeholder for symmetry");

  auto* features_cmd = app.add_subcommand("export-features", "feature matrices for projection");
  add_common(features_cmd, features_args);
  features_cmd->add_option("--checkpoint", features_ckpt, "policy checkpoint")->required();

  auto* rollout_cmd = app.add_subcommand("rollout", "single-episode CSV trace");
  add_common(rollout_cmd, rollout_args);
  rollout_cmd->add_option("--checkpoint", rollout_ckpt, "policy checkpoint (zero actions if absent)");
  rollout_cmd->add_option("--seconds", rollout_seconds, "episode length");

  auto* bench_cmd = app.add_subcommand("bench", "environment throughput benchmark");
  add_common(bench_cmd, bench_args);

  auto* config_cmd = app.add_subcommand("config", "print the default configuration");
  add_common(config_cmd, config_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      Config cfg = resolve_config(train_args);
      std::string dir = make_run_dir(train_args, cfg, "train");
      PpoTrainer trainer(cfg, cfg.seed);
      std::string ckpt = trainer.train(dir, train_resume);
      std::cout << "final checkpoint: " << ckpt << "\n";
      return 0;
    }
    if (*distill_cmd) {
      Config cfg = resolve_config(distill_args);
      std::string dir = make_run_dir(distill_args, cfg, "distill");
      PolicyNets nets = load_policy(cfg, distill_ckpt);
      DistillTrainer trainer(cfg, nets, cfg.seed);
      auto result = trainer.run(dir);
      std::cout << "holdout loss " << result.first_holdout.total() << " -> "
                << result.last_holdout.total() << "\n"
                << "deck-position RMSE " << result.ext_pos_rmse << " m, indicator agreement "
                << result.indicator_agreement * 100 << "%\n"
                << "estimators: " << result.checkpoint << "\n";
      return 0;
    }
    if (*heatmap_cmd) {
      Config cfg = resolve_config(heatmap_args);
      std::string dir = make_run_dir(heatmap_args, cfg, "heatmap");
      PolicyNets nets = load_policy(cfg, heatmap_ckpt);
      std::unique_ptr<EstimatorSet> est;
      if (!heatmap_est.empty()) {
        est = std::make_unique<EstimatorSet>();
        Rng r = Rng::stream(cfg.seed, rngp::kNetInit, 99);
        est->init(cfg.nets, r);
        std::string err;
        if (!est->load(heatmap_est, nullptr, &err))
          throw std::runtime_error("cannot load estimators: " + err);
      }
      Heatmap map = command_heatmap(cfg, nets, est.get(), cfg.seed, cfg.threads);
      save_heatmap_csv(map, dir + "/heatmap.csv");
      std::vector<double> thresholds;
      for (double t = 0.05; t <= 1.0 + 1e-9; t += 0.05) thresholds.push_back(t);
      auto curve = command_area(map, thresholds);
      CsvWriter curve_csv(dir + "/command_area.csv", {"threshold", "fraction"});
      for (auto& [thr, frac] : curve) curve_csv.row({thr, frac});
      curve_csv.flush();
      std::cout << "heatmap (" << map.nv << "x" << map.nw << ") written to " << dir << "\n";
      return 0;
    }
    if (*power_cmd) {
      Config cfg = resolve_config(power_args);
      std::string dir = make_run_dir(power_args, cfg, "power");
      PolicyNets nets = load_policy(cfg, power_ckpt);
      TraversalResult gated = power_traversal(cfg, nets, nullptr, cfg.seed, true, false);
      TraversalResult pushing = power_traversal(cfg, nets, nullptr, cfg.seed, false, true);
      save_trajectory_csv(gated.trajectory, dir + "/power_gated.csv");
      save_trajectory_csv(pushing.trajectory, dir + "/power_always_pushing.csv");
      CsvWriter summary(dir + "/power_summary.csv",
                        {"mode", "mean", "p50", "p95", "p99", "tail_ratio", "distance",
                         "duration", "reached"});
      summary.row({0, gated.stats.mean, gated.stats.p50, gated.stats.p95, gated.stats.p99,
                   gated.stats.tail_ratio, gated.stats.distance, gated.stats.duration,
                   gated.reached ? 1.0 : 0.0});
      summary.row({1, pushing.stats.mean, pushing.stats.p50, pushing.stats.p95,
                   pushing.stats.p99, pushing.stats.tail_ratio, pushing.stats.distance,
                   pushing.stats.duration, pushing.reached ? 1.0 : 0.0});
      summary.flush();
      std::cout << "phase-gated mean power   " << gated.stats.mean << " (tail ratio "
                << gated.stats.tail_ratio << ")\n"
                << "always-pushing mean power " << pushing.stats.mean << " (tail ratio "
                << pushing.stats.tail_ratio << ")\n";
      return 0;
    }
    if (*features_cmd) {
      Config cfg = resolve_config(features_args);
      std::string dir = make_run_dir(features_args, cfg, "features");
      PolicyNets nets = load_policy(cfg, features_ckpt);
      export_features(cfg, nets, cfg.seed, dir);
      std::cout << "feature matrices written to " << dir << "\n";
      return 0;
    }
    if (*rollout_cmd) return cmd_rollout(rollout_args, rollout_ckpt, rollout_seconds);
    if (*bench_cmd) return cmd_bench(bench_args);
    if (*config_cmd) {
      Config cfg = resolve_config(config_args);
      std::cout << config_to_json(cfg).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
