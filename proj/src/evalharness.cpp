#include "skate/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skate/csv.hpp"
#include "skate/threadpool.hpp"

namespace skate {

double tracking_error(const Trajectory& traj) {
  if (traj.empty()) throw std::invalid_argument("tracking_error: empty trajectory");
  double sum = 0.0;
  for (const auto& p : traj) {
    if (p.mode == static_cast<int>(Mode::Pushing)) sum += std::abs(p.cmd_v - p.board_v);
    if (p.mode == static_cast<int>(Mode::Carving)) sum += std::abs(p.cmd_w - p.board_w);
  }
  return sum / traj.size();
}

double normalized_power(const VectorXd& tau_q, const VectorXd& q_dot, double weight_n) {
  double p = 0.0;
  for (int j = 0; j < tau_q.size(); ++j) p += std::max(tau_q[j] * q_dot[j], 0.0);
  return p / weight_n;
}

PowerStats motor_power(const Trajectory& traj) {
  PowerStats out;
  out.steps = static_cast<int>(traj.size());
  if (traj.empty()) return out;
  std::vector<double> p;
  p.reserve(traj.size());
  double sum = 0.0;
  for (const auto& pt : traj) {
    p.push_back(pt.power);
    sum += pt.power;
  }
  std::sort(p.begin(), p.end());
  out.mean = sum / p.size();
  auto q = [&](double f) {
    double idx = f * (p.size() - 1);
    size_t lo = static_cast<size_t>(idx);
    size_t hi = std::min(lo + 1, p.size() - 1);
    double w = idx - lo;
    return p[lo] * (1 - w) + p[hi] * w;
  };
  out.p50 = q(0.50);
  out.p95 = q(0.95);
  out.p99 = q(0.99);
  size_t tail_start = static_cast<size_t>(0.95 * p.size());
  double tail_sum = 0.0;
  for (size_t i = tail_start; i < p.size(); ++i) tail_sum += p[i];
  double tail_mean = tail_sum / std::max<size_t>(1, p.size() - tail_start);
  out.tail_ratio = out.mean > 1e-12 ? tail_mean / out.mean : 0.0;
  out.duration = traj.back().t;
  return out;
}

// ------------------------------------------------------------ PolicyRunner --

PolicyRunner::PolicyRunner(const PolicyNets& nets, const EstimatorSet* est,
                           const DistillTrainConfig& noise, uint64_t noise_seed)
    : nets_(nets),
      deployed_(est != nullptr),
      controller_(nets, est ? *est : EstimatorSet{}, noise, noise_seed) {
  scanwin_.resize(kScanDim * nets_.cfg.scan_window, 1);
}

void PolicyRunner::reset(double period) { controller_.reset(period); }

void PolicyRunner::set_phase_gate(double speed_low) {
  gate_speed_ = speed_low;
  controller_.set_phase_gate(speed_low);
  clock_external_ = true;
}

void PolicyRunner::set_always_pushing(bool v) {
  always_pushing_ = v;
  controller_.set_always_pushing(v);
  clock_external_ = v || clock_external_;
}

double PolicyRunner::next_phase(const Env& env, double dt) {
  if (deployed_ || clock_external_)
    return controller_.next_phase(env.board_state().speed_long, dt);
  return env.current_phase(); // env clock drives stage-1 evaluation
}

VectorXd PolicyRunner::act(Env& env, double phase) {
  if (deployed_) return controller_.act(env.current_o(), env.current_scan());

  VectorXd o = env.current_o();
  Vector2d embed = phase_embed(phase);
  o[31] = embed.x();
  o[32] = embed.y();
  env.scan_window(nets_.cfg.scan_window, scanwin_.col(0).data());
  MatrixXd zper = nets_.scan_encoder.forward(scanwin_);
  MatrixXd zint = nets_.intrinsic_encoder.forward(normalize_intrinsics(env.current_x_int()));
  MatrixXd ain(nets_.actor_in_dim(), 1);
  ain.col(0).head(kObsDim) = o;
  ain.col(0).segment(kObsDim, nets_.cfg.latent_per) = zper.col(0);
  ain.col(0).segment(kObsDim + nets_.cfg.latent_per, kExtDim) = env.current_x_ext();
  ain.col(0).tail(nets_.cfg.latent_int) = zint.col(0);
  MatrixXd phi(2, 1);
  phi.col(0) = embed;
  return nets_.actor.forward(ain, phi).col(0);
}

// --------------------------------------------------------------- run_trial --

Trajectory run_trial(const Config& cfg, PolicyRunner& runner, const TrialSpec& spec,
                     bool* violated) {
  EnvOptions opt = cfg.env;
  opt.enable_impulses = spec.impulses;
  opt.impulse_period = spec.impulse_period;
  opt.resample_commands = false;
  opt.max_episode_time = spec.horizon + 1.0;
  if (spec.testing_ranges) opt.ranges = RandomizationRanges::testing();

  Env env(opt, cfg.board, cfg.rider, spec.seed, 0);
  env.fix_command(spec.command);
  env.fix_period(spec.period);
  env.reset();
  runner.reset(spec.period);

  double weight = (cfg.rider.trunk_mass + env.rider_params().payload_mass) * cfg.rider.gravity;
  int steps = static_cast<int>(spec.horizon / opt.control_dt);
  Trajectory traj;
  traj.reserve(steps);
  bool drove_off = false;

  for (int t = 0; t < steps; ++t) {
    double phase = runner.next_phase(env, opt.control_dt);
    VectorXd action = runner.act(env, phase);
    EnvStepResult r = env.step_core(
        action, runner.external_clock() ? std::optional<double>(phase) : std::nullopt);

    TrajectoryPoint pt;
    pt.t = (t + 1) * opt.control_dt;
    pt.phase = phase;
    pt.mode = static_cast<int>(mode_of(phase));
    pt.cmd_v = spec.command.v;
    pt.cmd_w = spec.command.w;
    pt.board_v = env.board_state().speed_long;
    pt.board_w = env.board_state().yaw_rate;
    pt.power = normalized_power(env.rider_state().tau_q, env.rider_state().q_dot, weight);
    pt.reward = r.reward;
    pt.terms = r.terms;
    pt.terminated = r.terminated;
    traj.push_back(pt);

    if (r.terminated) {
      drove_off = true;
      break;
    }
  }
  if (violated) *violated = drove_off;
  return traj;
}

// ---------------------------------------------------------------- heatmap --

Heatmap command_heatmap(const Config& cfg, const PolicyNets& nets, const EstimatorSet* est,
                        uint64_t master_seed, int threads, double v_lo, double v_hi,
                        double w_lo, double w_hi) {
  const double res = cfg.eval.resolution;
  Heatmap map;
  map.nv = static_cast<int>(std::lround((v_hi - v_lo) / res)) + 1;
  map.nw = static_cast<int>(std::lround((w_hi - w_lo) / res)) + 1;
  map.cells.resize(static_cast<size_t>(map.nv) * map.nw);

  parallel_for(static_cast<int>(map.cells.size()), threads, [&](int idx) {
    int iv = idx / map.nw, iw = idx % map.nw;
    HeatmapCell cell;
    cell.cv = v_lo + iv * res;
    cell.cw = w_lo + iw * res;

    PolicyRunner runner(nets, est, cfg.distill,
                        Rng::stream(master_seed, rngp::kEvalCell, idx).next_u64());
    double err_sum = 0.0;
    int err_trials = 0;
    bool violated = false;
    for (int trial = 0; trial < cfg.eval.trials; ++trial) {
      TrialSpec spec;
      spec.command = Command{cell.cv, cell.cw};
      spec.period = cfg.eval.phase_period;
      spec.horizon = cfg.eval.horizon;
      spec.impulse_period = cfg.eval.impulse_period;
      spec.seed = Rng::stream(master_seed, rngp::kEvalCell,
                              static_cast<uint64_t>(idx) * 1000 + trial)
                      .next_u64();
      bool trial_violated = false;
      Trajectory traj = run_trial(cfg, runner, spec, &trial_violated);
      if (trial_violated) {
        violated = true;
      } else if (!traj.empty()) {
        err_sum += tracking_error(traj);
        ++err_trials;
      }
      cell.trials += 1;
    }
    cell.violated = violated;
    cell.mean_error = err_trials > 0 ? err_sum / err_trials : 0.0;
    if (err_trials == 0) cell.violated = true;
    map.cells[idx] = cell;
  });
  return map;
}

void save_heatmap_csv(const Heatmap& map, const std::string& path) {
  CsvWriter csv(path, {"cv", "cw", "mean_error", "violated", "trials"});
  for (const auto& c : map.cells)
    csv.row({c.cv, c.cw, c.mean_error, c.violated ? 1.0 : 0.0, static_cast<double>(c.trials)});
  csv.flush();
}

std::vector<std::pair<double, double>> command_area(const Heatmap& map,
                                                    const std::vector<double>& thresholds) {
  std::vector<std::pair<double, double>> curve;
  double total = static_cast<double>(map.cells.size());
  for (double thr : thresholds) {
    int ok = 0;
    for (const auto& c : map.cells)
      if (!c.violated && c.mean_error <= thr) ++ok;
    curve.emplace_back(thr, total > 0 ? ok / total : 0.0);
  }
  return curve;
}

// ---------------------------------------------------------------- power --

TraversalResult power_traversal(const Config& cfg, const PolicyNets& nets,
                                const EstimatorSet* est, uint64_t seed, bool phase_gated,
                                bool always_pushing) {
  TraversalResult out;

  EnvOptions opt = cfg.env;
  opt.enable_impulses = false;
  opt.resample_commands = false;
  opt.max_episode_time = cfg.eval.traversal_max_time + 1.0;

  Env env(opt, cfg.board, cfg.rider, seed, 0);
  Command cmd{cfg.eval.traversal_cv, 0.0};
  env.fix_command(cmd);
  env.fix_period(cfg.eval.phase_period);
  env.reset();

  PolicyRunner runner(nets, est, cfg.distill, seed ^ 0xabcdef);
  if (phase_gated) runner.set_phase_gate(cfg.eval.speed_gate);
  if (always_pushing) runner.set_always_pushing(true);
  runner.reset(cfg.eval.phase_period);

  double weight = (cfg.rider.trunk_mass + env.rider_params().payload_mass) * cfg.rider.gravity;
  double start_x = env.board_state().position_xy.x();
  int max_steps = static_cast<int>(cfg.eval.traversal_max_time / opt.control_dt);

  for (int t = 0; t < max_steps; ++t) {
    double phase = runner.next_phase(env, opt.control_dt);
    VectorXd action = runner.act(env, phase);
    EnvStepResult r = env.step_core(action, std::optional<double>(phase));

    TrajectoryPoint pt;
    pt.t = (t + 1) * opt.control_dt;
    pt.phase = phase;
    pt.mode = static_cast<int>(mode_of(phase));
    pt.cmd_v = cmd.v;
    pt.board_v = env.board_state().speed_long;
    pt.board_w = env.board_state().yaw_rate;
    pt.power = normalized_power(env.rider_state().tau_q, env.rider_state().q_dot, weight);
    pt.terminated = r.terminated;
    out.trajectory.push_back(pt);

    double travelled = env.board_state().position_xy.x() - start_x;
    if (travelled >= cfg.eval.traversal_distance) {
      out.reached = true;
      break;
    }
    if (r.terminated) {
      // Violation: remount and keep going from the current board position.
      double x = env.board_state().position_xy.x();
      env.reset();
      start_x -= (x - env.board_state().position_xy.x());
      runner.reset(cfg.eval.phase_period);
    }
  }
  out.stats = motor_power(out.trajectory);
  out.stats.distance = env.board_state().position_xy.x() - start_x;
  return out;
}

// ------------------------------------------------------- feature export --

void export_features(const Config& cfg, PolicyNets& nets, uint64_t seed,
                     const std::string& out_dir) {
  EnvOptions opt = cfg.env;
  opt.enable_impulses = false;
  opt.resample_commands = true;
  opt.command_resample_period = 10.0;
  opt.uniform_commands = true;
  opt.max_episode_time = 81.0;

  Env env(opt, cfg.board, cfg.rider, seed, 0);
  env.fix_period(cfg.eval.phase_period);
  env.reset();

  PolicyRunner runner(nets, nullptr, cfg.distill, seed);
  runner.reset(cfg.eval.phase_period);

  std::vector<std::string> acols{"mode"};
  for (int i = 0; i < kActDim; ++i) acols.push_back("a" + std::to_string(i));
  CsvWriter actions_csv(out_dir + "/features_actions.csv", acols);
  std::vector<std::string> ocols{"mode"};
  for (int i = 0; i < 29; ++i) ocols.push_back("o" + std::to_string(i));
  CsvWriter obs_csv(out_dir + "/features_observations.csv", ocols);
  CsvWriter value_csv(out_dir + "/features_values.csv", {"mode", "value"});

  int steps = static_cast<int>(80.0 / opt.control_dt);
  MatrixXd phi(2, 1);
  for (int t = 0; t < steps; ++t) {
    double phase = env.current_phase();
    int mode = static_cast<int>(mode_of(phase));
    VectorXd action = runner.act(env, phase);

    phi.col(0) = phase_embed(phase);
    MatrixXd v = nets.critic.forward(env.current_critic_state(), phi);

    std::vector<double> arow{static_cast<double>(mode)};
    for (int i = 0; i < kActDim; ++i) arow.push_back(action[i]);
    actions_csv.row(arow);
    std::vector<double> orow{static_cast<double>(mode)};
    for (int i = 0; i < 29; ++i) orow.push_back(env.current_o()[i]);
    obs_csv.row(orow);
    value_csv.row({static_cast<double>(mode), v(0, 0)});

    env.step_core(action);
    if (env.terminated()) env.reset();
  }
  actions_csv.flush();
  obs_csv.flush();
  value_csv.flush();
}

void save_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::vector<std::string> cols{"t",       "phase",  "mode",  "cmd_v", "cmd_w",
                                "board_v", "board_w", "power", "reward"};
  for (int i = 1; i <= 11; ++i) cols.push_back("r" + std::to_string(i));
  cols.push_back("terminated");
  CsvWriter csv(path, cols);
  for (const auto& p : traj) {
    std::vector<double> row{p.t,       p.phase,  static_cast<double>(p.mode),
                            p.cmd_v,   p.cmd_w,  p.board_v,
                            p.board_w, p.power,  p.reward};
    for (double term : p.terms) row.push_back(term);
    row.push_back(p.terminated ? 1.0 : 0.0);
    csv.row(row);
  }
  csv.flush();
}

}  // namespace skate
