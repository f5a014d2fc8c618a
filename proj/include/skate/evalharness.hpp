#pragma once

#include <string>
#include <vector>

#include "skate/distill.hpp"

namespace skate {

struct TrajectoryPoint {
  double t = 0.0;
  double phase = 0.0;
  int mode = 2; // Mode enum value
  double cmd_v = 0.0, cmd_w = 0.0;
  double board_v = 0.0, board_w = 0.0;
  double power = 0.0; // normalized motor power
  double reward = 0.0;
  std::array<double, 11> terms{};
  bool terminated = false;
};

using Trajectory = std::vector<TrajectoryPoint>;

// Time average of |c_v - v| over pushing steps plus |c_w - w| over carving
// steps, both divided by the total step count.
double tracking_error(const Trajectory& traj);

// Positive mechanical joint power over robot weight.
double normalized_power(const VectorXd& tau_q, const VectorXd& q_dot, double weight_n);

struct PowerStats {
  double mean = 0.0;
  double p50 = 0.0, p95 = 0.0, p99 = 0.0;
  double tail_ratio = 0.0; // mean of the top 5% over the overall mean
  int steps = 0;
  double distance = 0.0;
  double duration = 0.0;
};

PowerStats motor_power(const Trajectory& traj);

// Shared controller wrapper for evaluation: either the stage-1 policy with
// privileged features or the deployed estimator stack. Holds private copies
// of the networks so sweeps can run one instance per worker.
class PolicyRunner {
 public:
  PolicyRunner(const PolicyNets& nets, const EstimatorSet* est, const DistillTrainConfig& noise,
               uint64_t noise_seed);

  void reset(double period);
  void set_phase_gate(double speed_low);
  void set_always_pushing(bool v);
  bool deployed() const { return deployed_; }
  bool external_clock() const { return deployed_ || clock_external_; }

  // Phase the next action will be conditioned on; advances the clock.
  double next_phase(const Env& env, double dt);
  VectorXd act(Env& env, double phase);

 private:
  PolicyNets nets_;
  bool deployed_ = false;
  DeployedController controller_;
  bool clock_external_ = false; // stage-1 runs let the env own the clock
  double gate_speed_ = -1.0;
  bool always_pushing_ = false;
  MatrixXd scanwin_;
};

struct TrialSpec {
  Command command;
  double period = 10.0;
  double horizon = 40.0;
  double impulse_period = 4.0;
  bool impulses = true;
  bool testing_ranges = true;
  uint64_t seed = 0;
};

Trajectory run_trial(const Config& cfg, PolicyRunner& runner, const TrialSpec& spec,
                     bool* violated = nullptr);

struct HeatmapCell {
  double cv = 0.0, cw = 0.0;
  double mean_error = 0.0;
  bool violated = false;
  int trials = 0;
};

struct Heatmap {
  int nv = 0, nw = 0;
  std::vector<HeatmapCell> cells;
};

// Full command sweep per the measurement protocol: grid at the configured
// resolution, N trials per cell with testing-range intrinsics, perturbations,
// violation flag when any trial overturns or drifts off the board.
Heatmap command_heatmap(const Config& cfg, const PolicyNets& nets, const EstimatorSet* est,
                        uint64_t master_seed, int threads,
                        double v_lo = 0.0, double v_hi = 1.5, double w_lo = -0.5,
                        double w_hi = 0.5);

void save_heatmap_csv(const Heatmap& map, const std::string& path);

// Fraction of non-violating cells with error <= threshold; violating cells
// stay in the denominator.
std::vector<std::pair<double, double>> command_area(const Heatmap& map,
                                                    const std::vector<double>& thresholds);

struct TraversalResult {
  PowerStats stats;
  bool reached = false;
  Trajectory trajectory;
};

// Ride until the board has travelled `distance` meters (or the time cap),
// resetting on violations, accumulating normalized motor power.
TraversalResult power_traversal(const Config& cfg, const PolicyNets& nets,
                                const EstimatorSet* est, uint64_t seed, bool phase_gated,
                                bool always_pushing);

// 80 s rollout with command resampling; writes action/observation/value
// matrices tagged with the mode for external projection tooling.
void export_features(const Config& cfg, PolicyNets& nets, uint64_t seed,
                     const std::string& out_dir);

void save_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace skate
