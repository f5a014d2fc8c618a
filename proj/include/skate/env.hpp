#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "skate/board.hpp"
#include "skate/reward.hpp"
#include "skate/rider.hpp"
#include "skate/rng.hpp"

namespace skate {

using Eigen::MatrixXd;

constexpr int kObsDim = 45;      // proprio 29 + command 2 + phase 2 + prev action 12
constexpr int kScanPoints = 43;  // center + rings of 6/12/24
constexpr int kScanDim = 2 * kScanPoints;
constexpr int kExtDim = 14;
constexpr int kIntDim = 35;
constexpr int kActDim = 12;
constexpr int kObsHistory = 10;
constexpr int kCriticExtraDim = 14;
constexpr int kCriticDim = kObsDim + kScanDim + kExtDim + kIntDim + kCriticExtraDim; // 194

double phase_of(double t, double period);
Mode mode_of(double phase);
Vector2d phase_embed(double phase);

struct RandRange {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct RandomizationRanges {
  RandRange payload{0.0, 1.5};
  RandRange com_shift{-0.05, 0.05};
  RandRange friction{0.8, 1.2};
  RandRange restitution{0.0, 0.1};
  RandRange joint_kp{36.0, 44.0};
  RandRange joint_kd{0.8, 1.2};
  RandRange deck_mass{3.5, 4.5};
  RandRange truck_kp{45.0, 50.0};
  RandRange truck_kd{2.5, 3.0};
  RandRange bushing_kp{30.0, 35.0};
  RandRange bushing_kd{1.8, 2.0};

  static RandomizationRanges training() { return RandomizationRanges{}; }
  static RandomizationRanges testing();
  // Degenerate ranges pinned at nominal values, for physics sanity checks.
  static RandomizationRanges nominal();
};

// x_int layout: payload, com shift (3), friction, restitution, joint kp (12),
// joint kd (12), deck mass, truck kp/kd, bushing kp/kd -> 35 entries.
VectorXd pack_intrinsics(double payload, const Vector3d& com, double friction,
                         double restitution, const VectorXd& kp, const VectorXd& kd,
                         double deck_mass, double truck_kp, double truck_kd, double bushing_kp,
                         double bushing_kd);

// Affine map of each component to [-1, 1] over its testing range; applied
// wherever the raw intrinsics feed a network.
VectorXd normalize_intrinsics(const VectorXd& x_int);
MatrixXd normalize_intrinsics(const MatrixXd& x_int);

struct ObservationBundle {
  VectorXd o;            // kObsDim
  VectorXd x_scan;       // kScanDim, current frame
  VectorXd x_ext;        // kExtDim
  VectorXd x_int;        // kIntDim
  VectorXd critic_state; // kCriticDim
  MatrixXd o_history;    // kObsDim x kObsHistory, oldest column first
  MatrixXd scan_history; // kScanDim x scan_history_len, oldest first
};

// Grid-adaptive command scheduling: cells activate outward from the origin
// as their running tracking error crosses the proficiency threshold.
struct CurriculumGrid {
  int nv = 31;
  int nw = 21;
  double v_max = 1.5;
  double w_max = 0.5;
  double threshold = 0.25;
  int min_episodes = 4;
  std::vector<uint8_t> active;
  std::vector<double> err_sum;
  std::vector<int> episodes;

  CurriculumGrid() { init(); }
  void init();
  int index(int iv, int iw) const { return iv * nw + iw; }
  int cell_of(const Command& c) const;
  Command cell_command(int idx) const;
  Command sample(Rng& rng) const;
  void update(const Command& c, double tracking_error);
  int active_count() const;
};

struct EnvOptions {
  double control_dt = 0.02;
  int substeps = 8;
  double action_clamp = 0.5;

  bool enable_impulses = true;
  double impulse_period = 3.0;
  double impulse_duration = 0.1;
  double trunk_impulse_force = 30.0;
  double deck_impulse_force = 15.0;

  bool resample_commands = true;
  double command_resample_period = 5.0;
  bool uniform_commands = false; // sample from the full command box instead of the curriculum

  double period_min = 4.0;
  double period_max = 12.0;

  double init_pos_dev = 0.03;
  double init_joint_dev = 0.05;

  double term_tilt = 60.0 * M_PI / 180.0;
  double term_distance = 0.5;
  double term_height = 0.08;
  double max_episode_time = 20.0;

  int scan_history_len = 64;

  RandomizationRanges ranges;
  PoseTargets poses;
};

struct EnvStepResult {
  double reward = 0.0;
  std::array<double, 11> terms{};
  bool done = false;
  bool terminated = false; // constraint violation or degenerate physics
  bool timeout = false;
  bool impulse_applied = false;
  bool command_resampled = false;
};

class Env {
 public:
  Env() = default;
  Env(const EnvOptions& opt, const BoardParams& board, const RiderParams& rider,
      uint64_t master_seed, int env_index);

  void reset(const CurriculumGrid* curriculum = nullptr);

  // Physics + reward + history maintenance. When phase_override is given the
  // mode, reward and observation use it instead of the internal clock (the
  // deployed controller owns the clock in that case).
  EnvStepResult step_core(const VectorXd& action,
                          std::optional<double> phase_override = std::nullopt);

  // Materializing variant matching the public contract.
  EnvStepResult step(const VectorXd& action, ObservationBundle& bundle,
                     std::optional<double> phase_override = std::nullopt);

  void observe(ObservationBundle& bundle) const;

  // Zero-copy views used by the vectorized rollout path.
  const VectorXd& current_o() const { return o_; }
  const VectorXd& current_scan() const { return scan_; }
  const VectorXd& current_x_ext() const { return x_ext_; }
  const VectorXd& current_x_int() const { return x_int_; }
  const VectorXd& current_critic_state() const { return critic_state_; }
  double current_phase() const { return phase_now_; }
  // Writes the last `window` scan frames (oldest first) into dst.
  void scan_window(int window, double* dst) const;
  void o_window(int window, double* dst) const;

  void fix_command(const Command& c);
  void fix_period(double period);
  Command command() const { return command_; }
  double period() const { return period_; }
  double time() const { return clock_t_; }
  Mode mode_at(double phase) const { return mode_of(phase); }

  const BoardState& board_state() const { return board_; }
  const RiderState& rider_state() const { return rider_; }
  const BoardParams& board_params() const { return board_params_; }
  const RiderParams& rider_params() const { return rider_params_; }
  const EnvOptions& options() const { return opt_; }

  // (command, mean tracking error) segments finished since the last drain.
  struct SegmentReport {
    Command command;
    double mean_error = 0.0;
    int steps = 0;
  };
  std::vector<SegmentReport> drain_reports();

  double step_tracking_error(Mode mode) const;

  bool terminated() const { return last_terminated_; }

  // Constraint-violation rule, exposed for direct testing.
  static bool violates(const RiderState& rider, const BoardState& board,
                       const EnvOptions& opt);

 private:
  void randomize_episode();
  void rebuild_observation(double phase);
  void synthesize_scan(VectorXd& scan) const;
  void build_x_ext(VectorXd& x_ext) const;
  bool check_termination() const;
  void push_segment_report();
  void apply_reset_state();

  EnvOptions opt_;
  BoardParams board_base_, board_params_;
  RiderParams rider_base_, rider_params_;
  uint64_t master_seed_ = 0;
  int env_index_ = 0;
  uint64_t episode_count_ = 0;
  const CurriculumGrid* curriculum_ = nullptr;
  Rng rng_;
  Rng perturb_rng_;

  BoardState board_;
  RiderState rider_;
  double clock_t_ = 0.0;
  double period_ = 8.0;
  double phase_now_ = 0.0;
  Command command_;
  bool command_fixed_ = false;
  bool period_fixed_ = false;
  double fixed_period_ = 10.0;

  VectorXd prev_action_;
  VectorXd x_int_;
  VectorXd o_, scan_, x_ext_, critic_state_;
  MatrixXd o_ring_, scan_ring_; // column ring buffers
  int o_head_ = 0, scan_head_ = 0;

  // finite-difference trackers for the stabilization terms
  Vector3d prev_trunk_vel_ = Vector3d::Zero();
  Vector3d prev_deck_vel_w_ = Vector3d::Zero();
  Vector3d prev_deck_omega_s_ = Vector3d::Zero();

  double next_impulse_time_ = 0.0;
  double impulse_end_time_ = -1.0;
  Vector3d impulse_trunk_ = Vector3d::Zero();
  Vector3d impulse_deck_w_ = Vector3d::Zero();
  double next_resample_time_ = 0.0;

  double segment_err_sum_ = 0.0;
  int segment_steps_ = 0;
  int segment_gated_steps_ = 0;
  std::vector<SegmentReport> reports_;
  bool last_terminated_ = false;
};

}  // namespace skate
