#include "skate/env.hpp"

#include <cmath>
#include <stdexcept>

namespace skate {

RandomizationRanges RandomizationRanges::testing() {
  RandomizationRanges r;
  r.payload = {0.0, 3.0};
  r.com_shift = {-0.1, 0.1};
  r.friction = {0.7, 2.0};
  r.restitution = {0.0, 0.15};
  r.joint_kp = {34.0, 46.0};
  r.joint_kd = {0.7, 1.3};
  r.deck_mass = {3.0, 5.0};
  r.truck_kp = {40.0, 55.0};
  r.truck_kd = {2.2, 3.3};
  r.bushing_kp = {25.0, 40.0};
  r.bushing_kd = {1.5, 2.3};
  return r;
}

RandomizationRanges RandomizationRanges::nominal() {
  RandomizationRanges r;
  r.payload = {0.0, 0.0};
  r.com_shift = {0.0, 0.0};
  r.friction = {1.0, 1.0};
  r.restitution = {0.0, 0.0};
  r.joint_kp = {40.0, 40.0};
  r.joint_kd = {1.0, 1.0};
  r.deck_mass = {4.0, 4.0};
  r.truck_kp = {47.5, 47.5};
  r.truck_kd = {2.75, 2.75};
  r.bushing_kp = {32.5, 32.5};
  r.bushing_kd = {1.9, 1.9};
  return r;
}

double phase_of(double t, double period) {
  if (period <= 0.0) throw std::invalid_argument("phase_of: period must be positive");
  double phase = std::fmod(2.0 * M_PI * t / period, 2.0 * M_PI);
  if (phase < 0.0) phase += 2.0 * M_PI;
  if (phase >= 2.0 * M_PI) phase = 0.0;
  return phase;
}

Mode mode_of(double phase) {
  if (phase >= 0.2 * M_PI && phase <= 0.8 * M_PI) return Mode::Carving;
  if (phase >= 1.2 * M_PI && phase <= 1.8 * M_PI) return Mode::Pushing;
  return Mode::Transition;
}

Vector2d phase_embed(double phase) { return Vector2d(std::cos(phase), std::sin(phase)); }

VectorXd pack_intrinsics(double payload, const Vector3d& com, double friction,
                         double restitution, const VectorXd& kp, const VectorXd& kd,
                         double deck_mass, double truck_kp, double truck_kd, double bushing_kp,
                         double bushing_kd) {
  VectorXd x(kIntDim);
  x[0] = payload;
  x.segment<3>(1) = com;
  x[4] = friction;
  x[5] = restitution;
  x.segment(6, kNumJoints) = kp;
  x.segment(18, kNumJoints) = kd;
  x[30] = deck_mass;
  x[31] = truck_kp;
  x[32] = truck_kd;
  x[33] = bushing_kp;
  x[34] = bushing_kd;
  return x;
}

namespace {

void intrinsic_scale(VectorXd& mid, VectorXd& halfspan) {
  RandomizationRanges t = RandomizationRanges::testing();
  VectorXd lo(kIntDim), hi(kIntDim);
  auto put = [&](int at, int n, const RandRange& r) {
    for (int i = 0; i < n; ++i) {
      lo[at + i] = r.lo;
      hi[at + i] = r.hi;
    }
  };
  put(0, 1, t.payload);
  put(1, 3, t.com_shift);
  put(4, 1, t.friction);
  put(5, 1, t.restitution);
  put(6, 12, t.joint_kp);
  put(18, 12, t.joint_kd);
  put(30, 1, t.deck_mass);
  put(31, 1, t.truck_kp);
  put(32, 1, t.truck_kd);
  put(33, 1, t.bushing_kp);
  put(34, 1, t.bushing_kd);
  mid = 0.5 * (lo + hi);
  halfspan = (0.5 * (hi - lo)).cwiseMax(1e-6);
}

}  // namespace

VectorXd normalize_intrinsics(const VectorXd& x) {
  static const auto scales = [] {
    VectorXd m, h;
    intrinsic_scale(m, h);
    return std::make_pair(m, h);
  }();
  return (x - scales.first).cwiseQuotient(scales.second);
}

MatrixXd normalize_intrinsics(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols());
  for (int c = 0; c < x.cols(); ++c) out.col(c) = normalize_intrinsics(VectorXd(x.col(c)));
  return out;
}

void CurriculumGrid::init() {
  active.assign(nv * nw, 0);
  err_sum.assign(nv * nw, 0.0);
  episodes.assign(nv * nw, 0);
  int iw0 = nw / 2; // c_w = 0
  active[index(0, iw0)] = 1;
  if (nv > 1) active[index(1, iw0)] = 1;
  if (iw0 > 0) active[index(0, iw0 - 1)] = 1;
  if (iw0 + 1 < nw) active[index(0, iw0 + 1)] = 1;
}

int CurriculumGrid::cell_of(const Command& c) const {
  double dv = v_max / (nv - 1);
  double dw = 2.0 * w_max / (nw - 1);
  int iv = static_cast<int>(std::lround(c.v / dv));
  int iw = static_cast<int>(std::lround((c.w + w_max) / dw));
  iv = std::min(nv - 1, std::max(0, iv));
  iw = std::min(nw - 1, std::max(0, iw));
  return index(iv, iw);
}

Command CurriculumGrid::cell_command(int idx) const {
  int iv = idx / nw, iw = idx % nw;
  double dv = v_max / (nv - 1);
  double dw = 2.0 * w_max / (nw - 1);
  return Command{iv * dv, -w_max + iw * dw};
}

Command CurriculumGrid::sample(Rng& rng) const {
  int n = active_count();
  if (n == 0) return Command{0.0, 0.0};
  int pick = rng.uniform_int(n);
  for (size_t i = 0; i < active.size(); ++i) {
    if (active[i]) {
      if (pick == 0) return cell_command(static_cast<int>(i));
      --pick;
    }
  }
  return Command{0.0, 0.0};
}

void CurriculumGrid::update(const Command& c, double tracking_error) {
  int idx = cell_of(c);
  if (!active[idx]) return;
  err_sum[idx] += tracking_error;
  episodes[idx] += 1;
  if (episodes[idx] >= min_episodes && err_sum[idx] / episodes[idx] < threshold) {
    int iv = idx / nw, iw = idx % nw;
    auto activate = [&](int a, int b) {
      if (a >= 0 && a < nv && b >= 0 && b < nw) active[index(a, b)] = 1;
    };
    activate(iv - 1, iw);
    activate(iv + 1, iw);
    activate(iv, iw - 1);
    activate(iv, iw + 1);
  }
}

int CurriculumGrid::active_count() const {
  int n = 0;
  for (uint8_t a : active) n += a;
  return n;
}

Env::Env(const EnvOptions& opt, const BoardParams& board, const RiderParams& rider,
         uint64_t master_seed, int env_index)
    : opt_(opt),
      board_base_(board),
      board_params_(board),
      rider_base_(rider),
      rider_params_(rider),
      master_seed_(master_seed),
      env_index_(env_index) {
  prev_action_ = VectorXd::Zero(kActDim);
  o_ = VectorXd::Zero(kObsDim);
  scan_ = VectorXd::Zero(kScanDim);
  x_ext_ = VectorXd::Zero(kExtDim);
  x_int_ = VectorXd::Zero(kIntDim);
  critic_state_ = VectorXd::Zero(kCriticDim);
  o_ring_ = MatrixXd::Zero(kObsDim, kObsHistory);
  scan_ring_ = MatrixXd::Zero(kScanDim, opt_.scan_history_len);
}

void Env::fix_command(const Command& c) {
  command_ = c;
  command_fixed_ = true;
}

void Env::fix_period(double period) {
  fixed_period_ = period;
  period_fixed_ = true;
}

void Env::randomize_episode() {
  const auto& rr = opt_.ranges;
  double payload = rr.payload.sample(rng_);
  Vector3d com(rr.com_shift.sample(rng_), rr.com_shift.sample(rng_), rr.com_shift.sample(rng_));
  double friction = rr.friction.sample(rng_);
  double restitution = rr.restitution.sample(rng_);
  VectorXd kp(kNumJoints), kd(kNumJoints);
  for (int j = 0; j < kNumJoints; ++j) {
    kp[j] = rr.joint_kp.sample(rng_);
    kd[j] = rr.joint_kd.sample(rng_);
  }
  double deck_mass = rr.deck_mass.sample(rng_);
  double truck_kp = rr.truck_kp.sample(rng_);
  double truck_kd = rr.truck_kd.sample(rng_);
  double bushing_kp = rr.bushing_kp.sample(rng_);
  double bushing_kd = rr.bushing_kd.sample(rng_);

  x_int_ = pack_intrinsics(payload, com, friction, restitution, kp, kd, deck_mass, truck_kp,
                           truck_kd, bushing_kp, bushing_kd);

  rider_params_ = rider_base_;
  rider_params_.payload_mass = payload;
  rider_params_.com_offset = com;
  rider_params_.friction_coeff = friction;
  rider_params_.restitution = restitution;
  rider_params_.joint_kp = kp;
  rider_params_.joint_kd = kd;

  board_params_ = board_base_;
  board_params_.mass = deck_mass;
  board_params_.truck_yaw_kp = truck_kp;
  board_params_.truck_yaw_kd = truck_kd;
  board_params_.bushing_kp = bushing_kp;
  board_params_.bushing_kd = bushing_kd;
}

void Env::apply_reset_state() {
  board_ = BoardState{};
  board_.deck_height = board_params_.deck_height;

  rider_ = RiderState{};
  rider_.q = rider_params_.q_nominal;
  for (int j = 0; j < kNumJoints; ++j)
    rider_.q[j] += rng_.uniform(-opt_.init_joint_dev, opt_.init_joint_dev);
  rider_.q = rider_.q.cwiseMax(rider_params_.q_lower).cwiseMin(rider_params_.q_upper);

  // Trunk over the deck center at crouch height, with small deviations.
  Vector3d nominal_foot =
      leg_forward_kinematics(rider_params_.q_nominal.segment<3>(0), 0, rider_params_);
  double crouch = -nominal_foot.z();
  Vector3d dev(rng_.uniform(-opt_.init_pos_dev, opt_.init_pos_dev),
               rng_.uniform(-opt_.init_pos_dev, opt_.init_pos_dev),
               rng_.uniform(-opt_.init_pos_dev, opt_.init_pos_dev));
  rider_.trunk_position = Vector3d(0.0, 0.0, board_.deck_height + crouch) + dev;

  for (int leg = 0; leg < kNumLegs; ++leg) {
    Vector3d q_leg(rider_.q[3 * leg], rider_.q[3 * leg + 1], rider_.q[3 * leg + 2]);
    rider_.foot_positions[leg] =
        rider_.trunk_position + leg_forward_kinematics(q_leg, leg, rider_params_);
    rider_.foot_velocities[leg] = Vector3d::Zero();
  }
}

void Env::reset(const CurriculumGrid* curriculum) {
  uint64_t stream = static_cast<uint64_t>(env_index_) * 0x10000ull + episode_count_;
  rng_ = Rng::stream(master_seed_, rngp::kEnvEpisode, stream);
  perturb_rng_ = Rng::stream(master_seed_, rngp::kEnvPerturb, stream);
  episode_count_ += 1;
  curriculum_ = curriculum;

  randomize_episode();
  apply_reset_state();

  period_ = period_fixed_ ? fixed_period_ : rng_.uniform(opt_.period_min, opt_.period_max);
  if (!command_fixed_) {
    if (opt_.uniform_commands)
      command_ = Command{rng_.uniform(0.0, 1.5), rng_.uniform(-0.5, 0.5)};
    else if (curriculum)
      command_ = curriculum->sample(rng_);
    else
      command_ = Command{0.0, 0.0};
  }

  clock_t_ = 0.0;
  phase_now_ = 0.0;
  prev_action_.setZero();
  prev_trunk_vel_.setZero();
  prev_deck_vel_w_.setZero();
  prev_deck_omega_s_.setZero();
  next_impulse_time_ = opt_.impulse_period;
  impulse_end_time_ = -1.0;
  next_resample_time_ = opt_.command_resample_period;
  segment_err_sum_ = 0.0;
  segment_steps_ = 0;
  last_terminated_ = false;

  rebuild_observation(0.0);
  for (int i = 0; i < kObsHistory; ++i) o_ring_.col(i) = o_;
  for (int i = 0; i < opt_.scan_history_len; ++i) scan_ring_.col(i) = scan_;
  o_head_ = 0;
  scan_head_ = 0;
}

double Env::step_tracking_error(Mode mode) const {
  if (mode == Mode::Pushing) return std::abs(command_.v - board_.speed_long);
  if (mode == Mode::Carving) return std::abs(command_.w - board_.yaw_rate);
  return 0.0;
}

void Env::push_segment_report() {
  // Proficiency is judged over the command-tracking modes only; a terminated
  // episode reports a failure-grade error regardless of how long it lasted.
  if (last_terminated_) {
    double mean = segment_gated_steps_ > 0 ? segment_err_sum_ / segment_gated_steps_ : 0.0;
    reports_.push_back({command_, std::max(mean, 1.0), segment_steps_});
  } else if (segment_gated_steps_ >= 10) {
    reports_.push_back({command_, segment_err_sum_ / segment_gated_steps_, segment_steps_});
  }
  segment_err_sum_ = 0.0;
  segment_steps_ = 0;
  segment_gated_steps_ = 0;
}

std::vector<Env::SegmentReport> Env::drain_reports() {
  auto out = reports_;
  reports_.clear();
  return out;
}

bool Env::violates(const RiderState& rider, const BoardState& board, const EnvOptions& opt) {
  if (std::abs(rider.trunk_euler.x()) > opt.term_tilt ||
      std::abs(rider.trunk_euler.y()) > opt.term_tilt)
    return true;
  Vector2d d = rider.trunk_position.head<2>() - board.position_xy;
  if (d.norm() > opt.term_distance) return true;
  if (rider.trunk_position.z() < opt.term_height) return true;
  return false;
}

bool Env::check_termination() const { return violates(rider_, board_, opt_); }

EnvStepResult Env::step_core(const VectorXd& action, std::optional<double> phase_override) {
  EnvStepResult out;

  VectorXd clipped = action.cwiseMax(-opt_.action_clamp).cwiseMin(opt_.action_clamp);
  VectorXd q_target = rider_params_.q_nominal + clipped;

  double phase = phase_override ? *phase_override : phase_of(clock_t_, period_);
  Mode mode = mode_of(phase);

  // Perturbation schedule.
  if (opt_.enable_impulses && clock_t_ + 1e-9 >= next_impulse_time_) {
    double a1 = perturb_rng_.uniform(0.0, 2.0 * M_PI);
    double a2 = perturb_rng_.uniform(0.0, 2.0 * M_PI);
    impulse_trunk_ = opt_.trunk_impulse_force * Vector3d(std::cos(a1), std::sin(a1), 0.0);
    impulse_deck_w_ = opt_.deck_impulse_force * Vector3d(std::cos(a2), std::sin(a2), 0.0);
    impulse_end_time_ = clock_t_ + opt_.impulse_duration;
    next_impulse_time_ += opt_.impulse_period;
    out.impulse_applied = true;
  }
  bool impulse_active = clock_t_ < impulse_end_time_;

  double dt = opt_.control_dt / opt_.substeps;
  bool degenerate = false;
  for (int sub = 0; sub < opt_.substeps; ++sub) {
    Vector3d trunk_force = impulse_active ? impulse_trunk_ : Vector3d::Zero();
    RiderStepResult rr =
        rider_step(rider_, q_target, board_, board_params_, dt, rider_params_, trunk_force);
    DeckWrench wrench = rr.wrench;
    if (impulse_active) {
      DeckPose pose = deck_pose(board_, board_params_);
      wrench.force_s += pose.rot_s.transpose() * impulse_deck_w_;
    }
    BoardStepResult br = board_step(board_, wrench, dt, board_params_);
    degenerate = degenerate || rr.degenerate || br.degenerate;
    rider_ = rr.state;
    board_ = br.state;
    if (degenerate) break;
  }

  bool violated = degenerate || check_termination();

  // Reward uses the mode the policy was acting in.
  RewardInputs in;
  {
    DeckPose pose = deck_pose(board_, board_params_);
    Matrix3d rs_t = pose.rot_s.transpose();
    Matrix3d rb = euler_xyz_to_rot(rider_.trunk_euler);

    in.board_yaw_rate = board_.yaw_rate;
    in.board_speed_long = board_.speed_long;
    in.board_speed_lat = board_.speed_lat;

    in.p_body_s = rs_t * (rider_.trunk_position - pose.origin);
    in.theta_body_s = rot_to_euler_xyz(rs_t * rb);

    Vector3d board_vel_w = pose.rot_s * Vector3d(board_.speed_long, board_.speed_lat, 0.0);
    in.v_body_rel_s = (rs_t * (rider_.trunk_lin_vel - board_vel_w)).head<2>();

    Vector3d board_omega_w = pose.rot_s * Vector3d(board_.deck_roll_rate, 0.0, 0.0) +
                             Vector3d(0.0, 0.0, board_.yaw_rate);
    for (int i = 0; i < 4; ++i) {
      in.p_foot_s[i] = rs_t * (rider_.foot_positions[i] - pose.origin);
      Vector3d surf_vel =
          board_vel_w + board_omega_w.cross(rider_.foot_positions[i] - pose.origin);
      in.v_foot_deck[i] =
          (pose.rot.transpose() * (rider_.foot_velocities[i] - surf_vel)).head<2>();
      in.v_foot_world[i] = rider_.foot_velocities[i].head<2>();
      in.p_foot_world_z[i] = rider_.foot_positions[i].z();
      in.contact[i] = rider_.foot_contact[i];
      in.on_edge[i] = rider_.foot_on_edge[i];
      in.foot_force_norm[i] = rider_.foot_forces[i].norm();
    }

    in.q = rider_.q;
    in.q_dot = rider_.q_dot;
    in.q_ddot = rider_.q_ddot;
    in.tau_q = rider_.tau_q;
    in.action = clipped;
    in.prev_action = prev_action_;

    in.trunk_acc_w = (rider_.trunk_lin_vel - prev_trunk_vel_) / opt_.control_dt;
    in.trunk_ang_vel_xy = rider_.trunk_ang_vel.head<2>();
    in.trunk_vel_z = rider_.trunk_lin_vel.z();
    in.deck_acc_w = (board_vel_w - prev_deck_vel_w_) / opt_.control_dt;
    Vector3d deck_omega_s(board_.deck_roll_rate, 0.0, board_.yaw_rate);
    in.deck_ang_vel_y_s = deck_omega_s.y();
    in.deck_ang_acc_s = (deck_omega_s - prev_deck_omega_s_) / opt_.control_dt;

    in.collision = rider_.collided;
    in.termination = violated;
    in.joint_limit = rider_.joint_limit_hit;

    prev_trunk_vel_ = rider_.trunk_lin_vel;
    prev_deck_vel_w_ = board_vel_w;
    prev_deck_omega_s_ = deck_omega_s;
  }

  RewardResult rw = reward_terms(in, mode, command_, opt_.poses);
  out.reward = rw.total;
  out.terms = rw.terms;

  if (mode != Mode::Transition) {
    segment_err_sum_ += step_tracking_error(mode);
    segment_gated_steps_ += 1;
  }
  segment_steps_ += 1;

  clock_t_ += opt_.control_dt;
  phase_now_ = phase_override ? *phase_override : phase_of(clock_t_, period_);

  if (opt_.resample_commands && !command_fixed_ && clock_t_ + 1e-9 >= next_resample_time_) {
    push_segment_report();
    if (opt_.uniform_commands)
      command_ = Command{rng_.uniform(0.0, 1.5), rng_.uniform(-0.5, 0.5)};
    else if (curriculum_)
      command_ = curriculum_->sample(rng_);
    next_resample_time_ += opt_.command_resample_period;
    out.command_resampled = true;
  }

  out.timeout = clock_t_ + 1e-9 >= opt_.max_episode_time;
  out.terminated = violated;
  out.done = violated || out.timeout;
  last_terminated_ = violated;
  if (out.done) push_segment_report();

  rebuild_observation(phase_now_);
  prev_action_ = clipped;

  o_ring_.col(o_head_) = o_;
  o_head_ = (o_head_ + 1) % kObsHistory;
  scan_ring_.col(scan_head_) = scan_;
  scan_head_ = (scan_head_ + 1) % opt_.scan_history_len;

  return out;
}

EnvStepResult Env::step(const VectorXd& action, ObservationBundle& bundle,
                        std::optional<double> phase_override) {
  EnvStepResult r = step_core(action, phase_override);
  observe(bundle);
  return r;
}

void Env::synthesize_scan(VectorXd& scan) const {
  scan.resize(kScanDim);
  DeckPose pose = deck_pose(board_, board_params_);
  Vector3d n = pose.rot.col(2); // deck plane normal

  double yaw = rider_.trunk_euler.z();
  double cy = std::cos(yaw), sy = std::sin(yaw);
  double cx = rider_.trunk_position.x();
  double cyw = rider_.trunk_position.y();

  int idx = 0;
  auto emit = [&](double lx, double ly) {
    double px = cx + cy * lx - sy * ly;
    double py = cyw + sy * lx + cy * ly;
    // Intersect the vertical line with the deck plane, then test membership.
    double height = 0.0, flag = 0.0;
    if (std::abs(n.z()) > 1e-6) {
      double z = pose.origin.z() -
                 (n.x() * (px - pose.origin.x()) + n.y() * (py - pose.origin.y())) / n.z();
      Vector3d local = pose.rot.transpose() * (Vector3d(px, py, z) - pose.origin);
      if (std::abs(local.x()) <= pose.half_length && std::abs(local.y()) <= pose.half_width) {
        height = z;
        flag = 1.0;
      }
    }
    scan[idx] = height;
    scan[kScanPoints + idx] = flag;
    ++idx;
  };

  emit(0.0, 0.0);
  const int counts[3] = {6, 12, 24};
  const double radii[3] = {0.12, 0.25, 0.45};
  for (int ring = 0; ring < 3; ++ring) {
    for (int k = 0; k < counts[ring]; ++k) {
      double a = 2.0 * M_PI * k / counts[ring];
      emit(radii[ring] * std::cos(a), radii[ring] * std::sin(a));
    }
  }
}

void Env::build_x_ext(VectorXd& x_ext) const {
  x_ext.resize(kExtDim);
  DeckPose pose = deck_pose(board_, board_params_);
  Matrix3d rb = euler_xyz_to_rot(rider_.trunk_euler);
  Vector3d rel_pos = rb.transpose() * (pose.origin - rider_.trunk_position);
  Vector3d rel_euler = rot_to_euler_xyz(rb.transpose() * pose.rot);
  x_ext.segment<3>(0) = rel_pos;
  x_ext.segment<3>(3) = rel_euler;
  for (int i = 0; i < 4; ++i) {
    x_ext[6 + i] = rider_.foot_contact[i] ? 1.0 : 0.0;
    x_ext[10 + i] = rider_.foot_on_deck[i] ? 1.0 : 0.0;
  }
}

void Env::rebuild_observation(double phase) {
  Vector2d embed = phase_embed(phase);

  o_[0] = rider_.trunk_euler.x();
  o_[1] = rider_.trunk_euler.y();
  o_.segment<3>(2) = rider_.trunk_ang_vel;
  o_.segment(5, kNumJoints) = rider_.q;
  o_.segment(17, kNumJoints) = rider_.q_dot;
  o_[29] = command_.v;
  o_[30] = command_.w;
  o_[31] = embed.x();
  o_[32] = embed.y();
  o_.segment(33, kActDim) = prev_action_;

  synthesize_scan(scan_);
  build_x_ext(x_ext_);

  critic_state_.segment(0, kObsDim) = o_;
  critic_state_.segment(kObsDim, kScanDim) = scan_;
  critic_state_.segment(kObsDim + kScanDim, kExtDim) = x_ext_;
  critic_state_.segment(kObsDim + kScanDim + kExtDim, kIntDim) = normalize_intrinsics(x_int_);
  int base = kObsDim + kScanDim + kExtDim + kIntDim;
  critic_state_.segment<3>(base) = rider_.trunk_lin_vel;
  critic_state_[base + 3] = board_.speed_long;
  critic_state_[base + 4] = board_.speed_lat;
  critic_state_[base + 5] = board_.yaw_rate;
  critic_state_[base + 6] = board_.deck_roll;
  critic_state_[base + 7] = board_.deck_roll_rate;
  critic_state_[base + 8] = board_.axle_yaw_front;
  critic_state_[base + 9] = board_.axle_yaw_rear;
  for (int w = 0; w < 4; ++w) critic_state_[base + 10 + w] = board_.wheel_omega[w];
}

void Env::scan_window(int window, double* dst) const {
  int len = opt_.scan_history_len;
  // Ring head points at the slot that will be written next; the newest
  // column is head-1. Current frame scan_ equals the newest column.
  for (int k = 0; k < window; ++k) {
    int col = (scan_head_ - window + k + 8 * len) % len;
    Eigen::Map<VectorXd>(dst + k * kScanDim, kScanDim) = scan_ring_.col(col);
  }
}

void Env::o_window(int window, double* dst) const {
  int len = kObsHistory;
  for (int k = 0; k < window; ++k) {
    int col = (o_head_ - window + k + 8 * len) % len;
    Eigen::Map<VectorXd>(dst + k * kObsDim, kObsDim) = o_ring_.col(col);
  }
}

void Env::observe(ObservationBundle& bundle) const {
  bundle.o = o_;
  bundle.x_scan = scan_;
  bundle.x_ext = x_ext_;
  bundle.x_int = x_int_;
  bundle.critic_state = critic_state_;
  bundle.o_history.resize(kObsDim, kObsHistory);
  o_window(kObsHistory, bundle.o_history.data());
  bundle.scan_history.resize(kScanDim, opt_.scan_history_len);
  scan_window(opt_.scan_history_len, bundle.scan_history.data());
}

}  // namespace skate
