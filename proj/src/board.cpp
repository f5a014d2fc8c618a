#include "skate/board.hpp"

#include <cmath>

namespace skate {

namespace {

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

bool BoardParams::valid() const {
  bool pos = mass > 0 && wheel_radius > 0 && wheelbase > 0 && inertia_roll > 0 &&
             axle_inertia > 0 && wheel_inertia > 0 && bushing_kp > 0 && bushing_kd > 0 &&
             truck_yaw_kp > 0 && truck_yaw_kd > 0 && gravity > 0 && omega_eps > 0 &&
             tau_static >= 0 && mu_roll >= 0 && c_damp >= 0 && deck_length > 0 &&
             deck_width > 0 && deck_height > 0;
  bool gam = gamma1_front > 0 && gamma1_rear > 0 && gamma2_front > 0 && gamma2_front <= 2.0 &&
             gamma2_rear > 0 && gamma2_rear <= 2.0;
  return pos && gam;
}

bool BoardState::finite() const {
  bool ok = position_xy.allFinite() && std::isfinite(heading) && std::isfinite(speed_long) &&
            std::isfinite(speed_lat) && std::isfinite(yaw_rate) && std::isfinite(deck_roll) &&
            std::isfinite(deck_roll_rate) && std::isfinite(axle_yaw_front) &&
            std::isfinite(axle_yaw_rear) && std::isfinite(axle_yaw_rate_front) &&
            std::isfinite(axle_yaw_rate_rear) && std::isfinite(deck_height);
  for (double w : wheel_omega) ok = ok && std::isfinite(w);
  return ok;
}

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  return a - M_PI;
}

std::pair<double, double> steering_target(double deck_roll, const BoardParams& p) {
  double front = std::atan(p.gamma1_front * std::sin(p.gamma2_front * deck_roll));
  double rear = std::atan(p.gamma1_rear * std::sin(p.gamma2_rear * deck_roll));
  return {front, rear};
}

void axle_yaw_step(BoardState& s, double target_front, double target_rear, const BoardParams& p,
                   double dt) {
  auto pd = [&](double& yaw, double& rate, double target) {
    double acc = (p.truck_yaw_kp * (target - yaw) - p.truck_yaw_kd * rate) / p.axle_inertia;
    rate += dt * acc;
    yaw += dt * rate;
  };
  pd(s.axle_yaw_front, s.axle_yaw_rate_front, target_front);
  pd(s.axle_yaw_rear, s.axle_yaw_rate_rear, target_rear);
}

double deck_contact_torque(const std::vector<Vector3d>& foot_positions_deck,
                           const std::vector<Vector3d>& foot_forces_deck) {
  double torque = 0.0;
  for (size_t i = 0; i < foot_positions_deck.size(); ++i) {
    const Vector3d& pos = foot_positions_deck[i];
    const Vector3d& f = foot_forces_deck[i];
    torque += pos.y() * f.z() - pos.z() * f.y();
  }
  return torque;
}

double deck_roll_accel(double roll_torque, double deck_roll, double deck_roll_rate,
                       const BoardParams& p) {
  return (-p.bushing_kp * deck_roll - p.bushing_kd * deck_roll_rate + roll_torque) /
         p.inertia_roll;
}

Vector3d net_deck_force(const std::vector<Vector3d>& foot_forces_s, const BoardParams& p) {
  Vector3d f = Vector3d::Zero();
  for (const Vector3d& ff : foot_forces_s) f -= ff;
  f.z() -= p.mass * p.gravity;
  return f;
}

double drive_torque(const Vector3d& net_force_s, double axle_yaw, const BoardParams& p) {
  double f_drive = net_force_s.x() * std::cos(axle_yaw) + net_force_s.y() * std::sin(axle_yaw);
  return 0.5 * p.wheel_radius * f_drive;
}

double friction_torque(double wheel_omega, double tau_ext, const BoardParams& p) {
  if (std::abs(wheel_omega) < p.omega_eps) {
    return std::min(std::abs(tau_ext), p.tau_static) * sign(tau_ext);
  }
  return p.c_damp * wheel_omega +
         p.wheel_radius * p.mu_roll * p.mass * p.gravity * sign(wheel_omega);
}

BoardStepResult board_step(const BoardState& state, const DeckWrench& wrench, double dt,
                           const BoardParams& p) {
  BoardState s = state;

  auto [target_front, target_rear] = steering_target(s.deck_roll, p);
  axle_yaw_step(s, target_front, target_rear, p, dt);

  // Net force on the board: rider load plus board weight.
  Vector3d f_net = wrench.force_s;
  f_net.z() -= p.mass * p.gravity;

  double tau_ext_front = drive_torque(f_net, s.axle_yaw_front, p);
  double tau_ext_rear = drive_torque(f_net, s.axle_yaw_rear, p);

  double tau_ext_sum = 0.0, tau_fric_sum = 0.0;
  std::array<double, 4> tau_net{};
  for (int w = 0; w < 4; ++w) {
    double tau_ext = (w < 2) ? tau_ext_front : tau_ext_rear;
    double tau_fric = friction_torque(s.wheel_omega[w], tau_ext, p);
    tau_net[w] = tau_ext - tau_fric;
    tau_ext_sum += tau_ext;
    tau_fric_sum += tau_fric;
  }

  // Friction may brake the board to rest within a step but never reverse it.
  double v_drive = s.speed_long + dt * tau_ext_sum / (p.wheel_radius * p.mass);
  double dv_fric = dt * tau_fric_sum / (p.wheel_radius * p.mass);
  if (v_drive != 0.0 && v_drive * (v_drive - dv_fric) <= 0.0)
    s.speed_long = 0.0;
  else
    s.speed_long = v_drive - dv_fric;

  // Wheels: torque-driven with slip damping toward the rolling speed. The
  // damping is implicit so stiff tracking stays stable at 5 ms, and wheel
  // friction may stop a wheel within a step but never spin it backward.
  double k_slip = p.slip_damping * p.wheel_radius * p.wheel_radius / p.wheel_inertia;
  double rolling = s.speed_long / p.wheel_radius;
  for (int w = 0; w < 4; ++w) {
    double tau_ext = (w < 2) ? tau_ext_front : tau_ext_rear;
    double tau_fric = tau_ext - tau_net[w];
    double omega = (s.wheel_omega[w] + dt * tau_ext / p.wheel_inertia +
                    dt * k_slip * rolling) /
                   (1.0 + dt * k_slip);
    double braked = omega - dt * tau_fric / p.wheel_inertia / (1.0 + dt * k_slip);
    s.wheel_omega[w] = (omega != 0.0 && omega * braked <= 0.0) ? 0.0 : braked;
  }

  // Deck roll under bushing PD plus the rider contact torque.
  double roll_acc = deck_roll_accel(wrench.roll_torque, s.deck_roll, s.deck_roll_rate, p);
  s.deck_roll_rate += dt * roll_acc;
  s.deck_roll += dt * s.deck_roll_rate;
  constexpr double kRollLimit = M_PI / 2.0 - 0.02;
  if (s.deck_roll > kRollLimit) {
    s.deck_roll = kRollLimit;
    s.deck_roll_rate = std::min(s.deck_roll_rate, 0.0);
  } else if (s.deck_roll < -kRollLimit) {
    s.deck_roll = -kRollLimit;
    s.deck_roll_rate = std::max(s.deck_roll_rate, 0.0);
  }

  // Two-steered-axle bicycle kinematics for yaw; lateral velocity relaxes to
  // the kinematically consistent value, leaving bounded transient slip.
  double tf = std::tan(s.axle_yaw_front);
  double tr = std::tan(s.axle_yaw_rear);
  s.yaw_rate = s.speed_long * (tf - tr) / p.wheelbase;
  s.heading = wrap_angle(s.heading + dt * s.yaw_rate);

  double lat_kin = 0.5 * s.speed_long * (tf + tr);
  double lat = s.speed_lat + dt * wrench.force_s.y() / p.mass;
  double decay = std::exp(-dt / p.lateral_time_const);
  s.speed_lat = lat_kin + (lat - lat_kin) * decay;

  double ch = std::cos(s.heading), sh = std::sin(s.heading);
  s.position_xy.x() += dt * (ch * s.speed_long - sh * s.speed_lat);
  s.position_xy.y() += dt * (sh * s.speed_long + ch * s.speed_lat);

  BoardStepResult result;
  result.state = s;
  result.degenerate = !s.finite();
  if (result.degenerate) result.state = state;
  return result;
}

DeckPose deck_pose(const BoardState& s, const BoardParams& p) {
  DeckPose pose;
  pose.origin = Vector3d(s.position_xy.x(), s.position_xy.y(), s.deck_height);
  Matrix3d rz = Eigen::AngleAxisd(s.heading, Vector3d::UnitZ()).toRotationMatrix();
  Matrix3d rx = Eigen::AngleAxisd(s.deck_roll, Vector3d::UnitX()).toRotationMatrix();
  pose.rot_s = rz;
  pose.rot = rz * rx;
  pose.half_length = 0.5 * p.deck_length;
  pose.half_width = 0.5 * p.deck_width;
  return pose;
}

}  // namespace skate
