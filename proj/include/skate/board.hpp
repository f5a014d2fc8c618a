#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

namespace skate {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

// Mechanical constants of the board. Roll-to-yaw coupling constants gamma,
// bushing gains, truck-yaw PD gains and the wheel friction model live here;
// everything is runtime configuration so domain randomization can touch it.
struct BoardParams {
  double gamma1_front = 1.0;
  double gamma2_front = 1.12;
  double gamma1_rear = 0.7;
  double gamma2_rear = 0.9;

  double bushing_kp = 32.5;   // N*m/rad
  double bushing_kd = 1.9;    // N*m*s/rad
  double inertia_roll = 0.03; // kg*m^2, deck about its long axis

  double truck_yaw_kp = 47.5; // N*m/rad
  double truck_yaw_kd = 2.75; // N*m*s/rad
  double axle_inertia = 0.02; // kg*m^2 about the steering axis

  double mass = 4.0;          // kg
  double wheel_radius = 0.05; // m
  double wheelbase = 0.43;    // m
  double deck_length = 0.69;  // m
  double deck_width = 0.27;   // m
  double deck_height = 0.13;  // m, top surface above ground

  double tau_static = 0.05; // N*m, static friction limit
  double mu_roll = 0.01;    // rolling resistance coefficient
  double c_damp = 0.001;    // N*m*s/rad, viscous wheel damping
  double omega_eps = 0.05;  // rad/s, static/dynamic switch

  double gravity = 9.81;

  double wheel_inertia = 1e-4;     // kg*m^2
  double slip_damping = 50.0;      // N*s/m, pulls wheel speed to rolling
  double lateral_time_const = 0.02; // s, lateral slip decay

  bool valid() const;
};

// Planar board: pose (x, y, heading) plus deck roll, axle yaws and wheel
// speeds. Velocities are expressed in the skateboard frame S (x forward).
struct BoardState {
  Vector2d position_xy{0.0, 0.0};
  double heading = 0.0;     // rad, wrapped to [-pi, pi)
  double speed_long = 0.0;  // m/s, v_x in S
  double speed_lat = 0.0;   // m/s, v_y in S
  double yaw_rate = 0.0;    // rad/s
  double deck_roll = 0.0;   // rad
  double deck_roll_rate = 0.0;
  double axle_yaw_front = 0.0;
  double axle_yaw_rear = 0.0;
  double axle_yaw_rate_front = 0.0;
  double axle_yaw_rate_rear = 0.0;
  std::array<double, 4> wheel_omega{0.0, 0.0, 0.0, 0.0}; // FL FR RL RR
  double deck_height = 0.13;

  bool finite() const;
};

// Load the rider exerts on the board within one substep. force_s is the sum
// of the foot forces applied to the deck expressed in S (gravity is added by
// the stepper); roll_torque is the deck-frame x torque of those contacts.
struct DeckWrench {
  Vector3d force_s{0.0, 0.0, 0.0};
  double roll_torque = 0.0;
};

struct BoardStepResult {
  BoardState state;
  bool degenerate = false;
};

// Roll-to-yaw coupling: delta_i = atan(gamma1_i * sin(gamma2_i * roll)).
std::pair<double, double> steering_target(double deck_roll, const BoardParams& params);

// One semi-implicit PD step of both axle yaws toward their targets.
void axle_yaw_step(BoardState& state, double target_front, double target_rear,
                   const BoardParams& params, double dt);

// x component of sum(p x f) over feet on the deck, deck frame quantities.
// Forces here are the forces applied to the deck.
double deck_contact_torque(const std::vector<Vector3d>& foot_positions_deck,
                           const std::vector<Vector3d>& foot_forces_deck);

// (-kp*roll - kd*roll_rate + roll_torque) / I_roll
double deck_roll_accel(double roll_torque, double deck_roll, double deck_roll_rate,
                       const BoardParams& params);

// -sum(contact forces on feet) + m*g, skateboard frame.
Vector3d net_deck_force(const std::vector<Vector3d>& foot_forces_s, const BoardParams& params);

// Projects the net deck force on the axle rolling direction and converts it
// to a per-wheel torque: tau_ext = (r/2) * f . (cos d, sin d, 0).
double drive_torque(const Vector3d& net_force_s, double axle_yaw, const BoardParams& params);

// Static regime cancels sub-limit torque exactly; dynamic regime is viscous
// damping plus rolling resistance, both signed with the wheel speed.
double friction_torque(double wheel_omega, double tau_ext, const BoardParams& params);

// Full substep: steering targets, axle PD, wheel torques, longitudinal and
// lateral velocity, bicycle yaw kinematics, deck roll, pose integration.
BoardStepResult board_step(const BoardState& state, const DeckWrench& wrench, double dt,
                           const BoardParams& params);

// Pose of the deck in the world: origin at deck-center top surface, rotation
// heading about z then roll about the board x axis.
struct DeckPose {
  Vector3d origin;
  Matrix3d rot;      // deck frame -> world
  Matrix3d rot_s;    // skateboard frame -> world (heading only)
  double half_length;
  double half_width;
};

DeckPose deck_pose(const BoardState& state, const BoardParams& params);

double wrap_angle(double a);

}  // namespace skate
