#pragma once

#include <Eigen/Dense>
#include <array>

#include "skate/board.hpp"

namespace skate {

using Eigen::VectorXd;

// Leg order FL, FR, RL, RR; joints per leg (abduction, hip pitch, knee).
constexpr int kNumLegs = 4;
constexpr int kNumJoints = 12;
constexpr std::array<int, 2> kLeftLegs{0, 2};
constexpr std::array<int, 2> kRightLegs{1, 3};

struct RiderParams {
  double trunk_mass = 12.0;
  Vector3d trunk_inertia{0.1, 0.25, 0.3}; // diagonal, body frame
  std::array<Vector3d, 4> hip_offsets{Vector3d(0.19, 0.05, 0.0), Vector3d(0.19, -0.05, 0.0),
                                      Vector3d(-0.19, 0.05, 0.0), Vector3d(-0.19, -0.05, 0.0)};
  double link1 = 0.21;
  double link2 = 0.21;

  VectorXd joint_kp = VectorXd::Constant(kNumJoints, 40.0);
  VectorXd joint_kd = VectorXd::Constant(kNumJoints, 1.0);
  VectorXd q_nominal;     // crouching posture
  VectorXd q_lower;
  VectorXd q_upper;
  double torque_limit = 23.7;           // N*m
  double joint_response_inertia = 0.25; // kg*m^2, sets the tracking bandwidth

  double foot_force_cap = 200.0;      // N
  double contact_kp = 1e4;            // N/m
  double contact_kd = 200.0;          // N*s/m
  double contact_damping_ramp = 0.003; // m, damping fades in with penetration
  double tangential_stiffness = 1e4;  // N/m, stick anchor spring
  double tangential_damping = 200.0;  // N*s/m
  double friction_coeff = 1.0;
  double restitution = 0.0;

  double payload_mass = 0.0;
  Vector3d com_offset{0.0, 0.0, 0.0};
  double gravity = 9.81;
  double collision_clearance = 0.10; // trunk height over support counted as collision
  double edge_band = 0.02;           // m, on-edge band inside the deck boundary

  RiderParams();
  bool valid() const;
};

// Stick-slip anchor of one foot contact, in surface-local coordinates.
// surface: 0 = none, 1 = ground, 2 = deck.
struct ContactAnchor {
  Vector2d point{0.0, 0.0};
  int surface = 0;
};

struct RiderState {
  Vector3d trunk_position{0.0, 0.0, 0.35};
  Vector3d trunk_euler{0.0, 0.0, 0.0}; // XYZ Euler
  Vector3d trunk_lin_vel{0.0, 0.0, 0.0};
  Vector3d trunk_ang_vel{0.0, 0.0, 0.0}; // body frame
  VectorXd q;
  VectorXd q_dot;
  VectorXd q_ddot;
  VectorXd tau_q;
  std::array<Vector3d, 4> foot_positions{};  // world
  std::array<Vector3d, 4> foot_velocities{}; // world
  std::array<Vector3d, 4> foot_forces{};     // world, contact reaction on foot
  std::array<ContactAnchor, 4> foot_anchor{};
  std::array<bool, 4> foot_contact{false, false, false, false};
  std::array<bool, 4> foot_on_deck{false, false, false, false};
  std::array<bool, 4> foot_on_edge{false, false, false, false};
  bool joint_limit_hit = false;
  bool collided = false;

  RiderState();
  bool finite() const;
};

struct ContactResult {
  Vector3d force = Vector3d::Zero(); // world, on the foot
  bool in_contact = false;
  bool on_deck = false;
  bool on_edge = false;
};

struct IkResult {
  Vector3d q_leg;
  bool reachable = true;
};

Matrix3d euler_xyz_to_rot(const Vector3d& euler);

// Inverse of euler_xyz_to_rot with pitch in (-pi/2, pi/2).
Vector3d rot_to_euler_xyz(const Matrix3d& rot);

// Foot position in the body frame for one leg.
Vector3d leg_forward_kinematics(const Vector3d& q_leg, int leg_index, const RiderParams& params);

// Closed-form 3-DOF IK, elbow-backward branch; unreachable targets clamp to
// the workspace boundary and flag it.
IkResult leg_inverse_kinematics(const Vector3d& foot_target, int leg_index,
                                const RiderParams& params);

// Penalty contact against the flat ground or the (possibly rolled) deck.
// surface_vel is the velocity of the surface material point under the foot.
// With an anchor the tangential force is a stick spring clamped to the
// friction cone (the anchor drags when the cone saturates); without one it
// is purely viscous.
ContactResult foot_contact(const Vector3d& foot_pos, const Vector3d& foot_vel,
                           const DeckPose* deck, const Vector3d& surface_vel,
                           const RiderParams& params, ContactAnchor* anchor = nullptr);

struct RiderStepResult {
  RiderState state;
  DeckWrench wrench;
  bool degenerate = false;
};

// One substep: joint PD torques, critically damped joint tracking, contacts
// against ground and deck, trunk rigid-body integration, and the wrench the
// feet apply to the deck. ext_force_world is an optional perturbation.
RiderStepResult rider_step(const RiderState& state, const VectorXd& q_target,
                           const BoardState& board, const BoardParams& board_params, double dt,
                           const RiderParams& params,
                           const Vector3d& ext_force_world = Vector3d::Zero());

}  // namespace skate
