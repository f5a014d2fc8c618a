#pragma once

#include <Eigen/Dense>
#include <array>

#include "skate/rider.hpp"

namespace skate {

enum class Mode { Carving, Pushing, Transition };

struct Command {
  double v = 0.0; // m/s forward
  double w = 0.0; // rad/s yaw
};

// Everything the reward table reads, assembled by the environment once per
// control step. Frames: S = skateboard (heading only), D = deck (rolled),
// W = world, B = body.
struct RewardInputs {
  double board_yaw_rate = 0.0;   // omega^S_{D,z}
  double board_speed_long = 0.0; // v^S_{D,x}
  double board_speed_lat = 0.0;  // v^S_{D,y}

  Vector3d p_body_s = Vector3d::Zero();     // body position in S
  Vector3d theta_body_s = Vector3d::Zero(); // body orientation rel. S, XYZ Euler
  Vector2d v_body_rel_s = Vector2d::Zero(); // body velocity rel. board, S, xy

  std::array<Vector3d, 4> p_foot_s{};    // foot positions in S
  std::array<Vector2d, 4> v_foot_deck{}; // foot velocity rel. deck, xy
  std::array<Vector2d, 4> v_foot_world{};
  std::array<double, 4> p_foot_world_z{};
  std::array<bool, 4> contact{};
  std::array<bool, 4> on_edge{};
  std::array<double, 4> foot_force_norm{};

  VectorXd q, q_dot, q_ddot, tau_q; // 12 each
  VectorXd action, prev_action;     // 12 each

  Vector3d trunk_acc_w = Vector3d::Zero();
  Vector2d trunk_ang_vel_xy = Vector2d::Zero(); // omega^B_{B,xy}
  double trunk_vel_z = 0.0;                     // v^W_{B,z}
  Vector3d deck_acc_w = Vector3d::Zero();
  double deck_ang_vel_y_s = 0.0;
  Vector3d deck_ang_acc_s = Vector3d::Zero();

  bool collision = false;
  bool termination = false;
  bool joint_limit = false;

  RewardInputs();
};

// Nominal riding poses referenced by the body/foot/posture terms. Pushing
// keeps the right feet planted on the deck while the left feet kick, which
// is the stance the contact-pattern and clearance terms reward.
struct PoseTargets {
  Vector3d p_body_carving{0.0, 0.0, 0.15};
  Vector3d p_body_pushing{0.0, -0.04, 0.17};
  std::array<Vector2d, 4> p_foot_carving{Vector2d(0.19, 0.095), Vector2d(0.19, -0.095),
                                         Vector2d(-0.19, 0.095), Vector2d(-0.19, -0.095)};
  std::array<Vector2d, 4> p_foot_pushing{Vector2d(0.09, 0.17), Vector2d(0.19, -0.09),
                                         Vector2d(-0.29, 0.17), Vector2d(-0.19, -0.09)};
  VectorXd q_carving;
  VectorXd q_pushing;

  PoseTargets();
};

struct RewardResult {
  std::array<double, 11> terms{}; // r1..r11
  double total = 0.0;
};

RewardResult reward_terms(const RewardInputs& in, Mode mode, const Command& cmd,
                          const PoseTargets& poses);

const char* mode_name(Mode m);

}  // namespace skate
