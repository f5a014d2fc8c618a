#include "skate/reward.hpp"

#include <cmath>

namespace skate {

RewardInputs::RewardInputs() {
  q = VectorXd::Zero(kNumJoints);
  q_dot = VectorXd::Zero(kNumJoints);
  q_ddot = VectorXd::Zero(kNumJoints);
  tau_q = VectorXd::Zero(kNumJoints);
  action = VectorXd::Zero(kNumJoints);
  prev_action = VectorXd::Zero(kNumJoints);
}

PoseTargets::PoseTargets() {
  RiderParams defaults;
  q_carving = defaults.q_nominal;
  q_pushing = defaults.q_nominal;
  // Left legs reach down and out toward the ground for the kick.
  for (int leg : kLeftLegs) {
    q_pushing[3 * leg + 0] = 0.5;
    q_pushing[3 * leg + 1] = 0.7;
    q_pushing[3 * leg + 2] = -0.9;
  }
}

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Carving: return "carving";
    case Mode::Pushing: return "pushing";
    default: return "transition";
  }
}

RewardResult reward_terms(const RewardInputs& in, Mode mode, const Command& cmd,
                          const PoseTargets& tgt) {
  RewardResult out;
  auto& r = out.terms;

  if (mode != Mode::Transition) {
    bool carving = (mode == Mode::Carving);

    // r1: command tracking
    double e1;
    if (carving) {
      e1 = std::abs(cmd.w - in.board_yaw_rate);
    } else {
      e1 = 0.6 * std::abs(cmd.v - in.board_speed_long) + 0.2 * std::abs(in.board_speed_lat) +
           0.2 * std::abs(in.board_yaw_rate);
    }
    r[0] = 5.0 * std::exp(-e1 / 0.3);

    // r2: body position
    double e2;
    if (carving) {
      e2 = std::abs(in.p_body_s.x()) + 0.2 * std::abs(in.p_body_s.y()) +
           std::abs(in.p_body_s.z() - tgt.p_body_carving.z());
    } else {
      e2 = (in.p_body_s - tgt.p_body_pushing).norm();
    }
    r[1] = 2.0 * std::exp(-e2 / 0.2);

    // r3: foot position
    double e3 = 0.0;
    if (carving) {
      for (int i = 0; i < 4; ++i)
        e3 += (in.p_foot_s[i].head<2>() - tgt.p_foot_carving[i]).norm();
    } else {
      for (int i : kRightLegs)
        e3 += (in.p_foot_s[i].head<2>() - tgt.p_foot_pushing[i]).norm();
      for (int j : kLeftLegs) {
        e3 += 0.2 * std::abs(in.p_foot_s[j].x() - tgt.p_foot_pushing[j].x()) +
              0.8 * std::abs(in.p_foot_s[j].y() - tgt.p_foot_pushing[j].y());
      }
    }
    r[2] = 2.0 * std::exp(-e3 / 0.3);

    // r4: riding posture
    double e4 = 0.0;
    if (carving) {
      e4 = (in.q - tgt.q_carving).lpNorm<1>();
    } else {
      for (int i : kRightLegs)
        for (int k = 0; k < 3; ++k)
          e4 += 0.7 * std::abs(in.q[3 * i + k] - tgt.q_pushing[3 * i + k]);
      for (int j : kLeftLegs)
        for (int k = 0; k < 3; ++k)
          e4 += 0.3 * std::abs(in.q[3 * j + k] - tgt.q_pushing[3 * j + k]);
    }
    r[3] = 2.0 * std::exp(-e4 / 0.4);

    // r5: foot slip
    double e5 = 0.0;
    if (carving) {
      for (int i = 0; i < 4; ++i)
        if (in.contact[i]) e5 += in.v_foot_deck[i].norm();
    } else {
      for (int i : kRightLegs)
        if (in.contact[i]) e5 += in.v_foot_deck[i].norm();
      for (int i : kLeftLegs)
        if (in.contact[i]) e5 += in.v_foot_world[i].norm();
    }
    r[4] = 1.0 * std::exp(-e5 / 0.4);

    // r6: contact pattern
    double e6;
    if (carving) {
      int n = 0;
      for (int i = 0; i < 4; ++i) n += in.contact[i] ? 1 : 0;
      e6 = 4.0 - n;
    } else {
      int n = 0;
      for (int i : kRightLegs) n += in.contact[i] ? 1 : 0;
      e6 = 2.0 - n;
    }
    r[5] = -2.0 * e6;

    // r7: foot clearance (swing feet during pushing)
    double e7 = 0.0;
    if (!carving) {
      for (int i : kLeftLegs)
        if (!in.contact[i]) e7 += std::max(0.1 - in.p_foot_world_z[i], 0.0);
    }
    r[6] = -0.4 * e7;
  }

  // r8: robot-skateboard alignment
  {
    double foot_orient = 0.0;
    for (int i = 0; i < 4; ++i) {
      // Point feet inherit the trunk orientation in this reduced model.
      (void)i;
      foot_orient +=
          Vector2d(in.theta_body_s.x(), in.theta_body_s.z()).norm();
    }
    r[7] = 2.0 * std::exp(-in.theta_body_s.head<2>().norm() / 0.5) +
           2.0 * std::exp(-std::abs(in.theta_body_s.z()) / 0.2) +
           std::exp(-in.v_body_rel_s.norm() / 0.3) +
           2.0 * std::exp(-foot_orient / 0.9);
  }

  // r9: smoothness
  {
    double power_pos = 0.0;
    for (int j = 0; j < kNumJoints; ++j)
      power_pos += std::max(in.tau_q[j] * in.q_dot[j], 0.0);
    r[8] = -5e-6 * (in.action - in.prev_action).norm() - 1e-6 * in.q_dot.norm() -
           1e-7 * in.q_ddot.norm() - 4e-7 * in.tau_q.norm() - 1e-6 * power_pos;
  }

  // r10: stabilization
  r[9] = -1e-6 * in.trunk_acc_w.norm() - 7e-2 * in.trunk_ang_vel_xy.norm() -
         2.0 * std::abs(in.trunk_vel_z) - 1e-5 * in.deck_acc_w.norm() -
         1e-4 * std::abs(in.deck_ang_vel_y_s) - 1e-4 * in.deck_ang_acc_s.norm();

  // r11: safety
  {
    double edge = 0.0, overload = 0.0;
    for (int i = 0; i < 4; ++i) {
      edge += in.on_edge[i] ? 1.0 : 0.0;
      overload += std::max(in.foot_force_norm[i] - 80.0, 0.0);
    }
    r[10] = -2.0 * edge - 1.0 * overload - 2.5 * (in.collision ? 1.0 : 0.0) -
            6.0 * (in.termination ? 1.0 : 0.0) - 2.0 * (in.joint_limit ? 1.0 : 0.0);
  }

  out.total = 0.0;
  for (double t : r) out.total += t;
  return out;
}

}  // namespace skate
