#include "skate/rider.hpp"

#include <cmath>

namespace skate {

RiderParams::RiderParams() {
  q_nominal = VectorXd::Zero(kNumJoints);
  q_lower = VectorXd::Zero(kNumJoints);
  q_upper = VectorXd::Zero(kNumJoints);
  for (int leg = 0; leg < kNumLegs; ++leg) {
    // Deep crouch with an outward stance; left legs abduct +y, right legs -y.
    bool left = (leg == 0 || leg == 2);
    q_nominal[3 * leg + 0] = left ? 0.3 : -0.3;
    q_nominal[3 * leg + 1] = 1.2;
    q_nominal[3 * leg + 2] = -2.4;
    q_lower[3 * leg + 0] = -0.8;
    q_upper[3 * leg + 0] = 0.8;
    q_lower[3 * leg + 1] = -0.6;
    q_upper[3 * leg + 1] = 2.4;
    q_lower[3 * leg + 2] = -2.62;
    q_upper[3 * leg + 2] = -0.65;
  }
}

bool RiderParams::valid() const {
  if (link1 <= 0 || link2 <= 0 || trunk_mass <= 0 || gravity <= 0) return false;
  if (trunk_inertia.minCoeff() <= 0) return false;
  if (contact_kp <= 0 || contact_kd < 0 || friction_coeff < 0) return false;
  if (joint_kp.size() != kNumJoints || joint_kd.size() != kNumJoints) return false;
  if (joint_kp.minCoeff() <= 0 || joint_kd.minCoeff() < 0) return false;
  for (int j = 0; j < kNumJoints; ++j) {
    if (q_lower[j] >= q_upper[j]) return false;
    if (q_nominal[j] < q_lower[j] || q_nominal[j] > q_upper[j]) return false;
  }
  return true;
}

RiderState::RiderState() {
  q = VectorXd::Zero(kNumJoints);
  q_dot = VectorXd::Zero(kNumJoints);
  q_ddot = VectorXd::Zero(kNumJoints);
  tau_q = VectorXd::Zero(kNumJoints);
}

bool RiderState::finite() const {
  bool ok = trunk_position.allFinite() && trunk_euler.allFinite() && trunk_lin_vel.allFinite() &&
            trunk_ang_vel.allFinite() && q.allFinite() && q_dot.allFinite() && tau_q.allFinite();
  for (const auto& f : foot_positions) ok = ok && f.allFinite();
  return ok;
}

Matrix3d euler_xyz_to_rot(const Vector3d& e) {
  return (Eigen::AngleAxisd(e.x(), Vector3d::UnitX()) *
          Eigen::AngleAxisd(e.y(), Vector3d::UnitY()) *
          Eigen::AngleAxisd(e.z(), Vector3d::UnitZ()))
      .toRotationMatrix();
}

Vector3d rot_to_euler_xyz(const Matrix3d& r) {
  double sb = std::min(1.0, std::max(-1.0, r(0, 2)));
  double b = std::asin(sb);
  double a = std::atan2(-r(1, 2), r(2, 2));
  double c = std::atan2(-r(0, 1), r(0, 0));
  return Vector3d(a, b, c);
}

Vector3d leg_forward_kinematics(const Vector3d& q_leg, int leg_index, const RiderParams& p) {
  double abd = q_leg[0], hip = q_leg[1], knee = q_leg[2];
  double thigh = hip, calf = hip + knee;
  // Sagittal chain, then abduction about the body x axis.
  Vector3d in_plane(-p.link1 * std::sin(thigh) - p.link2 * std::sin(calf), 0.0,
                    -p.link1 * std::cos(thigh) - p.link2 * std::cos(calf));
  double ca = std::cos(abd), sa = std::sin(abd);
  Vector3d rotated(in_plane.x(), -sa * in_plane.z(), ca * in_plane.z());
  return p.hip_offsets[leg_index] + rotated;
}

IkResult leg_inverse_kinematics(const Vector3d& target, int leg_index, const RiderParams& p) {
  IkResult out;
  Vector3d d = target - p.hip_offsets[leg_index];

  double abd = std::atan2(d.y(), -d.z());
  double planar_z = -std::sqrt(d.y() * d.y() + d.z() * d.z());
  double px = d.x(), pz = planar_z;

  double reach = std::sqrt(px * px + pz * pz);
  double lo = std::abs(p.link1 - p.link2) + 1e-6;
  double hi = p.link1 + p.link2 - 1e-6;
  if (reach < lo || reach > hi) {
    out.reachable = false;
    double clamped = std::min(std::max(reach, lo), hi);
    if (reach > 1e-12) {
      px *= clamped / reach;
      pz *= clamped / reach;
    } else {
      px = 0.0;
      pz = -clamped;
    }
    reach = clamped;
  }

  double cos_knee = (p.link1 * p.link1 + p.link2 * p.link2 - reach * reach) /
                    (2.0 * p.link1 * p.link2);
  cos_knee = std::min(1.0, std::max(-1.0, cos_knee));
  double interior = std::acos(cos_knee);
  double knee = -(M_PI - interior);

  double t = std::atan2(-px, -pz);
  double cos_off = (p.link1 * p.link1 + reach * reach - p.link2 * p.link2) /
                   (2.0 * p.link1 * reach);
  cos_off = std::min(1.0, std::max(-1.0, cos_off));
  double hip = t + std::acos(cos_off);

  out.q_leg = Vector3d(abd, hip, knee);
  return out;
}

ContactResult foot_contact(const Vector3d& foot_pos, const Vector3d& foot_vel,
                           const DeckPose* deck, const Vector3d& surface_vel,
                           const RiderParams& p, ContactAnchor* anchor) {
  ContactResult out;

  bool deck_contact = false;
  Vector3d local, local_vel;
  if (deck) {
    local = deck->rot.transpose() * (foot_pos - deck->origin);
    if (local.z() < 0.0 && std::abs(local.x()) <= deck->half_length &&
        std::abs(local.y()) <= deck->half_width) {
      deck_contact = true;
      local_vel = deck->rot.transpose() * (foot_vel - surface_vel);
    }
  }

  double pen, vn;
  Vector2d vt, tangent_pos;
  Matrix3d frame = Matrix3d::Identity();
  int surface;
  if (deck_contact) {
    pen = -local.z();
    vn = local_vel.z();
    vt = local_vel.head<2>();
    tangent_pos = local.head<2>();
    frame = deck->rot;
    surface = 2;
    out.on_deck = true;
    double margin = std::min(deck->half_length - std::abs(local.x()),
                             deck->half_width - std::abs(local.y()));
    out.on_edge = margin < p.edge_band;
  } else {
    if (foot_pos.z() >= 0.0) {
      if (anchor) anchor->surface = 0;
      return out;
    }
    pen = -foot_pos.z();
    vn = foot_vel.z();
    vt = foot_vel.head<2>();
    tangent_pos = foot_pos.head<2>();
    surface = 1;
  }

  // Damping ramps in with penetration so touchdowns do not spike.
  double ramp = std::min(1.0, pen / p.contact_damping_ramp);
  double normal = p.contact_kp * pen - p.contact_kd * (1.0 - p.restitution) * ramp * vn;
  normal = std::max(0.0, normal);
  double t_max = p.friction_coeff * normal;

  Vector2d tangential;
  if (anchor) {
    if (anchor->surface != surface) {
      anchor->surface = surface;
      anchor->point = tangent_pos;
    }
    tangential =
        -p.tangential_stiffness * (tangent_pos - anchor->point) - p.tangential_damping * vt;
    double t_mag = tangential.norm();
    if (t_mag > t_max) {
      if (t_mag > 1e-12) tangential *= t_max / t_mag;
      // sliding: drag the anchor so the spring agrees with the clamped force
      anchor->point = tangent_pos + tangential / p.tangential_stiffness;
    }
  } else {
    tangential = -p.tangential_damping * vt;
    double t_mag = tangential.norm();
    if (t_mag > t_max && t_mag > 1e-12) tangential *= t_max / t_mag;
  }

  Vector3d f_local(tangential.x(), tangential.y(), normal);
  Vector3d f_world = frame * f_local;
  double mag = f_world.norm();
  if (mag > p.foot_force_cap) f_world *= p.foot_force_cap / mag;

  out.force = f_world;
  out.in_contact = true;
  return out;
}

RiderStepResult rider_step(const RiderState& state, const VectorXd& q_target_in,
                           const BoardState& board, const BoardParams& board_params, double dt,
                           const RiderParams& p, const Vector3d& ext_force_world) {
  RiderState s = state;
  RiderStepResult out;

  VectorXd q_target = q_target_in.cwiseMax(p.q_lower).cwiseMin(p.q_upper);

  // Reported actuator torques follow the PD law; joint motion follows a
  // critically damped response so q_dot/q_ddot stay physically plausible
  // without link inertias.
  s.joint_limit_hit = false;
  for (int j = 0; j < kNumJoints; ++j) {
    double tau = p.joint_kp[j] * (q_target[j] - s.q[j]) - p.joint_kd[j] * s.q_dot[j];
    s.tau_q[j] = std::min(p.torque_limit, std::max(-p.torque_limit, tau));

    // Critically damped tracking, with the acceleration capped by what the
    // actuator torque limit could produce on the response inertia.
    double wn = std::sqrt(p.joint_kp[j] / p.joint_response_inertia);
    double acc = wn * wn * (q_target[j] - s.q[j]) - 2.0 * wn * s.q_dot[j];
    double acc_max = p.torque_limit / p.joint_response_inertia;
    acc = std::min(acc_max, std::max(-acc_max, acc));
    s.q_ddot[j] = acc;
    s.q_dot[j] += dt * acc;
    s.q[j] += dt * s.q_dot[j];
    if (s.q[j] <= p.q_lower[j]) {
      s.q[j] = p.q_lower[j];
      s.q_dot[j] = std::max(0.0, s.q_dot[j]);
      s.joint_limit_hit = true;
    } else if (s.q[j] >= p.q_upper[j]) {
      s.q[j] = p.q_upper[j];
      s.q_dot[j] = std::min(0.0, s.q_dot[j]);
      s.joint_limit_hit = true;
    }
  }

  Matrix3d rot = euler_xyz_to_rot(s.trunk_euler);
  DeckPose deck = deck_pose(board, board_params);

  // Deck material point velocity, used for contact slip on the moving board.
  Vector3d board_vel_w =
      deck.rot_s * Vector3d(board.speed_long, board.speed_lat, 0.0);
  Vector3d board_omega_w =
      deck.rot_s * Vector3d(board.deck_roll_rate, 0.0, 0.0) + Vector3d(0, 0, board.yaw_rate);

  double total_mass = p.trunk_mass + p.payload_mass;
  Vector3d com = s.trunk_position + rot * p.com_offset;

  Vector3d force_sum(0, 0, -total_mass * p.gravity);
  force_sum += ext_force_world;
  Vector3d torque_sum = Vector3d::Zero();

  std::vector<Vector3d> deck_positions_d, deck_forces_d, deck_reactions_s;
  deck_positions_d.reserve(4);
  deck_forces_d.reserve(4);
  deck_reactions_s.reserve(4);

  for (int leg = 0; leg < kNumLegs; ++leg) {
    Vector3d q_leg(s.q[3 * leg], s.q[3 * leg + 1], s.q[3 * leg + 2]);
    Vector3d foot_w = s.trunk_position + rot * leg_forward_kinematics(q_leg, leg, p);
    Vector3d foot_v = (foot_w - state.foot_positions[leg]) / dt;
    s.foot_positions[leg] = foot_w;
    s.foot_velocities[leg] = foot_v;

    Vector3d surf_vel = board_vel_w + board_omega_w.cross(foot_w - deck.origin);
    ContactResult c = foot_contact(foot_w, foot_v, &deck, surf_vel, p, &s.foot_anchor[leg]);
    s.foot_forces[leg] = c.force;
    s.foot_contact[leg] = c.in_contact;
    s.foot_on_deck[leg] = c.on_deck;
    s.foot_on_edge[leg] = c.on_edge;

    if (c.in_contact) {
      force_sum += c.force;
      torque_sum += (foot_w - com).cross(c.force);
      if (c.on_deck) {
        // Force the foot applies to the deck is minus the reaction.
        deck_positions_d.push_back(deck.rot.transpose() * (foot_w - deck.origin));
        deck_forces_d.push_back(deck.rot.transpose() * (-c.force));
        deck_reactions_s.push_back(deck.rot_s.transpose() * c.force);
      }
    }
  }

  // Trunk rigid body, semi-implicit.
  s.trunk_lin_vel += dt * force_sum / total_mass;
  s.trunk_position += dt * s.trunk_lin_vel;

  Vector3d torque_b = rot.transpose() * torque_sum;
  Vector3d Iw = p.trunk_inertia.cwiseProduct(s.trunk_ang_vel);
  Vector3d ang_acc =
      (torque_b - s.trunk_ang_vel.cross(Iw)).cwiseQuotient(p.trunk_inertia);
  s.trunk_ang_vel += dt * ang_acc;

  // XYZ Euler kinematics: omega_body -> euler rates.
  double cy = std::cos(s.trunk_euler.y()), sy = std::sin(s.trunk_euler.y());
  double cz = std::cos(s.trunk_euler.z()), sz = std::sin(s.trunk_euler.z());
  if (std::abs(cy) < 1e-6) cy = (cy >= 0 ? 1e-6 : -1e-6);
  const Vector3d& w = s.trunk_ang_vel;
  Vector3d euler_rate((cz * w.x() - sz * w.y()) / cy, sz * w.x() + cz * w.y(),
                      (-cz * sy * w.x() + sy * sz * w.y()) / cy + w.z());
  s.trunk_euler += dt * euler_rate;
  constexpr double kPitchLimit = M_PI / 2.0 - 0.05;
  s.trunk_euler.y() = std::min(kPitchLimit, std::max(-kPitchLimit, s.trunk_euler.y()));

  // Collision: trunk too close to whatever supports it.
  Vector3d trunk_s = deck.rot_s.transpose() * (s.trunk_position - deck.origin);
  bool over_deck =
      std::abs(trunk_s.x()) <= deck.half_length && std::abs(trunk_s.y()) <= deck.half_width;
  double support = over_deck ? deck.origin.z() : 0.0;
  s.collided = (s.trunk_position.z() - support) < p.collision_clearance;

  out.wrench.roll_torque = deck_contact_torque(deck_positions_d, deck_forces_d);
  out.wrench.force_s = Vector3d::Zero();
  for (const Vector3d& r : deck_reactions_s) out.wrench.force_s -= r;

  out.degenerate = !s.finite();
  out.state = out.degenerate ? state : s;
  return out;
}

}  // namespace skate
