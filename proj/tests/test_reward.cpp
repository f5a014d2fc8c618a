#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracle_reward.hpp"
#include "skate/reward.hpp"
#include "skate/rng.hpp"

using namespace skate;

namespace {

RewardInputs random_inputs(Rng& rng) {
  RewardInputs in;
  in.board_yaw_rate = rng.uniform(-0.8, 0.8);
  in.board_speed_long = rng.uniform(-0.2, 1.8);
  in.board_speed_lat = rng.uniform(-0.3, 0.3);
  in.p_body_s = Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.1, 0.4));
  in.theta_body_s =
      Vector3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
  in.v_body_rel_s = Vector2d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
  for (int i = 0; i < 4; ++i) {
    in.p_foot_s[i] =
        Vector3d(rng.uniform(-0.4, 0.4), rng.uniform(-0.3, 0.3), rng.uniform(0.0, 0.2));
    in.v_foot_deck[i] = Vector2d(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4));
    in.v_foot_world[i] = Vector2d(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    in.p_foot_world_z[i] = rng.uniform(0.0, 0.2);
    in.contact[i] = rng.bernoulli(0.7);
    in.on_edge[i] = rng.bernoulli(0.2);
    in.foot_force_norm[i] = rng.uniform(0.0, 120.0);
  }
  for (int j = 0; j < kNumJoints; ++j) {
    in.q[j] = rng.uniform(-2.0, 2.0);
    in.q_dot[j] = rng.uniform(-3.0, 3.0);
    in.q_ddot[j] = rng.uniform(-30.0, 30.0);
    in.tau_q[j] = rng.uniform(-20.0, 20.0);
    in.action[j] = rng.uniform(-0.5, 0.5);
    in.prev_action[j] = rng.uniform(-0.5, 0.5);
  }
  in.trunk_acc_w = Vector3d(rng.normal(), rng.normal(), rng.normal());
  in.trunk_ang_vel_xy = Vector2d(rng.normal(), rng.normal());
  in.trunk_vel_z = 0.2 * rng.normal();
  in.deck_acc_w = Vector3d(rng.normal(), rng.normal(), rng.normal());
  in.deck_ang_vel_y_s = 0.1 * rng.normal();
  in.deck_ang_acc_s = Vector3d(rng.normal(), rng.normal(), rng.normal());
  in.collision = rng.bernoulli(0.2);
  in.termination = rng.bernoulli(0.1);
  in.joint_limit = rng.bernoulli(0.2);
  return in;
}

}  // namespace

TEST_CASE("reward matches the independent scalar reference on varied states") {
  PoseTargets poses;
  Rng rng(2024);
  const Mode modes[3] = {Mode::Carving, Mode::Pushing, Mode::Transition};
  for (int i = 0; i < 60; ++i) {
    RewardInputs in = random_inputs(rng);
    Command cmd{rng.uniform(0.0, 1.5), rng.uniform(-0.5, 0.5)};
    Mode mode = modes[i % 3];
    RewardResult got = reward_terms(in, mode, cmd, poses);
    auto expect = oracle::reward_reference(in, mode, cmd, poses);
    double expect_total = 0;
    for (int k = 0; k < 11; ++k) {
      CHECK(std::abs(got.terms[k] - expect[k]) < 1e-6);
      expect_total += expect[k];
    }
    CHECK(std::abs(got.total - expect_total) < 1e-6);
  }
}

TEST_CASE("command term hits its printed values") {
  PoseTargets poses;
  RewardInputs in;
  in.p_body_s = poses.p_body_carving;

  // carving with perfect yaw tracking
  in.board_yaw_rate = 0.35;
  Command cmd{0.0, 0.35};
  RewardResult r = reward_terms(in, Mode::Carving, cmd, poses);
  CHECK(r.terms[0] == doctest::Approx(5.0).epsilon(1e-12));

  // pushing with a 0.5 m/s speed deficit
  RewardInputs in2;
  in2.board_speed_long = 0.5;
  in2.board_speed_lat = 0.0;
  in2.board_yaw_rate = 0.0;
  Command cmd2{1.0, 0.0};
  RewardResult r2 = reward_terms(in2, Mode::Pushing, cmd2, poses);
  CHECK(r2.terms[0] == doctest::Approx(5.0 * std::exp(-1.0)).epsilon(1e-9));
  CHECK(r2.terms[0] == doctest::Approx(1.8394).epsilon(1e-4));
}

TEST_CASE("contact pattern term") {
  PoseTargets poses;
  RewardInputs in;
  Command cmd{0.0, 0.0};

  for (int i = 0; i < 4; ++i) in.contact[i] = true;
  CHECK(reward_terms(in, Mode::Carving, cmd, poses).terms[5] == 0.0);

  in.contact[3] = false;
  CHECK(reward_terms(in, Mode::Carving, cmd, poses).terms[5] ==
        doctest::Approx(-2.0).epsilon(1e-12));

  // pushing counts only the right feet
  RewardInputs in3;
  in3.contact = {false, true, false, true};
  CHECK(reward_terms(in3, Mode::Pushing, cmd, poses).terms[5] == 0.0);
  in3.contact = {true, false, true, true};
  CHECK(reward_terms(in3, Mode::Pushing, cmd, poses).terms[5] ==
        doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("transition mode zeroes the mode-dependent terms") {
  PoseTargets poses;
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    RewardInputs in = random_inputs(rng);
    Command cmd{rng.uniform(0.0, 1.5), rng.uniform(-0.5, 0.5)};
    RewardResult r = reward_terms(in, Mode::Transition, cmd, poses);
    for (int k = 0; k < 7; ++k) CHECK(r.terms[k] == 0.0);
  }
}

TEST_CASE("reward bounds hold on random states") {
  PoseTargets poses;
  Rng rng(1);
  const Mode modes[2] = {Mode::Carving, Mode::Pushing};
  for (int i = 0; i < 200; ++i) {
    RewardInputs in = random_inputs(rng);
    Command cmd{rng.uniform(0.0, 1.5), rng.uniform(-0.5, 0.5)};
    RewardResult r = reward_terms(in, modes[i % 2], cmd, poses);
    CHECK(r.terms[0] > 0.0);
    CHECK(r.terms[0] <= 5.0);
    for (int k : {1, 2, 3}) {
      CHECK(r.terms[k] > 0.0);
      CHECK(r.terms[k] <= 2.0);
    }
    CHECK(r.terms[4] > 0.0);
    CHECK(r.terms[4] <= 1.0);
    for (int k : {5, 6, 8, 9, 10}) CHECK(r.terms[k] <= 0.0);
    CHECK(r.terms[7] > 0.0);
    CHECK(r.terms[7] <= 7.0);
  }
}

TEST_CASE("clearance term punishes low swing feet during pushing only") {
  PoseTargets poses;
  RewardInputs in;
  Command cmd{0.5, 0.0};
  in.contact = {false, true, false, true}; // left feet swinging
  in.p_foot_world_z = {0.02, 0.0, 0.04, 0.0};
  RewardResult push = reward_terms(in, Mode::Pushing, cmd, poses);
  CHECK(push.terms[6] == doctest::Approx(-0.4 * (0.08 + 0.06)).epsilon(1e-12));
  RewardResult carve = reward_terms(in, Mode::Carving, cmd, poses);
  CHECK(carve.terms[6] == 0.0);
}

TEST_CASE("safety term composition") {
  PoseTargets poses;
  RewardInputs in;
  Command cmd{0.0, 0.0};
  in.on_edge = {true, false, false, true};
  in.foot_force_norm = {100.0, 50.0, 0.0, 0.0};
  in.collision = true;
  in.termination = true;
  in.joint_limit = true;
  RewardResult r = reward_terms(in, Mode::Transition, cmd, poses);
  CHECK(r.terms[10] ==
        doctest::Approx(-2.0 * 2 - 1.0 * 20.0 - 2.5 - 6.0 - 2.0).epsilon(1e-12));
}
