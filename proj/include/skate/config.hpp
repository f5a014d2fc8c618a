#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "skate/env.hpp"

namespace skate {

using nlohmann::json;

struct NetConfig {
  std::vector<int> actor_hidden{512, 256, 128};
  std::vector<int> critic_hidden{1024, 512, 256};
  std::vector<int> intrinsic_encoder{128, 64};
  int latent_per = 16;
  int latent_int = 16;
  int conv_channels = 32;
  int gru_hidden = 32;
  int scan_window = 64; // frames consumed by the scan encoder
  int per_window = 5;   // corrupted frames consumed by the perceptual estimator
  int moe_experts = 3;
  double init_log_std = -1.0;
};

struct PpoTrainConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip = 0.2;
  int epochs = 4;
  int minibatch_size = 3072;
  double lr = 3e-4;
  double vf_coef = 0.5;
  double ent_coef = 0.005;
  int horizon = 48;
  int num_envs = 256;
  int updates = 200;
  int checkpoint_every = 50;
};

struct DistillTrainConfig {
  double lr = 1e-3;
  int iterations = 400;
  int num_envs = 16;
  int steps_per_iter = 32;
  int replay_batches = 4;
  double p_zero_frame = 0.05;
  double p_flip = 0.05;
  double height_noise = 0.01;
  bool teacher_inputs = false; // roll out with teacher features instead of student estimates
};

struct EvalProtocolConfig {
  double horizon = 40.0;
  int trials = 10;
  double impulse_period = 4.0;
  double phase_period = 10.0;
  double resolution = 0.05;
  double speed_gate = 0.7; // m/s, propulsion activates below this
  double traversal_distance = 30.0;
  double traversal_max_time = 120.0;
  double traversal_cv = 0.8; // forward command during the power traversal
};

struct Config {
  uint64_t seed = 1;
  int threads = 2;
  std::string out_dir = "runs";
  bool allow_out_of_range = false;

  BoardParams board;
  RiderParams rider;
  EnvOptions env;
  NetConfig nets;
  PpoTrainConfig ppo;
  DistillTrainConfig distill;
  EvalProtocolConfig eval;
};

json config_to_json(const Config& c);
Config config_from_json(const json& j);

// Table-of-ranges validation. Randomization ranges must sit inside the
// published testing ranges unless allow_out_of_range is set; physical
// parameters must be positive; schedule periods must be positive.
std::vector<std::string> config_validate(const Config& c);

Config load_config_file(const std::string& path, std::string* error);
bool save_config_file(const Config& c, const std::string& path);

// "a.b.c=value" overrides applied to the JSON tree.
bool apply_override(json& tree, const std::string& spec, std::string* error);

}  // namespace skate
