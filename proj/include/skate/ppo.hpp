#pragma once

#include <functional>
#include <string>

#include "skate/config.hpp"
#include "skate/env.hpp"
#include "skate/nets.hpp"

namespace skate {

using Eigen::VectorXi;

// Stage-1 network set. The actor sees (o, z_per, x_ext, z_int); the critic
// sees the full privileged state. Scan and intrinsic encoders are trained
// through the actor path.
struct PolicyNets {
  FiLMNetwork actor;
  FiLMNetwork critic;
  TemporalEncoder scan_encoder; // x_scan history -> z_per
  MLP intrinsic_encoder;        // x_int -> z_int
  PolicyHead head;
  NetConfig cfg;

  void init(const NetConfig& nc, Rng& rng);
  int actor_in_dim() const { return kObsDim + cfg.latent_per + kExtDim + cfg.latent_int; }
  std::vector<ParamBlock> actor_blocks();  // actor + encoders + log-std
  std::vector<ParamBlock> critic_blocks();
  std::vector<ParamBlock> all_blocks();

  bool save(const std::string& path, const nlohmann::json& extra_meta = {}) const;
  bool load(const std::string& path, nlohmann::json* meta = nullptr, std::string* err = nullptr);
};

// Env-major rollout storage. Scan-encoder windows are reconstructed from the
// per-step scan frames plus a per-env prefix captured at rollout start, so
// the buffer never stores full windows.
struct RolloutBuffer {
  int num_envs = 0, horizon = 0, window = 0;
  MatrixXd o, scan, x_ext, x_int, critic_in, phi, actions;
  MatrixXd scan_prefix; // (kScanDim*(window-1)) x num_envs
  VectorXd logp, rewards, values, dones, terminals, final_values;
  VectorXd phases;
  VectorXi modes, ep_start;
  VectorXd bootstrap_values;

  void resize(int B, int T, int W);
  int index(int e, int t) const { return e * horizon + t; }
  void gather_scan_window(int e, int t, double* dst) const;
};

// delta_t = r_t + gamma * next_values_t - values_t;
// A_t = delta_t + gamma * lam * A_{t+1} * (1 - done_t).
// next_values must already be zero where the episode truly terminated.
// In-place batch normalization to zero mean, unit variance.
void normalize_advantages(VectorXd& adv);

void gae_advantages(const VectorXd& rewards, const VectorXd& values,
                    const VectorXd& next_values, const VectorXd& dones, double gamma,
                    double lam, VectorXd& adv, VectorXd& ret);

struct RolloutStats {
  double mean_return = 0.0;
  double mean_episode_len = 0.0;
  int episodes = 0;
  std::array<double, 11> term_means{};
  double mean_reward = 0.0;
};

struct UpdateStats {
  double actor_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  bool aborted = false;
};

class PpoTrainer {
 public:
  PpoTrainer(const Config& cfg, uint64_t seed);

  void reset_envs();
  RolloutStats collect_rollouts(RolloutBuffer& buffer);
  UpdateStats update(RolloutBuffer& buffer);

  // Full training loop; writes metrics.csv and checkpoints into run_dir.
  // Returns the path of the final checkpoint.
  std::string train(const std::string& run_dir, const std::string& resume = "");

  PolicyNets& nets() { return nets_; }
  CurriculumGrid& curriculum() { return curriculum_; }
  std::vector<Env>& envs() { return envs_; }
  const Config& config() const { return cfg_; }

  // Deterministic probe: mean tracking error over a fixed command set.
  double probe_tracking_error(int commands = 4, double horizon_s = 10.0);

 private:
  void forward_policy(int B, bool sample_actions);

  Config cfg_;
  uint64_t seed_;
  PolicyNets nets_;
  CurriculumGrid curriculum_;
  std::vector<Env> envs_;
  Rng policy_rng_;
  Rng shuffle_rng_;
  Adam adam_;
  bool adam_ready_ = false;

  // rollout workspaces
  MatrixXd O_, SCANWIN_, XINT_, XEXT_, CRITIC_, PHI_, AIN_, MEAN_, ACT_;
  MatrixXd ZPER_, ZINT_;
  VectorXd LOGP_, VAL_;
  // per-env accumulators
  VectorXd ep_return_, ep_len_;

  // minibatch workspaces
  MatrixXd mbO_, mbSCANWIN_, mbXINT_, mbXEXT_, mbCRITIC_, mbPHI_, mbAIN_, mbACT_;

  friend class DistillTrainer;
};

uint64_t fnv1a(const std::string& s);

}  // namespace skate
