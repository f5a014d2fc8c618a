#pragma once

#include <deque>

#include "skate/ppo.hpp"

namespace skate {

// Deployment estimators: perceptual (corrupted scan history -> z_per_hat),
// extrinsic (o-history + z_per_hat -> x_ext_hat), intrinsic (o-history ->
// z_int_hat). The extrinsic estimator consumes the perceptual ESTIMATE.
struct EstimatorSet {
  TemporalEncoder per;
  TemporalEncoder ext;
  TemporalEncoder intr;
  NetConfig cfg;

  void init(const NetConfig& nc, Rng& rng);
  std::vector<ParamBlock> blocks();
  bool save(const std::string& path, const nlohmann::json& extra = {}) const;
  bool load(const std::string& path, nlohmann::json* meta = nullptr,
            std::string* err = nullptr);
};

// Salt-and-pepper flips on the semantic flags, Gaussian noise on heights, or
// an entirely zeroed frame.
VectorXd corrupt_scan(const VectorXd& scan, Rng& rng, const DistillTrainConfig& cfg);

struct DistillBatch {
  int size = 0;
  MatrixXd o_hist;    // (kObsDim * kObsHistory) x N
  MatrixXd corr_scan; // (kScanDim * per_window) x N
  MatrixXd z_per_t;   // targets from the frozen stage-1 scan encoder
  MatrixXd x_ext_t;
  MatrixXd z_int_t;
};

struct DistillLosses {
  double per = 0.0, ext = 0.0, intr = 0.0;
  double total() const { return per + ext + intr; }
};

DistillLosses estimator_losses(EstimatorSet& est, const DistillBatch& batch);

class DistillTrainer {
 public:
  // The teacher policy is frozen; only estimator parameters move.
  DistillTrainer(const Config& cfg, PolicyNets& teacher, uint64_t seed);

  EstimatorSet& estimators() { return est_; }

  // On-policy collection under the student's own estimates (teacher features
  // when cfg.distill.teacher_inputs is set).
  DistillBatch collect(int steps);

  DistillLosses update(const DistillBatch& batch);

  struct RunResult {
    DistillLosses first_holdout;
    DistillLosses last_holdout;
    double ext_pos_rmse = 0.0;      // deck position, held-out
    double indicator_agreement = 0.0; // 0.5-thresholded flags, held-out
    std::string checkpoint;
  };
  RunResult run(const std::string& run_dir);

  // Held-out metrics on an existing batch.
  double extrinsic_position_rmse(const DistillBatch& batch);
  double indicator_agreement(const DistillBatch& batch);

 private:
  void ensure_envs();
  void forward_students(int B, MatrixXd& zper, MatrixXd& zext, MatrixXd& zint);

  Config cfg_;
  PolicyNets& teacher_;
  uint64_t seed_;
  EstimatorSet est_;
  Adam adam_;
  bool adam_ready_ = false;
  std::vector<Env> envs_;
  std::vector<MatrixXd> corr_rings_; // per env, kScanDim x per_window
  Rng noise_rng_;
  Rng policy_rng_;
  std::deque<DistillBatch> replay_;
};

// Closed-loop controller with no privileged access: o-history and corrupted
// scan stream in, actions out. Owns its own phase clock, optionally gated so
// propulsion only engages below a speed threshold.
class DeployedController {
 public:
  DeployedController(const PolicyNets& nets, const EstimatorSet& est,
                     const DistillTrainConfig& noise, uint64_t noise_seed);

  void reset(double period);
  void set_phase_gate(double speed_low) { gate_speed_ = speed_low; }
  void set_always_pushing(bool v) { always_pushing_ = v; }

  // Phase for the upcoming control step; advances the internal clock.
  double next_phase(double board_speed, double dt);

  // o comes from the environment but the phase-embedding entries are
  // overwritten with the controller clock. Oracle arguments bypass the
  // estimators when provided (used for substitution-identity checks).
  VectorXd act(const VectorXd& o, const VectorXd& true_scan,
               const VectorXd* oracle_zper = nullptr, const VectorXd* oracle_xext = nullptr,
               const VectorXd* oracle_zint = nullptr);

  double current_phase() const { return phase_; }

 private:
  PolicyNets nets_; // private copy, read-only use
  EstimatorSet est_;
  DistillTrainConfig noise_;
  Rng noise_rng_;
  TemporalEncoder::Stream per_stream_, ext_stream_, int_stream_;
  double t_ = 0.0, period_ = 10.0, phase_ = 0.0;
  double gate_speed_ = -1.0;
  bool always_pushing_ = false;
};

}  // namespace skate
