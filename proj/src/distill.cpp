#include "skate/distill.hpp"

#include <cmath>

#include "skate/checkpoint.hpp"
#include "skate/csv.hpp"

namespace skate {

void EstimatorSet::init(const NetConfig& nc, Rng& rng) {
  cfg = nc;
  // Stride-1 convolutions so the encoders stream at deployment.
  per.init(kScanDim, nc.per_window, nc.conv_channels, nc.gru_hidden, nc.latent_per, 0, 3, 1, 3,
           1, rng);
  ext.init(kObsDim, kObsHistory, nc.conv_channels, nc.gru_hidden, kExtDim, nc.latent_per, 3, 1,
           3, 1, rng);
  intr.init(kObsDim, kObsHistory, nc.conv_channels, nc.gru_hidden, nc.latent_int, 0, 3, 1, 3,
            1, rng);
}

std::vector<ParamBlock> EstimatorSet::blocks() {
  std::vector<ParamBlock> out;
  per.collect("est_per", out);
  ext.collect("est_ext", out);
  intr.collect("est_int", out);
  return out;
}

bool EstimatorSet::save(const std::string& path, const nlohmann::json& extra) const {
  auto* self = const_cast<EstimatorSet*>(this);
  nlohmann::json meta = extra;
  meta["kind"] = "estimators";
  meta["per_window"] = cfg.per_window;
  return save_checkpoint(path, self->blocks(), meta);
}

bool EstimatorSet::load(const std::string& path, nlohmann::json* meta, std::string* err) {
  return load_checkpoint(path, blocks(), meta, err);
}

VectorXd corrupt_scan(const VectorXd& scan, Rng& rng, const DistillTrainConfig& cfg) {
  if (rng.bernoulli(cfg.p_zero_frame)) return VectorXd::Zero(scan.size());
  VectorXd out = scan;
  for (int i = 0; i < kScanPoints; ++i) {
    out[i] += cfg.height_noise * rng.normal();
    if (rng.bernoulli(cfg.p_flip))
      out[kScanPoints + i] = 1.0 - out[kScanPoints + i];
  }
  return out;
}

DistillLosses estimator_losses(EstimatorSet& est, const DistillBatch& batch) {
  DistillLosses out;
  if (batch.size == 0) return out;
  MatrixXd zper = est.per.forward(batch.corr_scan);
  MatrixXd xext = est.ext.forward(batch.o_hist, &zper);
  MatrixXd zint = est.intr.forward(batch.o_hist);
  out.per = (zper - batch.z_per_t).squaredNorm() / batch.size;
  out.ext = (xext - batch.x_ext_t).squaredNorm() / batch.size;
  out.intr = (zint - batch.z_int_t).squaredNorm() / batch.size;
  return out;
}

DistillTrainer::DistillTrainer(const Config& cfg, PolicyNets& teacher, uint64_t seed)
    : cfg_(cfg), teacher_(teacher), seed_(seed) {
  Rng init_rng = Rng::stream(seed, rngp::kNetInit, 99);
  est_.init(cfg.nets, init_rng);
  noise_rng_ = Rng::stream(seed, rngp::kScanNoise);
  policy_rng_ = Rng::stream(seed, rngp::kPolicySample, 7);
}

void DistillTrainer::ensure_envs() {
  if (!envs_.empty()) return;
  const int B = cfg_.distill.num_envs;
  envs_.reserve(B);
  corr_rings_.resize(B);
  for (int e = 0; e < B; ++e) {
    envs_.emplace_back(cfg_.env, cfg_.board, cfg_.rider, seed_ + 31, 5000 + e);
    envs_[e].reset();
    corr_rings_[e].resize(kScanDim, cfg_.nets.per_window);
    VectorXd first = corrupt_scan(envs_[e].current_scan(), noise_rng_, cfg_.distill);
    for (int c = 0; c < corr_rings_[e].cols(); ++c) corr_rings_[e].col(c) = first;
  }
}

void DistillTrainer::forward_students(int B, MatrixXd& zper, MatrixXd& zext, MatrixXd& zint) {
  const int PW = cfg_.nets.per_window;
  MatrixXd corr(kScanDim * PW, B), ohist(kObsDim * kObsHistory, B);
  for (int e = 0; e < B; ++e) {
    corr.col(e) = Eigen::Map<VectorXd>(corr_rings_[e].data(), kScanDim * PW);
    envs_[e].o_window(kObsHistory, ohist.col(e).data());
  }
  zper = est_.per.forward(corr);
  zext = est_.ext.forward(ohist, &zper);
  zint = est_.intr.forward(ohist);
}

DistillBatch DistillTrainer::collect(int steps) {
  ensure_envs();
  const int B = cfg_.distill.num_envs;
  const int PW = cfg_.nets.per_window;
  const int SW = cfg_.nets.scan_window;

  DistillBatch batch;
  batch.size = steps * B;
  batch.o_hist.resize(kObsDim * kObsHistory, batch.size);
  batch.corr_scan.resize(kScanDim * PW, batch.size);
  batch.z_per_t.resize(cfg_.nets.latent_per, batch.size);
  batch.x_ext_t.resize(kExtDim, batch.size);
  batch.z_int_t.resize(cfg_.nets.latent_int, batch.size);

  MatrixXd scanwin(kScanDim * SW, B), xint(kIntDim, B);
  for (int t = 0; t < steps; ++t) {
    // Push a freshly corrupted frame into every ring.
    for (int e = 0; e < B; ++e) {
      for (int c = 0; c + 1 < PW; ++c) corr_rings_[e].col(c) = corr_rings_[e].col(c + 1);
      corr_rings_[e].col(PW - 1) = corrupt_scan(envs_[e].current_scan(), noise_rng_, cfg_.distill);
    }

    // Teacher targets at this timestep.
    for (int e = 0; e < B; ++e) {
      envs_[e].scan_window(SW, scanwin.col(e).data());
      xint.col(e) = envs_[e].current_x_int();
    }
    MatrixXd zper_t = teacher_.scan_encoder.forward(scanwin);
    MatrixXd zint_t = teacher_.intrinsic_encoder.forward(normalize_intrinsics(xint));

    MatrixXd zper_s, xext_s, zint_s;
    forward_students(B, zper_s, xext_s, zint_s);

    // Actor inputs: student estimates by default, teacher features when configured.
    MatrixXd ain(teacher_.actor_in_dim(), B), phi(2, B);
    for (int e = 0; e < B; ++e) {
      int i = t * B + e;
      envs_[e].o_window(kObsHistory, batch.o_hist.col(i).data());
      batch.corr_scan.col(i) = Eigen::Map<VectorXd>(corr_rings_[e].data(), kScanDim * PW);
      batch.z_per_t.col(i) = zper_t.col(e);
      batch.x_ext_t.col(i) = envs_[e].current_x_ext();
      batch.z_int_t.col(i) = zint_t.col(e);

      ain.col(e).head(kObsDim) = envs_[e].current_o();
      if (cfg_.distill.teacher_inputs) {
        ain.col(e).segment(kObsDim, cfg_.nets.latent_per) = zper_t.col(e);
        ain.col(e).segment(kObsDim + cfg_.nets.latent_per, kExtDim) = envs_[e].current_x_ext();
        ain.col(e).tail(cfg_.nets.latent_int) = zint_t.col(e);
      } else {
        ain.col(e).segment(kObsDim, cfg_.nets.latent_per) = zper_s.col(e);
        ain.col(e).segment(kObsDim + cfg_.nets.latent_per, kExtDim) = xext_s.col(e);
        ain.col(e).tail(cfg_.nets.latent_int) = zint_s.col(e);
      }
      phi.col(e) = phase_embed(envs_[e].current_phase());
    }
    MatrixXd mean = teacher_.actor.forward(ain, phi);
    MatrixXd actions;
    VectorXd logp;
    teacher_.head.sample(mean, policy_rng_, actions, logp);

    for (int e = 0; e < B; ++e) {
      EnvStepResult r = envs_[e].step_core(actions.col(e));
      if (r.done) {
        envs_[e].reset();
        VectorXd first = corrupt_scan(envs_[e].current_scan(), noise_rng_, cfg_.distill);
        for (int c = 0; c < PW; ++c) corr_rings_[e].col(c) = first;
      }
    }
  }
  return batch;
}

DistillLosses DistillTrainer::update(const DistillBatch& batch) {
  DistillLosses out;
  if (batch.size == 0) return out;
  auto blocks = est_.blocks();
  if (!adam_ready_) {
    adam_.lr = cfg_.distill.lr;
    adam_.attach(blocks);
    adam_ready_ = true;
  }
  VectorXd snapshot = snapshot_params(blocks);
  adam_.zero_grad();

  const double n = batch.size;
  MatrixXd zper = est_.per.forward(batch.corr_scan);
  // The extrinsic estimator consumes the perceptual estimate (detached).
  MatrixXd xext = est_.ext.forward(batch.o_hist, &zper);
  MatrixXd zint = est_.intr.forward(batch.o_hist);

  MatrixXd dper = 2.0 * (zper - batch.z_per_t) / n;
  MatrixXd dext = 2.0 * (xext - batch.x_ext_t) / n;
  MatrixXd dint = 2.0 * (zint - batch.z_int_t) / n;
  out.per = (zper - batch.z_per_t).squaredNorm() / n;
  out.ext = (xext - batch.x_ext_t).squaredNorm() / n;
  out.intr = (zint - batch.z_int_t).squaredNorm() / n;

  est_.ext.backward(dext);
  est_.intr.backward(dint);
  est_.per.backward(dper);

  if (!std::isfinite(out.total()) || !grads_finite(blocks)) {
    restore_params(blocks, snapshot);
    return out;
  }
  adam_.step();
  return out;
}

double DistillTrainer::extrinsic_position_rmse(const DistillBatch& batch) {
  MatrixXd zper = est_.per.forward(batch.corr_scan);
  MatrixXd xext = est_.ext.forward(batch.o_hist, &zper);
  double se = (xext.topRows(3) - batch.x_ext_t.topRows(3)).squaredNorm();
  return std::sqrt(se / (3.0 * batch.size));
}

double DistillTrainer::indicator_agreement(const DistillBatch& batch) {
  MatrixXd zper = est_.per.forward(batch.corr_scan);
  MatrixXd xext = est_.ext.forward(batch.o_hist, &zper);
  long agree = 0, total = 0;
  for (int c = 0; c < batch.size; ++c)
    for (int k = 6; k < kExtDim; ++k) {
      bool pred = xext(k, c) > 0.5;
      bool truth = batch.x_ext_t(k, c) > 0.5;
      agree += (pred == truth) ? 1 : 0;
      ++total;
    }
  return total ? static_cast<double>(agree) / total : 0.0;
}

DistillTrainer::RunResult DistillTrainer::run(const std::string& run_dir) {
  RunResult result;
  CsvWriter metrics(run_dir + "/distill_metrics.csv",
                    {"iteration", "loss_per", "loss_ext", "loss_int", "holdout_per",
                     "holdout_ext", "holdout_int", "ext_pos_rmse", "indicator_agreement"});

  DistillBatch holdout = collect(cfg_.distill.steps_per_iter * 2);
  result.first_holdout = estimator_losses(est_, holdout);

  for (int it = 0; it < cfg_.distill.iterations; ++it) {
    DistillBatch fresh = collect(cfg_.distill.steps_per_iter);
    replay_.push_back(std::move(fresh));
    while (static_cast<int>(replay_.size()) > cfg_.distill.replay_batches)
      replay_.pop_front();

    DistillLosses train_loss;
    for (auto& b : replay_) train_loss = update(b);

    DistillLosses hl = estimator_losses(est_, holdout);
    double rmse = extrinsic_position_rmse(holdout);
    double agreement = indicator_agreement(holdout);
    metrics.row({static_cast<double>(it + 1), train_loss.per, train_loss.ext, train_loss.intr,
                 hl.per, hl.ext, hl.intr, rmse, agreement});
    if (it + 1 == cfg_.distill.iterations) {
      result.last_holdout = hl;
      result.ext_pos_rmse = rmse;
      result.indicator_agreement = agreement;
    }
  }
  metrics.flush();

  result.checkpoint = run_dir + "/estimators.skcp";
  nlohmann::json meta;
  meta["iterations"] = cfg_.distill.iterations;
  est_.save(result.checkpoint, meta);
  return result;
}

// ---------------------------------------------------- DeployedController --

DeployedController::DeployedController(const PolicyNets& nets, const EstimatorSet& est,
                                       const DistillTrainConfig& noise, uint64_t noise_seed)
    : nets_(nets), est_(est), noise_(noise) {
  noise_rng_ = Rng::stream(noise_seed, rngp::kScanNoise, 17);
  reset(10.0);
}

void DeployedController::reset(double period) {
  period_ = period;
  t_ = 0.0;
  phase_ = 0.0;
  est_.per.stream_reset(per_stream_);
  est_.ext.stream_reset(ext_stream_);
  est_.intr.stream_reset(int_stream_);
}

double DeployedController::next_phase(double board_speed, double dt) {
  if (always_pushing_) {
    phase_ = 1.5 * M_PI;
    return phase_;
  }
  if (gate_speed_ > 0.0 && board_speed >= gate_speed_) {
    // Hold mid-carving; the clock resumes from there when speed drops.
    t_ = 0.25 * period_;
    phase_ = 0.5 * M_PI;
    return phase_;
  }
  phase_ = phase_of(t_, period_);
  t_ += dt;
  return phase_;
}

VectorXd DeployedController::act(const VectorXd& o, const VectorXd& true_scan,
                                 const VectorXd* oracle_zper, const VectorXd* oracle_xext,
                                 const VectorXd* oracle_zint) {
  VectorXd o_ctl = o;
  Vector2d embed = phase_embed(phase_);
  o_ctl[31] = embed.x();
  o_ctl[32] = embed.y();

  VectorXd zper, xext, zint;
  if (oracle_zper && oracle_xext && oracle_zint) {
    zper = *oracle_zper;
    xext = *oracle_xext;
    zint = *oracle_zint;
  } else {
    VectorXd frame = corrupt_scan(true_scan, noise_rng_, noise_);
    zper = est_.per.stream_step(per_stream_, frame);
    xext = est_.ext.stream_step(ext_stream_, o_ctl, &zper);
    zint = est_.intr.stream_step(int_stream_, o_ctl);
  }

  MatrixXd ain(nets_.actor_in_dim(), 1);
  ain.col(0).head(kObsDim) = o_ctl;
  ain.col(0).segment(kObsDim, nets_.cfg.latent_per) = zper;
  ain.col(0).segment(kObsDim + nets_.cfg.latent_per, kExtDim) = xext;
  ain.col(0).tail(nets_.cfg.latent_int) = zint;
  MatrixXd phi(2, 1);
  phi.col(0) = embed;
  return nets_.actor.forward(ain, phi).col(0);
}

}  // namespace skate
