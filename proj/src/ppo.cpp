#include "skate/ppo.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "skate/checkpoint.hpp"
#include "skate/csv.hpp"
#include "skate/threadpool.hpp"

namespace skate {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ------------------------------------------------------------ PolicyNets --

void PolicyNets::init(const NetConfig& nc, Rng& rng) {
  cfg = nc;
  actor.init(actor_in_dim(), nc.actor_hidden, kActDim, rng, 0.01);
  critic.init(kCriticDim, nc.critic_hidden, 1, rng, 1.0);

  int w = nc.scan_window;
  int k1 = std::min(4, w);
  int s1 = w >= 32 ? 4 : (w >= 10 ? 2 : 1);
  int t1 = (w - k1) / s1 + 1;
  int k2 = std::min(4, t1);
  int s2 = t1 >= 6 ? 2 : 1;
  scan_encoder.init(kScanDim, w, nc.conv_channels, nc.gru_hidden, nc.latent_per, 0, k1, s1, k2,
                    s2, rng);

  std::vector<int> enc_widths = nc.intrinsic_encoder;
  enc_widths.push_back(nc.latent_int);
  intrinsic_encoder.init(kIntDim, enc_widths, rng);

  head.init(kActDim, nc.init_log_std);
}

std::vector<ParamBlock> PolicyNets::actor_blocks() {
  std::vector<ParamBlock> blocks;
  actor.collect("actor", blocks);
  scan_encoder.collect("scan_enc", blocks);
  intrinsic_encoder.collect("int_enc", blocks);
  head.collect("policy", blocks);
  return blocks;
}

std::vector<ParamBlock> PolicyNets::critic_blocks() {
  std::vector<ParamBlock> blocks;
  critic.collect("critic", blocks);
  return blocks;
}

std::vector<ParamBlock> PolicyNets::all_blocks() {
  auto blocks = actor_blocks();
  auto cb = critic_blocks();
  blocks.insert(blocks.end(), cb.begin(), cb.end());
  return blocks;
}

bool PolicyNets::save(const std::string& path, const nlohmann::json& extra_meta) const {
  auto* self = const_cast<PolicyNets*>(this);
  nlohmann::json meta = extra_meta;
  meta["kind"] = "policy";
  meta["obs_dim"] = kObsDim;
  meta["scan_dim"] = kScanDim;
  meta["ext_dim"] = kExtDim;
  meta["int_dim"] = kIntDim;
  meta["critic_dim"] = kCriticDim;
  meta["actor_in_dim"] = self->actor_in_dim();
  meta["scan_window"] = cfg.scan_window;
  return save_checkpoint(path, self->all_blocks(), meta);
}

bool PolicyNets::load(const std::string& path, nlohmann::json* meta, std::string* err) {
  return load_checkpoint(path, all_blocks(), meta, err);
}

// --------------------------------------------------------- RolloutBuffer --

void RolloutBuffer::resize(int B, int T, int W) {
  num_envs = B;
  horizon = T;
  window = W;
  int N = B * T;
  o.resize(kObsDim, N);
  scan.resize(kScanDim, N);
  x_ext.resize(kExtDim, N);
  x_int.resize(kIntDim, N);
  critic_in.resize(kCriticDim, N);
  phi.resize(2, N);
  actions.resize(kActDim, N);
  scan_prefix.resize(kScanDim * std::max(0, W - 1), B);
  logp.resize(N);
  rewards.resize(N);
  values.resize(N);
  dones.resize(N);
  terminals.resize(N);
  final_values.resize(N);
  phases.resize(N);
  modes.resize(N);
  ep_start.resize(N);
  bootstrap_values.resize(B);
}

void RolloutBuffer::gather_scan_window(int e, int t, double* dst) const {
  for (int k = 0; k < window; ++k) {
    int tk = t - window + 1 + k;
    int start = ep_start[index(e, t)];
    const double* src;
    if (start >= 0) {
      int clamped = std::max(tk, start);
      src = scan.col(index(e, clamped)).data();
    } else if (tk >= 0) {
      src = scan.col(index(e, tk)).data();
    } else {
      src = scan_prefix.col(e).data() + (tk + window - 1) * kScanDim;
    }
    std::copy(src, src + kScanDim, dst + k * kScanDim);
  }
}

void normalize_advantages(VectorXd& adv) {
  const int n = static_cast<int>(adv.size());
  double mean = adv.mean();
  double sd = std::sqrt((adv.array() - mean).square().sum() / n) + 1e-8;
  adv = (adv.array() - mean) / sd;
}

// ------------------------------------------------------------------- GAE --

void gae_advantages(const VectorXd& rewards, const VectorXd& values,
                    const VectorXd& next_values, const VectorXd& dones, double gamma,
                    double lam, VectorXd& adv, VectorXd& ret) {
  const int T = static_cast<int>(rewards.size());
  adv.resize(T);
  ret.resize(T);
  double acc = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    double delta = rewards[t] + gamma * next_values[t] - values[t];
    acc = delta + gamma * lam * (dones[t] > 0.5 ? 0.0 : acc);
    adv[t] = acc;
  }
  ret = adv + values;
}

// ------------------------------------------------------------ PpoTrainer --

PpoTrainer::PpoTrainer(const Config& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  Rng init_rng = Rng::stream(seed, rngp::kNetInit);
  nets_.init(cfg.nets, init_rng);
  policy_rng_ = Rng::stream(seed, rngp::kPolicySample);
  shuffle_rng_ = Rng::stream(seed, rngp::kShuffle);

  envs_.reserve(cfg.ppo.num_envs);
  for (int e = 0; e < cfg.ppo.num_envs; ++e)
    envs_.emplace_back(cfg.env, cfg.board, cfg.rider, seed, e);

  int B = cfg.ppo.num_envs;
  int W = cfg.nets.scan_window;
  O_.resize(kObsDim, B);
  SCANWIN_.resize(kScanDim * W, B);
  XINT_.resize(kIntDim, B);
  XEXT_.resize(kExtDim, B);
  CRITIC_.resize(kCriticDim, B);
  PHI_.resize(2, B);
  ep_return_ = VectorXd::Zero(B);
  ep_len_ = VectorXd::Zero(B);
}

void PpoTrainer::reset_envs() {
  for (auto& e : envs_) e.reset(&curriculum_);
  ep_return_.setZero();
  ep_len_.setZero();
}

void PpoTrainer::forward_policy(int B, bool sample_actions) {
  for (int e = 0; e < B; ++e) {
    O_.col(e) = envs_[e].current_o();
    envs_[e].scan_window(cfg_.nets.scan_window, SCANWIN_.col(e).data());
    XINT_.col(e) = envs_[e].current_x_int();
    XEXT_.col(e) = envs_[e].current_x_ext();
    CRITIC_.col(e) = envs_[e].current_critic_state();
    PHI_.col(e) = phase_embed(envs_[e].current_phase());
  }
  ZPER_ = nets_.scan_encoder.forward(SCANWIN_);
  ZINT_ = nets_.intrinsic_encoder.forward(normalize_intrinsics(XINT_));
  AIN_.resize(nets_.actor_in_dim(), B);
  AIN_.topRows(kObsDim) = O_;
  AIN_.middleRows(kObsDim, nets_.cfg.latent_per) = ZPER_;
  AIN_.middleRows(kObsDim + nets_.cfg.latent_per, kExtDim) = XEXT_;
  AIN_.bottomRows(nets_.cfg.latent_int) = ZINT_;
  MEAN_ = nets_.actor.forward(AIN_, PHI_);
  if (sample_actions) {
    nets_.head.sample(MEAN_, policy_rng_, ACT_, LOGP_);
  } else {
    ACT_ = MEAN_;
    LOGP_ = nets_.head.log_prob(MEAN_, ACT_);
  }
  VAL_ = nets_.critic.forward(CRITIC_, PHI_).row(0);
}

RolloutStats PpoTrainer::collect_rollouts(RolloutBuffer& buffer) {
  const int B = cfg_.ppo.num_envs;
  const int T = cfg_.ppo.horizon;
  const int W = cfg_.nets.scan_window;
  buffer.resize(B, T, W);

  RolloutStats stats;
  std::vector<double> returns_done;
  std::vector<double> lens_done;
  std::array<double, 11> term_sum{};
  double reward_sum = 0.0;

  std::vector<int> cur_ep_start(B, -1);
  std::vector<double> winbuf(static_cast<size_t>(kScanDim) * W);
  for (int e = 0; e < B; ++e) {
    envs_[e].scan_window(W, winbuf.data());
    if (W > 1)
      buffer.scan_prefix.col(e) =
          Eigen::Map<VectorXd>(winbuf.data(), kScanDim * (W - 1));
  }

  std::vector<EnvStepResult> results(B);
  for (int t = 0; t < T; ++t) {
    forward_policy(B, true);
    for (int e = 0; e < B; ++e) {
      int i = buffer.index(e, t);
      buffer.o.col(i) = O_.col(e);
      buffer.scan.col(i) = envs_[e].current_scan();
      buffer.x_ext.col(i) = XEXT_.col(e);
      buffer.x_int.col(i) = XINT_.col(e);
      buffer.critic_in.col(i) = CRITIC_.col(e);
      buffer.phi.col(i) = PHI_.col(e);
      buffer.actions.col(i) = ACT_.col(e);
      buffer.logp[i] = LOGP_[e];
      buffer.values[i] = VAL_[e];
      buffer.phases[i] = envs_[e].current_phase();
      buffer.modes[i] = static_cast<int>(mode_of(envs_[e].current_phase()));
      buffer.ep_start[i] = cur_ep_start[e];
    }

    parallel_for(B, cfg_.threads,
                 [&](int e) { results[e] = envs_[e].step_core(ACT_.col(e)); });

    // Batched value of the final observation for timeout bootstrapping.
    std::vector<int> timeout_envs;
    for (int e = 0; e < B; ++e)
      if (results[e].done && !results[e].terminated) timeout_envs.push_back(e);
    VectorXd timeout_values;
    if (!timeout_envs.empty()) {
      MatrixXd cs(kCriticDim, timeout_envs.size());
      MatrixXd ph(2, timeout_envs.size());
      for (size_t k = 0; k < timeout_envs.size(); ++k) {
        cs.col(k) = envs_[timeout_envs[k]].current_critic_state();
        ph.col(k) = phase_embed(envs_[timeout_envs[k]].current_phase());
      }
      timeout_values = nets_.critic.forward(cs, ph).row(0);
    }

    int timeout_k = 0;
    for (int e = 0; e < B; ++e) {
      int i = buffer.index(e, t);
      const auto& r = results[e];
      buffer.rewards[i] = r.reward;
      buffer.dones[i] = r.done ? 1.0 : 0.0;
      buffer.terminals[i] = r.terminated ? 1.0 : 0.0;
      buffer.final_values[i] = 0.0;
      if (r.done && !r.terminated) buffer.final_values[i] = timeout_values[timeout_k++];
      reward_sum += r.reward;
      for (int k = 0; k < 11; ++k) term_sum[k] += r.terms[k];

      ep_return_[e] += r.reward;
      ep_len_[e] += 1;
      if (r.done) {
        returns_done.push_back(ep_return_[e]);
        lens_done.push_back(ep_len_[e]);
        ep_return_[e] = 0;
        ep_len_[e] = 0;
        for (const auto& rep : envs_[e].drain_reports())
          curriculum_.update(rep.command, rep.mean_error);
        envs_[e].reset(&curriculum_);
        cur_ep_start[e] = t + 1;
      }
    }
  }

  forward_policy(B, false); // values of the post-rollout observations
  buffer.bootstrap_values = VAL_;

  int N = B * T;
  stats.mean_reward = reward_sum / N;
  for (int k = 0; k < 11; ++k) stats.term_means[k] = term_sum[k] / N;
  stats.episodes = static_cast<int>(returns_done.size());
  if (!returns_done.empty()) {
    stats.mean_return =
        std::accumulate(returns_done.begin(), returns_done.end(), 0.0) / returns_done.size();
    stats.mean_episode_len =
        std::accumulate(lens_done.begin(), lens_done.end(), 0.0) / lens_done.size();
  }
  return stats;
}

UpdateStats PpoTrainer::update(RolloutBuffer& buffer) {
  UpdateStats stats;
  const int B = buffer.num_envs;
  const int T = buffer.horizon;
  const int N = B * T;
  const double gamma = cfg_.ppo.gamma;
  const double lam = cfg_.ppo.lam;
  const double clip = cfg_.ppo.clip;

  // Advantage targets.
  VectorXd next_values(N);
  for (int e = 0; e < B; ++e)
    for (int t = 0; t < T; ++t) {
      int i = buffer.index(e, t);
      if (buffer.dones[i] > 0.5)
        next_values[i] = buffer.terminals[i] > 0.5 ? 0.0 : buffer.final_values[i];
      else
        next_values[i] =
            (t == T - 1) ? buffer.bootstrap_values[e] : buffer.values[buffer.index(e, t + 1)];
    }
  VectorXd adv(N), ret(N);
  for (int e = 0; e < B; ++e) {
    VectorXd a, r;
    int base = buffer.index(e, 0);
    gae_advantages(buffer.rewards.segment(base, T), buffer.values.segment(base, T),
                   next_values.segment(base, T), buffer.dones.segment(base, T), gamma, lam, a,
                   r);
    adv.segment(base, T) = a;
    ret.segment(base, T) = r;
  }

  VectorXd adv_n = adv;
  normalize_advantages(adv_n);

  auto blocks = nets_.all_blocks();
  if (!adam_ready_) {
    adam_.lr = cfg_.ppo.lr;
    adam_.attach(blocks);
    adam_ready_ = true;
  }
  VectorXd snapshot = snapshot_params(blocks);

  const int mb_size = std::min(cfg_.ppo.minibatch_size, N);
  const int W = buffer.window;
  mbO_.resize(kObsDim, mb_size);
  mbSCANWIN_.resize(kScanDim * W, mb_size);
  mbXINT_.resize(kIntDim, mb_size);
  mbXEXT_.resize(kExtDim, mb_size);
  mbCRITIC_.resize(kCriticDim, mb_size);
  mbPHI_.resize(2, mb_size);
  mbACT_.resize(kActDim, mb_size);
  VectorXd mb_oldlogp(mb_size), mb_adv(mb_size), mb_ret(mb_size);

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);

  double kl_sum = 0, clip_sum = 0, aloss_sum = 0, vloss_sum = 0;
  int batches = 0;

  for (int epoch = 0; epoch < cfg_.ppo.epochs; ++epoch) {
    for (int i = N - 1; i > 0; --i) std::swap(order[i], order[shuffle_rng_.uniform_int(i + 1)]);
    for (int start = 0; start + mb_size <= N; start += mb_size) {
      const int M = mb_size;
      for (int k = 0; k < M; ++k) {
        int idx = order[start + k];
        int e = idx / T, t = idx % T;
        mbO_.col(k) = buffer.o.col(idx);
        buffer.gather_scan_window(e, t, mbSCANWIN_.col(k).data());
        mbXINT_.col(k) = buffer.x_int.col(idx);
        mbXEXT_.col(k) = buffer.x_ext.col(idx);
        mbCRITIC_.col(k) = buffer.critic_in.col(idx);
        mbPHI_.col(k) = buffer.phi.col(idx);
        mbACT_.col(k) = buffer.actions.col(idx);
        mb_oldlogp[k] = buffer.logp[idx];
        mb_adv[k] = adv_n[idx];
        mb_ret[k] = ret[idx];
      }

      adam_.zero_grad();

      MatrixXd zper = nets_.scan_encoder.forward(mbSCANWIN_);
      MatrixXd zint = nets_.intrinsic_encoder.forward(normalize_intrinsics(mbXINT_));
      MatrixXd ain(nets_.actor_in_dim(), M);
      ain.topRows(kObsDim) = mbO_;
      ain.middleRows(kObsDim, nets_.cfg.latent_per) = zper;
      ain.middleRows(kObsDim + nets_.cfg.latent_per, kExtDim) = mbXEXT_;
      ain.bottomRows(nets_.cfg.latent_int) = zint;
      MatrixXd mean_out = nets_.actor.forward(ain, mbPHI_);
      VectorXd logp_new = nets_.head.log_prob(mean_out, mbACT_);

      VectorXd dlogp(M);
      double actor_loss = 0.0;
      int clipped_n = 0;
      for (int k = 0; k < M; ++k) {
        double ratio = std::exp(logp_new[k] - mb_oldlogp[k]);
        double surr1 = ratio * mb_adv[k];
        double rc = std::min(std::max(ratio, 1.0 - clip), 1.0 + clip);
        double surr2 = rc * mb_adv[k];
        actor_loss -= std::min(surr1, surr2) / M;
        dlogp[k] = (surr1 <= surr2) ? -mb_adv[k] * ratio / M : 0.0;
        if (std::abs(ratio - 1.0) > clip) ++clipped_n;
        kl_sum += (mb_oldlogp[k] - logp_new[k]);
      }
      MatrixXd gmean = nets_.head.backward_logp(mean_out, mbACT_, dlogp);
      nets_.head.accumulate_entropy_grad(-cfg_.ppo.ent_coef);
      MatrixXd gain = nets_.actor.backward(gmean);
      nets_.scan_encoder.backward(gain.middleRows(kObsDim, nets_.cfg.latent_per));
      nets_.intrinsic_encoder.backward(gain.bottomRows(nets_.cfg.latent_int));

      MatrixXd v = nets_.critic.forward(mbCRITIC_, mbPHI_);
      double vloss = 0.0;
      MatrixXd dv(1, M);
      for (int k = 0; k < M; ++k) {
        double diff = v(0, k) - mb_ret[k];
        vloss += 0.5 * diff * diff / M;
        dv(0, k) = cfg_.ppo.vf_coef * diff / M;
      }
      nets_.critic.backward(dv);

      bool finite = std::isfinite(actor_loss) && std::isfinite(vloss) && grads_finite(blocks);
      if (!finite) {
        restore_params(blocks, snapshot);
        stats.aborted = true;
        return stats;
      }
      adam_.step();

      aloss_sum += actor_loss;
      vloss_sum += vloss;
      clip_sum += static_cast<double>(clipped_n) / M;
      ++batches;
    }
  }

  int samples = batches * mb_size;
  stats.actor_loss = aloss_sum / std::max(1, batches);
  stats.value_loss = vloss_sum / std::max(1, batches);
  stats.clip_fraction = clip_sum / std::max(1, batches);
  stats.approx_kl = kl_sum / std::max(1, samples);
  stats.entropy = nets_.head.entropy();
  return stats;
}

double PpoTrainer::probe_tracking_error(int commands, double horizon_s) {
  static const Command kProbe[4] = {{0.3, 0.0}, {0.6, 0.0}, {0.3, 0.2}, {0.3, -0.2}};
  commands = std::min(commands, 4);

  EnvOptions opt = cfg_.env;
  opt.enable_impulses = false;
  opt.resample_commands = false;
  opt.max_episode_time = horizon_s + 1.0;

  double err_sum = 0.0;
  long err_steps = 0;
  int W = cfg_.nets.scan_window;
  MatrixXd scanwin(kScanDim * W, 1);
  for (int c = 0; c < commands; ++c) {
    Env env(opt, cfg_.board, cfg_.rider, seed_ + 7777, 1000 + c);
    env.fix_command(kProbe[c]);
    env.fix_period(10.0);
    env.reset();
    int steps = static_cast<int>(horizon_s / opt.control_dt);
    bool fell = false;
    for (int t = 0; t < steps; ++t) {
      if (fell) {
        // a fallen rider tracks nothing for the rest of the horizon
        Mode m = mode_of(phase_of(t * opt.control_dt, 10.0));
        if (m == Mode::Pushing) err_sum += std::abs(kProbe[c].v);
        if (m == Mode::Carving) err_sum += std::abs(kProbe[c].w);
        err_steps += 1;
        continue;
      }
      double phase = env.current_phase();
      Mode mode = mode_of(phase);
      env.scan_window(W, scanwin.col(0).data());
      MatrixXd zper = nets_.scan_encoder.forward(scanwin);
      MatrixXd zint = nets_.intrinsic_encoder.forward(normalize_intrinsics(env.current_x_int()));
      MatrixXd ain(nets_.actor_in_dim(), 1);
      ain.topRows(kObsDim) = env.current_o();
      ain.middleRows(kObsDim, nets_.cfg.latent_per) = zper;
      ain.middleRows(kObsDim + nets_.cfg.latent_per, kExtDim) = env.current_x_ext();
      ain.bottomRows(nets_.cfg.latent_int) = zint;
      MatrixXd phi(2, 1);
      phi.col(0) = phase_embed(phase);
      MatrixXd mean = nets_.actor.forward(ain, phi);
      env.step_core(mean.col(0));
      err_sum += env.step_tracking_error(mode);
      err_steps += 1;
      if (env.terminated()) fell = true;
    }
  }
  return err_steps > 0 ? err_sum / err_steps : 1e9;
}

std::string PpoTrainer::train(const std::string& run_dir, const std::string& resume) {
  int start_update = 0;
  if (!resume.empty()) {
    nlohmann::json meta;
    std::string err;
    if (!nets_.load(resume, &meta, &err)) throw std::runtime_error("resume failed: " + err);
    if (meta.contains("update")) start_update = meta["update"].get<int>() ;
  }

  CsvWriter metrics(run_dir + "/metrics.csv",
                    {"update", "steps", "mean_return", "mean_reward", "episodes", "ep_len",
                     "r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8", "r9", "r10", "r11",
                     "actor_loss", "value_loss", "clip_frac", "approx_kl", "entropy",
                     "active_cells", "probe_error", "wall_s"});

  reset_envs();
  RolloutBuffer buffer;
  auto t0 = std::chrono::steady_clock::now();
  long total_steps = 0;
  double probe = -1.0;
  std::string last_ckpt = run_dir + "/checkpoint_final.skcp";

  for (int u = start_update; u < cfg_.ppo.updates; ++u) {
    RolloutStats rs = collect_rollouts(buffer);
    UpdateStats us = update(buffer);
    total_steps += static_cast<long>(cfg_.ppo.num_envs) * cfg_.ppo.horizon;

    if ((u + 1) % 50 == 0 || u + 1 == cfg_.ppo.updates) probe = probe_tracking_error();

    double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::vector<double> row{static_cast<double>(u + 1),
                            static_cast<double>(total_steps),
                            rs.mean_return,
                            rs.mean_reward,
                            static_cast<double>(rs.episodes),
                            rs.mean_episode_len};
    for (int k = 0; k < 11; ++k) row.push_back(rs.term_means[k]);
    row.insert(row.end(), {us.actor_loss, us.value_loss, us.clip_fraction, us.approx_kl,
                           us.entropy, static_cast<double>(curriculum_.active_count()), probe,
                           wall});
    metrics.row(row);
    metrics.flush();

    if ((u + 1) % cfg_.ppo.checkpoint_every == 0 || u + 1 == cfg_.ppo.updates) {
      nlohmann::json meta;
      meta["update"] = u + 1;
      meta["seed"] = seed_;
      meta["ranges_hash"] = fnv1a(config_to_json(cfg_)["env"]["randomization"].dump());
      std::string path =
          (u + 1 == cfg_.ppo.updates) ? last_ckpt : run_dir + "/checkpoint_latest.skcp";
      nets_.save(path, meta);
    }
  }
  return last_ckpt;
}

}  // namespace skate
