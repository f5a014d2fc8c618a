#include "skate/config.hpp"

#include <fstream>
#include <sstream>

namespace skate {

namespace {

json vec3_to_json(const Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }
Vector3d vec3_from_json(const json& j) { return Vector3d(j[0], j[1], j[2]); }

json vecx_to_json(const VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

VectorXd vecx_from_json(const json& j) {
  VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[i] = j[i];
  return v;
}

json range_to_json(const RandRange& r) { return json::array({r.lo, r.hi}); }
RandRange range_from_json(const json& j) { return RandRange{j[0], j[1]}; }

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json config_to_json(const Config& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["out_dir"] = c.out_dir;
  j["allow_out_of_range"] = c.allow_out_of_range;

  json& b = j["board"];
  b["gamma1_front"] = c.board.gamma1_front;
  b["gamma2_front"] = c.board.gamma2_front;
  b["gamma1_rear"] = c.board.gamma1_rear;
  b["gamma2_rear"] = c.board.gamma2_rear;
  b["bushing_kp"] = c.board.bushing_kp;
  b["bushing_kd"] = c.board.bushing_kd;
  b["inertia_roll"] = c.board.inertia_roll;
  b["truck_yaw_kp"] = c.board.truck_yaw_kp;
  b["truck_yaw_kd"] = c.board.truck_yaw_kd;
  b["axle_inertia"] = c.board.axle_inertia;
  b["mass"] = c.board.mass;
  b["wheel_radius"] = c.board.wheel_radius;
  b["wheelbase"] = c.board.wheelbase;
  b["deck_length"] = c.board.deck_length;
  b["deck_width"] = c.board.deck_width;
  b["deck_height"] = c.board.deck_height;
  b["tau_static"] = c.board.tau_static;
  b["mu_roll"] = c.board.mu_roll;
  b["c_damp"] = c.board.c_damp;
  b["omega_eps"] = c.board.omega_eps;
  b["gravity"] = c.board.gravity;
  b["wheel_inertia"] = c.board.wheel_inertia;
  b["slip_damping"] = c.board.slip_damping;
  b["lateral_time_const"] = c.board.lateral_time_const;

  json& r = j["rider"];
  r["trunk_mass"] = c.rider.trunk_mass;
  r["trunk_inertia"] = vec3_to_json(c.rider.trunk_inertia);
  json hips = json::array();
  for (const auto& h : c.rider.hip_offsets) hips.push_back(vec3_to_json(h));
  r["hip_offsets"] = hips;
  r["link1"] = c.rider.link1;
  r["link2"] = c.rider.link2;
  r["joint_kp"] = vecx_to_json(c.rider.joint_kp);
  r["joint_kd"] = vecx_to_json(c.rider.joint_kd);
  r["q_nominal"] = vecx_to_json(c.rider.q_nominal);
  r["q_lower"] = vecx_to_json(c.rider.q_lower);
  r["q_upper"] = vecx_to_json(c.rider.q_upper);
  r["torque_limit"] = c.rider.torque_limit;
  r["joint_response_inertia"] = c.rider.joint_response_inertia;
  r["foot_force_cap"] = c.rider.foot_force_cap;
  r["contact_kp"] = c.rider.contact_kp;
  r["contact_kd"] = c.rider.contact_kd;
  r["tangential_damping"] = c.rider.tangential_damping;
  r["friction_coeff"] = c.rider.friction_coeff;
  r["collision_clearance"] = c.rider.collision_clearance;
  r["edge_band"] = c.rider.edge_band;
  r["gravity"] = c.rider.gravity;

  json& e = j["env"];
  e["control_dt"] = c.env.control_dt;
  e["substeps"] = c.env.substeps;
  e["action_clamp"] = c.env.action_clamp;
  e["enable_impulses"] = c.env.enable_impulses;
  e["impulse_period"] = c.env.impulse_period;
  e["impulse_duration"] = c.env.impulse_duration;
  e["trunk_impulse_force"] = c.env.trunk_impulse_force;
  e["deck_impulse_force"] = c.env.deck_impulse_force;
  e["resample_commands"] = c.env.resample_commands;
  e["command_resample_period"] = c.env.command_resample_period;
  e["period_min"] = c.env.period_min;
  e["period_max"] = c.env.period_max;
  e["init_pos_dev"] = c.env.init_pos_dev;
  e["init_joint_dev"] = c.env.init_joint_dev;
  e["term_tilt"] = c.env.term_tilt;
  e["term_distance"] = c.env.term_distance;
  e["term_height"] = c.env.term_height;
  e["max_episode_time"] = c.env.max_episode_time;
  e["scan_history_len"] = c.env.scan_history_len;

  json& rr = e["randomization"];
  rr["payload"] = range_to_json(c.env.ranges.payload);
  rr["com_shift"] = range_to_json(c.env.ranges.com_shift);
  rr["friction"] = range_to_json(c.env.ranges.friction);
  rr["restitution"] = range_to_json(c.env.ranges.restitution);
  rr["joint_kp"] = range_to_json(c.env.ranges.joint_kp);
  rr["joint_kd"] = range_to_json(c.env.ranges.joint_kd);
  rr["deck_mass"] = range_to_json(c.env.ranges.deck_mass);
  rr["truck_kp"] = range_to_json(c.env.ranges.truck_kp);
  rr["truck_kd"] = range_to_json(c.env.ranges.truck_kd);
  rr["bushing_kp"] = range_to_json(c.env.ranges.bushing_kp);
  rr["bushing_kd"] = range_to_json(c.env.ranges.bushing_kd);

  json& po = e["poses"];
  po["p_body_carving"] = vec3_to_json(c.env.poses.p_body_carving);
  po["p_body_pushing"] = vec3_to_json(c.env.poses.p_body_pushing);
  json fc = json::array(), fp = json::array();
  for (int i = 0; i < 4; ++i) {
    fc.push_back(json::array({c.env.poses.p_foot_carving[i].x(), c.env.poses.p_foot_carving[i].y()}));
    fp.push_back(json::array({c.env.poses.p_foot_pushing[i].x(), c.env.poses.p_foot_pushing[i].y()}));
  }
  po["p_foot_carving"] = fc;
  po["p_foot_pushing"] = fp;
  po["q_carving"] = vecx_to_json(c.env.poses.q_carving);
  po["q_pushing"] = vecx_to_json(c.env.poses.q_pushing);

  json& n = j["nets"];
  n["actor_hidden"] = c.nets.actor_hidden;
  n["critic_hidden"] = c.nets.critic_hidden;
  n["intrinsic_encoder"] = c.nets.intrinsic_encoder;
  n["latent_per"] = c.nets.latent_per;
  n["latent_int"] = c.nets.latent_int;
  n["conv_channels"] = c.nets.conv_channels;
  n["gru_hidden"] = c.nets.gru_hidden;
  n["scan_window"] = c.nets.scan_window;
  n["per_window"] = c.nets.per_window;
  n["moe_experts"] = c.nets.moe_experts;
  n["init_log_std"] = c.nets.init_log_std;

  json& p = j["ppo"];
  p["gamma"] = c.ppo.gamma;
  p["lam"] = c.ppo.lam;
  p["clip"] = c.ppo.clip;
  p["epochs"] = c.ppo.epochs;
  p["minibatch_size"] = c.ppo.minibatch_size;
  p["lr"] = c.ppo.lr;
  p["vf_coef"] = c.ppo.vf_coef;
  p["ent_coef"] = c.ppo.ent_coef;
  p["horizon"] = c.ppo.horizon;
  p["num_envs"] = c.ppo.num_envs;
  p["updates"] = c.ppo.updates;
  p["checkpoint_every"] = c.ppo.checkpoint_every;

  json& d = j["distill"];
  d["lr"] = c.distill.lr;
  d["iterations"] = c.distill.iterations;
  d["num_envs"] = c.distill.num_envs;
  d["steps_per_iter"] = c.distill.steps_per_iter;
  d["replay_batches"] = c.distill.replay_batches;
  d["p_zero_frame"] = c.distill.p_zero_frame;
  d["p_flip"] = c.distill.p_flip;
  d["height_noise"] = c.distill.height_noise;
  d["teacher_inputs"] = c.distill.teacher_inputs;

  json& ev = j["eval"];
  ev["horizon"] = c.eval.horizon;
  ev["trials"] = c.eval.trials;
  ev["impulse_period"] = c.eval.impulse_period;
  ev["phase_period"] = c.eval.phase_period;
  ev["resolution"] = c.eval.resolution;
  ev["speed_gate"] = c.eval.speed_gate;
  ev["traversal_distance"] = c.eval.traversal_distance;
  ev["traversal_max_time"] = c.eval.traversal_max_time;
  ev["traversal_cv"] = c.eval.traversal_cv;

  return j;
}

Config config_from_json(const json& j) {
  Config c;
  get_if(j, "seed", c.seed);
  get_if(j, "threads", c.threads);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "allow_out_of_range", c.allow_out_of_range);

  if (j.contains("board")) {
    const json& b = j["board"];
    get_if(b, "gamma1_front", c.board.gamma1_front);
    get_if(b, "gamma2_front", c.board.gamma2_front);
    get_if(b, "gamma1_rear", c.board.gamma1_rear);
    get_if(b, "gamma2_rear", c.board.gamma2_rear);
    get_if(b, "bushing_kp", c.board.bushing_kp);
    get_if(b, "bushing_kd", c.board.bushing_kd);
    get_if(b, "inertia_roll", c.board.inertia_roll);
    get_if(b, "truck_yaw_kp", c.board.truck_yaw_kp);
    get_if(b, "truck_yaw_kd", c.board.truck_yaw_kd);
    get_if(b, "axle_inertia", c.board.axle_inertia);
    get_if(b, "mass", c.board.mass);
    get_if(b, "wheel_radius", c.board.wheel_radius);
    get_if(b, "wheelbase", c.board.wheelbase);
    get_if(b, "deck_length", c.board.deck_length);
    get_if(b, "deck_width", c.board.deck_width);
    get_if(b, "deck_height", c.board.deck_height);
    get_if(b, "tau_static", c.board.tau_static);
    get_if(b, "mu_roll", c.board.mu_roll);
    get_if(b, "c_damp", c.board.c_damp);
    get_if(b, "omega_eps", c.board.omega_eps);
    get_if(b, "gravity", c.board.gravity);
    get_if(b, "wheel_inertia", c.board.wheel_inertia);
    get_if(b, "slip_damping", c.board.slip_damping);
    get_if(b, "lateral_time_const", c.board.lateral_time_const);
  }

  if (j.contains("rider")) {
    const json& r = j["rider"];
    get_if(r, "trunk_mass", c.rider.trunk_mass);
    if (r.contains("trunk_inertia")) c.rider.trunk_inertia = vec3_from_json(r["trunk_inertia"]);
    if (r.contains("hip_offsets"))
      for (int i = 0; i < 4; ++i) c.rider.hip_offsets[i] = vec3_from_json(r["hip_offsets"][i]);
    get_if(r, "link1", c.rider.link1);
    get_if(r, "link2", c.rider.link2);
    if (r.contains("joint_kp")) c.rider.joint_kp = vecx_from_json(r["joint_kp"]);
    if (r.contains("joint_kd")) c.rider.joint_kd = vecx_from_json(r["joint_kd"]);
    if (r.contains("q_nominal")) c.rider.q_nominal = vecx_from_json(r["q_nominal"]);
    if (r.contains("q_lower")) c.rider.q_lower = vecx_from_json(r["q_lower"]);
    if (r.contains("q_upper")) c.rider.q_upper = vecx_from_json(r["q_upper"]);
    get_if(r, "torque_limit", c.rider.torque_limit);
    get_if(r, "joint_response_inertia", c.rider.joint_response_inertia);
    get_if(r, "foot_force_cap", c.rider.foot_force_cap);
    get_if(r, "contact_kp", c.rider.contact_kp);
    get_if(r, "contact_kd", c.rider.contact_kd);
    get_if(r, "tangential_damping", c.rider.tangential_damping);
    get_if(r, "friction_coeff", c.rider.friction_coeff);
    get_if(r, "collision_clearance", c.rider.collision_clearance);
    get_if(r, "edge_band", c.rider.edge_band);
    get_if(r, "gravity", c.rider.gravity);
  }

  if (j.contains("env")) {
    const json& e = j["env"];
    get_if(e, "control_dt", c.env.control_dt);
    get_if(e, "substeps", c.env.substeps);
    get_if(e, "action_clamp", c.env.action_clamp);
    get_if(e, "enable_impulses", c.env.enable_impulses);
    get_if(e, "impulse_period", c.env.impulse_period);
    get_if(e, "impulse_duration", c.env.impulse_duration);
    get_if(e, "trunk_impulse_force", c.env.trunk_impulse_force);
    get_if(e, "deck_impulse_force", c.env.deck_impulse_force);
    get_if(e, "resample_commands", c.env.resample_commands);
    get_if(e, "command_resample_period", c.env.command_resample_period);
    get_if(e, "period_min", c.env.period_min);
    get_if(e, "period_max", c.env.period_max);
    get_if(e, "init_pos_dev", c.env.init_pos_dev);
    get_if(e, "init_joint_dev", c.env.init_joint_dev);
    get_if(e, "term_tilt", c.env.term_tilt);
    get_if(e, "term_distance", c.env.term_distance);
    get_if(e, "term_height", c.env.term_height);
    get_if(e, "max_episode_time", c.env.max_episode_time);
    get_if(e, "scan_history_len", c.env.scan_history_len);
    if (e.contains("randomization")) {
      const json& rr = e["randomization"];
      auto& g = c.env.ranges;
      if (rr.contains("payload")) g.payload = range_from_json(rr["payload"]);
      if (rr.contains("com_shift")) g.com_shift = range_from_json(rr["com_shift"]);
      if (rr.contains("friction")) g.friction = range_from_json(rr["friction"]);
      if (rr.contains("restitution")) g.restitution = range_from_json(rr["restitution"]);
      if (rr.contains("joint_kp")) g.joint_kp = range_from_json(rr["joint_kp"]);
      if (rr.contains("joint_kd")) g.joint_kd = range_from_json(rr["joint_kd"]);
      if (rr.contains("deck_mass")) g.deck_mass = range_from_json(rr["deck_mass"]);
      if (rr.contains("truck_kp")) g.truck_kp = range_from_json(rr["truck_kp"]);
      if (rr.contains("truck_kd")) g.truck_kd = range_from_json(rr["truck_kd"]);
      if (rr.contains("bushing_kp")) g.bushing_kp = range_from_json(rr["bushing_kp"]);
      if (rr.contains("bushing_kd")) g.bushing_kd = range_from_json(rr["bushing_kd"]);
    }
    if (e.contains("poses")) {
      const json& po = e["poses"];
      auto& t = c.env.poses;
      if (po.contains("p_body_carving")) t.p_body_carving = vec3_from_json(po["p_body_carving"]);
      if (po.contains("p_body_pushing")) t.p_body_pushing = vec3_from_json(po["p_body_pushing"]);
      if (po.contains("p_foot_carving"))
        for (int i = 0; i < 4; ++i)
          t.p_foot_carving[i] =
              Vector2d(po["p_foot_carving"][i][0], po["p_foot_carving"][i][1]);
      if (po.contains("p_foot_pushing"))
        for (int i = 0; i < 4; ++i)
          t.p_foot_pushing[i] =
              Vector2d(po["p_foot_pushing"][i][0], po["p_foot_pushing"][i][1]);
      if (po.contains("q_carving")) t.q_carving = vecx_from_json(po["q_carving"]);
      if (po.contains("q_pushing")) t.q_pushing = vecx_from_json(po["q_pushing"]);
    }
  }

  if (j.contains("nets")) {
    const json& n = j["nets"];
    get_if(n, "actor_hidden", c.nets.actor_hidden);
    get_if(n, "critic_hidden", c.nets.critic_hidden);
    get_if(n, "intrinsic_encoder", c.nets.intrinsic_encoder);
    get_if(n, "latent_per", c.nets.latent_per);
    get_if(n, "latent_int", c.nets.latent_int);
    get_if(n, "conv_channels", c.nets.conv_channels);
    get_if(n, "gru_hidden", c.nets.gru_hidden);
    get_if(n, "scan_window", c.nets.scan_window);
    get_if(n, "per_window", c.nets.per_window);
    get_if(n, "moe_experts", c.nets.moe_experts);
    get_if(n, "init_log_std", c.nets.init_log_std);
  }

  if (j.contains("ppo")) {
    const json& p = j["ppo"];
    get_if(p, "gamma", c.ppo.gamma);
    get_if(p, "lam", c.ppo.lam);
    get_if(p, "clip", c.ppo.clip);
    get_if(p, "epochs", c.ppo.epochs);
    get_if(p, "minibatch_size", c.ppo.minibatch_size);
    get_if(p, "lr", c.ppo.lr);
    get_if(p, "vf_coef", c.ppo.vf_coef);
    get_if(p, "ent_coef", c.ppo.ent_coef);
    get_if(p, "horizon", c.ppo.horizon);
    get_if(p, "num_envs", c.ppo.num_envs);
    get_if(p, "updates", c.ppo.updates);
    get_if(p, "checkpoint_every", c.ppo.checkpoint_every);
  }

  if (j.contains("distill")) {
    const json& d = j["distill"];
    get_if(d, "lr", c.distill.lr);
    get_if(d, "iterations", c.distill.iterations);
    get_if(d, "num_envs", c.distill.num_envs);
    get_if(d, "steps_per_iter", c.distill.steps_per_iter);
    get_if(d, "replay_batches", c.distill.replay_batches);
    get_if(d, "p_zero_frame", c.distill.p_zero_frame);
    get_if(d, "p_flip", c.distill.p_flip);
    get_if(d, "height_noise", c.distill.height_noise);
    get_if(d, "teacher_inputs", c.distill.teacher_inputs);
  }

  if (j.contains("eval")) {
    const json& ev = j["eval"];
    get_if(ev, "horizon", c.eval.horizon);
    get_if(ev, "trials", c.eval.trials);
    get_if(ev, "impulse_period", c.eval.impulse_period);
    get_if(ev, "phase_period", c.eval.phase_period);
    get_if(ev, "resolution", c.eval.resolution);
    get_if(ev, "speed_gate", c.eval.speed_gate);
    get_if(ev, "traversal_distance", c.eval.traversal_distance);
    get_if(ev, "traversal_max_time", c.eval.traversal_max_time);
    get_if(ev, "traversal_cv", c.eval.traversal_cv);
  }

  return c;
}

std::vector<std::string> config_validate(const Config& c) {
  std::vector<std::string> errors;
  auto bad = [&](const std::string& msg) { errors.push_back(msg); };

  if (!c.board.valid()) bad("board: physical parameters must be positive, gamma2 in (0, 2]");
  if (!c.rider.valid()) bad("rider: physical parameters invalid (links, gains, joint limits)");

  if (c.env.control_dt <= 0) bad("env.control_dt: must be positive");
  if (c.env.substeps < 1) bad("env.substeps: must be >= 1");
  if (c.env.control_dt / std::max(1, c.env.substeps) > 0.02)
    bad("env: physics substep exceeds 20 ms");
  if (c.env.impulse_period <= 0) bad("env.impulse_period: must be positive");
  if (c.env.command_resample_period <= 0) bad("env.command_resample_period: must be positive");
  if (c.env.period_min <= 0 || c.env.period_max < c.env.period_min)
    bad("env.period_min/period_max: need 0 < min <= max");
  if (c.env.max_episode_time <= 0) bad("env.max_episode_time: must be positive");
  if (c.env.scan_history_len < 1) bad("env.scan_history_len: must be >= 1");
  if (c.nets.scan_window > c.env.scan_history_len)
    bad("nets.scan_window: exceeds env.scan_history_len");

  if (!c.allow_out_of_range) {
    RandomizationRanges lim = RandomizationRanges::testing();
    auto check = [&](const char* name, const RandRange& r, const RandRange& l) {
      if (r.lo < l.lo || r.hi > l.hi || r.lo > r.hi) {
        std::ostringstream os;
        os << "env.randomization." << name << ": [" << r.lo << ", " << r.hi
           << "] outside testing range [" << l.lo << ", " << l.hi << "]";
        bad(os.str());
      }
    };
    const auto& g = c.env.ranges;
    check("payload", g.payload, lim.payload);
    check("com_shift", g.com_shift, lim.com_shift);
    check("friction", g.friction, lim.friction);
    check("restitution", g.restitution, lim.restitution);
    check("joint_kp", g.joint_kp, lim.joint_kp);
    check("joint_kd", g.joint_kd, lim.joint_kd);
    check("deck_mass", g.deck_mass, lim.deck_mass);
    check("truck_kp", g.truck_kp, lim.truck_kp);
    check("truck_kd", g.truck_kd, lim.truck_kd);
    check("bushing_kp", g.bushing_kp, lim.bushing_kp);
    check("bushing_kd", g.bushing_kd, lim.bushing_kd);
  }

  if (c.ppo.gamma <= 0 || c.ppo.gamma > 1) bad("ppo.gamma: must be in (0, 1]");
  if (c.ppo.lam <= 0 || c.ppo.lam > 1) bad("ppo.lam: must be in (0, 1]");
  if (c.ppo.clip <= 0 || c.ppo.clip >= 1) bad("ppo.clip: must be in (0, 1)");
  if (c.ppo.horizon < 1 || c.ppo.num_envs < 1) bad("ppo: horizon and num_envs must be >= 1");
  if (c.distill.iterations < 1 || c.distill.num_envs < 1) bad("distill: counts must be >= 1");
  if (c.eval.resolution <= 0) bad("eval.resolution: must be positive");
  if (c.threads < 1) bad("threads: must be >= 1");

  return errors;
}

Config load_config_file(const std::string& path, std::string* error) {
  std::ifstream in(path);
  if (!in) {
    if (error) *error = "cannot open config file " + path;
    return Config{};
  }
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    if (error) *error = "config file is not valid JSON: " + path;
    return Config{};
  }
  return config_from_json(j);
}

bool save_config_file(const Config& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) return false;
  out << config_to_json(c).dump(2) << "\n";
  return true;
}

bool apply_override(json& tree, const std::string& spec, std::string* error) {
  auto eq = spec.find('=');
  if (eq == std::string::npos) {
    if (error) *error = "override must look like key.path=value: " + spec;
    return false;
  }
  std::string path = spec.substr(0, eq);
  std::string value = spec.substr(eq + 1);

  json* node = &tree;
  std::stringstream ss(path);
  std::string key;
  std::vector<std::string> keys;
  while (std::getline(ss, key, '.')) keys.push_back(key);
  if (keys.empty()) {
    if (error) *error = "empty override path";
    return false;
  }
  for (size_t i = 0; i + 1 < keys.size(); ++i) node = &((*node)[keys[i]]);

  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value; // plain string
  (*node)[keys.back()] = parsed;
  return true;
}

}  // namespace skate
