#include "skate/nets.hpp"

#include <cmath>

namespace skate {

namespace {

inline MatrixXd elu(const MatrixXd& z) {
  return z.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

// ELU derivative recovered from the post-activation value.
inline MatrixXd elu_deriv_from_y(const MatrixXd& y) {
  return y.unaryExpr([](double v) { return v > 0.0 ? 1.0 : v + 1.0; });
}

inline MatrixXd sigmoid(const MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

}  // namespace

void orthogonal_init(MatrixXd& w, Rng& rng, double gain) {
  const int rows = static_cast<int>(w.rows());
  const int cols = static_cast<int>(w.cols());
  MatrixXd g(std::max(rows, cols), std::min(rows, cols));
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ() * MatrixXd::Identity(g.rows(), g.cols());
  MatrixXd r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  for (int j = 0; j < q.cols(); ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  w = (rows >= cols) ? q : MatrixXd(q.transpose());
  w *= gain;
}

// ---------------------------------------------------------------- Linear --

void Linear::init(int in, int out, Rng& rng, double gain) {
  W.resize(out, in);
  orthogonal_init(W, rng, gain);
  b = VectorXd::Zero(out);
  gW = MatrixXd::Zero(out, in);
  gb = VectorXd::Zero(out);
}

MatrixXd Linear::forward(const MatrixXd& x) {
  x_cache = x;
  return (W * x).colwise() + b;
}

MatrixXd Linear::backward(const MatrixXd& gy) {
  gW.noalias() += gy * x_cache.transpose();
  gb.noalias() += gy.rowwise().sum();
  return W.transpose() * gy;
}

void Linear::zero_grad() {
  gW.setZero();
  gb.setZero();
}

void Linear::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".W", W.data(), gW.data(), static_cast<int>(W.rows()),
                 static_cast<int>(W.cols())});
  out.push_back({prefix + ".b", b.data(), gb.data(), static_cast<int>(b.size()), 1});
}

// ------------------------------------------------------------------- MLP --

void MLP::init(int in, const std::vector<int>& widths, Rng& rng, double final_gain) {
  layers.resize(widths.size());
  int prev = in;
  for (size_t i = 0; i < widths.size(); ++i) {
    double gain = (i + 1 == widths.size()) ? final_gain : 1.0;
    layers[i].init(prev, widths[i], rng, gain);
    prev = widths[i];
  }
  act_cache.resize(widths.size() > 0 ? widths.size() - 1 : 0);
}

MatrixXd MLP::forward(const MatrixXd& x) {
  MatrixXd h = x;
  for (size_t i = 0; i + 1 < layers.size(); ++i) {
    h = elu(layers[i].forward(h));
    act_cache[i] = h;
  }
  return layers.back().forward(h);
}

MatrixXd MLP::backward(const MatrixXd& gy) {
  MatrixXd g = layers.back().backward(gy);
  for (int i = static_cast<int>(layers.size()) - 2; i >= 0; --i) {
    g = g.cwiseProduct(elu_deriv_from_y(act_cache[i]));
    g = layers[i].backward(g);
  }
  return g;
}

VectorXd MLP::apply(const VectorXd& x) const {
  VectorXd h = x;
  for (size_t i = 0; i + 1 < layers.size(); ++i)
    h = elu(layers[i].apply(h));
  return layers.back().apply(h);
}

void MLP::zero_grad() {
  for (auto& l : layers) l.zero_grad();
}

void MLP::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  for (size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + ".l" + std::to_string(i), out);
}

// ------------------------------------------------------------------ FiLM --

void FiLMLayer::init(int in, int width, Rng& rng) {
  main.init(in, width, rng, 1.0);
  mod.init(2, 2 * width, rng, 1.0);
  // Start at the identity modulation so training begins from the plain MLP.
  mod.W.setZero();
  mod.b.setZero();
  mod.b.head(width).setOnes();
}

MatrixXd FiLMLayer::forward(const MatrixXd& x, const MatrixXd& phi) {
  z_cache = main.forward(x);
  const int width = main.out_dim();
  MatrixXd m = mod.forward(phi);
  gamma_cache = m.topRows(width);
  MatrixXd p = gamma_cache.cwiseProduct(z_cache) + m.bottomRows(width);
  h_cache = elu(p);
  return h_cache;
}

MatrixXd FiLMLayer::backward(const MatrixXd& gh) {
  const int width = main.out_dim();
  MatrixXd gp = gh.cwiseProduct(elu_deriv_from_y(h_cache));
  MatrixXd gm(2 * width, gp.cols());
  gm.topRows(width) = gp.cwiseProduct(z_cache);
  gm.bottomRows(width) = gp;
  mod.backward(gm); // gradient w.r.t. phi is not propagated
  return main.backward(gp.cwiseProduct(gamma_cache));
}

void FiLMLayer::zero_grad() {
  main.zero_grad();
  mod.zero_grad();
}

void FiLMLayer::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  main.collect(prefix + ".main", out);
  mod.collect(prefix + ".mod", out);
}

void FiLMNetwork::init(int in, const std::vector<int>& widths, int out_dim, Rng& rng,
                       double final_gain) {
  hidden.resize(widths.size());
  int prev = in;
  for (size_t i = 0; i < widths.size(); ++i) {
    hidden[i].init(prev, widths[i], rng);
    prev = widths[i];
  }
  out.init(prev, out_dim, rng, final_gain);
}

MatrixXd FiLMNetwork::forward(const MatrixXd& x, const MatrixXd& phi) {
  MatrixXd h = x;
  for (auto& layer : hidden) h = layer.forward(h, phi);
  return out.forward(h);
}

MatrixXd FiLMNetwork::backward(const MatrixXd& gy) {
  MatrixXd g = out.backward(gy);
  for (int i = static_cast<int>(hidden.size()) - 1; i >= 0; --i) g = hidden[i].backward(g);
  return g;
}

void FiLMNetwork::zero_grad() {
  for (auto& l : hidden) l.zero_grad();
  out.zero_grad();
}

void FiLMNetwork::collect(const std::string& prefix, std::vector<ParamBlock>& out_blocks) {
  for (size_t i = 0; i < hidden.size(); ++i)
    hidden[i].collect(prefix + ".f" + std::to_string(i), out_blocks);
  out.collect(prefix + ".out", out_blocks);
}

// ------------------------------------------------------------------- MoE --

void MoENetwork::init(int in, const std::vector<int>& widths, int experts_n, Rng& rng) {
  experts.resize(experts_n);
  for (auto& e : experts) e.init(in, widths, rng);
  gate.init(2, experts_n, rng, 1.0);
}

MatrixXd MoENetwork::gate_weights(const MatrixXd& phi) const {
  MatrixXd s = (gate.W * phi).colwise() + gate.b;
  MatrixXd w = s;
  for (int c = 0; c < w.cols(); ++c) {
    VectorXd col = s.col(c);
    double mx = col.maxCoeff();
    col = (col.array() - mx).exp();
    w.col(c) = col / col.sum();
  }
  return w;
}

MatrixXd MoENetwork::forward(const MatrixXd& x, const MatrixXd& phi) {
  MatrixXd s = gate.forward(phi);
  weights_cache = s;
  for (int c = 0; c < s.cols(); ++c) {
    VectorXd col = s.col(c);
    double mx = col.maxCoeff();
    col = (col.array() - mx).exp();
    weights_cache.col(c) = col / col.sum();
  }
  expert_cache.resize(experts.size());
  MatrixXd y;
  for (size_t k = 0; k < experts.size(); ++k) {
    expert_cache[k] = experts[k].forward(x);
    MatrixXd scaled =
        expert_cache[k].array().rowwise() * weights_cache.row(k).array();
    if (k == 0)
      y = scaled;
    else
      y += scaled;
  }
  return y;
}

MatrixXd MoENetwork::backward(const MatrixXd& gy) {
  const int K = static_cast<int>(experts.size());
  const int B = static_cast<int>(gy.cols());
  MatrixXd gx;
  MatrixXd gw(K, B);
  for (int k = 0; k < K; ++k) {
    MatrixXd ge = gy.array().rowwise() * weights_cache.row(k).array();
    MatrixXd g = experts[k].backward(ge);
    if (k == 0)
      gx = g;
    else
      gx += g;
    gw.row(k) = (expert_cache[k].cwiseProduct(gy)).colwise().sum();
  }
  // softmax backward per sample
  MatrixXd gs(K, B);
  for (int c = 0; c < B; ++c) {
    double dot = weights_cache.col(c).dot(gw.col(c));
    gs.col(c) = weights_cache.col(c).cwiseProduct((gw.col(c).array() - dot).matrix());
  }
  gate.backward(gs);
  return gx;
}

void MoENetwork::zero_grad() {
  for (auto& e : experts) e.zero_grad();
  gate.zero_grad();
}

void MoENetwork::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  for (size_t k = 0; k < experts.size(); ++k)
    experts[k].collect(prefix + ".e" + std::to_string(k), out);
  gate.collect(prefix + ".gate", out);
}

// ---------------------------------------------------------------- Conv1D --

void Conv1D::init(int in_channels, int out_channels, int k, int s, Rng& rng) {
  in_ch = in_channels;
  out_ch = out_channels;
  kernel = k;
  stride = s;
  W.resize(out_ch, in_ch * kernel);
  orthogonal_init(W, rng, 1.0);
  b = VectorXd::Zero(out_ch);
  gW = MatrixXd::Zero(out_ch, in_ch * kernel);
  gb = VectorXd::Zero(out_ch);
}

MatrixXd Conv1D::forward(const MatrixXd& x, int t_in) {
  x_cache = x;
  t_in_cache = t_in;
  const int T = t_out(t_in);
  MatrixXd y(out_ch * T, x.cols());
  for (int t = 0; t < T; ++t) {
    MatrixXd z =
        (W * x.middleRows(t * stride * in_ch, kernel * in_ch)).colwise() + b;
    y.middleRows(t * out_ch, out_ch) = elu(z);
  }
  y_cache = y;
  return y;
}

MatrixXd Conv1D::backward(const MatrixXd& gy) {
  const int T = t_out(t_in_cache);
  MatrixXd gx = MatrixXd::Zero(in_ch * t_in_cache, gy.cols());
  for (int t = 0; t < T; ++t) {
    MatrixXd gz = gy.middleRows(t * out_ch, out_ch)
                      .cwiseProduct(elu_deriv_from_y(y_cache.middleRows(t * out_ch, out_ch)));
    gW.noalias() += gz * x_cache.middleRows(t * stride * in_ch, kernel * in_ch).transpose();
    gb.noalias() += gz.rowwise().sum();
    gx.middleRows(t * stride * in_ch, kernel * in_ch).noalias() += W.transpose() * gz;
  }
  return gx;
}

void Conv1D::zero_grad() {
  gW.setZero();
  gb.setZero();
}

void Conv1D::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".W", W.data(), gW.data(), static_cast<int>(W.rows()),
                 static_cast<int>(W.cols())});
  out.push_back({prefix + ".b", b.data(), gb.data(), static_cast<int>(b.size()), 1});
}

// ------------------------------------------------------------------- GRU --

void GRU::init(int in, int hidden_dim, Rng& rng) {
  in_dim = in;
  hidden = hidden_dim;
  Wi.resize(3 * hidden, in);
  Wh.resize(3 * hidden, hidden);
  orthogonal_init(Wi, rng, 1.0);
  orthogonal_init(Wh, rng, 1.0);
  bi = VectorXd::Zero(3 * hidden);
  bh = VectorXd::Zero(3 * hidden);
  gWi = MatrixXd::Zero(3 * hidden, in);
  gWh = MatrixXd::Zero(3 * hidden, hidden);
  gbi = VectorXd::Zero(3 * hidden);
  gbh = VectorXd::Zero(3 * hidden);
}

MatrixXd GRU::forward(const MatrixXd& seq, int T) {
  const int B = static_cast<int>(seq.cols());
  steps_cache = T;
  x_cache.resize(T);
  h_cache.resize(T);
  r_cache.resize(T);
  z_cache.resize(T);
  n_cache.resize(T);
  hn_cache.resize(T);

  MatrixXd h = MatrixXd::Zero(hidden, B);
  for (int t = 0; t < T; ++t) {
    x_cache[t] = seq.middleRows(t * in_dim, in_dim);
    h_cache[t] = h;
    MatrixXd gi = (Wi * x_cache[t]).colwise() + bi;
    MatrixXd gh = (Wh * h).colwise() + bh;
    MatrixXd r = sigmoid(gi.topRows(hidden) + gh.topRows(hidden));
    MatrixXd z = sigmoid(gi.middleRows(hidden, hidden) + gh.middleRows(hidden, hidden));
    MatrixXd hn = gh.bottomRows(hidden);
    MatrixXd n = (gi.bottomRows(hidden) + r.cwiseProduct(hn))
                     .unaryExpr([](double v) { return std::tanh(v); });
    r_cache[t] = r;
    z_cache[t] = z;
    n_cache[t] = n;
    hn_cache[t] = hn;
    h = (MatrixXd::Ones(hidden, B) - z).cwiseProduct(n) + z.cwiseProduct(h);
  }
  return h;
}

MatrixXd GRU::backward(const MatrixXd& gh_final) {
  const int T = steps_cache;
  const int B = static_cast<int>(gh_final.cols());
  MatrixXd gseq(in_dim * T, B);
  MatrixXd gh = gh_final;
  for (int t = T - 1; t >= 0; --t) {
    const MatrixXd& r = r_cache[t];
    const MatrixXd& z = z_cache[t];
    const MatrixXd& n = n_cache[t];
    const MatrixXd& hn = hn_cache[t];
    const MatrixXd& h_prev = h_cache[t];

    MatrixXd dz = gh.cwiseProduct(h_prev - n)
                      .cwiseProduct(z)
                      .cwiseProduct(MatrixXd::Ones(hidden, B) - z);
    MatrixXd dn = gh.cwiseProduct(MatrixXd::Ones(hidden, B) - z)
                      .cwiseProduct(MatrixXd::Ones(hidden, B) - n.cwiseProduct(n));
    MatrixXd dr = dn.cwiseProduct(hn).cwiseProduct(r).cwiseProduct(
        MatrixXd::Ones(hidden, B) - r);

    MatrixXd gi(3 * hidden, B), ghs(3 * hidden, B);
    gi.topRows(hidden) = dr;
    gi.middleRows(hidden, hidden) = dz;
    gi.bottomRows(hidden) = dn;
    ghs.topRows(hidden) = dr;
    ghs.middleRows(hidden, hidden) = dz;
    ghs.bottomRows(hidden) = dn.cwiseProduct(r);

    gWi.noalias() += gi * x_cache[t].transpose();
    gbi.noalias() += gi.rowwise().sum();
    gWh.noalias() += ghs * h_prev.transpose();
    gbh.noalias() += ghs.rowwise().sum();

    gseq.middleRows(t * in_dim, in_dim) = Wi.transpose() * gi;
    gh = gh.cwiseProduct(z) + Wh.transpose() * ghs;
  }
  return gseq;
}

void GRU::step_inplace(const VectorXd& x, VectorXd& h) const {
  VectorXd gi = Wi * x + bi;
  VectorXd gh = Wh * h + bh;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  VectorXd r(hidden), z(hidden), n(hidden);
  for (int i = 0; i < hidden; ++i) {
    r[i] = sig(gi[i] + gh[i]);
    z[i] = sig(gi[hidden + i] + gh[hidden + i]);
    n[i] = std::tanh(gi[2 * hidden + i] + r[i] * gh[2 * hidden + i]);
    h[i] = (1.0 - z[i]) * n[i] + z[i] * h[i];
  }
}

void GRU::zero_grad() {
  gWi.setZero();
  gWh.setZero();
  gbi.setZero();
  gbh.setZero();
}

void GRU::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".Wi", Wi.data(), gWi.data(), static_cast<int>(Wi.rows()),
                 static_cast<int>(Wi.cols())});
  out.push_back({prefix + ".Wh", Wh.data(), gWh.data(), static_cast<int>(Wh.rows()),
                 static_cast<int>(Wh.cols())});
  out.push_back({prefix + ".bi", bi.data(), gbi.data(), static_cast<int>(bi.size()), 1});
  out.push_back({prefix + ".bh", bh.data(), gbh.data(), static_cast<int>(bh.size()), 1});
}

// ------------------------------------------------------- TemporalEncoder --

void TemporalEncoder::init(int frame, int win, int conv_channels, int gru_hidden, int out,
                           int aux, int k1, int s1, int k2, int s2, Rng& rng) {
  frame_dim = frame;
  window = win;
  aux_dim = aux;
  out_dim = out;
  conv1.init(frame, conv_channels, k1, s1, rng);
  conv2.init(conv_channels, conv_channels, k2, s2, rng);
  gru.init(conv_channels, gru_hidden, rng);
  head.init(gru_hidden + aux, out, rng, 1.0);
}

MatrixXd TemporalEncoder::forward(const MatrixXd& seq, const MatrixXd* aux) {
  MatrixXd c1 = conv1.forward(seq, window);
  int t1 = conv1.t_out(window);
  MatrixXd c2 = conv2.forward(c1, t1);
  gru_t_cache = conv2.t_out(t1);
  MatrixXd h = gru.forward(c2, gru_t_cache);
  has_aux_cache = aux != nullptr;
  if (aux) {
    MatrixXd hi(h.rows() + aux->rows(), h.cols());
    hi.topRows(h.rows()) = h;
    hi.bottomRows(aux->rows()) = *aux;
    return head.forward(hi);
  }
  return head.forward(h);
}

MatrixXd TemporalEncoder::backward(const MatrixXd& gy) {
  MatrixXd ghi = head.backward(gy);
  MatrixXd gh = ghi.topRows(gru.hidden);
  MatrixXd gc2 = gru.backward(gh);
  MatrixXd gc1 = conv2.backward(gc2);
  return conv1.backward(gc1);
}

void TemporalEncoder::zero_grad() {
  conv1.zero_grad();
  conv2.zero_grad();
  gru.zero_grad();
  head.zero_grad();
}

void TemporalEncoder::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  conv1.collect(prefix + ".c1", out);
  conv2.collect(prefix + ".c2", out);
  gru.collect(prefix + ".gru", out);
  head.collect(prefix + ".head", out);
}

void TemporalEncoder::stream_reset(Stream& s) const {
  s.ring1 = MatrixXd::Zero(frame_dim, conv1.kernel);
  s.ring2 = MatrixXd::Zero(conv1.out_ch, conv2.kernel);
  s.h = VectorXd::Zero(gru.hidden);
  s.primed = false;
}

VectorXd TemporalEncoder::stream_step(Stream& s, const VectorXd& frame,
                                      const VectorXd* aux) const {
  // Streaming requires stride-1 convolutions.
  if (!s.primed) {
    for (int c = 0; c < s.ring1.cols(); ++c) s.ring1.col(c) = frame;
  } else {
    for (int c = 0; c + 1 < s.ring1.cols(); ++c) s.ring1.col(c) = s.ring1.col(c + 1);
    s.ring1.col(s.ring1.cols() - 1) = frame;
  }
  Eigen::Map<const VectorXd> win1(s.ring1.data(), frame_dim * conv1.kernel);
  VectorXd c1 = (conv1.W * win1 + conv1.b)
                    .unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  if (!s.primed) {
    for (int c = 0; c < s.ring2.cols(); ++c) s.ring2.col(c) = c1;
    s.primed = true;
  } else {
    for (int c = 0; c + 1 < s.ring2.cols(); ++c) s.ring2.col(c) = s.ring2.col(c + 1);
    s.ring2.col(s.ring2.cols() - 1) = c1;
  }
  Eigen::Map<const VectorXd> win2(s.ring2.data(), conv1.out_ch * conv2.kernel);
  VectorXd c2 = (conv2.W * win2 + conv2.b)
                    .unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  gru.step_inplace(c2, s.h);
  if (aux) {
    VectorXd hi(s.h.size() + aux->size());
    hi.head(s.h.size()) = s.h;
    hi.tail(aux->size()) = *aux;
    return head.apply(hi);
  }
  return head.apply(s.h);
}

// ------------------------------------------------------------ PolicyHead --

void PolicyHead::init(int dim, double init_log_std) {
  log_std = VectorXd::Constant(dim, init_log_std);
  g_log_std = VectorXd::Zero(dim);
}

void PolicyHead::sample(const MatrixXd& mean, Rng& rng, MatrixXd& action,
                        VectorXd& logp) const {
  const int d = static_cast<int>(mean.rows());
  const int B = static_cast<int>(mean.cols());
  action.resize(d, B);
  for (int c = 0; c < B; ++c)
    for (int i = 0; i < d; ++i)
      action(i, c) = mean(i, c) + std::exp(log_std[i]) * rng.normal();
  logp = log_prob(mean, action);
}

VectorXd PolicyHead::log_prob(const MatrixXd& mean, const MatrixXd& action) const {
  const int d = static_cast<int>(mean.rows());
  const int B = static_cast<int>(mean.cols());
  VectorXd out(B);
  double base = -0.5 * d * std::log(2.0 * M_PI) - log_std.sum();
  VectorXd inv_var = (-2.0 * log_std).array().exp();
  for (int c = 0; c < B; ++c) {
    VectorXd diff = action.col(c) - mean.col(c);
    out[c] = base - 0.5 * diff.cwiseProduct(diff).dot(inv_var);
  }
  return out;
}

MatrixXd PolicyHead::backward_logp(const MatrixXd& mean, const MatrixXd& action,
                                   const VectorXd& dlogp) {
  const int d = static_cast<int>(mean.rows());
  const int B = static_cast<int>(mean.cols());
  VectorXd inv_var = (-2.0 * log_std).array().exp();
  MatrixXd gmean(d, B);
  for (int c = 0; c < B; ++c) {
    VectorXd diff = action.col(c) - mean.col(c);
    gmean.col(c) = dlogp[c] * diff.cwiseProduct(inv_var);
    g_log_std += dlogp[c] * (diff.cwiseProduct(diff).cwiseProduct(inv_var) -
                             VectorXd::Ones(d));
  }
  return gmean;
}

double PolicyHead::entropy() const {
  return log_std.sum() + 0.5 * log_std.size() * std::log(2.0 * M_PI * std::exp(1.0));
}

void PolicyHead::accumulate_entropy_grad(double coef) {
  g_log_std.array() += coef;
}

void PolicyHead::zero_grad() { g_log_std.setZero(); }

void PolicyHead::collect(const std::string& prefix, std::vector<ParamBlock>& out) {
  out.push_back({prefix + ".log_std", log_std.data(), g_log_std.data(),
                 static_cast<int>(log_std.size()), 1});
}

// ------------------------------------------------------------------ Adam --

void Adam::attach(const std::vector<ParamBlock>& b) {
  blocks = b;
  int total = 0;
  for (const auto& blk : blocks) total += blk.size();
  m = VectorXd::Zero(total);
  v = VectorXd::Zero(total);
  t = 0;
}

void Adam::step() {
  t += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  int off = 0;
  for (const auto& blk : blocks) {
    for (int i = 0; i < blk.size(); ++i) {
      double g = blk.grad[i];
      m[off + i] = beta1 * m[off + i] + (1.0 - beta1) * g;
      v[off + i] = beta2 * v[off + i] + (1.0 - beta2) * g * g;
      blk.value[i] -= lr * (m[off + i] / bc1) / (std::sqrt(v[off + i] / bc2) + eps);
    }
    off += blk.size();
  }
}

void Adam::zero_grad() {
  for (const auto& blk : blocks)
    for (int i = 0; i < blk.size(); ++i) blk.grad[i] = 0.0;
}

VectorXd snapshot_params(const std::vector<ParamBlock>& blocks) {
  int total = 0;
  for (const auto& b : blocks) total += b.size();
  VectorXd snap(total);
  int off = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.size(); ++i) snap[off + i] = b.value[i];
    off += b.size();
  }
  return snap;
}

void restore_params(const std::vector<ParamBlock>& blocks, const VectorXd& snap) {
  int off = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.size(); ++i) b.value[i] = snap[off + i];
    off += b.size();
  }
}

bool grads_finite(const std::vector<ParamBlock>& blocks) {
  for (const auto& b : blocks)
    for (int i = 0; i < b.size(); ++i)
      if (!std::isfinite(b.grad[i])) return false;
  return true;
}

}  // namespace skate
