#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "skate/rng.hpp"

namespace skate {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::Vector2d;

// Flat view over one parameter tensor and its gradient buffer.
struct ParamBlock {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  int rows = 0;
  int cols = 0;
  int size() const { return rows * cols; }
};

void orthogonal_init(MatrixXd& w, Rng& rng, double gain);

// Batches are column-major: one sample per column.
struct Linear {
  MatrixXd W, gW;
  VectorXd b, gb;
  MatrixXd x_cache;

  void init(int in, int out, Rng& rng, double gain = 1.0);
  MatrixXd forward(const MatrixXd& x);
  MatrixXd backward(const MatrixXd& gy);
  VectorXd apply(const VectorXd& x) const { return W * x + b; } // no cache
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
  int in_dim() const { return static_cast<int>(W.cols()); }
  int out_dim() const { return static_cast<int>(W.rows()); }
};

// Plain MLP with ELU hidden activations and a linear output layer.
struct MLP {
  std::vector<Linear> layers;
  std::vector<MatrixXd> act_cache; // post-activation of each hidden layer

  void init(int in, const std::vector<int>& widths, Rng& rng, double final_gain = 1.0);
  MatrixXd forward(const MatrixXd& x);
  MatrixXd backward(const MatrixXd& gy);
  VectorXd apply(const VectorXd& x) const;
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
  int in_dim() const { return layers.front().in_dim(); }
  int out_dim() const { return layers.back().out_dim(); }
};

// One FiLM-modulated layer: h = elu(gamma(phi) .* (W x + b) + beta(phi)).
// The modulation generator is a single linear map from the 2-d phase
// embedding, initialized to the identity modulation (gamma 1, beta 0).
struct FiLMLayer {
  Linear main;
  Linear mod; // 2 -> 2*width, rows [0,w) gamma, [w,2w) beta
  MatrixXd z_cache, gamma_cache, h_cache;

  void init(int in, int width, Rng& rng);
  MatrixXd forward(const MatrixXd& x, const MatrixXd& phi);
  MatrixXd backward(const MatrixXd& gh);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
};

struct FiLMNetwork {
  std::vector<FiLMLayer> hidden;
  Linear out;

  // widths: hidden layer sizes; out_dim is the final linear layer.
  void init(int in, const std::vector<int>& widths, int out_dim, Rng& rng,
            double final_gain = 1.0);
  MatrixXd forward(const MatrixXd& x, const MatrixXd& phi);
  MatrixXd backward(const MatrixXd& gy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
  int in_dim() const { return hidden.front().main.in_dim(); }
  int out_dim() const { return out.out_dim(); }
};

// Phase-gated mixture of identically shaped expert MLPs; softmax gating on
// the phase embedding keeps the blend weights on the simplex.
struct MoENetwork {
  std::vector<MLP> experts;
  Linear gate; // 2 -> K
  MatrixXd weights_cache;
  std::vector<MatrixXd> expert_cache;

  void init(int in, const std::vector<int>& widths, int experts_n, Rng& rng);
  MatrixXd forward(const MatrixXd& x, const MatrixXd& phi);
  MatrixXd gate_weights(const MatrixXd& phi) const;
  MatrixXd backward(const MatrixXd& gy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
};

// 1-D convolution over the time axis of frame-major sequences.
// Input (frame_dim*T, B); rows [t*C, (t+1)*C) hold frame t. ELU applied.
struct Conv1D {
  int in_ch = 0, out_ch = 0, kernel = 1, stride = 1;
  MatrixXd W, gW; // out_ch x (in_ch*kernel)
  VectorXd b, gb;
  MatrixXd x_cache, y_cache;
  int t_in_cache = 0;

  void init(int in_channels, int out_channels, int k, int s, Rng& rng);
  int t_out(int t_in) const { return (t_in - kernel) / stride + 1; }
  MatrixXd forward(const MatrixXd& x, int t_in);
  MatrixXd backward(const MatrixXd& gy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
};

struct GRU {
  int in_dim = 0, hidden = 0;
  MatrixXd Wi, gWi; // 3H x in, gates stacked r/z/n
  MatrixXd Wh, gWh; // 3H x H
  VectorXd bi, gbi, bh, gbh;

  std::vector<MatrixXd> x_cache, h_cache, r_cache, z_cache, n_cache, hn_cache;
  int steps_cache = 0;

  void init(int in, int hidden_dim, Rng& rng);
  // seq (in*T, B), frame-major; returns final hidden (H, B).
  MatrixXd forward(const MatrixXd& seq, int T);
  // gh_final -> gradient over the packed input sequence.
  MatrixXd backward(const MatrixXd& gh_final);
  void step_inplace(const VectorXd& x, VectorXd& h) const;
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
};

// conv -> conv -> GRU -> linear head (+ optional aux features into the head).
// Training calls are stateless (hidden reset per call); deployment keeps a
// Stream with persistent conv rings and GRU hidden state.
struct TemporalEncoder {
  int frame_dim = 0, window = 0, aux_dim = 0, out_dim = 0;
  Conv1D conv1, conv2;
  GRU gru;
  Linear head;

  void init(int frame, int win, int conv_channels, int gru_hidden, int out, int aux, int k1,
            int s1, int k2, int s2, Rng& rng);
  MatrixXd forward(const MatrixXd& seq, const MatrixXd* aux = nullptr);
  // Returns the gradient w.r.t. the packed sequence; aux gradients are not
  // propagated (estimator chains treat aux inputs as detached).
  MatrixXd backward(const MatrixXd& gy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);

  struct Stream {
    MatrixXd ring1, ring2; // frame rings for conv1 / conv2 inputs
    VectorXd h;
    bool primed = false;
  };
  void stream_reset(Stream& s) const;
  VectorXd stream_step(Stream& s, const VectorXd& frame, const VectorXd* aux = nullptr) const;

 private:
  MatrixXd aux_cache;
  bool has_aux_cache = false;
  int gru_t_cache = 0;
};

// Diagonal Gaussian head with learnable per-dimension log standard deviation.
struct PolicyHead {
  VectorXd log_std, g_log_std;

  void init(int dim, double init_log_std = -1.0);
  void sample(const MatrixXd& mean, Rng& rng, MatrixXd& action, VectorXd& logp) const;
  VectorXd log_prob(const MatrixXd& mean, const MatrixXd& action) const;
  // d(logp)/d(mean) columns scaled by dlogp, log-std gradient accumulated.
  MatrixXd backward_logp(const MatrixXd& mean, const MatrixXd& action, const VectorXd& dlogp);
  // Entropy of the Gaussian (independent of the mean); gradient w.r.t.
  // log_std of coef * sum-entropy is coef per dimension.
  double entropy() const;
  void accumulate_entropy_grad(double coef);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamBlock>& out);
};

struct Adam {
  double lr = 3e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<ParamBlock> blocks;
  VectorXd m, v;
  long t = 0;

  void attach(const std::vector<ParamBlock>& b);
  void step();
  void zero_grad();
};

VectorXd snapshot_params(const std::vector<ParamBlock>& blocks);
void restore_params(const std::vector<ParamBlock>& blocks, const VectorXd& snap);
bool grads_finite(const std::vector<ParamBlock>& blocks);

}  // namespace skate
