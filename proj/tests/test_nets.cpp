#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <functional>

#include "fd_check.hpp"
#include "skate/checkpoint.hpp"
#include "skate/nets.hpp"

using namespace skate;
using skate::testutil::fd_max_rel_error;
using skate::testutil::random_matrix;

TEST_CASE("film network with identity modulation equals the plain mlp") {
  Rng rng(1);
  MLP mlp;
  mlp.init(7, {9, 8, 3}, rng);
  FiLMNetwork film;
  Rng rng2(2);
  film.init(7, {9, 8}, 3, rng2);
  // share the affine weights; modulation stays at its identity init
  film.hidden[0].main.W = mlp.layers[0].W;
  film.hidden[0].main.b = mlp.layers[0].b;
  film.hidden[1].main.W = mlp.layers[1].W;
  film.hidden[1].main.b = mlp.layers[1].b;
  film.out.W = mlp.layers[2].W;
  film.out.b = mlp.layers[2].b;

  MatrixXd x = random_matrix(7, 5, rng);
  MatrixXd phi = random_matrix(2, 5, rng);
  MatrixXd a = mlp.forward(x);
  MatrixXd b = film.forward(x, phi);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("film output reacts to the phase embedding once modulation is nontrivial") {
  Rng rng(3);
  FiLMNetwork film;
  film.init(5, {8, 8}, 2, rng);
  for (auto& layer : film.hidden) layer.mod.W = random_matrix(layer.mod.W.rows(), 2, rng, 0.5);
  MatrixXd x = random_matrix(5, 1, rng);
  MatrixXd phi1(2, 1), phi2(2, 1);
  phi1 << 1.0, 0.0;
  phi2 << 0.0, 1.0;
  MatrixXd y1 = film.forward(x, phi1);
  MatrixXd y2 = film.forward(x, phi2);
  CHECK((y1 - y2).norm() > 1e-6);
}

TEST_CASE("film gradients match finite differences") {
  for (uint64_t trial = 0; trial < 6; ++trial) {
    Rng rng(100 + trial);
    int in = 3 + static_cast<int>(trial % 4);
    FiLMNetwork net;
    net.init(in, {6, 5}, 4, rng, 1.0);
    for (auto& layer : net.hidden) layer.mod.W = random_matrix(layer.mod.W.rows(), 2, rng, 0.3);
    MatrixXd x = random_matrix(in, 3, rng);
    MatrixXd phi = random_matrix(2, 3, rng, 0.7);
    MatrixXd r = random_matrix(4, 3, rng);

    std::vector<ParamBlock> blocks;
    net.collect("net", blocks);
    auto loss = [&]() { return (net.forward(x, phi).cwiseProduct(r)).sum(); };
    auto grad = [&]() {
      net.forward(x, phi);
      net.backward(r);
    };
    CHECK(fd_max_rel_error(blocks, loss, grad) < 1e-4);
  }
}

TEST_CASE("film input gradients match finite differences") {
  Rng rng(42);
  FiLMNetwork net;
  net.init(4, {6}, 3, rng);
  for (auto& layer : net.hidden) layer.mod.W = random_matrix(layer.mod.W.rows(), 2, rng, 0.3);
  MatrixXd x = random_matrix(4, 2, rng);
  MatrixXd phi = random_matrix(2, 2, rng, 0.5);
  MatrixXd r = random_matrix(3, 2, rng);

  net.forward(x, phi);
  MatrixXd gx = net.backward(r);
  double step = 1e-6;
  for (int i = 0; i < x.rows(); ++i)
    for (int c = 0; c < x.cols(); ++c) {
      MatrixXd xp = x, xm = x;
      xp(i, c) += step;
      xm(i, c) -= step;
      double numeric =
          ((net.forward(xp, phi).cwiseProduct(r)).sum() -
           (net.forward(xm, phi).cwiseProduct(r)).sum()) /
          (2 * step);
      CHECK(std::abs(numeric - gx(i, c)) < 1e-5 * std::max(1.0, std::abs(numeric)));
    }
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  Rng rng(7);
  FiLMNetwork net;
  net.init(5, {6, 6}, 3, rng);
  MatrixXd x = random_matrix(5, 4, rng);
  MatrixXd phi = random_matrix(2, 4, rng);
  std::vector<ParamBlock> blocks;
  net.collect("net", blocks);
  for (auto& b : blocks)
    for (int i = 0; i < b.size(); ++i) b.grad[i] = 0.0;
  net.forward(x, phi);
  net.backward(MatrixXd::Zero(3, 4));
  for (auto& b : blocks)
    for (int i = 0; i < b.size(); ++i) CHECK(b.grad[i] == 0.0);
}

TEST_CASE("batch gradient equals the sum of per-sample gradients") {
  Rng rng(13);
  MLP net;
  net.init(4, {6, 2}, rng);
  MatrixXd x = random_matrix(4, 3, rng);
  MatrixXd r = random_matrix(2, 3, rng);
  std::vector<ParamBlock> blocks;
  net.collect("net", blocks);

  auto zero = [&]() {
    for (auto& b : blocks)
      for (int i = 0; i < b.size(); ++i) b.grad[i] = 0.0;
  };
  zero();
  net.forward(x);
  net.backward(r);
  std::vector<double> batch_grad;
  for (auto& b : blocks)
    for (int i = 0; i < b.size(); ++i) batch_grad.push_back(b.grad[i]);

  zero();
  for (int c = 0; c < 3; ++c) {
    net.forward(x.col(c));
    net.backward(r.col(c));
  }
  size_t idx = 0;
  for (auto& b : blocks)
    for (int i = 0; i < b.size(); ++i) {
      CHECK(std::abs(b.grad[i] - batch_grad[idx]) < 1e-10);
      ++idx;
    }
}

TEST_CASE("moe gate weights live on the simplex and saturate to one expert") {
  Rng rng(21);
  MoENetwork moe;
  moe.init(4, {6, 3}, 3, rng);
  MatrixXd phi = random_matrix(2, 7, rng);
  MatrixXd w = moe.gate_weights(phi);
  for (int c = 0; c < w.cols(); ++c) {
    CHECK(std::abs(w.col(c).sum() - 1.0) < 1e-12);
    CHECK(w.col(c).minCoeff() >= 0.0);
  }

  // saturate the gate on expert 1
  moe.gate.W.setZero();
  moe.gate.b = Eigen::Vector3d(-50.0, 50.0, -50.0);
  MatrixXd x = random_matrix(4, 3, rng);
  MatrixXd y = moe.forward(x, phi.leftCols(3));
  MatrixXd e1 = moe.experts[1].forward(x);
  CHECK((y - e1).norm() < 1e-12);
}

TEST_CASE("moe with identical experts ignores the gate") {
  Rng rng(22);
  MoENetwork moe;
  moe.init(3, {5, 2}, 3, rng);
  moe.experts[1] = moe.experts[0];
  moe.experts[2] = moe.experts[0];
  MatrixXd x = random_matrix(3, 4, rng);
  MatrixXd y1 = moe.forward(x, random_matrix(2, 4, rng));
  MatrixXd y2 = moe.forward(x, random_matrix(2, 4, rng));
  CHECK((y1 - y2).norm() < 1e-12);
}

TEST_CASE("moe gradients match finite differences") {
  for (uint64_t trial = 0; trial < 4; ++trial) {
    Rng rng(300 + trial);
    MoENetwork moe;
    moe.init(3, {5, 2}, 2 + static_cast<int>(trial % 2), rng);
    MatrixXd x = random_matrix(3, 3, rng);
    MatrixXd phi = random_matrix(2, 3, rng, 0.5);
    MatrixXd r = random_matrix(2, 3, rng);
    std::vector<ParamBlock> blocks;
    moe.collect("moe", blocks);
    auto loss = [&]() { return (moe.forward(x, phi).cwiseProduct(r)).sum(); };
    auto grad = [&]() {
      moe.forward(x, phi);
      moe.backward(r);
    };
    CHECK(fd_max_rel_error(blocks, loss, grad) < 1e-4);
  }
}

TEST_CASE("temporal encoder gradients match finite differences") {
  for (uint64_t trial = 0; trial < 4; ++trial) {
    Rng rng(400 + trial);
    int frame = 5, window = 6, aux = (trial % 2) ? 3 : 0;
    TemporalEncoder enc;
    enc.init(frame, window, 4, 5, 3, aux, 3, 1, 2, 1, rng);
    MatrixXd seq = random_matrix(frame * window, 2, rng);
    MatrixXd auxm = random_matrix(std::max(aux, 1), 2, rng);
    MatrixXd r = random_matrix(3, 2, rng);
    std::vector<ParamBlock> blocks;
    enc.collect("enc", blocks);
    auto loss = [&]() {
      return (enc.forward(seq, aux ? &auxm : nullptr).cwiseProduct(r)).sum();
    };
    auto grad = [&]() {
      enc.forward(seq, aux ? &auxm : nullptr);
      enc.backward(r);
    };
    CHECK(fd_max_rel_error(blocks, loss, grad) < 1e-4);
  }
}

TEST_CASE("temporal encoder strided variant gradients") {
  Rng rng(55);
  TemporalEncoder enc;
  enc.init(6, 16, 4, 5, 4, 0, 4, 2, 3, 2, rng);
  MatrixXd seq = random_matrix(6 * 16, 2, rng);
  MatrixXd r = random_matrix(4, 2, rng);
  std::vector<ParamBlock> blocks;
  enc.collect("enc", blocks);
  auto loss = [&]() { return (enc.forward(seq).cwiseProduct(r)).sum(); };
  auto grad = [&]() {
    enc.forward(seq);
    enc.backward(r);
  };
  CHECK(fd_max_rel_error(blocks, loss, grad) < 1e-4);
}

TEST_CASE("streaming matches stateless on constant input") {
  Rng rng(66);
  TemporalEncoder enc;
  enc.init(5, 10, 4, 6, 3, 0, 3, 1, 3, 1, rng);
  VectorXd frame = random_matrix(5, 1, rng).col(0);

  MatrixXd seq(5 * 10, 1);
  for (int t = 0; t < 10; ++t) seq.col(0).segment(5 * t, 5) = frame;
  MatrixXd stateless = enc.forward(seq);

  // The stateless pass runs the GRU for t_out(t_out(window)) steps; a stream
  // fed the same constant frames matches it exactly at that step count.
  int gru_steps = enc.conv2.t_out(enc.conv1.t_out(10));
  TemporalEncoder::Stream stream;
  enc.stream_reset(stream);
  VectorXd streamed;
  for (int t = 0; t < gru_steps; ++t) streamed = enc.stream_step(stream, frame);
  CHECK((streamed - stateless.col(0)).norm() < 1e-5);

  // Past that the hidden state drifts toward the GRU fixed point; the drift
  // for fixed-point inputs stays small.
  for (int t = gru_steps; t < 60; ++t) streamed = enc.stream_step(stream, frame);
  CHECK((streamed - stateless.col(0)).norm() < 0.05);
}

TEST_CASE("streaming with aux input matches stateless at matched step counts") {
  Rng rng(68);
  TemporalEncoder enc;
  enc.init(4, 8, 3, 5, 2, 3, 3, 1, 2, 1, rng);
  VectorXd frame = random_matrix(4, 1, rng).col(0);
  VectorXd aux = random_matrix(3, 1, rng).col(0);

  MatrixXd seq(4 * 8, 1);
  for (int t = 0; t < 8; ++t) seq.col(0).segment(4 * t, 4) = frame;
  MatrixXd auxm(3, 1);
  auxm.col(0) = aux;
  MatrixXd stateless = enc.forward(seq, &auxm);

  int gru_steps = enc.conv2.t_out(enc.conv1.t_out(8));
  TemporalEncoder::Stream stream;
  enc.stream_reset(stream);
  VectorXd streamed;
  for (int t = 0; t < gru_steps; ++t) streamed = enc.stream_step(stream, frame, &aux);
  CHECK((streamed - stateless.col(0)).norm() < 1e-5);
}

TEST_CASE("policy head closed forms") {
  PolicyHead head;
  head.init(12, 0.0); // std = 1
  MatrixXd mean = MatrixXd::Zero(12, 1);
  VectorXd logp = head.log_prob(mean, mean);
  CHECK(logp[0] == doctest::Approx(-6.0 * std::log(2.0 * M_PI)).epsilon(1e-12));
  CHECK(logp[0] == doctest::Approx(-11.0273).epsilon(1e-4));

  // vanishing std collapses the sample onto the mean
  PolicyHead tight;
  tight.init(12, -40.0);
  Rng rng(5);
  MatrixXd action;
  VectorXd lp;
  MatrixXd mu = random_matrix(12, 3, rng);
  tight.sample(mu, rng, action, lp);
  CHECK((action - mu).norm() < 1e-12);
}

TEST_CASE("policy samples have the right mean") {
  PolicyHead head;
  head.init(4, -0.5);
  Rng rng(77);
  MatrixXd mean(4, 1);
  mean << 0.3, -0.2, 0.8, 0.0;
  const int n = 100000;
  VectorXd acc = VectorXd::Zero(4);
  MatrixXd action;
  VectorXd lp;
  for (int i = 0; i < n; ++i) {
    head.sample(mean, rng, action, lp);
    acc += action.col(0);
  }
  acc /= n;
  double se = std::exp(-0.5) / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < 4; ++j) CHECK(std::abs(acc[j] - mean(j, 0)) < 3.5 * se);
}

TEST_CASE("policy log-prob gradients match finite differences") {
  Rng rng(88);
  PolicyHead head;
  head.init(5, -0.3);
  MatrixXd mean = random_matrix(5, 3, rng);
  MatrixXd action = random_matrix(5, 3, rng);
  VectorXd dlogp(3);
  dlogp << 0.7, -1.2, 0.4;

  head.zero_grad();
  MatrixXd gmean = head.backward_logp(mean, action, dlogp);
  VectorXd glogstd = head.g_log_std;

  double step = 1e-6;
  auto weighted = [&](const MatrixXd& m) {
    return head.log_prob(m, action).dot(dlogp);
  };
  for (int i = 0; i < 5; ++i)
    for (int c = 0; c < 3; ++c) {
      MatrixXd mp = mean, mm = mean;
      mp(i, c) += step;
      mm(i, c) -= step;
      double numeric = (weighted(mp) - weighted(mm)) / (2 * step);
      CHECK(std::abs(numeric - gmean(i, c)) < 1e-5 * std::max(1.0, std::abs(numeric)));
    }
  for (int j = 0; j < 5; ++j) {
    double saved = head.log_std[j];
    head.log_std[j] = saved + step;
    double up = weighted(mean);
    head.log_std[j] = saved - step;
    double down = weighted(mean);
    head.log_std[j] = saved;
    double numeric = (up - down) / (2 * step);
    CHECK(std::abs(numeric - glogstd[j]) < 1e-5 * std::max(1.0, std::abs(numeric)));
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(99);
  FiLMNetwork a, b;
  a.init(6, {8, 7}, 4, rng);
  Rng rng2(123);
  b.init(6, {8, 7}, 4, rng2);

  std::vector<ParamBlock> ba, bb;
  a.collect("net", ba);
  b.collect("net", bb);

  nlohmann::json meta;
  meta["note"] = "roundtrip";
  std::string path = "/tmp/skaterl_test_ckpt.skcp";
  REQUIRE(save_checkpoint(path, ba, meta));
  nlohmann::json meta2;
  std::string err;
  REQUIRE(load_checkpoint(path, bb, &meta2, &err));
  CHECK(meta2["note"] == "roundtrip");

  MatrixXd x = random_matrix(6, 5, rng);
  MatrixXd phi = random_matrix(2, 5, rng);
  MatrixXd ya = a.forward(x, phi);
  MatrixXd yb = b.forward(x, phi);
  CHECK((ya - yb).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects mismatched shapes") {
  Rng rng(111);
  FiLMNetwork a, b;
  a.init(6, {8}, 4, rng);
  b.init(6, {9}, 4, rng);
  std::vector<ParamBlock> ba, bb;
  a.collect("net", ba);
  b.collect("net", bb);
  std::string path = "/tmp/skaterl_test_ckpt2.skcp";
  REQUIRE(save_checkpoint(path, ba, {}));
  std::string err;
  CHECK(!load_checkpoint(path, bb, nullptr, &err));
  CHECK(!err.empty());
  std::remove(path.c_str());
}

TEST_CASE("adam moves parameters against the gradient") {
  Rng rng(17);
  Linear lin;
  lin.init(3, 2, rng);
  std::vector<ParamBlock> blocks;
  lin.collect("lin", blocks);
  Adam adam;
  adam.lr = 0.01;
  adam.attach(blocks);

  // four samples keep the regression exactly solvable
  MatrixXd x = random_matrix(3, 4, rng);
  MatrixXd target = random_matrix(2, 4, rng);
  double first = 0.0, last = 0.0;
  for (int it = 0; it < 800; ++it) {
    adam.zero_grad();
    MatrixXd y = lin.forward(x);
    MatrixXd diff = y - target;
    double loss = 0.5 * diff.squaredNorm();
    lin.backward(diff);
    adam.step();
    if (it == 0) first = loss;
    last = loss;
  }
  CHECK(last < 0.1 * first);
}
