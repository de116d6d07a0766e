#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "subdiff/checkpoint.hpp"
#include "subdiff/error.hpp"
#include "subdiff/onet.hpp"

using namespace subdiff;

namespace {

Batch random_batch(const OperatorNet& net, int n, int p, SeededRng& rng) {
  Batch b;
  for (const auto& br : net.branches) b.branch_inputs.push_back(Eigen::MatrixXd::NullaryExpr(br.in_dim(), n, [&] { return rng.normal(); }));
  b.coords = Eigen::MatrixXd::NullaryExpr(net.coord_dim(), p, [&] { return rng.uniform(); });
  b.targets = Eigen::MatrixXd::NullaryExpr(n, p, [&] { return rng.normal(); });
  return b;
}

double max_grad_deviation(Activation act) {
  SeededRng rng(17);
  const std::vector<int> ins{3, 5};
  const std::vector<int> hidden{8, 8};
  OperatorNet net = OperatorNet::make(ins, 2, hidden, 6, act, rng);
  net.b0 = 0.3;
  net.branch_norm[1] = {0.5, 2.0};
  const Batch batch = random_batch(net, 4, 7, rng);
  const OperatorNet g = onet_backprop(net, batch);
  auto blocks = parameter_blocks(net);
  const auto gblocks = parameter_blocks(g);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t k = 0; k < blocks[b].size(); ++k) {
      const double keep = blocks[b][k];
      blocks[b][k] = keep + h;
      const double lp = onet_loss(net, batch);
      blocks[b][k] = keep - h;
      const double lm = onet_loss(net, batch);
      blocks[b][k] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double an = gblocks[b][k];
      const double dev = std::abs(fd - an) / std::max(1e-3, std::max(std::abs(fd), std::abs(an)));
      worst = std::max(worst, dev);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("backprop matches central differences") {
  CHECK(max_grad_deviation(Activation::Tanh) <= 1e-5);
  CHECK(max_grad_deviation(Activation::Relu) <= 1e-5);
}

TEST_CASE("forward pass is the product-sum of branch and trunk outputs") {
  SeededRng rng(4);
  const std::vector<int> ins{2, 3};
  const std::vector<int> hidden{5};
  OperatorNet net = OperatorNet::make(ins, 3, hidden, 4, Activation::Tanh, rng);
  net.b0 = -0.7;
  const Batch b = random_batch(net, 3, 5, rng);
  const Eigen::MatrixXd out = onet_forward(net, b.branch_inputs, b.coords);
  const Eigen::MatrixXd B0 = net.branches[0].forward(b.branch_inputs[0]);
  const Eigen::MatrixXd B1 = net.branches[1].forward(b.branch_inputs[1]);
  const Eigen::MatrixXd T = net.trunk.forward(b.coords);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 5; ++j) {
      double s = net.b0;
      for (int k = 0; k < 4; ++k) s += B0(k, i) * B1(k, i) * T(k, j);
      CHECK(out(i, j) == doctest::Approx(s).epsilon(1e-13));
    }
  }
  CHECK(onet_loss(net, {b.branch_inputs, b.coords, out}) == doctest::Approx(0.0));
}

TEST_CASE("glorot initialisation bounds") {
  SeededRng rng(1);
  const Mlp m = Mlp::glorot({10, 30, 4}, Activation::Tanh, rng);
  CHECK(m.W[0].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 40.0));
  CHECK(m.W[1].cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 34.0));
  CHECK(m.b[0].norm() == 0.0);
}

TEST_CASE("one Adam step") {
  SeededRng rng(2);
  const std::vector<int> ins{2};
  const std::vector<int> hidden{3};
  OperatorNet net = OperatorNet::make(ins, 1, hidden, 2, Activation::Tanh, rng);
  const OperatorNet before = net;
  OperatorNet g = net.zeros_like();
  g.b0 = 0.25;
  g.trunk.W[0](0, 0) = -4.0;
  AdamState st = AdamState::for_net(net);
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(net, st, g, cfg);
  // After one bias-corrected step every parameter with a nonzero gradient moves by lr * sign(g).
  CHECK(net.b0 == doctest::Approx(before.b0 - 0.01).epsilon(1e-6));
  CHECK(net.trunk.W[0](0, 0) == doctest::Approx(before.trunk.W[0](0, 0) + 0.01).epsilon(1e-6));
  CHECK(net.trunk.W[0](1, 0) == before.trunk.W[0](1, 0));
  CHECK(st.step == 1);
  cfg.lr = -1.0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("training reduces the loss on a linear operator") {
  // G(v)(x) = v1 x + v2
  SeededRng rng(6);
  OperatorDataset d;
  const int n = 40, p = 11;
  d.branch_inputs.push_back(Eigen::MatrixXd::NullaryExpr(2, n, [&] { return rng.normal(); }));
  d.coords.resize(1, p);
  for (int j = 0; j < p; ++j) d.coords(0, j) = j / 10.0;
  d.targets.resize(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) d.targets(i, j) = d.branch_inputs[0](0, i) * d.coords(0, j) + d.branch_inputs[0](1, i);
  }
  const std::vector<int> ins{2};
  const std::vector<int> hidden{16, 16};
  TrainState st;
  st.net = OperatorNet::make(ins, 1, hidden, 8, Activation::Tanh, rng);
  st.adam = AdamState::for_net(st.net);
  TrainConfig cfg;
  cfg.adam.lr = 3e-3;
  cfg.epochs = 1500;
  cfg.points_per_sample = 0;
  const double start = mean_relative_l2(st.net, d);
  train_operator(st, d, &d, cfg);
  CHECK(st.epochs_done == 1500);
  CHECK(st.history.size() == 1500u);
  CHECK(st.history.back().test_rel_l2.has_value());
  CHECK(mean_relative_l2(st.net, d) < 0.1 * start);
}

TEST_CASE("resumed training continues the same trajectory") {
  SeededRng rng(12);
  OperatorDataset d;
  d.branch_inputs.push_back(Eigen::MatrixXd::NullaryExpr(3, 10, [&] { return rng.normal(); }));
  d.coords = Eigen::MatrixXd::NullaryExpr(2, 30, [&] { return rng.uniform(); });
  d.targets = Eigen::MatrixXd::NullaryExpr(10, 30, [&] { return rng.normal(); });
  const std::vector<int> ins{3};
  const std::vector<int> hidden{6};
  TrainState a;
  a.net = OperatorNet::make(ins, 2, hidden, 4, Activation::Tanh, rng);
  a.adam = AdamState::for_net(a.net);
  TrainState b = a;
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.points_per_sample = 12;
  cfg.seed = 99;
  train_operator(a, d, nullptr, cfg);

  cfg.epochs = 8;
  train_operator(b, d, nullptr, cfg);
  const auto path = std::filesystem::temp_directory_path() / "subdiff_resume_ckpt";
  save_checkpoint(path, b, {.task = "alpha_a", .sensor_nx = 3, .sensor_ny = 1, .seed = 99});
  LoadedCheckpoint lc = load_checkpoint(path);
  cfg.epochs = 12;
  train_operator(lc.state, d, nullptr, cfg);
  CHECK(lc.state.epochs_done == 20);
  CHECK(lc.state.net.b0 == a.net.b0);
  CHECK(lc.state.net.trunk.W[0] == a.net.trunk.W[0]);
  CHECK(lc.state.history.back().train_loss == a.history.back().train_loss);
}

TEST_CASE("checkpoint round trip") {
  SeededRng rng(5);
  const std::vector<int> ins{1, 4};
  const std::vector<int> hidden{5, 5};
  TrainState st;
  st.net = OperatorNet::make(ins, 3, hidden, 3, Activation::Relu, rng);
  st.net.b0 = 1.25;
  st.net.branch_norm[1] = {5.0, 0.9};
  st.adam = AdamState::for_net(st.net);
  st.adam.step = 7;
  st.adam.m[3] = 0.5;
  st.output.mean = Eigen::RowVectorXd::LinSpaced(6, 0.0, 1.0);
  st.output.scale = 0.125;
  st.epochs_done = 7;
  const auto path = std::filesystem::temp_directory_path() / "subdiff_rt_ckpt";
  CheckpointMeta meta{.task = "alpha_a", .sensor_nx = 2, .sensor_ny = 2, .seed = 4};
  meta.extra["note"] = "x";
  save_checkpoint(path, st, meta);
  const LoadedCheckpoint lc = load_checkpoint(path);
  CHECK(lc.meta.task == "alpha_a");
  CHECK(lc.meta.extra["note"] == "x");
  CHECK(lc.state.net.trunk.activation == Activation::Relu);
  CHECK(lc.state.net.branches[1].W[1] == st.net.branches[1].W[1]);
  CHECK(lc.state.net.branch_norm[1].shift == 5.0);
  CHECK(lc.state.net.b0 == 1.25);
  CHECK(lc.state.adam.step == 7);
  CHECK(lc.state.adam.m == st.adam.m);
  CHECK(lc.state.output.mean == st.output.mean);
  CHECK(lc.state.output.scale == 0.125);
  CHECK(lc.state.epochs_done == 7);
  CHECK_THROWS_AS(load_checkpoint(path.string() + "_missing"), IoError);
}

TEST_CASE("output transform") {
  Eigen::MatrixXd y(3, 2);
  y << 1, 10, 2, 20, 3, 30;
  const OutputTransform t = OutputTransform::fit(y);
  CHECK(t.mean(0) == 2.0);
  CHECK(t.mean(1) == 20.0);
  const Eigen::MatrixXd z = t.invert(y);
  CHECK(std::abs(z.mean()) < 1e-15);
  CHECK(std::sqrt(z.squaredNorm() / z.size()) == doctest::Approx(1.0));
  CHECK((t.apply(z) - y).norm() < 1e-12);
  const std::vector<std::size_t> pick{1};
  const OutputTransform s = t.subset(pick);
  CHECK(s.mean.size() == 1);
  CHECK(s.mean(0) == 20.0);
  CHECK(OutputTransform{}.identity());
}

TEST_CASE("shape errors") {
  SeededRng rng(1);
  const std::vector<int> ins{2};
  const std::vector<int> hidden{3};
  const OperatorNet net = OperatorNet::make(ins, 2, hidden, 4, Activation::Tanh, rng);
  std::vector<Eigen::MatrixXd> bad{Eigen::MatrixXd::Zero(3, 1)};
  CHECK_THROWS_AS(onet_forward(net, bad, Eigen::MatrixXd::Zero(2, 4)), ShapeError);
  CHECK_THROWS_AS(activation_from_string("gelu"), Error);
}
