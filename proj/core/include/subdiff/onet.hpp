#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "subdiff/rng.hpp"

namespace subdiff {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Caches post-activation outputs of every layer for the backward pass.
struct MlpCache {
  std::vector<Eigen::MatrixXd> acts;
};

/// Fully connected network; hidden layers use `activation`, the output layer is affine.
struct Mlp {
  std::vector<int> widths;  ///< {in, hidden..., out}
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  Activation activation = Activation::Tanh;

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp glorot(std::vector<int> widths, Activation act, SeededRng& rng);
  /// Same shapes, all parameters zero.
  Mlp zeros_like() const;

  int in_dim() const { return widths.front(); }
  int out_dim() const { return widths.back(); }
  std::size_t num_layers() const { return W.size(); }

  /// X is in_dim x N; returns out_dim x N.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X, MlpCache* cache = nullptr) const;
  /// Given dL/d(output), writes parameter gradients into `grad` (overwriting).
  void backward(const MlpCache& cache, const Eigen::MatrixXd& d_out, Mlp& grad) const;
};

/// Affine input normalization (x - shift) / scale applied before a branch net.
struct InputNorm {
  double shift = 0.0;
  double scale = 1.0;
};

/// Per-point affine map between network outputs and physical values,
/// u = mean + scale * net. An empty mean means zero.
struct OutputTransform {
  Eigen::RowVectorXd mean;
  double scale = 1.0;

  bool identity() const { return mean.size() == 0 && scale == 1.0; }
  /// Rows of `net_out` are records, columns the points `mean` was fitted on.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& net_out) const;
  Eigen::MatrixXd invert(const Eigen::MatrixXd& values) const;
  /// The transform restricted to a subset of the points.
  OutputTransform subset(std::span<const std::size_t> points) const;
  /// Column means of `targets` and the rms of the centred values.
  static OutputTransform fit(const Eigen::MatrixXd& targets);
};

/// Unstacked DeepONet (one branch) or MIONet (several branches):
///   G(v)(x) = b0 + sum_k prod_branches B_k(v) * T_k(x).
struct OperatorNet {
  std::vector<Mlp> branches;
  std::vector<InputNorm> branch_norm;
  Mlp trunk;
  double b0 = 0.0;

  /// Builds branches {in_i, hidden..., p} and trunk {coord_dim, hidden..., p}.
  static OperatorNet make(std::span<const int> branch_inputs, int coord_dim,
                          std::span<const int> hidden, int p, Activation act, SeededRng& rng);
  OperatorNet zeros_like() const;

  int p() const { return trunk.out_dim(); }
  int coord_dim() const { return trunk.in_dim(); }
  std::size_t num_parameters() const;

  /// Checks that every branch and the trunk have output width p.
  void validate() const;
};

/// Contiguous views over every trainable parameter, in checkpoint order:
/// each branch (W0, b0, W1, b1, ...), then the trunk, then the scalar bias.
std::vector<std::span<double>> parameter_blocks(OperatorNet& net);
std::vector<std::span<const double>> parameter_blocks(const OperatorNet& net);

/// Aligned batch: N records share P query points.
struct Batch {
  std::vector<Eigen::MatrixXd> branch_inputs;  ///< one (in_k x N) matrix per branch
  Eigen::MatrixXd coords;                      ///< coord_dim x P
  Eigen::MatrixXd targets;                     ///< N x P
};

/// Branch outputs multiplied elementwise across branches (p x N), normalization applied.
Eigen::MatrixXd branch_product(const OperatorNet& net, std::span<const Eigen::MatrixXd> inputs);

/// Predictions, N x P.
Eigen::MatrixXd onet_forward(const OperatorNet& net, std::span<const Eigen::MatrixXd> branch_inputs,
                             const Eigen::MatrixXd& coords);

/// (1 / NP) sum |G(v_j)(x_i) - u_j(x_i)|^2.
double onet_loss(const OperatorNet& net, const Batch& batch);

/// Exact reverse-mode gradient of onet_loss; `loss` receives the loss value.
OperatorNet onet_backprop(const OperatorNet& net, const Batch& batch, double* loss = nullptr);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState for_net(const OperatorNet& net);
};

/// One bias-corrected Adam update of `net` in place.
void adam_step(OperatorNet& net, AdamState& state, const OperatorNet& grads, const AdamConfig& cfg);

/// Training data in aligned form: every record is evaluated on the same coordinate set.
struct OperatorDataset {
  std::vector<Eigen::MatrixXd> branch_inputs;  ///< per branch: in_k x N
  Eigen::MatrixXd coords;                      ///< coord_dim x P
  Eigen::MatrixXd targets;                     ///< N x P

  Eigen::Index size() const { return targets.rows(); }
  Eigen::Index points() const { return targets.cols(); }
  void validate() const;
  Batch select(std::span<const Eigen::Index> records, std::span<const Eigen::Index> points) const;
  Batch full() const;
};

struct TrainConfig {
  AdamConfig adam;
  int epochs = 1000;
  int batch_size = 0;           ///< records per Adam step; 0 = full batch
  int points_per_sample = 2000; ///< random query points per step; 0 = all points
  std::uint64_t seed = 0;
  int eval_every = 100;         ///< test metric cadence in epochs (the last epoch is always evaluated)

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> test_rel_l2;
};

struct TrainState {
  OperatorNet net;
  OutputTransform output;  ///< datasets passed to train_operator hold network-space targets
  AdamState adam;
  int epochs_done = 0;
  std::vector<EpochStats> history;
};

/// Mean over records of the relative l2 error across all query points. Targets
/// and predictions are mapped through `output` first.
double mean_relative_l2(const OperatorNet& net, const OperatorDataset& data,
                        const OutputTransform& output = {});

/// Runs `cfg.epochs` further epochs from `state`. The test metric is measured
/// in physical units through `state.output`. Point subsampling for epoch e
/// draws from (cfg.seed, e), so a resumed run continues exactly where it stopped.
/// Throws TrainingError if the loss stops being finite.
void train_operator(TrainState& state, const OperatorDataset& train, const OperatorDataset* test,
                    const TrainConfig& cfg,
                    const std::function<void(const EpochStats&)>& on_epoch = {});

/// Rows `epoch,train_loss,test_rel_l2` (blank when not evaluated).
void write_history_csv(const std::string& path, const std::vector<EpochStats>& history);

}  // namespace subdiff
