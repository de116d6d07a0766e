#include "subdiff/onet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "subdiff/error.hpp"

namespace subdiff {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw ConfigError("unknown activation '" + s + "'");
}

namespace {

// tanh through the vectorized exp; Eigen 3.4 has no packet tanh for double.
void apply_activation(Eigen::MatrixXd& Z, Activation act) {
  if (act == Activation::Tanh) {
    auto z = Z.array();
    z = 1.0 - 2.0 / ((2.0 * z).exp() + 1.0);
  } else {
    Z = Z.cwiseMax(0.0);
  }
}

void activation_backward(Eigen::MatrixXd& dZ, const Eigen::MatrixXd& A, Activation act) {
  if (act == Activation::Tanh) {
    dZ.array() *= 1.0 - A.array().square();
  } else {
    dZ.array() *= (A.array() > 0.0).cast<double>();
  }
}

Eigen::MatrixXd normalized(const Eigen::MatrixXd& X, const InputNorm& n) {
  if (n.shift == 0.0 && n.scale == 1.0) return X;
  return (X.array() - n.shift) / n.scale;
}

}  // namespace

Mlp Mlp::glorot(std::vector<int> widths, Activation act, SeededRng& rng) {
  if (widths.size() < 2) throw ShapeError("Mlp: need at least input and output widths");
  Mlp net;
  net.widths = std::move(widths);
  net.activation = act;
  for (std::size_t l = 0; l + 1 < net.widths.size(); ++l) {
    const int fan_in = net.widths[l];
    const int fan_out = net.widths[l + 1];
    if (fan_in < 1 || fan_out < 1) throw ShapeError("Mlp: layer widths must be positive");
    const double lim = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd W(fan_out, fan_in);
    // Column-major fill keeps the draw order tied to the storage order.
    for (Eigen::Index k = 0; k < W.size(); ++k) W.data()[k] = rng.uniform(-lim, lim);
    net.W.push_back(std::move(W));
    net.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

Mlp Mlp::zeros_like() const {
  Mlp z = *this;
  for (auto& w : z.W) w.setZero();
  for (auto& v : z.b) v.setZero();
  return z;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& X, MlpCache* cache) const {
  if (X.rows() != in_dim()) {
    throw ShapeError("Mlp::forward: input has " + std::to_string(X.rows()) + " rows, expected " +
                     std::to_string(in_dim()));
  }
  if (cache != nullptr) {
    cache->acts.clear();
    cache->acts.push_back(X);
  }
  Eigen::MatrixXd A = X;
  for (std::size_t l = 0; l < W.size(); ++l) {
    Eigen::MatrixXd Z = W[l] * A;
    Z.colwise() += b[l];
    if (l + 1 < W.size()) apply_activation(Z, activation);
    A = std::move(Z);
    if (cache != nullptr) cache->acts.push_back(A);
  }
  return A;
}

void Mlp::backward(const MlpCache& cache, const Eigen::MatrixXd& d_out, Mlp& grad) const {
  Eigen::MatrixXd dA = d_out;
  for (std::size_t l = W.size(); l-- > 0;) {
    if (l + 1 < W.size()) activation_backward(dA, cache.acts[l + 1], activation);
    grad.W[l].noalias() = dA * cache.acts[l].transpose();
    grad.b[l] = dA.rowwise().sum();
    if (l > 0) dA = W[l].transpose() * dA;
  }
}

OperatorNet OperatorNet::make(std::span<const int> branch_inputs, int coord_dim,
                              std::span<const int> hidden, int p, Activation act, SeededRng& rng) {
  if (branch_inputs.empty()) throw ShapeError("OperatorNet: need at least one branch");
  OperatorNet net;
  for (int in : branch_inputs) {
    std::vector<int> w{in};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(p);
    net.branches.push_back(Mlp::glorot(std::move(w), act, rng));
    net.branch_norm.push_back({});
  }
  std::vector<int> w{coord_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(p);
  net.trunk = Mlp::glorot(std::move(w), act, rng);
  return net;
}

OperatorNet OperatorNet::zeros_like() const {
  OperatorNet z = *this;
  for (auto& br : z.branches) br = br.zeros_like();
  z.trunk = trunk.zeros_like();
  z.b0 = 0.0;
  return z;
}

std::size_t OperatorNet::num_parameters() const {
  std::size_t n = 0;
  for (auto blk : parameter_blocks(*this)) n += blk.size();
  return n;
}

void OperatorNet::validate() const {
  if (branches.empty()) throw ShapeError("OperatorNet: no branches");
  if (branch_norm.size() != branches.size()) throw ShapeError("OperatorNet: normalization count");
  for (const auto& br : branches) {
    if (br.out_dim() != p()) throw ShapeError("OperatorNet: branch and trunk output widths differ");
  }
}

namespace {

template <typename Net, typename Span>
std::vector<Span> blocks_impl(Net& net) {
  std::vector<Span> out;
  auto add_mlp = [&](auto& mlp) {
    for (std::size_t l = 0; l < mlp.W.size(); ++l) {
      out.emplace_back(mlp.W[l].data(), static_cast<std::size_t>(mlp.W[l].size()));
      out.emplace_back(mlp.b[l].data(), static_cast<std::size_t>(mlp.b[l].size()));
    }
  };
  for (auto& br : net.branches) add_mlp(br);
  add_mlp(net.trunk);
  out.emplace_back(&net.b0, 1);
  return out;
}

}  // namespace

std::vector<std::span<double>> parameter_blocks(OperatorNet& net) {
  return blocks_impl<OperatorNet, std::span<double>>(net);
}

std::vector<std::span<const double>> parameter_blocks(const OperatorNet& net) {
  return blocks_impl<const OperatorNet, std::span<const double>>(net);
}

Eigen::MatrixXd OutputTransform::apply(const Eigen::MatrixXd& net_out) const {
  Eigen::MatrixXd u = scale * net_out;
  if (mean.size() > 0) {
    if (mean.size() != u.cols()) throw ShapeError("OutputTransform: point count mismatch");
    u.rowwise() += mean;
  }
  return u;
}

Eigen::MatrixXd OutputTransform::invert(const Eigen::MatrixXd& values) const {
  Eigen::MatrixXd z = values;
  if (mean.size() > 0) {
    if (mean.size() != z.cols()) throw ShapeError("OutputTransform: point count mismatch");
    z.rowwise() -= mean;
  }
  return z / scale;
}

OutputTransform OutputTransform::subset(std::span<const std::size_t> points) const {
  OutputTransform t;
  t.scale = scale;
  if (mean.size() == 0) return t;
  t.mean.resize(static_cast<Eigen::Index>(points.size()));
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k] >= static_cast<std::size_t>(mean.size())) {
      throw ShapeError("OutputTransform::subset: point index out of range");
    }
    t.mean[static_cast<Eigen::Index>(k)] = mean[static_cast<Eigen::Index>(points[k])];
  }
  return t;
}

OutputTransform OutputTransform::fit(const Eigen::MatrixXd& targets) {
  if (targets.size() == 0) throw ShapeError("OutputTransform::fit: empty targets");
  OutputTransform t;
  t.mean = targets.colwise().mean();
  const double rms = std::sqrt((targets.rowwise() - t.mean).squaredNorm() / targets.size());
  t.scale = rms > 0.0 ? rms : 1.0;
  return t;
}

Eigen::MatrixXd branch_product(const OperatorNet& net, std::span<const Eigen::MatrixXd> inputs) {
  if (inputs.size() != net.branches.size()) {
    throw ShapeError("onet_forward: got " + std::to_string(inputs.size()) + " branch inputs for " +
                     std::to_string(net.branches.size()) + " branches");
  }
  Eigen::MatrixXd prod;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Eigen::MatrixXd out = net.branches[k].forward(normalized(inputs[k], net.branch_norm[k]));
    if (k == 0) {
      prod = std::move(out);
    } else {
      if (out.cols() != prod.cols()) throw ShapeError("onet_forward: branch batch sizes differ");
      prod.array() *= out.array();
    }
  }
  return prod;
}

Eigen::MatrixXd onet_forward(const OperatorNet& net, std::span<const Eigen::MatrixXd> branch_inputs,
                             const Eigen::MatrixXd& coords) {
  net.validate();
  if (coords.rows() != net.coord_dim()) throw ShapeError("onet_forward: coordinate dimension mismatch");
  const Eigen::MatrixXd B = branch_product(net, branch_inputs);
  const Eigen::MatrixXd T = net.trunk.forward(coords);
  Eigen::MatrixXd pred = B.transpose() * T;
  pred.array() += net.b0;
  return pred;
}

double onet_loss(const OperatorNet& net, const Batch& batch) {
  const Eigen::MatrixXd pred = onet_forward(net, batch.branch_inputs, batch.coords);
  if (pred.rows() != batch.targets.rows() || pred.cols() != batch.targets.cols()) {
    throw ShapeError("onet_loss: targets shape mismatch");
  }
  if (pred.size() == 0) throw ShapeError("onet_loss: empty batch");
  return (pred - batch.targets).squaredNorm() / static_cast<double>(pred.size());
}

OperatorNet onet_backprop(const OperatorNet& net, const Batch& batch, double* loss) {
  net.validate();
  const std::size_t nb = net.branches.size();
  if (batch.branch_inputs.size() != nb) throw ShapeError("onet_backprop: branch input count");
  if (batch.coords.rows() != net.coord_dim()) throw ShapeError("onet_backprop: coordinate dimension");

  std::vector<MlpCache> bcache(nb);
  std::vector<Eigen::MatrixXd> bout(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    bout[k] = net.branches[k].forward(normalized(batch.branch_inputs[k], net.branch_norm[k]), &bcache[k]);
  }
  Eigen::MatrixXd B = bout[0];
  for (std::size_t k = 1; k < nb; ++k) B.array() *= bout[k].array();

  MlpCache tcache;
  const Eigen::MatrixXd T = net.trunk.forward(batch.coords, &tcache);

  Eigen::MatrixXd R = B.transpose() * T;
  R.array() += net.b0;
  if (R.rows() != batch.targets.rows() || R.cols() != batch.targets.cols()) {
    throw ShapeError("onet_backprop: targets shape mismatch");
  }
  R -= batch.targets;
  const double np = static_cast<double>(R.size());
  if (loss != nullptr) *loss = R.squaredNorm() / np;

  // dL/dpred = 2 R / (NP)
  R *= 2.0 / np;

  OperatorNet grad = net.zeros_like();
  grad.b0 = R.sum();

  const Eigen::MatrixXd dT = B * R;               // p x P
  const Eigen::MatrixXd dB = T * R.transpose();   // p x N
  net.trunk.backward(tcache, dT, grad.trunk);
  for (std::size_t k = 0; k < nb; ++k) {
    Eigen::MatrixXd dk = dB;
    for (std::size_t j = 0; j < nb; ++j) {
      if (j != k) dk.array() *= bout[j].array();
    }
    net.branches[k].backward(bcache[k], dk, grad.branches[k]);
  }
  return grad;
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("Adam: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam: moment decay rates must lie in (0,1)");
  }
  if (!(eps > 0.0)) throw ConfigError("Adam: eps must be positive");
}

AdamState AdamState::for_net(const OperatorNet& net) {
  AdamState s;
  s.m.assign(net.num_parameters(), 0.0);
  s.v.assign(net.num_parameters(), 0.0);
  return s;
}

void adam_step(OperatorNet& net, AdamState& state, const OperatorNet& grads, const AdamConfig& cfg) {
  auto params = parameter_blocks(net);
  const auto gblocks = parameter_blocks(grads);
  if (params.size() != gblocks.size()) throw ShapeError("adam_step: gradient structure mismatch");
  const std::size_t n = net.num_parameters();
  if (state.m.size() != n || state.v.size() != n) throw ShapeError("adam_step: moment size mismatch");

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t off = 0;
  for (std::size_t blk = 0; blk < params.size(); ++blk) {
    auto p = params[blk];
    auto g = gblocks[blk];
    if (p.size() != g.size()) throw ShapeError("adam_step: gradient block size mismatch");
    for (std::size_t k = 0; k < p.size(); ++k, ++off) {
      const double gk = g[k];
      state.m[off] = cfg.beta1 * state.m[off] + (1.0 - cfg.beta1) * gk;
      state.v[off] = cfg.beta2 * state.v[off] + (1.0 - cfg.beta2) * gk * gk;
      const double mhat = state.m[off] / bc1;
      const double vhat = state.v[off] / bc2;
      p[k] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

void OperatorDataset::validate() const {
  for (const auto& bi : branch_inputs) {
    if (bi.cols() != targets.rows()) throw ShapeError("OperatorDataset: branch input count mismatch");
  }
  if (coords.cols() != targets.cols()) throw ShapeError("OperatorDataset: coordinate count mismatch");
}

Batch OperatorDataset::select(std::span<const Eigen::Index> records,
                              std::span<const Eigen::Index> pts) const {
  Batch b;
  const auto nr = static_cast<Eigen::Index>(records.size());
  const auto np = static_cast<Eigen::Index>(pts.size());
  for (const auto& bi : branch_inputs) {
    Eigen::MatrixXd m(bi.rows(), nr);
    for (Eigen::Index r = 0; r < nr; ++r) m.col(r) = bi.col(records[r]);
    b.branch_inputs.push_back(std::move(m));
  }
  b.coords.resize(coords.rows(), np);
  for (Eigen::Index q = 0; q < np; ++q) b.coords.col(q) = coords.col(pts[q]);
  b.targets.resize(nr, np);
  for (Eigen::Index q = 0; q < np; ++q) {
    for (Eigen::Index r = 0; r < nr; ++r) b.targets(r, q) = targets(records[r], pts[q]);
  }
  return b;
}

Batch OperatorDataset::full() const { return Batch{branch_inputs, coords, targets}; }

void TrainConfig::validate() const {
  adam.validate();
  if (epochs < 0) throw ConfigError("TrainConfig: epochs must be non-negative");
  if (batch_size < 0 || points_per_sample < 0) throw ConfigError("TrainConfig: negative sizes");
  if (eval_every < 1) throw ConfigError("TrainConfig: eval_every must be >= 1");
}

double mean_relative_l2(const OperatorNet& net, const OperatorDataset& data,
                        const OutputTransform& output) {
  data.validate();
  if (data.size() == 0) throw ShapeError("mean_relative_l2: empty dataset");
  const Eigen::MatrixXd T = net.trunk.forward(data.coords);
  const Eigen::MatrixXd B = branch_product(net, data.branch_inputs);
  double acc = 0.0;
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    Eigen::MatrixXd pred = B.col(r).transpose() * T;
    pred.array() += net.b0;
    Eigen::MatrixXd ref = data.targets.row(r);
    if (!output.identity()) {
      pred = output.apply(pred);
      ref = output.apply(ref);
    }
    const double den = ref.squaredNorm();
    if (den == 0.0) throw DomainError("mean_relative_l2: zero reference record");
    acc += std::sqrt((pred - ref).squaredNorm() / den);
  }
  return acc / static_cast<double>(data.size());
}

void train_operator(TrainState& state, const OperatorDataset& train, const OperatorDataset* test,
                    const TrainConfig& cfg, const std::function<void(const EpochStats&)>& on_epoch) {
  cfg.validate();
  train.validate();
  state.net.validate();
  if (train.size() == 0) throw ShapeError("train_operator: empty training set");
  if (state.adam.m.size() != state.net.num_parameters()) state.adam = AdamState::for_net(state.net);

  const Eigen::Index N = train.size();
  const Eigen::Index P = train.points();
  const Eigen::Index bs = (cfg.batch_size == 0 || cfg.batch_size >= N) ? N : cfg.batch_size;
  const Eigen::Index pp =
      (cfg.points_per_sample == 0 || cfg.points_per_sample >= P) ? P : cfg.points_per_sample;

  std::vector<Eigen::Index> rec(static_cast<std::size_t>(N));
  std::vector<Eigen::Index> pts(static_cast<std::size_t>(P));
  const int first = state.epochs_done;
  const int last = first + cfg.epochs;
  for (int epoch = first + 1; epoch <= last; ++epoch) {
    SeededRng rng(cfg.seed, static_cast<std::uint64_t>(epoch));
    std::iota(rec.begin(), rec.end(), Eigen::Index{0});
    if (bs < N) {
      for (Eigen::Index i = N - 1; i > 0; --i) {
        std::swap(rec[i], rec[static_cast<Eigen::Index>(rng.uniform_index(i + 1))]);
      }
    }
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < N; start += bs) {
      const Eigen::Index count = std::min(bs, N - start);
      std::iota(pts.begin(), pts.end(), Eigen::Index{0});
      if (pp < P) {
        // Partial Fisher-Yates: the first pp entries are a uniform sample.
        for (Eigen::Index i = 0; i < pp; ++i) {
          const auto j = i + static_cast<Eigen::Index>(rng.uniform_index(P - i));
          std::swap(pts[i], pts[j]);
        }
      }
      const Batch batch = train.select(std::span(rec).subspan(start, count),
                                       std::span(pts).subspan(0, pp));
      double loss = 0.0;
      const OperatorNet grad = onet_backprop(state.net, batch, &loss);
      if (!std::isfinite(loss)) {
        throw TrainingError("train_operator: loss is not finite at epoch " + std::to_string(epoch),
                            epoch);
      }
      adam_step(state.net, state.adam, grad, cfg.adam);
      loss_sum += loss * static_cast<double>(count);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(N);
    if (test != nullptr && (epoch % cfg.eval_every == 0 || epoch == last)) {
      st.test_rel_l2 = mean_relative_l2(state.net, *test, state.output);
    }
    state.history.push_back(st);
    state.epochs_done = epoch;
    if (on_epoch) on_epoch(st);
  }
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "epoch,train_loss,test_rel_l2\n" << std::setprecision(17);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.train_loss << ',';
    if (h.test_rel_l2) out << *h.test_rel_l2;
    out << '\n';
  }
}

}  // namespace subdiff
