#include "subdiff/forward_maps.hpp"

#include <algorithm>

#include "subdiff/error.hpp"

namespace subdiff {

std::vector<std::size_t> terminal_sensors(const Grid2D& grid, const TimeGrid& tg) {
  std::vector<std::size_t> s(grid.size());
  const std::size_t base = static_cast<std::size_t>(tg.nt - 1) * grid.size();
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = base + k;
  return s;
}

std::vector<std::size_t> box_sensors(const Grid2D& grid, const TimeGrid& tg, double lo, double hi) {
  if (!(lo <= hi)) throw PreconditionError("box_sensors: empty box");
  constexpr double slack = 1e-12;
  std::vector<std::size_t> s;
  for (int n = 0; n < tg.nt; ++n) {
    for (int j = 0; j < grid.ny; ++j) {
      if (grid.y(j) < lo - slack || grid.y(j) > hi + slack) continue;
      for (int i = 0; i < grid.nx; ++i) {
        if (grid.x(i) < lo - slack || grid.x(i) > hi + slack) continue;
        s.push_back(static_cast<std::size_t>(n) * grid.size() + grid.index(i, j));
      }
    }
  }
  if (s.empty()) throw PreconditionError("box_sensors: no grid node inside the box");
  return s;
}

Eigen::MatrixXd sensor_coords(const Grid2D& grid, const TimeGrid& tg,
                              std::span<const std::size_t> sensors, bool with_time) {
  Eigen::MatrixXd X(with_time ? 3 : 2, static_cast<Eigen::Index>(sensors.size()));
  const std::size_t per_level = grid.size();
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    const std::size_t n = sensors[k] / per_level;
    const std::size_t node = sensors[k] % per_level;
    if (n >= static_cast<std::size_t>(tg.nt)) throw ShapeError("sensor_coords: index out of range");
    const auto c = static_cast<Eigen::Index>(k);
    X(0, c) = grid.x(static_cast<int>(node % grid.nx));
    X(1, c) = grid.y(static_cast<int>(node / grid.nx));
    if (with_time) X(2, c) = tg.t(static_cast<int>(n));
  }
  return X;
}

Eigen::VectorXd restrict_to_sensors(const SpaceTimeField& u, std::span<const std::size_t> sensors) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(sensors.size()));
  for (std::size_t k = 0; k < sensors.size(); ++k) {
    if (sensors[k] >= u.values.size()) throw ShapeError("restrict_to_sensors: index out of range");
    out[static_cast<Eigen::Index>(k)] = u.values[sensors[k]];
  }
  return out;
}

// ---------------------------------------------------------------------------

FdmAlphaMap::FdmAlphaMap(SubdiffusionProblem base, std::vector<std::size_t> sensors,
                         L1SolveOptions opts)
    : base_(std::move(base)), sensors_(std::move(sensors)), opts_(opts) {
  if (sensors_.empty()) throw PreconditionError("FdmAlphaMap: no sensors");
  if (!opts_.last_level) {
    // Levels after the last observed one are never needed.
    const std::size_t last = *std::max_element(sensors_.begin(), sensors_.end());
    opts_.last_level = static_cast<int>(last / base_.grid.size());
  }
}

bool FdmAlphaMap::admissible(std::span<const double> m) const {
  return m.size() == 1 && m[0] > 0.0 && m[0] < 1.0;
}

Eigen::VectorXd FdmAlphaMap::evaluate(std::span<const double> m) const {
  if (m.size() != 1) throw ShapeError("FdmAlphaMap: expected a scalar order");
  SubdiffusionProblem p = base_;
  p.alpha = m[0];
  return restrict_to_sensors(solve_subdiffusion_l1(p, opts_), sensors_);
}

// ---------------------------------------------------------------------------

CoefficientEncoder::CoefficientEncoder(Grid2D lattice, Grid2D grid, double a0)
    : lattice_(lattice), grid_(grid), a0_(a0) {}

ScalarField CoefficientEncoder::coefficient(std::span<const double> m) const {
  if (m.size() != lattice_.size()) throw ShapeError("CoefficientEncoder: parameter size mismatch");
  ScalarField a(lattice_, std::vector<double>(m.begin(), m.end()));
  for (double& v : a.values) v += a0_;
  return a.resample(grid_);
}

Eigen::VectorXd CoefficientEncoder::coefficient_on(std::span<const double> m,
                                                   const Grid2D& target) const {
  if (m.size() != lattice_.size()) throw ShapeError("CoefficientEncoder: parameter size mismatch");
  ScalarField a(lattice_, std::vector<double>(m.begin(), m.end()));
  for (double& v : a.values) v += a0_;
  const ScalarField r = a.resample(target);
  return Eigen::Map<const Eigen::VectorXd>(r.values.data(),
                                           static_cast<Eigen::Index>(r.values.size()));
}

FdmCoefficientMap::FdmCoefficientMap(SubdiffusionProblem base, CoefficientEncoder encoder,
                                     std::vector<std::size_t> sensors, double floor,
                                     L1SolveOptions opts)
    : base_(std::move(base)),
      encoder_(std::move(encoder)),
      sensors_(std::move(sensors)),
      floor_(floor),
      opts_(opts) {
  if (sensors_.empty()) throw PreconditionError("FdmCoefficientMap: no sensors");
  if (!opts_.last_level) {
    const std::size_t last = *std::max_element(sensors_.begin(), sensors_.end());
    opts_.last_level = static_cast<int>(last / base_.grid.size());
  }
}

bool FdmCoefficientMap::admissible(std::span<const double> m) const {
  return encoder_.coefficient(m).min() > floor_;
}

Eigen::VectorXd FdmCoefficientMap::evaluate(std::span<const double> m) const {
  SubdiffusionProblem p = base_;
  p.a = encoder_.coefficient(m);
  return restrict_to_sensors(solve_subdiffusion_l1(p, opts_), sensors_);
}

// ---------------------------------------------------------------------------

SurrogateMap::SurrogateMap(std::shared_ptr<const OperatorNet> net, Spec spec)
    : net_(std::move(net)), spec_(std::move(spec)) {
  if (!net_) throw PreconditionError("SurrogateMap: null network");
  net_->validate();
  const auto nb = static_cast<int>(net_->branches.size());
  if (spec_.free_branch < 0 || spec_.free_branch >= nb) {
    throw ShapeError("SurrogateMap: free branch index out of range");
  }
  if (static_cast<int>(spec_.fixed_inputs.size()) != nb) {
    throw ShapeError("SurrogateMap: need one (possibly empty) fixed input per branch");
  }
  if (spec_.coords.rows() != net_->coord_dim()) {
    throw ShapeError("SurrogateMap: coordinate dimension mismatch");
  }
  if (spec_.output.mean.size() > 0 && spec_.output.mean.size() != spec_.coords.cols()) {
    throw ShapeError("SurrogateMap: output transform fitted on a different point set");
  }
  trunk_ = net_->trunk.forward(spec_.coords);
  fixed_prod_ = Eigen::VectorXd::Ones(net_->p());
  for (int k = 0; k < nb; ++k) {
    if (k == spec_.free_branch) continue;
    const InputNorm& n = net_->branch_norm[static_cast<std::size_t>(k)];
    const Eigen::VectorXd& x = spec_.fixed_inputs[static_cast<std::size_t>(k)];
    if (x.size() != net_->branches[static_cast<std::size_t>(k)].in_dim()) {
      throw ShapeError("SurrogateMap: fixed input width mismatch for branch " + std::to_string(k));
    }
    const Eigen::MatrixXd xn = (x.array() - n.shift) / n.scale;
    fixed_prod_.array() *= net_->branches[static_cast<std::size_t>(k)].forward(xn).col(0).array();
  }
}

bool SurrogateMap::admissible(std::span<const double> m) const {
  return spec_.admissible ? spec_.admissible(m) : true;
}

Eigen::VectorXd SurrogateMap::evaluate(std::span<const double> m) const {
  if (m.size() != spec_.input_size) throw ShapeError("SurrogateMap: parameter size mismatch");
  const auto k = static_cast<std::size_t>(spec_.free_branch);
  Eigen::VectorXd raw = spec_.encode
                            ? spec_.encode(m)
                            : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
                                  m.data(), static_cast<Eigen::Index>(m.size())));
  if (raw.size() != net_->branches[k].in_dim()) {
    throw ShapeError("SurrogateMap: encoded input width mismatch");
  }
  const InputNorm& n = net_->branch_norm[k];
  const Eigen::MatrixXd xn = (raw.array() - n.shift) / n.scale;
  const Eigen::VectorXd b = net_->branches[k].forward(xn).col(0).cwiseProduct(fixed_prod_);
  Eigen::VectorXd out = trunk_.transpose() * b;
  out.array() += net_->b0;
  if (!spec_.output.identity()) {
    out *= spec_.output.scale;
    if (spec_.output.mean.size() > 0) out += spec_.output.mean.transpose();
  }
  return out;
}

}  // namespace subdiff
