#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "subdiff/dataset.hpp"
#include "subdiff/forward_maps.hpp"
#include "subdiff/mittag.hpp"
#include "subdiff/onet.hpp"
#include "subdiff/presets.hpp"
#include "subdiff/randfield.hpp"
#include "subdiff/solver.hpp"

using namespace subdiff;

namespace {

void BM_MittagLeffler(benchmark::State& state) {
  const double alpha = state.range(0) / 10.0;
  double x = 0.0;
  for (auto _ : state) {
    x = x > 30.0 ? 0.0 : x + 0.37;
    benchmark::DoNotOptimize(mittag_leffler(alpha, -x));
  }
}
BENCHMARK(BM_MittagLeffler)->Arg(3)->Arg(5)->Arg(9);

void BM_L1Solve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Preset pr = desk_preset();
  SubdiffusionProblem p;
  p.alpha = 0.5;
  p.grid = Grid2D(n, n);
  p.timegrid = TimeGrid(static_cast<int>(state.range(1)), 1.0);
  SeededRng rng(1);
  p.a = GrfSampler(p.grid, pr.rbf, Grid2D(21, 21)).sample(rng);
  p.c = ScalarField::from_function(p.grid, reaction_fixed);
  p.f = ScalarField::from_function(p.grid, source_fixed);
  p.u0 = ScalarField::from_function(p.grid, initial_fixed);
  for (auto _ : state) benchmark::DoNotOptimize(solve_subdiffusion_l1(p).values.data());
}
BENCHMARK(BM_L1Solve)->Args({21, 26})->Args({41, 51})->Unit(benchmark::kMillisecond);

void BM_GrfDraw(benchmark::State& state) {
  const Preset pr = desk_preset();
  const GrfSampler s(pr.grid, pr.rbf, pr.inversion_lattice);
  SeededRng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(s.draw_lattice(rng).data());
}
BENCHMARK(BM_GrfDraw);

// One a -> u(., T) evaluation of a desk-sized network at every grid node.
void BM_OnetForward(benchmark::State& state) {
  const Preset pr = desk_preset();
  SeededRng rng(3);
  const std::vector<int> ins{static_cast<int>(pr.sensor_lattice.size())};
  const OperatorNet net =
      OperatorNet::make(ins, 2, pr.terminal_net.hidden, pr.terminal_net.p, Activation::Tanh, rng);
  const Eigen::MatrixXd coords = task_coords(Task::ATerminal, pr.grid, pr.timegrid);
  std::vector<Eigen::MatrixXd> in{Eigen::MatrixXd::Random(ins[0], state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(onet_forward(net, in, coords).data());
}
BENCHMARK(BM_OnetForward)->Arg(1)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_BackpropMinibatch(benchmark::State& state) {
  const Preset pr = desk_preset();
  SeededRng rng(4);
  const std::vector<int> ins{static_cast<int>(pr.sensor_lattice.size())};
  const OperatorNet net =
      OperatorNet::make(ins, 2, pr.terminal_net.hidden, pr.terminal_net.p, Activation::Tanh, rng);
  Batch b;
  b.branch_inputs = {Eigen::MatrixXd::Random(ins[0], 100)};
  b.coords = task_coords(Task::ATerminal, pr.grid, pr.timegrid);
  b.targets = Eigen::MatrixXd::Random(100, b.coords.cols());
  for (auto _ : state) benchmark::DoNotOptimize(onet_backprop(net, b).b0);
}
BENCHMARK(BM_BackpropMinibatch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
