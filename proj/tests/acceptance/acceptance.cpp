// End-to-end acceptance checks at desk scale. Prints one PASS/FAIL line per
// criterion; exit status is the number of failures.
//
//   acceptance [--only 1,4,7] [--work DIR] [-v]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "subdiff/inversion.hpp"
#include "subdiff/mittag.hpp"
#include "subdiff/onet.hpp"
#include "subdiff/pipeline.hpp"
#include "subdiff/presets.hpp"
#include "subdiff/randfield.hpp"
#include "subdiff/solver.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace subdiff;

namespace {

using Clock = std::chrono::steady_clock;
constexpr double kPi = std::numbers::pi;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Context {
  fs::path work;
  std::ostream* log = nullptr;
  std::string terminal_checkpoint;  // set by criterion 8, reused by 9

  RunOptions run(const std::string& sub, std::uint64_t seed = 0) const {
    RunOptions r;
    r.preset = "desk";
    r.seed = seed;
    r.threads = 1;
    r.out = work / sub;
    r.log = log;
    return r;
  }
};

// e^{x^2} erfc(x): direct product below 5, continued fraction above.
double erfcx(double x) {
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  double f = 0.0;
  for (int k = 80; k >= 1; --k) f = (k / 2.0) / (x + f);
  return 1.0 / (std::sqrt(kPi) * (x + f));
}

// --- 1 ----------------------------------------------------------------------

Outcome mittag_leffler_values(Context&) {
  const auto t0 = Clock::now();
  double e1 = 0.0, e_half = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double x = 20.0 * k / 2000;
    e1 = std::max(e1, std::abs(mittag_leffler(1.0, -x) - std::exp(-x)) / std::exp(-x));
  }
  for (int k = 0; k <= 1000; ++k) {
    const double x = 5.0 * k / 1000;
    const double ref = erfcx(x);
    e_half = std::max(e_half, std::abs(mittag_leffler(0.5, -x) - ref) / ref);
  }
  const double t = since(t0);
  return {e1 <= 1e-10 && e_half <= 1e-8 && t < 1.0,
          fmt("E_1 max rel %.2e (<=1e-10), E_1/2 max rel %.2e (<=1e-8), %.3f s (<1)", e1, e_half, t)};
}

// --- 2 ----------------------------------------------------------------------

SubdiffusionProblem sine_problem(double alpha, int n, int nt) {
  SubdiffusionProblem p;
  p.alpha = alpha;
  p.grid = Grid2D(n, n);
  p.timegrid = TimeGrid(nt, 1.0);
  p.a = ScalarField(p.grid, 1.0);
  p.c = ScalarField(p.grid, 0.0);
  p.f = ScalarField(p.grid, 0.0);
  p.u0 = ScalarField::from_function(
      p.grid, [](double x, double y) { return std::sin(kPi * x) * std::sin(kPi * y); });
  return p;
}

Outcome solver_vs_spectral(Context&) {
  const auto t0 = Clock::now();
  // u(T) = E_{1/2}(-2 pi^2) u0 for the first sine mode.
  const double decay = erfcx(2.0 * kPi * kPi);
  const std::vector<std::pair<int, int>> levels{{11, 26}, {21, 51}, {41, 101}, {81, 201}};
  std::vector<double> errs;
  for (auto [n, nt] : levels) {
    const auto p = sine_problem(0.5, n, nt);
    const auto u = solve_subdiffusion_l1(p);
    std::vector<double> ref(p.u0.values);
    for (double& v : ref) v *= decay;
    errs.push_back(relative_l2(u.level(nt - 1), ref));
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < errs.size(); ++k) decreasing = decreasing && errs[k] < errs[k - 1];
  const double t = since(t0);
  return {errs[2] <= 1e-2 && decreasing && t < 120.0,
          fmt("rel l2 at T: %.3e %.3e %.3e (41x41x101, <=1e-2) %.3e, decreasing=%s, %.1f s (<120)",
              errs[0], errs[1], errs[2], errs[3], decreasing ? "yes" : "no", t)};
}

// --- 3 ----------------------------------------------------------------------

Outcome stability(Context&) {
  double worst_ratio = 0.0;
  const Preset pr = desk_preset();
  GrfSampler grf(pr.grid, pr.rbf);
  for (double alpha : {0.1, 0.5, 0.9}) {
    SubdiffusionProblem p;
    p.alpha = alpha;
    p.grid = pr.grid;
    p.timegrid = pr.timegrid;
    SeededRng rng(7, static_cast<std::uint64_t>(alpha * 10));
    p.a = grf.sample(rng);
    p.c = ScalarField::from_function(p.grid, reaction_fixed);
    p.f = ScalarField(p.grid, 0.0);
    p.u0 = ScalarField::from_function(p.grid, initial_fixed);
    const auto u = solve_subdiffusion_l1(p);
    auto maxabs = [](std::span<const double> v) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    };
    double prev = maxabs(u.level(0));
    for (int n = 1; n < p.timegrid.nt; ++n) {
      const double m = maxabs(u.level(n));
      worst_ratio = std::max(worst_ratio, m / prev);
      prev = m;
    }
  }
  double tele = 0.0;
  for (double alpha : {0.1, 0.5, 0.9}) {
    for (int n : {1, 2, 10, 100, 1000}) {
      const auto b = l1_weights(alpha, n);
      double s = 0.0;
      for (double v : b) s += v;
      tele = std::max(tele, std::abs(s - std::pow(n, 1.0 - alpha)));
    }
  }
  return {worst_ratio <= 1.0 && tele <= 1e-12,
          fmt("largest ||u^n||_inf / ||u^{n-1}||_inf %.6f (<=1), telescoping error %.2e (<=1e-12)",
              worst_ratio, tele)};
}

// --- 4 ----------------------------------------------------------------------

Outcome gradient_check(Context&) {
  const auto t0 = Clock::now();
  SeededRng rng(2024);
  const std::vector<int> ins{6, 4};
  const std::vector<int> hidden{16, 16};
  OperatorNet net = OperatorNet::make(ins, 3, hidden, 12, Activation::Tanh, rng);
  net.b0 = 0.1;
  Batch batch;
  for (const auto& br : net.branches) {
    batch.branch_inputs.push_back(
        Eigen::MatrixXd::NullaryExpr(br.in_dim(), 5, [&] { return rng.normal(); }));
  }
  batch.coords = Eigen::MatrixXd::NullaryExpr(3, 9, [&] { return rng.uniform(); });
  batch.targets = Eigen::MatrixXd::NullaryExpr(5, 9, [&] { return rng.normal(); });

  const OperatorNet g = onet_backprop(net, batch);
  auto blocks = parameter_blocks(net);
  const auto gblocks = parameter_blocks(g);
  const double h = 1e-6;
  double worst = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t k = 0; k < blocks[b].size(); ++k, ++n) {
      const double keep = blocks[b][k];
      blocks[b][k] = keep + h;
      const double lp = onet_loss(net, batch);
      blocks[b][k] = keep - h;
      const double lm = onet_loss(net, batch);
      blocks[b][k] = keep;
      const double fd = (lp - lm) / (2 * h);
      const double an = gblocks[b][k];
      // Relative where the gradient is sizeable, absolute below 1e-3.
      const double dev = std::abs(fd - an) / std::max({1e-3, std::abs(fd), std::abs(an)});
      worst = std::max(worst, dev);
    }
  }
  const double t = since(t0);
  return {worst <= 1e-5 && t < 10.0,
          fmt("%zu parameters, max relative deviation %.2e (<=1e-5), %.2f s (<10)", n, worst, t)};
}

// --- 5 ----------------------------------------------------------------------

Outcome desk_surrogate(Context& ctx) {
  const auto t0 = Clock::now();
  GenDataOptions g;
  g.run = ctx.run("task1_data", 1);
  g.task = Task::AlphaA;
  cmd_gen_data(g);
  TrainOptions t;
  t.run = ctx.run("task1_model/net", 2);
  t.dataset = g.run.out;
  const json r = cmd_train(t);
  const double err = r.at("test_relative_l2").get<double>();
  const double wall = since(t0);
  const int epochs = r.at("epochs_done").get<int>();
  return {err <= 0.05 && wall <= 1800.0 && epochs <= 10000,
          fmt("%d epochs at lr %.0e, mean test rel l2 %.4f (<=0.05; mean field %.4f), %.0f s (<=1800)",
              epochs, r.at("lr").get<double>(), err, r.at("mean_field_relative_l2").get<double>(),
              wall)};
}

// --- 6 ----------------------------------------------------------------------

Outcome irekm_recovery(Context& ctx) {
  const auto t0 = Clock::now();
  GenDataOptions g;
  g.run = ctx.run("alpha_data", 3);
  g.task = Task::AlphaTerminal;
  cmd_gen_data(g);
  TrainOptions t;
  t.run = ctx.run("alpha_model/net", 4);
  t.dataset = g.run.out;
  const json tr = cmd_train(t);
  const std::string ckpt = tr.at("checkpoint").get<std::string>();
  const double train_wall = since(t0);

  int hits = 0;
  double worst = 0.0;
  std::ostringstream est;
  for (int k = 1; k <= 9; ++k) {
    InvertOptions o;
    o.run = ctx.run("irekm/alpha" + std::to_string(k), 5);
    o.method = "irekm";
    o.forwards = {ckpt};
    o.alpha_true = k / 10.0;
    o.sigma = 0.001;
    const json r = cmd_invert(o);
    const double dev = r.at("abs_error").get<double>();
    worst = std::max(worst, dev);
    if (dev <= 0.08) ++hits;
    est << fmt(k == 1 ? "%.4f" : " %.4f", r.at("alpha_estimate").get<double>());
  }
  const double wall = since(t0);
  return {hits >= 8 && wall <= 300.0,
          fmt("%d/9 within 0.08 (>=8), worst %.4f, estimates [%s], %.0f s incl. %.0f s training (<=300)",
              hits, worst, est.str().c_str(), wall, train_wall)};
}

// --- 7 ----------------------------------------------------------------------

Outcome pcn_prior(Context&) {
  const auto t0 = Clock::now();
  const Preset pr = desk_preset();
  PcnConfig cfg;
  cfg.beta = 0.005;
  cfg.n_iter = 100000;
  cfg.burn_in = 0;
  // One datum that every parameter reproduces exactly: Phi = 0 everywhere.
  Observation none;
  none.sigma = 1.0;
  none.d = Eigen::VectorXd::Zero(1);
  const auto zero = [](std::span<const double>) -> Eigen::VectorXd { return Eigen::VectorXd::Zero(1); };

  // One long chain on the inversion lattice for the acceptance rate.
  const GrfSampler full(pr.inversion_lattice, pr.rbf, pr.inversion_lattice);
  const PriorSampler draw_full = [&](SeededRng& r) { return full.draw_lattice(r); };
  const FunctionMap flat_full(ForwardMap::InputKind::Field, pr.inversion_lattice.size(), 1, zero);
  SeededRng rng(31, 2);
  const PcnResult one = pcn_mcmc(flat_full, none, draw_full, draw_full(rng), cfg, rng);

  // The chain's autocorrelation time is ~2/beta^2 = 8e4 steps, so one chain of
  // 1e5 steps holds about one independent sample. Variance is measured across
  // independent chains instead: each starts from a prior draw and runs 1e5
  // steps; the law of the final state must be the prior.
  const Grid2D small(5, 5);
  const GrfSampler coarse(small, pr.rbf, small);
  const PriorSampler draw = [&](SeededRng& r) { return coarse.draw_lattice(r); };
  const FunctionMap flat(ForwardMap::InputKind::Field, small.size(), 1, zero);
  PcnConfig last = cfg;
  last.store_samples = true;
  last.store_every = cfg.n_iter;
  const int chains = 2000;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(small.size()), s2 = s1;
  bool all_accepted = one.accepted == one.proposals;
  for (int c = 0; c < chains; ++c) {
    SeededRng r(1000 + c, 2);
    const PcnResult res = pcn_mcmc(flat, none, draw, draw(r), last, r);
    all_accepted = all_accepted && res.accepted == res.proposals;
    const Eigen::VectorXd& m = res.samples.back();
    s1 += m;
    s2 += m.cwiseProduct(m);
  }
  const Eigen::VectorXd mean = s1 / chains;
  const Eigen::VectorXd var = (s2 - chains * mean.cwiseProduct(mean)) / (chains - 1);
  const Eigen::MatrixXd& L = coarse.factor();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    const double prior_var = L.row(i).squaredNorm();
    worst = std::max(worst, std::abs(var(i) / prior_var - 1.0));
  }
  // For reference: per-node variance along the single chain.
  const Eigen::VectorXd single =
      one.second_moment - one.mean.cwiseProduct(one.mean);
  const Eigen::MatrixXd& Lf = full.factor();
  double single_lo = 1e300, single_hi = 0.0;
  for (Eigen::Index i = 0; i < single.size(); ++i) {
    const double r = single(i) / Lf.row(i).squaredNorm();
    single_lo = std::min(single_lo, r);
    single_hi = std::max(single_hi, r);
  }
  const double t = since(t0);
  return {one.acceptance_rate == 1.0 && all_accepted && worst <= 0.10,
          fmt("acceptance %.6f (==1), across %d chains of 1e5 steps max |var/prior - 1| %.3f "
              "(<=0.10); single chain var/prior in [%.2f, %.2f]; %.0f s",
              one.acceptance_rate, chains, worst, single_lo, single_hi, t)};
}

// --- 8 ----------------------------------------------------------------------

Outcome pcn_inversion(Context& ctx) {
  const auto t0 = Clock::now();
  GenDataOptions g;
  g.run = ctx.run("terminal_data", 6);
  g.task = Task::ATerminal;
  cmd_gen_data(g);
  TrainOptions t;
  t.run = ctx.run("terminal_model/net", 7);
  t.dataset = g.run.out;
  const json tr = cmd_train(t);
  ctx.terminal_checkpoint = tr.at("checkpoint").get<std::string>();
  const double train_wall = since(t0);

  InvertOptions o;
  o.run = ctx.run("pcn_surrogate", 8);
  o.method = "pcn";
  o.forwards = {ctx.terminal_checkpoint};
  o.sigma = 0.001;
  o.iters = 10000;
  o.burn_in = 2000;
  const json r = cmd_invert(o);
  const double err = r.at("relative_l2_vs_truth").get<double>();
  const double wall = since(t0);

  // Same chain with the finite-difference map, for scale.
  o.run = ctx.run("pcn_fdm", 8);
  o.forwards = {"fdm"};
  const json f = cmd_invert(o);
  return {err <= 0.05 && wall <= 1200.0,
          fmt("G(a) surrogate rel l2 %.4f (<=0.05), acceptance %.3f, %.0f s incl. %.0f s data+training "
              "(<=1200); FDM chain %.4f in %.0f s",
              err, r.at("acceptance_rate").get<double>(), wall, train_wall,
              f.at("relative_l2_vs_truth").get<double>(), f.at("wall_time_seconds").get<double>())};
}

// --- 9 ----------------------------------------------------------------------

Outcome bench_speedup(Context& ctx) {
  if (ctx.terminal_checkpoint.empty()) {
    // Timing does not depend on the weights; a briefly trained net will do.
    GenDataOptions g;
    g.run = ctx.run("bench_data", 9);
    g.task = Task::ATerminal;
    g.n_train = 20;
    g.n_test = 5;
    cmd_gen_data(g);
    TrainOptions t;
    t.run = ctx.run("bench_model/net", 9);
    t.dataset = g.run.out;
    t.epochs = 5;
    ctx.terminal_checkpoint = cmd_train(t).at("checkpoint").get<std::string>();
  }
  BenchOptions b;
  b.run = ctx.run("bench", 10);
  b.method = ctx.terminal_checkpoint;
  b.n_evals = 50;
  const json r = cmd_bench(b);
  const double speedup = r.at("speedup").get<double>();
  const bool written = fs::exists(b.run.out / "bench.json") && fs::exists(b.run.out / "bench.csv");
  return {speedup >= 50.0 && written,
          fmt("FDM %.3e s/eval, surrogate %.3e s/eval, speedup %.0fx (>=50), report %s",
              r.at("baseline").at("seconds_per_eval").get<double>(),
              r.at("method").at("seconds_per_eval").get<double>(), speedup,
              (b.run.out / "bench.json").string().c_str())};
}

// --- 10 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Numeric outputs: binary dumps and CSV tables.
std::vector<fs::path> numeric_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext == ".bin" || ext == ".csv") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism(Context& ctx) {
  auto run_all = [&](const std::string& tag) {
    const fs::path root = ctx.work / ("repeat_" + tag);
    fs::remove_all(root);
    auto sub = [&](const std::string& s, std::uint64_t seed) {
      RunOptions r = ctx.run("", seed);
      r.out = root / s;
      return r;
    };
    SolveOptions s;
    s.run = sub("solve", 1);
    s.problem = "alpha_a";
    cmd_solve(s);
    GenDataOptions g;
    g.run = sub("data", 2);
    g.task = Task::ATerminal;
    g.n_train = 12;
    g.n_test = 4;
    cmd_gen_data(g);
    TrainOptions t;
    t.run = sub("model/net", 3);
    t.dataset = g.run.out;
    t.epochs = 20;
    t.batch_size = 5;
    const std::string ckpt = cmd_train(t).at("checkpoint").get<std::string>();
    InvertOptions p;
    p.run = sub("pcn", 4);
    p.forwards = {ckpt};
    p.iters = 500;
    p.burn_in = 100;
    cmd_invert(p);
    InvertOptions k;
    k.run = sub("irekm", 5);
    k.method = "irekm";
    k.forwards = {"fdm"};
    k.ensemble = 10;
    k.iters = 3;
    const json kr = cmd_invert(k);
    std::ofstream(root / "irekm" / "estimate.csv") << kr.at("alpha_estimate").dump() << '\n';
    return root;
  };
  const fs::path a = run_all("a");
  const fs::path b = run_all("b");
  const auto files = numeric_files(a);
  int differing = 0;
  std::string first;
  for (const auto& f : files) {
    if (slurp(a / f) != slurp(b / f)) ++differing, first = f.string();
  }
  const bool same_set = files == numeric_files(b);
  return {differing == 0 && same_set && files.size() >= 8,
          fmt("%zu numeric files over solve/gen-data/train/invert, %d differ%s%s", files.size(),
              differing, differing ? ", first " : "", first.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> only;
  std::string work = "acceptance_work";
  bool verbose = false;
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  app.add_option("--work", work, "scratch directory")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "progress output");
  CLI11_PARSE(app, argc, argv);

  Context ctx;
  ctx.work = fs::absolute(work);
  ctx.log = verbose ? &std::cerr : nullptr;
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(Context&)>>> criteria{
      {"mittag-leffler values", mittag_leffler_values},
      {"solver vs spectral solution", solver_vs_spectral},
      {"max-norm stability and L1 weights", stability},
      {"operator-net gradient check", gradient_check},
      {"desk Task-1 surrogate", desk_surrogate},
      {"IREKM order recovery", irekm_recovery},
      {"pCN prior preservation", pcn_prior},
      {"pCN coefficient inversion", pcn_inversion},
      {"surrogate speedup", bench_speedup},
      {"determinism", determinism},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << "  " << criteria[k].first << ": "
              << o.detail << std::endl;
  }
  return failures;
}
