// subdiff: dataset generation, training, forward solves and inversions for the
// time-fractional diffusion problem on the unit square.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "subdiff/pipeline.hpp"

namespace {

using namespace subdiff;

void add_common(CLI::App* cmd, RunOptions& run, const std::string& default_out) {
  run.out = default_out;
  cmd->add_option("--preset", run.preset, "desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  cmd->add_option("--seed", run.seed, "random seed")->capture_default_str();
  cmd->add_option("--threads", run.threads, "worker threads (0 = all cores)")->capture_default_str();
  cmd->add_option("--out", run.out, "output path")->capture_default_str();
}

// CLI11 has no std::optional<T> binding for every T we need; stage through a
// plain value and a presence check.
template <class T>
struct Staged {
  T value{};
  CLI::Option* opt = nullptr;
  std::optional<T> get() const {
    return opt && opt->count() > 0 ? std::optional<T>(value) : std::nullopt;
  }
};

template <class T>
CLI::Option* stage(CLI::App* cmd, const std::string& name, Staged<T>& s, const std::string& help) {
  s.opt = cmd->add_option(name, s.value, help);
  return s.opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subdiff: operator-learning surrogates and Bayesian inversion for subdiffusion"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML file with option values; flags override it");
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "no progress output");

  // solve
  SolveOptions solve;
  Staged<double> solve_alpha;
  std::string solve_ref;
  auto* c_solve = app.add_subcommand("solve", "L1 finite-difference forward solve");
  add_common(c_solve, solve.run, "out/solve");
  c_solve->add_option("--problem", solve.problem, "smoke, alpha_a, a_f or a_terminal")
      ->check(CLI::IsMember({"smoke", "alpha_a", "a_f", "a_terminal"}))
      ->capture_default_str();
  stage(c_solve, "--alpha", solve_alpha, "fractional order");
  c_solve->add_option("--reference", solve_ref, "space-time dump to compare against");

  // gen-data
  GenDataOptions gen;
  std::string gen_task = "alpha_a";
  Staged<int> gen_train, gen_test;
  auto* c_gen = app.add_subcommand("gen-data", "generate an operator-learning dataset");
  add_common(c_gen, gen.run, "out/data");
  c_gen->add_option("--task", gen_task, "alpha_a (1), a_f (2), a_terminal or alpha_terminal")
      ->capture_default_str();
  stage(c_gen, "--n-train", gen_train, "training records");
  stage(c_gen, "--n-test", gen_test, "test records");

  // train
  TrainOptions train;
  Staged<int> train_iters, train_points, train_batch;
  Staged<double> train_lr;
  std::string train_resume;
  auto* c_train = app.add_subcommand("train", "train a DeepONet / MIONet surrogate");
  add_common(c_train, train.run, "out/model");
  c_train->add_option("--data", train.dataset, "dataset directory")->required();
  stage(c_train, "--iters", train_iters, "epochs (default: preset)");
  stage(c_train, "--lr", train_lr, "Adam learning rate");
  stage(c_train, "--points", train_points, "query points per record and step (0 = all)");
  stage(c_train, "--batch", train_batch, "records per Adam step (0 = all)");
  c_train->add_option("--resume", train_resume, "continue from this checkpoint");

  // invert
  InvertOptions inv;
  Staged<double> inv_alpha, inv_sigma, inv_beta;
  Staged<int> inv_iters, inv_burn, inv_j;
  std::vector<std::string> inv_forwards;
  auto* c_inv = app.add_subcommand("invert", "IREKM for alpha or pCN MCMC for a");
  add_common(c_inv, inv.run, "out/invert");
  c_inv->add_option("--method", inv.method, "irekm or pcn")
      ->check(CLI::IsMember({"irekm", "pcn"}))
      ->capture_default_str();
  c_inv->add_option("--forward", inv_forwards,
                    "fdm or a checkpoint path; repeat in --table mode to compare maps");
  c_inv->add_option("--data", inv.data, "pcn data: terminal or interior")
      ->check(CLI::IsMember({"terminal", "interior"}))
      ->capture_default_str();
  stage(c_inv, "--alpha-true", inv_alpha, "irekm: true order of the synthetic data");
  stage(c_inv, "--sigma", inv_sigma, "noise standard deviation");
  stage(c_inv, "--beta", inv_beta, "pCN step size");
  stage(c_inv, "--iters", inv_iters, "pCN chain length or IREKM iteration cap");
  stage(c_inv, "--burn-in", inv_burn, "pCN burn-in");
  stage(c_inv, "--ensemble", inv_j, "IREKM ensemble size");
  c_inv->add_flag("--table", inv.table, "sweep the table grid");

  // bench
  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "time two forward maps on the same inputs");
  add_common(c_bench, bench.run, "out/bench");
  c_bench->add_option("--baseline", bench.baseline, "fdm or checkpoint")->capture_default_str();
  c_bench->add_option("--method", bench.method, "fdm or checkpoint")->capture_default_str();
  c_bench->add_option("--problem", bench.problem, "coefficient or alpha")
      ->check(CLI::IsMember({"coefficient", "alpha"}))
      ->capture_default_str();
  c_bench->add_option("--iters,--n-evals", bench.n_evals, "timed evaluations per map")
      ->capture_default_str();
  c_bench->add_option("--warmup", bench.warmup, "untimed evaluations first")->capture_default_str();

  // eval
  EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "relative l2 error between two dumps");
  add_common(c_eval, eval.run, "out/eval");
  c_eval->add_option("approx", eval.approx, "manifest of the approximation")->required();
  c_eval->add_option("reference", eval.reference, "manifest of the reference")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    nlohmann::json report;
    if (c_solve->parsed()) {
      solve.run.log = log;
      solve.alpha = solve_alpha.get();
      if (!solve_ref.empty()) solve.reference = solve_ref;
      report = cmd_solve(solve);
    } else if (c_gen->parsed()) {
      gen.run.log = log;
      gen.task = task_from_string(gen_task);
      gen.n_train = gen_train.get();
      gen.n_test = gen_test.get();
      report = cmd_gen_data(gen);
    } else if (c_train->parsed()) {
      train.run.log = log;
      train.epochs = train_iters.get();
      train.lr = train_lr.get();
      train.points_per_sample = train_points.get();
      train.batch_size = train_batch.get();
      if (!train_resume.empty()) train.resume = train_resume;
      report = cmd_train(train);
    } else if (c_inv->parsed()) {
      inv.run.log = log;
      if (!inv_forwards.empty()) inv.forwards = inv_forwards;
      inv.alpha_true = inv_alpha.get();
      inv.sigma = inv_sigma.get();
      inv.beta = inv_beta.get();
      inv.iters = inv_iters.get();
      inv.burn_in = inv_burn.get();
      inv.ensemble = inv_j.get();
      report = cmd_invert(inv);
    } else if (c_bench->parsed()) {
      bench.run.log = log;
      report = cmd_bench(bench);
    } else if (c_eval->parsed()) {
      eval.run.log = log;
      report = cmd_eval(eval);
    }
    // Large traces stay in the report files.
    for (const char* key : {"runs", "discrepancy_trace", "mean_alpha_trace", "mu_trace"}) {
      report.erase(key);
    }
    std::cout << report.dump(2) << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}
