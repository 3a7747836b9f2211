// vaecp: command-line front end for synthetic data generation, CP-ALS and
// VAECP fitting, evaluation, gradient checking and cross-validated experiments.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vaecp/cp.hpp"
#include "vaecp/error.hpp"
#include "vaecp/experiment.hpp"
#include "vaecp/gradcheck.hpp"
#include "vaecp/io.hpp"
#include "vaecp/synthetic.hpp"
#include "vaecp/training.hpp"

namespace {

using namespace vaecp;

constexpr double kSyntheticAlpha = 1e-4;
constexpr double kRealDataAlpha = 2e-5;

Dims parse_dims(const std::string& text) {
  const DatasetSpec spec = parse_dataset_spec("synthetic:dims=" + text);
  return std::get<SyntheticSpec>(spec).dims;
}

NormalizationStats fit_stats(const ObservedEntrySet& train, bool normalize_data) {
  return normalize_data ? compute_stats(train) : NormalizationStats{0.0, 1.0};
}

template <typename Fn>
void with_output(const std::string& path, Fn&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::Io, "cannot open '" + path + "' for writing");
  write(out);
  if (!out) fail(ErrorCategory::Io, "failed writing '" + path + "'");
}

struct SynthArgs {
  std::string dims = "20x20x20";
  std::size_t rank = 10;
  double noise = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  std::string factors_out;
};

void run_synth(const SynthArgs& a) {
  SyntheticTensor syn = generate_synthetic(parse_dims(a.dims), a.rank, a.noise, a.seed);
  save_coo(a.out, ObservedEntrySet::from_dense(syn.tensor));
  if (!a.factors_out.empty()) save_cp_model(a.factors_out, {std::move(syn.factors), {0.0, 1.0}});
  std::cerr << "wrote " << syn.tensor.size() << " entries to " << a.out << '\n';
}

struct FitCpArgs {
  std::string train;
  std::size_t rank = 10;
  std::size_t max_iters = 200;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  bool no_normalize = false;
  std::string out;
};

void run_fit_cp(const FitCpArgs& a) {
  const ObservedEntrySet raw = load_coo(a.train);
  const NormalizationStats stats = fit_stats(raw, !a.no_normalize);
  AlsOptions options;
  options.rank = a.rank;
  options.max_iters = a.max_iters;
  options.tol = a.tol;
  options.seed = a.seed;
  AlsResult result = als_fit(apply_stats(raw, stats), options);
  save_cp_model(a.out, {result.factors, stats});
  std::printf("sweeps=%zu train_rmse=%.10g\n", result.rmse_trace.size(), result.rmse_trace.back());
}

struct FitVaecpArgs {
  std::string train;
  TrainConfig config;
  double alpha = kRealDataAlpha;
  bool no_normalize = false;
  std::string out;
  std::string loss_trace;
};

void run_fit_vaecp(FitVaecpArgs a) {
  const ObservedEntrySet raw = load_coo(a.train);
  const NormalizationStats stats = fit_stats(raw, !a.no_normalize);
  a.config.alpha = a.alpha;
  TrainResult result = train_vaecp(apply_stats(raw, stats), a.config);
  save_checkpoint(a.out, {result.model, stats});
  if (!a.loss_trace.empty()) {
    with_output(a.loss_trace, [&](std::ostream& out) {
      out << "step,loss\n" << std::setprecision(17);
      for (std::size_t i = 0; i < result.loss_trace.size(); ++i) out << i + 1 << ',' << result.loss_trace[i] << '\n';
    });
  }
  std::printf("epochs=%zu steps=%zu train_rmse=%.10g\n", result.epochs, result.loss_trace.size(),
              evaluate(result.model, raw, stats));
}

struct EvalArgs {
  std::string model;
  std::string test;
};

void run_eval(const EvalArgs& a) {
  const ObservedEntrySet test = load_coo(a.test);
  double value = 0.0;
  std::string kind;
  if (is_checkpoint_file(a.model)) {
    const Checkpoint ck = load_checkpoint(a.model);
    require(ck.model.dims() == test.dims(), "model dims do not match test data dims");
    value = evaluate(ck.model, test, ck.stats);
    kind = "vaecp";
  } else {
    const CpModelFile cp = load_cp_model(a.model);
    require(cp.factors.dims() == test.dims(), "model dims do not match test data dims");
    value = evaluate(cp.factors, test, cp.stats);
    kind = "cp";
  }
  std::printf("method=%s entries=%zu rmse=%.10g\n", kind.c_str(), test.size(), value);
}

struct GradcheckArgs {
  std::string dims = "4x4x4";
  GradcheckOptions options;
  double tol = 1e-6;
};

int run_gradcheck(GradcheckArgs a) {
  a.options.dims = parse_dims(a.dims);
  const GradcheckReport r = gradcheck(a.options);
  std::printf("parameters=%zu max_relative_error=%.6e worst_coordinate=%zu analytic=%.12g numeric=%.12g\n",
              r.parameter_count, r.max_relative_error, r.worst_coordinate, r.analytic, r.numeric);
  return r.max_relative_error < a.tol ? 0 : 1;
}

struct CvArgs {
  std::string dataset;
  std::string methods = "vaecp,cp";
  std::vector<std::size_t> ranks = {9, 10, 11, 12};
  ExperimentConfig config;
  double alpha = 0.0;
  std::string csv;
  std::string summary;
  bool quiet = false;
};

void run_cv(CvArgs a) {
  const DatasetSpec spec = parse_dataset_spec(a.dataset);
  a.config.methods.clear();
  std::stringstream methods(a.methods);
  for (std::string m; std::getline(methods, m, ',');) a.config.methods.push_back(parse_method(m));
  a.config.ranks = a.ranks;
  a.config.vaecp.alpha =
      a.alpha > 0.0 ? a.alpha : (std::holds_alternative<SyntheticSpec>(spec) ? kSyntheticAlpha : kRealDataAlpha);

  const ObservedEntrySet data = load_dataset(spec);
  ExperimentHooks hooks;
  if (!a.quiet) {
    hooks.on_record = [](const RunRecord& r) {
      if (r.phase == "test")
        std::fprintf(stderr, "%s rank=%zu repeat=%zu test_rmse=%.6f\n", r.method.c_str(), r.rank, r.repeat, r.rmse);
    };
  }
  const ExperimentReport report = run_experiment(data, a.config, hooks);
  with_output(a.csv, [&](std::ostream& out) { write_csv(out, report.records); });
  if (!a.summary.empty())
    with_output(a.summary, [&](std::ostream& out) { write_summary_json(out, report, a.config, describe(spec)); });
}

void add_train_flags(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--rank,-R", c.rank, "Latent row length R")->capture_default_str();
  cmd->add_option("--hidden,-K", c.hidden, "Decoder hidden width K")->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size, "Minibatch size")->capture_default_str();
  cmd->add_option("--samples,-L", c.samples, "Monte Carlo samples per entry")->capture_default_str();
  cmd->add_option("--max-epochs", c.max_epochs, "Epoch limit")->capture_default_str();
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VAECP tensor completion: CP-ALS baseline, variational auto-encoder CP, experiments"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a noisy CP tensor as a COO file");
  synth_cmd->add_option("--dims", synth.dims, "Shape, e.g. 20x20x20")->capture_default_str();
  synth_cmd->add_option("--rank", synth.rank, "CP rank of the generating factors")->capture_default_str();
  synth_cmd->add_option("--noise", synth.noise, "Gaussian noise standard deviation")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  synth_cmd->add_option("--out,-o", synth.out, "Output COO path")->required();
  synth_cmd->add_option("--factors-out", synth.factors_out, "Also write the ground-truth factors (JSON)");

  FitCpArgs fit_cp;
  auto* cp_cmd = app.add_subcommand("fit-cp", "Fit the masked CP-ALS baseline");
  cp_cmd->add_option("--train", fit_cp.train, "Training COO file")->required();
  cp_cmd->add_option("--rank,-R", fit_cp.rank, "CP rank")->capture_default_str();
  cp_cmd->add_option("--max-iters", fit_cp.max_iters, "Sweep limit")->capture_default_str();
  cp_cmd->add_option("--tol", fit_cp.tol, "Relative RMSE decrease threshold")->capture_default_str();
  cp_cmd->add_option("--seed", fit_cp.seed, "Random seed")->capture_default_str();
  cp_cmd->add_flag("--no-normalize", fit_cp.no_normalize, "Fit raw values instead of standardized ones");
  cp_cmd->add_option("--out,-o", fit_cp.out, "Output model (JSON)")->required();

  FitVaecpArgs fit_vaecp;
  auto* vaecp_cmd = app.add_subcommand("fit-vaecp", "Train a VAECP model");
  vaecp_cmd->add_option("--train", fit_vaecp.train, "Training COO file")->required();
  add_train_flags(vaecp_cmd, fit_vaecp.config);
  vaecp_cmd->add_option("--alpha", fit_vaecp.alpha, "Adam step size")->capture_default_str();
  vaecp_cmd->add_option("--convergence", fit_vaecp.config.convergence,
                        "Stop when the 100-step loss average changes by less than this fraction (0 = off)")
      ->capture_default_str();
  vaecp_cmd->add_flag("--no-normalize", fit_vaecp.no_normalize, "Fit raw values instead of standardized ones");
  vaecp_cmd->add_option("--out,-o", fit_vaecp.out, "Output checkpoint")->required();
  vaecp_cmd->add_option("--loss-trace", fit_vaecp.loss_trace, "Write per-step loss CSV");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "RMSE of a fitted model on a COO test file (normalized units)");
  eval_cmd->add_option("--model,-m", eval.model, "VAECP checkpoint or CP model JSON")->required();
  eval_cmd->add_option("--test", eval.test, "Test COO file")->required();

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic ELBO gradients with central differences");
  gc_cmd->add_option("--dims", gc.dims, "Shape, e.g. 4x4x4")->capture_default_str();
  gc_cmd->add_option("--rank,-R", gc.options.rank, "Latent row length")->capture_default_str();
  gc_cmd->add_option("--hidden,-K", gc.options.hidden, "Decoder hidden width")->capture_default_str();
  gc_cmd->add_option("--batch-size", gc.options.batch_size, "Entries in the batch")->capture_default_str();
  gc_cmd->add_option("--samples,-L", gc.options.samples, "Monte Carlo samples")->capture_default_str();
  gc_cmd->add_option("--seed", gc.options.seed, "Random seed")->capture_default_str();
  gc_cmd->add_option("--fd-step", gc.options.h, "Relative finite-difference step")->capture_default_str();
  gc_cmd->add_option("--tol", gc.tol, "Exit nonzero when the max relative error reaches this")->capture_default_str();

  CvArgs cv;
  auto* cv_cmd = app.add_subcommand("cv", "Repeated split + k-fold CV experiment, CSV records and JSON summary");
  cv_cmd->add_option("--dataset", cv.dataset, "synthetic[:dims=..,rank=..,noise=..,seed=..] | coo:<path> | <path>")
      ->required();
  cv_cmd->add_option("--methods", cv.methods, "Comma-separated subset of vaecp,cp")->capture_default_str();
  cv_cmd->add_option("--ranks", cv.ranks, "Ranks to evaluate")->delimiter(',')->capture_default_str();
  cv_cmd->add_option("--repeats", cv.config.repeats, "Random train/test splits")->capture_default_str();
  cv_cmd->add_option("--folds", cv.config.folds, "Cross-validation folds")->capture_default_str();
  cv_cmd->add_option("--train-fraction", cv.config.train_fraction, "Training share of the data")->capture_default_str();
  cv_cmd->add_option("--seed", cv.config.seed, "Experiment seed")->required();
  cv_cmd->add_option("--hidden,-K", cv.config.vaecp.hidden, "Decoder hidden width")->capture_default_str();
  cv_cmd->add_option("--alpha", cv.alpha, "Adam step size (default 1e-4 synthetic, 2e-5 files)");
  cv_cmd->add_option("--batch-size", cv.config.vaecp.batch_size, "Minibatch size")->capture_default_str();
  cv_cmd->add_option("--samples,-L", cv.config.vaecp.samples, "Monte Carlo samples")->capture_default_str();
  cv_cmd->add_option("--max-epochs", cv.config.vaecp.max_epochs, "VAECP epoch limit")->capture_default_str();
  cv_cmd->add_option("--als-max-iters", cv.config.als_max_iters, "ALS sweep limit")->capture_default_str();
  cv_cmd->add_option("--csv", cv.csv, "Per-run records CSV (default stdout)");
  cv_cmd->add_option("--summary", cv.summary, "JSON summary path");
  cv_cmd->add_flag("--wall-time", cv.config.record_wall_time, "Record wall-clock times (output no longer reproducible)");
  cv_cmd->add_flag("--quiet,-q", cv.quiet, "No progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorCategory::InvalidArgument);
  }

  try {
    if (*synth_cmd) run_synth(synth);
    if (*cp_cmd) run_fit_cp(fit_cp);
    if (*vaecp_cmd) run_fit_vaecp(fit_vaecp);
    if (*eval_cmd) run_eval(eval);
    if (*gc_cmd) return run_gradcheck(gc);
    if (*cv_cmd) run_cv(cv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", std::string(category_name(e.category())).c_str(), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
  return 0;
}
