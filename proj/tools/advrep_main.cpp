#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "advrep/common.hpp"
#include "advrep/features.hpp"
#include "advrep/folds.hpp"
#include "advrep/log.hpp"
#include "advrep/metrics.hpp"
#include "advrep/pipeline.hpp"
#include "advrep/synth.hpp"
#include "advrep/train.hpp"
#include "advrep/verify.hpp"

namespace fs = std::filesystem;
using namespace advrep;

namespace {

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot write ", path.string());
  os << j.dump(2) << "\n";
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  ADVREP_REQUIRE(is.good(), DataError, "cannot read ", path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

struct SynthArgs {
  std::string config, out = "corpus";
  uint64_t seed = 0;
  bool seed_given = false;
};

int cmd_synth(const SynthArgs& a) {
  SynthSpec spec;
  if (!a.config.empty()) spec = read_synth_spec(a.config);
  if (a.seed_given) spec.seed = a.seed;
  const auto rows = generate_corpus(spec, a.out);
  write_json_file(fs::path(a.out) / "run_manifest.json",
                  make_run_manifest("synth", synth_spec_to_json(spec),
                                    a.config.empty()
                                        ? std::vector<std::string>{}
                                        : std::vector<std::string>{a.config},
                                    a.out));
  std::printf("wrote %zu utterances for %zu speakers under %s\n", rows.size(),
              2 * spec.n_speakers_per_class, a.out.c_str());
  return 0;
}

struct FeaturizeArgs {
  std::string manifest, out;
  bool fail_on_error = false;
};

int cmd_featurize(const FeaturizeArgs& a) {
  const auto rows = read_manifest(a.manifest);
  if (rows.empty()) LOG_WARN("manifest %s lists no utterances", a.manifest.c_str());
  FeaturizeOptions opts;
  opts.fail_on_error = a.fail_on_error;
  FeaturizeReport report;
  const FeatureStore store = featurize(rows, opts, &report);
  save_store(a.out, store);
  write_json_file(
      fs::path(a.out + ".manifest.json"),
      make_run_manifest("featurize",
                        {{"manifest", a.manifest},
                         {"fail_on_error", a.fail_on_error}},
                        {a.manifest}, a.out));
  std::printf("featurized %zu utterances (%zu skipped) into %zu chunks: %s\n",
              report.utterances_done, report.utterances_skipped,
              store.chunks.size(), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string features, config, regime, out = "run";
  double alpha = 0.0, lambda = 0.0;
  bool alpha_given = false, lambda_given = false;
  uint64_t seed = 1;
  size_t folds = 5, fold = 0;
  size_t max_epochs = 0;  // 0 = keep config value
};

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = train_config_from_json(read_json_file(a.config));
  cfg.regime = regime_from_string(a.regime);
  if (a.alpha_given) cfg.alpha = a.alpha;
  if (a.lambda_given) cfg.lambda = a.lambda;
  cfg.seed = a.seed;
  if (a.max_epochs > 0) cfg.max_epochs = a.max_epochs;
  validate_train_config(cfg);

  const FeatureStore store = load_store(a.features);
  const FoldPlan plan = make_folds(store.speaker_label, a.folds, a.seed);
  ADVREP_REQUIRE(a.fold < plan.n_folds, UsageError, "fold ", a.fold,
                 " out of range for ", plan.n_folds, " folds");
  const auto train_sp = plan.train_speakers(a.fold);
  const auto dev_sp = plan.dev_speakers(a.fold);

  const auto train_chunks = chunks_of_speakers(store, train_sp, 0);
  const auto dev_chunks =
      chunks_of_speakers(store, dev_sp, cfg.max_chunks_per_utterance);

  std::vector<uint32_t> enrolled;
  for (uint32_t s : train_sp)
    if (store.speaker_label[s] == 0) enrolled.push_back(s);
  std::sort(enrolled.begin(), enrolled.end());
  std::vector<uint32_t> spk_chunks;
  std::vector<int> spk_labels;
  if (cfg.regime == Regime::kAdversarial || cfg.regime == Regime::kFusion) {
    spk_chunks = chunks_of_speakers(store, enrolled, 0);
    std::map<uint32_t, int> index;
    for (size_t i = 0; i < enrolled.size(); ++i)
      index[enrolled[i]] = static_cast<int>(i);
    for (uint32_t c : spk_chunks)
      spk_labels.push_back(index[store.chunks[c].speaker]);
  }

  Trainer trainer(cfg, std::max<size_t>(enrolled.size(), 2));
  const TrainResult res =
      trainer.fit(store, train_chunks, dev_chunks, spk_chunks, spk_labels);
  trainer.save_run(a.out, res);
  write_json_file(fs::path(a.out) / "run_manifest.json",
                  make_run_manifest("train", train_config_to_json(cfg),
                                    {a.features}, a.out));
  std::printf("trained %s for %zu epochs; best epoch %zu (dev %.5f): %s\n",
              a.regime.c_str(), res.epochs_run, res.best_epoch,
              res.best_monitor, a.out.c_str());
  return 0;
}

struct EvaluateArgs {
  std::string features, config, out, regime = "all", checkpoints;
  double alpha = 0.01, lambda = 0.01;
  std::vector<uint64_t> seeds = {1, 2, 3};
  uint64_t seed = 1;
  size_t folds = 5, jobs = 1;
  bool seeds_given = false, folds_given = false, seed_given = false,
       jobs_given = false;
};

ProtocolConfig build_protocol(const EvaluateArgs& a) {
  ProtocolConfig proto;
  if (!a.config.empty())
    proto = protocol_config_from_json(read_json_file(a.config));
  if (proto.regimes.empty() || a.regime != "all") {
    proto.regimes.clear();
    auto add = [&](Regime r, double alpha, double lambda) {
      proto.regimes.push_back({r, alpha, lambda});
    };
    if (a.regime == "all") {
      add(Regime::kBaseline, 0.0, 0.0);
      add(Regime::kAdversarial, 0.0, a.lambda);
      add(Regime::kDiscriminative, a.alpha, 0.0);
      add(Regime::kFusion, a.alpha, a.lambda);
    } else {
      const Regime r = regime_from_string(a.regime);
      add(r, r == Regime::kBaseline ? 0.0
            : r == Regime::kAdversarial ? 0.0 : a.alpha,
          r == Regime::kBaseline || r == Regime::kDiscriminative ? 0.0
                                                                 : a.lambda);
    }
  }
  if (proto.seeds.empty() || a.seeds_given) proto.seeds = a.seeds;
  if (a.folds_given || a.config.empty()) proto.n_folds = a.folds;
  if (a.seed_given || a.config.empty()) proto.fold_seed = a.seed;
  if (a.jobs_given || a.config.empty()) proto.jobs = a.jobs;
  proto.checkpoints_dir = a.checkpoints;
  return proto;
}

int cmd_evaluate(const EvaluateArgs& a) {
  const FeatureStore store = load_store(a.features);
  const ProtocolConfig proto = build_protocol(a);
  const ProtocolResult res = run_protocol(store, proto);
  fs::create_directories(a.out);
  write_json_file(fs::path(a.out) / "folds.json", fold_plan_to_json(res.plan));
  write_results_csv((fs::path(a.out) / "results.csv").string(), res);
  write_json_file(fs::path(a.out) / "run_manifest.json",
                  make_run_manifest("evaluate", protocol_config_to_json(proto),
                                    {a.features}, a.out));
  for (const auto& spec : proto.regimes) {
    std::printf(
        "%-14s pd_acc %s  pd_auc %s  probe_acc %s  probe_auc %s\n",
        regime_to_string(spec.regime),
        format_mean_std(aggregate_metric(res, spec, &CellResult::pd_acc))
            .c_str(),
        format_mean_std(aggregate_metric(res, spec, &CellResult::pd_auc))
            .c_str(),
        format_mean_std(aggregate_metric(res, spec, &CellResult::probe_acc))
            .c_str(),
        format_mean_std(aggregate_metric(res, spec, &CellResult::probe_auc))
            .c_str());
  }
  std::printf("results: %s\n", (fs::path(a.out) / "results.csv").c_str());
  return 0;
}

struct GridArgs {
  std::string features, config, regime, out = "grid";
  std::vector<uint64_t> seeds = {1};
  uint64_t seed = 1;
  size_t folds = 5, jobs = 1;
  bool seeds_given = false, folds_given = false, seed_given = false,
       jobs_given = false;
};

int cmd_gridsearch(const GridArgs& a) {
  const Regime regime = regime_from_string(a.regime);
  ADVREP_REQUIRE(
      regime == Regime::kAdversarial || regime == Regime::kDiscriminative,
      UsageError,
      "grid search covers adversarial and discriminative only; fusion's "
      "weights are fixed to the single-task optima");
  const FeatureStore store = load_store(a.features);
  ProtocolConfig proto;
  if (!a.config.empty())
    proto = protocol_config_from_json(read_json_file(a.config));
  if (proto.seeds.empty() || a.seeds_given) proto.seeds = a.seeds;
  if (a.folds_given || a.config.empty()) proto.n_folds = a.folds;
  if (a.seed_given || a.config.empty()) proto.fold_seed = a.seed;
  if (a.jobs_given || a.config.empty()) proto.jobs = a.jobs;
  const GridReport report = grid_search(store, regime, proto);
  fs::create_directories(a.out);
  write_json_file(fs::path(a.out) / "grid.json", grid_report_to_json(report));
  write_json_file(fs::path(a.out) / "run_manifest.json",
                  make_run_manifest("gridsearch",
                                    protocol_config_to_json(proto),
                                    {a.features}, a.out));
  const char* param =
      regime == Regime::kAdversarial ? "lambda" : "alpha";
  for (const auto& p : report.points)
    std::printf("%s=%.2f  mean dev accuracy %.2f%%\n", param, p.value,
                p.mean_dev_acc);
  std::printf("best %s=%.2f\n", param, report.best_value);
  return 0;
}

int cmd_gradcheck(uint64_t seed, size_t trials, size_t adjoint_cases) {
  const VerifyReport report =
      run_numeric_verification(seed, trials, adjoint_cases);
  for (const auto& line : report.lines) std::printf("%s\n", line.c_str());
  std::printf("%s (max rel err %.3e over %zu trials, adjoint %.3e over %zu "
              "cases)\n",
              report.pass ? "PASS" : "FAIL", report.max_rel_err,
              report.gradcheck_trials, report.adjoint_worst,
              report.adjoint_cases);
  if (!report.pass) throw InternalError("numeric verification failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"speech representation learning with adversarial and "
               "discriminative training regimes"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--config", synth_args.config, "corpus spec (json)");
  auto* synth_seed =
      synth->add_option("--seed", synth_args.seed, "master seed override");
  synth->add_option("--out", synth_args.out, "output directory");

  FeaturizeArgs feat_args;
  auto* feat = app.add_subcommand("featurize",
                                  "extract mel-spectrogram chunks");
  feat->add_option("--manifest", feat_args.manifest, "corpus manifest")
      ->required();
  feat->add_option("--out", feat_args.out, "feature store path")->required();
  feat->add_flag("--fail-on-error", feat_args.fail_on_error,
                 "bad audio aborts instead of being skipped");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train one representation run");
  train->add_option("--features", train_args.features, "feature store")
      ->required();
  train->add_option("--regime", train_args.regime,
                    "baseline|adversarial|discriminative|fusion")
      ->required();
  auto* train_alpha =
      train->add_option("--alpha", train_args.alpha, "classifier weight");
  auto* train_lambda = train->add_option("--lambda", train_args.lambda,
                                         "adversarial weight");
  train->add_option("--seed", train_args.seed, "master seed");
  train->add_option("--folds", train_args.folds, "fold count for the split");
  train->add_option("--fold", train_args.fold, "fold to train");
  train->add_option("--max-epochs", train_args.max_epochs, "epoch cap");
  train->add_option("--config", train_args.config, "training config (json)");
  train->add_option("--out", train_args.out, "run directory");

  EvaluateArgs eval_args;
  auto* eval = app.add_subcommand("evaluate", "run the evaluation protocol");
  eval->add_option("--features", eval_args.features, "feature store")
      ->required();
  eval->add_option("--out", eval_args.out, "output directory")->required();
  eval->add_option("--regime", eval_args.regime,
                   "all or a single regime name");
  eval->add_option("--alpha", eval_args.alpha, "classifier weight");
  eval->add_option("--lambda", eval_args.lambda, "adversarial weight");
  auto* eval_seeds = eval->add_option("--seeds", eval_args.seeds,
                                      "protocol seeds")
                         ->delimiter(',');
  auto* eval_seed = eval->add_option("--seed", eval_args.seed,
                                     "fold-plan seed");
  auto* eval_folds = eval->add_option("--folds", eval_args.folds,
                                      "fold count");
  auto* eval_jobs = eval->add_option("--jobs", eval_args.jobs,
                                     "parallel cells");
  eval->add_option("--config", eval_args.config, "protocol config (json)");
  eval->add_option("--checkpoints", eval_args.checkpoints,
                   "pre-trained checkpoint tree");

  GridArgs grid_args;
  auto* grid = app.add_subcommand("gridsearch",
                                  "sweep the trade-off weight grid");
  grid->add_option("--features", grid_args.features, "feature store")
      ->required();
  grid->add_option("--regime", grid_args.regime,
                   "adversarial or discriminative")
      ->required();
  auto* grid_seeds = grid->add_option("--seeds", grid_args.seeds,
                                      "protocol seeds")
                         ->delimiter(',');
  auto* grid_seed = grid->add_option("--seed", grid_args.seed,
                                     "fold-plan seed");
  auto* grid_folds = grid->add_option("--folds", grid_args.folds,
                                      "fold count");
  auto* grid_jobs = grid->add_option("--jobs", grid_args.jobs,
                                     "parallel cells");
  grid->add_option("--config", grid_args.config, "protocol config (json)");
  grid->add_option("--out", grid_args.out, "output directory");

  uint64_t gc_seed = 1;
  size_t gc_trials = 100, gc_adjoint = 50;
  auto* gc = app.add_subcommand("gradcheck",
                                "run the numeric verification suite");
  gc->add_option("--seed", gc_seed, "randomization seed");
  gc->add_option("--trials", gc_trials, "gradient-check trials");
  gc->add_option("--adjoint-cases", gc_adjoint, "adjoint identity cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    synth_args.seed_given = synth_seed->count() > 0;
    train_args.alpha_given = train_alpha->count() > 0;
    train_args.lambda_given = train_lambda->count() > 0;
    eval_args.seeds_given = eval_seeds->count() > 0;
    eval_args.seed_given = eval_seed->count() > 0;
    eval_args.folds_given = eval_folds->count() > 0;
    eval_args.jobs_given = eval_jobs->count() > 0;
    grid_args.seeds_given = grid_seeds->count() > 0;
    grid_args.seed_given = grid_seed->count() > 0;
    grid_args.folds_given = grid_folds->count() > 0;
    grid_args.jobs_given = grid_jobs->count() > 0;
    if (synth->parsed()) return cmd_synth(synth_args);
    if (feat->parsed()) return cmd_featurize(feat_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_evaluate(eval_args);
    if (grid->parsed()) return cmd_gridsearch(grid_args);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_trials, gc_adjoint);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 3;
  }
  return 0;
}
