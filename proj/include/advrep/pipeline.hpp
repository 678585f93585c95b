#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advrep/folds.hpp"
#include "advrep/metrics.hpp"
#include "advrep/train.hpp"

#include "json.hpp"

namespace advrep {

inline constexpr const char* kAdvrepVersion = "0.1.0";

// One regime with its trade-off weights as evaluated by the protocol.
struct RegimeSpec {
  Regime regime = Regime::kBaseline;
  double alpha = 0.0;
  double lambda = 0.0;
};

struct ProtocolConfig {
  std::vector<RegimeSpec> regimes;
  std::vector<uint64_t> seeds;
  size_t n_folds = 5;
  uint64_t fold_seed = 1;
  // Representation-training template; regime, alpha, lambda and seed are
  // overwritten per cell.
  TrainConfig rep;
  // Downstream / probe head training template.
  TrainConfig head;
  // Chunk-per-utterance cap for the bottleneck phases (0 = all chunks).
  size_t head_max_chunks = 0;
  size_t jobs = 1;
  // When set, representation weights come from
  // <dir>/<regime>/seed<seed>/fold<fold>/best.ckpt instead of being trained
  // in-process; a missing file is a data error naming the fold.
  std::string checkpoints_dir;
};

std::string cell_checkpoint_path(const std::string& dir,
                                 const RegimeSpec& spec, uint64_t seed,
                                 size_t fold);

nlohmann::json protocol_config_to_json(const ProtocolConfig& cfg);
ProtocolConfig protocol_config_from_json(const nlohmann::json& j);

// One (regime, seed, fold) evaluation cell.
struct CellResult {
  RegimeSpec spec;
  uint64_t seed = 0;
  size_t fold = 0;
  double pd_acc = 0.0;    // speaker-level soft-vote accuracy, percent
  double pd_auc = 0.0;    // speaker-level AUC on soft-vote scores
  double probe_acc = 0.0; // chunk-level speaker-ID accuracy, percent
  double probe_auc = 0.0; // chunk-level macro one-vs-rest AUC
  double dev_pd_acc = 0.0;  // soft-vote accuracy on the dev fold (grid search)
  size_t probe_n_speakers = 0;
};

struct ProtocolResult {
  FoldPlan plan;
  std::vector<CellResult> cells;  // ordered by (regime, seed, fold)
};

CellResult run_cell(const FeatureStore& store, const FoldPlan& plan,
                    const RegimeSpec& spec, uint64_t seed, size_t fold,
                    const ProtocolConfig& proto);

// Runs every (regime, seed, fold) cell, at most proto.jobs at a time.
// Workers share nothing but the read-only feature store; cell order in the
// result is fixed regardless of completion order.
ProtocolResult run_protocol(const FeatureStore& store,
                            const ProtocolConfig& proto);

// One row per cell plus one aggregate row per regime. The aggregate is the
// mean and population std over per-seed values, each of which is the mean
// over folds for that seed.
void write_results_csv(const std::string& path, const ProtocolResult& res);

// Per-regime aggregate of one metric (fold-mean per seed, then over seeds).
Aggregate aggregate_metric(const ProtocolResult& res, const RegimeSpec& spec,
                           double CellResult::*metric);

struct GridPoint {
  double value = 0.0;
  double mean_dev_acc = 0.0;
  std::vector<CellResult> cells;
};

struct GridReport {
  Regime regime = Regime::kAdversarial;
  std::vector<GridPoint> points;
  double best_value = 0.0;
};

inline const std::vector<double>& grid_values() {
  static const std::vector<double> v = {0.01, 0.03, 0.05, 0.07};
  return v;
}

// Sweeps the 4-point grid for adversarial (lambda) or discriminative (alpha),
// ranking by mean dev-fold accuracy over seeds and folds; ties break toward
// the smaller value. Fusion is rejected: its weights come from the
// single-task optima.
GridReport grid_search(const FeatureStore& store, Regime regime,
                       const ProtocolConfig& proto);

nlohmann::json grid_report_to_json(const GridReport& report);

// Command provenance record. Timestamps appear here and nowhere else, so
// every other output of a run is byte-reproducible.
nlohmann::json make_run_manifest(const std::string& command,
                                 const nlohmann::json& config,
                                 const std::vector<std::string>& inputs,
                                 const std::string& out_dir);

}  // namespace advrep
