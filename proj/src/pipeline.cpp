#include "advrep/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "advrep/checkpoint.hpp"
#include "advrep/common.hpp"
#include "advrep/jobs.hpp"
#include "advrep/log.hpp"
#include "advrep/metrics.hpp"
#include "advrep/rng.hpp"

namespace advrep {

nlohmann::json protocol_config_to_json(const ProtocolConfig& cfg) {
  nlohmann::json regimes = nlohmann::json::array();
  for (const auto& r : cfg.regimes)
    regimes.push_back({{"regime", regime_to_string(r.regime)},
                       {"alpha", r.alpha},
                       {"lambda", r.lambda}});
  return {{"regimes", regimes},
          {"seeds", cfg.seeds},
          {"n_folds", cfg.n_folds},
          {"fold_seed", cfg.fold_seed},
          {"rep", train_config_to_json(cfg.rep)},
          {"head", train_config_to_json(cfg.head)},
          {"head_max_chunks", cfg.head_max_chunks},
          {"jobs", cfg.jobs}};
}

ProtocolConfig protocol_config_from_json(const nlohmann::json& j) {
  ProtocolConfig cfg;
  try {
    if (j.contains("regimes")) {
      cfg.regimes.clear();
      for (const auto& r : j["regimes"]) {
        RegimeSpec s;
        s.regime = regime_from_string(r["regime"].get<std::string>());
        if (r.contains("alpha")) s.alpha = r["alpha"].get<double>();
        if (r.contains("lambda")) s.lambda = r["lambda"].get<double>();
        cfg.regimes.push_back(s);
      }
    }
    if (j.contains("seeds"))
      cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("n_folds")) cfg.n_folds = j["n_folds"].get<size_t>();
    if (j.contains("fold_seed"))
      cfg.fold_seed = j["fold_seed"].get<uint64_t>();
    if (j.contains("rep")) cfg.rep = train_config_from_json(j["rep"]);
    if (j.contains("head")) cfg.head = train_config_from_json(j["head"]);
    if (j.contains("head_max_chunks"))
      cfg.head_max_chunks = j["head_max_chunks"].get<size_t>();
    if (j.contains("jobs")) cfg.jobs = j["jobs"].get<size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad protocol config: ") + e.what());
  }
  return cfg;
}

namespace {

// Speakers of one class within a speaker-ID set, sorted for stable indexing.
std::vector<uint32_t> class_speakers(const FeatureStore& store,
                                     const std::vector<uint32_t>& speakers,
                                     uint8_t label) {
  std::vector<uint32_t> out;
  for (uint32_t s : speakers)
    if (store.speaker_label[s] == label) out.push_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

struct HeadEval {
  double speaker_acc = 0.0;
  double speaker_auc = 0.0;
};

// Speaker-level soft-vote metrics of a binary head over the given chunks.
HeadEval soft_vote_eval(const FeatureStore& store, const HeadTrainer& head,
                        const std::vector<float>& features,
                        const std::vector<uint32_t>& rows,
                        const std::vector<uint32_t>& chunk_ids) {
  const std::vector<double> probs = head.predict_probs(features, rows);
  std::map<uint32_t, std::vector<double>> by_speaker;
  for (size_t i = 0; i < chunk_ids.size(); ++i) {
    auto& dst = by_speaker[store.chunks[chunk_ids[i]].speaker];
    dst.push_back(probs[2 * i]);
    dst.push_back(probs[2 * i + 1]);
  }
  std::vector<int> preds, labels;
  std::vector<double> scores;
  for (const auto& [spk, chunk_probs] : by_speaker) {
    const SoftVote v = soft_vote(chunk_probs, 2);
    preds.push_back(v.pred);
    scores.push_back(v.score);
    labels.push_back(store.speaker_label[spk]);
  }
  HeadEval ev;
  ev.speaker_acc = accuracy(preds, labels);
  ev.speaker_auc = roc_auc_binary(scores, labels);
  return ev;
}

}  // namespace

std::string cell_checkpoint_path(const std::string& dir,
                                 const RegimeSpec& spec, uint64_t seed,
                                 size_t fold) {
  return (std::filesystem::path(dir) / regime_to_string(spec.regime) /
          ("seed" + std::to_string(seed)) / ("fold" + std::to_string(fold)) /
          "best.ckpt")
      .string();
}

CellResult run_cell(const FeatureStore& store, const FoldPlan& plan,
                    const RegimeSpec& spec, uint64_t seed, size_t fold,
                    const ProtocolConfig& proto) {
  const std::vector<uint32_t> train_sp = plan.train_speakers(fold);
  const std::vector<uint32_t> dev_sp = plan.dev_speakers(fold);
  const std::vector<uint32_t> test_sp = plan.test_speakers(fold);

  TrainConfig cfg = proto.rep;
  cfg.regime = spec.regime;
  cfg.alpha = spec.alpha;
  cfg.lambda = spec.lambda;
  {
    Rng mix = Rng::substream(seed, "cell", fold);
    cfg.seed = mix.next_u64();
  }

  // Representation training never sees test speakers. Full candidate lists
  // go in; the trainer applies the per-utterance cap epoch by epoch. The
  // development monitor stays a fixed capped slice for comparability.
  const auto rep_train = chunks_of_speakers(store, train_sp, 0);
  const auto rep_dev =
      chunks_of_speakers(store, dev_sp, cfg.max_chunks_per_utterance);
  audit_no_leakage(store, rep_train, test_sp, "representation training");
  audit_no_leakage(store, rep_dev, test_sp, "representation development");

  // The speaker-ID stream: neurotypical training speakers, relabeled by
  // their index in the sorted enrolled list.
  const std::vector<uint32_t> enrolled = class_speakers(store, train_sp, 0);
  std::vector<uint32_t> spk_chunks;
  std::vector<int> spk_labels;
  const bool needs_spk = spec.regime == Regime::kAdversarial ||
                         spec.regime == Regime::kFusion;
  if (needs_spk) {
    spk_chunks = chunks_of_speakers(store, enrolled, 0);
    audit_no_leakage(store, spk_chunks, test_sp, "speaker-ID stream");
    std::map<uint32_t, int> index;
    for (size_t i = 0; i < enrolled.size(); ++i)
      index[enrolled[i]] = static_cast<int>(i);
    for (uint32_t c : spk_chunks)
      spk_labels.push_back(index[store.chunks[c].speaker]);
  }

  Trainer trainer(cfg, std::max<size_t>(enrolled.size(), 2));
  if (proto.checkpoints_dir.empty()) {
    const TrainResult rep =
        trainer.fit(store, rep_train, rep_dev, spk_chunks, spk_labels);
    trainer.restore_best();
    LOG_INFO("%s seed %llu fold %zu: representation best epoch %zu (dev %.5f)",
             regime_to_string(spec.regime),
             static_cast<unsigned long long>(seed), fold, rep.best_epoch,
             rep.best_monitor);
  } else {
    const std::string path =
        cell_checkpoint_path(proto.checkpoints_dir, spec, seed, fold);
    const Checkpoint ck = load_checkpoint(path);
    checkpoint_to_params(ck, trainer.params());
    cfg.seed = ck.master_seed;  // head phases stay tied to the trained run
    LOG_INFO("%s seed %llu fold %zu: loaded %s (epoch %llu)",
             regime_to_string(spec.regime),
             static_cast<unsigned long long>(seed), fold, path.c_str(),
             static_cast<unsigned long long>(ck.epoch));
  }

  CellResult cell;
  cell.spec = spec;
  cell.seed = seed;
  cell.fold = fold;

  // Downstream PD classifier on frozen bottlenecks.
  {
    const auto tr = chunks_of_speakers(store, train_sp, proto.head_max_chunks);
    const auto de = chunks_of_speakers(store, dev_sp, proto.head_max_chunks);
    const auto te = chunks_of_speakers(store, test_sp, proto.head_max_chunks);
    audit_no_leakage(store, tr, test_sp, "downstream training");
    audit_no_leakage(store, de, test_sp, "downstream development");

    std::vector<uint32_t> all(tr);
    all.insert(all.end(), de.begin(), de.end());
    all.insert(all.end(), te.begin(), te.end());
    const std::vector<float> feats = trainer.bottlenecks(store, all);
    std::vector<int> labels(all.size());
    for (size_t i = 0; i < all.size(); ++i)
      labels[i] = store.chunks[all[i]].label;
    std::vector<uint32_t> tr_idx(tr.size()), de_idx(de.size()),
        te_idx(te.size());
    for (size_t i = 0; i < tr.size(); ++i)
      tr_idx[i] = static_cast<uint32_t>(i);
    for (size_t i = 0; i < de.size(); ++i)
      de_idx[i] = static_cast<uint32_t>(tr.size() + i);
    for (size_t i = 0; i < te.size(); ++i)
      te_idx[i] = static_cast<uint32_t>(tr.size() + de.size() + i);

    HeadTrainer pd(cfg.model, 2, cfg.seed, "downstream.pd");
    pd.fit(feats, labels, tr_idx, de_idx, proto.head);
    // Held-out speakers shift the head's probabilities as a block; center
    // the decision boundary between the two class means seen on dev.
    pd.recenter_bias(feats, labels, de_idx);
    const HeadEval test_ev = soft_vote_eval(store, pd, feats, te_idx, te);
    const HeadEval dev_ev = soft_vote_eval(store, pd, feats, de_idx, de);
    cell.pd_acc = test_ev.speaker_acc;
    cell.pd_auc = test_ev.speaker_auc;
    cell.dev_pd_acc = dev_ev.speaker_acc;
  }

  // Speaker-ID probe on the same frozen bottlenecks: per-speaker utterance
  // split over the enrolled (neurotypical training) speakers, chunk-level
  // metrics on unseen utterances.
  {
    ADVREP_REQUIRE(enrolled.size() >= 2, ConfigError,
                   "probe needs at least 2 enrolled speakers");
    const ProbeSplit split = make_probe_split(store, enrolled, cfg.seed);
    const auto tr =
        chunks_of_utterances(store, split.train_utts, proto.head_max_chunks);
    const auto de =
        chunks_of_utterances(store, split.dev_utts, proto.head_max_chunks);
    const auto te =
        chunks_of_utterances(store, split.test_utts, proto.head_max_chunks);
    audit_no_leakage(store, tr, test_sp, "probe training");
    audit_no_leakage(store, de, test_sp, "probe development");
    audit_no_leakage(store, te, test_sp, "probe test");

    std::map<uint32_t, int> index;
    for (size_t i = 0; i < enrolled.size(); ++i)
      index[enrolled[i]] = static_cast<int>(i);
    std::vector<uint32_t> all(tr);
    all.insert(all.end(), de.begin(), de.end());
    all.insert(all.end(), te.begin(), te.end());
    const std::vector<float> feats = trainer.bottlenecks(store, all);
    std::vector<int> labels(all.size());
    for (size_t i = 0; i < all.size(); ++i)
      labels[i] = index.at(store.chunks[all[i]].speaker);
    std::vector<uint32_t> tr_idx(tr.size()), de_idx(de.size()),
        te_idx(te.size());
    for (size_t i = 0; i < tr.size(); ++i)
      tr_idx[i] = static_cast<uint32_t>(i);
    for (size_t i = 0; i < de.size(); ++i)
      de_idx[i] = static_cast<uint32_t>(tr.size() + i);
    for (size_t i = 0; i < te.size(); ++i)
      te_idx[i] = static_cast<uint32_t>(tr.size() + de.size() + i);

    HeadTrainer probe(cfg.model, enrolled.size(), cfg.seed, "probe.head");
    probe.fit(feats, labels, tr_idx, de_idx, proto.head);
    const std::vector<double> probs = probe.predict_probs(feats, te_idx);
    std::vector<int> preds(te.size()), te_labels(te.size());
    for (size_t i = 0; i < te.size(); ++i) {
      const double* row = probs.data() + i * enrolled.size();
      preds[i] = static_cast<int>(
          std::max_element(row, row + enrolled.size()) - row);
      te_labels[i] = labels[te_idx[i]];
    }
    cell.probe_acc = accuracy(preds, te_labels);
    cell.probe_auc =
        multiclass_auc(probs, te.size(), enrolled.size(), te_labels);
    cell.probe_n_speakers = enrolled.size();
  }

  LOG_INFO("%s seed %llu fold %zu: pd %.2f%% (auc %.3f) probe %.2f%% "
           "(auc %.3f, %zu speakers)",
           regime_to_string(spec.regime),
           static_cast<unsigned long long>(seed), fold, cell.pd_acc,
           cell.pd_auc, cell.probe_acc, cell.probe_auc,
           cell.probe_n_speakers);
  return cell;
}

ProtocolResult run_protocol(const FeatureStore& store,
                            const ProtocolConfig& proto) {
  ADVREP_REQUIRE(!proto.regimes.empty(), ConfigError, "no regimes to run");
  ADVREP_REQUIRE(!proto.seeds.empty(), ConfigError, "no seeds to run");
  ProtocolResult res;
  res.plan = make_folds(store.speaker_label, proto.n_folds, proto.fold_seed);

  if (!proto.checkpoints_dir.empty()) {
    for (const auto& spec : proto.regimes)
      for (uint64_t seed : proto.seeds)
        for (size_t fold = 0; fold < proto.n_folds; ++fold) {
          const std::string p =
              cell_checkpoint_path(proto.checkpoints_dir, spec, seed, fold);
          ADVREP_REQUIRE(std::filesystem::exists(p), DataError,
                         "missing checkpoint for regime ",
                         regime_to_string(spec.regime), " seed ", seed,
                         " fold ", fold, ": ", p);
        }
  }

  struct Job {
    RegimeSpec spec;
    uint64_t seed;
    size_t fold;
  };
  std::vector<Job> todo;
  for (const auto& spec : proto.regimes)
    for (uint64_t seed : proto.seeds)
      for (size_t fold = 0; fold < proto.n_folds; ++fold)
        todo.push_back({spec, seed, fold});

  res.cells.resize(todo.size());
  run_jobs(proto.jobs, todo.size(), [&](size_t i) {
    res.cells[i] =
        run_cell(store, res.plan, todo[i].spec, todo[i].seed, todo[i].fold,
                 proto);
  });
  return res;
}

Aggregate aggregate_metric(const ProtocolResult& res, const RegimeSpec& spec,
                           double CellResult::*metric) {
  std::map<uint64_t, std::vector<double>> by_seed;
  for (const auto& c : res.cells)
    if (c.spec.regime == spec.regime && c.spec.alpha == spec.alpha &&
        c.spec.lambda == spec.lambda)
      by_seed[c.seed].push_back(c.*metric);
  std::vector<double> per_seed;
  for (const auto& [seed, vals] : by_seed)
    per_seed.push_back(aggregate(vals).mean);
  return aggregate(per_seed);
}

void write_results_csv(const std::string& path, const ProtocolResult& res) {
  std::ofstream os(path, std::ios::trunc);
  ADVREP_REQUIRE(os.good(), DataError, "cannot write results to ", path);
  os << "regime,fold,seed,pd_acc,pd_auc,probe_acc,probe_auc\n";
  char buf[256];
  std::vector<RegimeSpec> specs;
  for (const auto& c : res.cells) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%llu,%.6f,%.6f,%.6f,%.6f\n",
                  regime_to_string(c.spec.regime), c.fold,
                  static_cast<unsigned long long>(c.seed), c.pd_acc, c.pd_auc,
                  c.probe_acc, c.probe_auc);
    os << buf;
    const bool seen =
        std::any_of(specs.begin(), specs.end(), [&](const RegimeSpec& s) {
          return s.regime == c.spec.regime && s.alpha == c.spec.alpha &&
                 s.lambda == c.spec.lambda;
        });
    if (!seen) specs.push_back(c.spec);
  }
  for (const auto& spec : specs) {
    os << regime_to_string(spec.regime) << ",all,all,"
       << format_mean_std(aggregate_metric(res, spec, &CellResult::pd_acc))
       << ","
       << format_mean_std(aggregate_metric(res, spec, &CellResult::pd_auc))
       << ","
       << format_mean_std(aggregate_metric(res, spec, &CellResult::probe_acc))
       << ","
       << format_mean_std(aggregate_metric(res, spec, &CellResult::probe_auc))
       << "\n";
  }
}

GridReport grid_search(const FeatureStore& store, Regime regime,
                       const ProtocolConfig& proto) {
  ADVREP_REQUIRE(
      regime == Regime::kAdversarial || regime == Regime::kDiscriminative,
      UsageError, "grid search covers adversarial and discriminative only; "
                  "fusion reuses the single-task optima");
  GridReport report;
  report.regime = regime;
  for (double v : grid_values()) {
    RegimeSpec spec;
    spec.regime = regime;
    if (regime == Regime::kAdversarial)
      spec.lambda = v;
    else
      spec.alpha = v;
    ProtocolConfig one = proto;
    one.regimes = {spec};
    const ProtocolResult res = run_protocol(store, one);
    GridPoint point;
    point.value = v;
    point.cells = res.cells;
    std::vector<double> devs;
    for (const auto& c : res.cells) devs.push_back(c.dev_pd_acc);
    point.mean_dev_acc = aggregate(devs).mean;
    LOG_INFO("grid %s=%.2f: mean dev accuracy %.2f%%",
             regime == Regime::kAdversarial ? "lambda" : "alpha", v,
             point.mean_dev_acc);
    report.points.push_back(std::move(point));
  }
  size_t best = 0;
  for (size_t i = 1; i < report.points.size(); ++i)
    if (report.points[i].mean_dev_acc > report.points[best].mean_dev_acc)
      best = i;
  report.best_value = report.points[best].value;
  return report;
}

nlohmann::json grid_report_to_json(const GridReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points)
    points.push_back(
        {{"value", p.value}, {"mean_dev_acc", p.mean_dev_acc}});
  return {{"regime", regime_to_string(report.regime)},
          {"parameter",
           report.regime == Regime::kAdversarial ? "lambda" : "alpha"},
          {"points", points},
          {"best_value", report.best_value}};
}

namespace {

std::string iso_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

nlohmann::json make_run_manifest(const std::string& command,
                                 const nlohmann::json& config,
                                 const std::vector<std::string>& inputs,
                                 const std::string& out_dir) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(h));
  return {{"tool", "advrep"},
          {"version", kAdvrepVersion},
          {"command", command},
          {"config", config},
          {"config_hash", hash},
          {"inputs", inputs},
          {"out_dir", out_dir},
          {"created_at", iso_utc_now()}};
}

}  // namespace advrep
